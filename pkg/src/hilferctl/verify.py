"""Identity suite: every checkable invariant as a named (value, tolerance) pair.

Each check returns the measured discrepancy and the tolerance it must meet.
Checks that need a problem use the configured one; the rest run on small
fixed instances with closed-form answers.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import linctl
from .psicalc import FracOrder, PsiFunction, kernel_l2_norm, psi_frac_integral, psi_hilfer_derivative
from .specfn import mainardi_wright, ml_eval, ml_via_wright_quadrature
from .spectral import EvolutionProblem, SpectralState, apply_K, apply_P, apply_S, gronwall_bound, mild_solution

log = logging.getLogger(__name__)

BRIDGE_ALPHAS = (0.55, 0.6, 0.75, 0.9)
BRIDGE_Z = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass
class CheckResult:
    ident: str
    value: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def frac_integral_of_sin(alpha: float, tau, terms: int = 60):
    """I^alpha applied to sin(tau) in the clock variable, by its power series.

    sin(tau) = sum (-1)^k tau^(2k+1)/(2k+1)! and the power rule maps each
    term to tau^(2k+1+alpha)/Gamma(2k+2+alpha).  Vectorised over tau; the
    value at tau = 0 is 0.
    """
    tau = np.asarray(tau, dtype=float)
    k = np.arange(terms)
    logt = np.log(np.where(tau > 0, tau, 1.0))[..., None]
    v = np.sum((-1.0) ** k * np.exp((2 * k + 1 + alpha) * logt - special.gammaln(2 * k + 2 + alpha)), axis=-1)
    v = np.where(tau > 0, v, 0.0)
    return float(v) if v.ndim == 0 else v


# ------------------------------------------------------------------ specfn


def check_gamma():
    return max(abs(special.gamma(0.5) - math.sqrt(math.pi)), abs(special.gamma(5.0) - 24.0) / 24), 1e-12


def check_ml_zero():
    err = max(abs(ml_eval(a, b, 0.0) * special.gamma(b) - 1) for a in (0.55, 0.75, 1.0) for b in (0.3, 0.75, 1.0, 2.0))
    return err, 1e-12


def check_ml_exp():
    z = np.linspace(-20, 5, 101)
    return float(np.max(np.abs(ml_eval(1.0, 1.0, z) / np.exp(z) - 1))), 1e-10


def check_ml_monotone():
    z = np.linspace(0, 50, 2001)
    worst = 0.0
    for a in (0.55, 0.75, 0.9, 1.0):
        v = ml_eval(a, a, -z)
        if np.any(v <= 0) or np.any(np.diff(v) >= 0):
            worst = 1.0
    return worst, 0.0


def check_wright_normalization():
    worst = 0.0
    for a in (0.3, 0.5, 0.75):
        lo, hi = 0.0, 60.0
        val = integrate.quad(lambda t: float(mainardi_wright(a, t)), lo, hi, limit=400)[0]
        worst = max(worst, abs(val - 1))
    return worst, 1e-6


def check_laplace_bridge():
    err = max(abs(ml_via_wright_quadrature(a, z) - float(ml_eval(a, a, -z))) for a in BRIDGE_ALPHAS for z in BRIDGE_Z)
    return err, 1e-6


# ------------------------------------------------------------------ psicalc


def _clocks():
    return [PsiFunction("linear", (), 0.0, 1.0), PsiFunction("power", (2.0,), 0.0, 1.0),
            PsiFunction("logarithmic", (1.0,), 0.0, 1.0)]


def check_power_rule():
    worst = 0.0
    for psi in _clocks():
        for d in (1.0, 1.5, 2.0):
            for al in (0.6, 0.75):
                t = 0.8
                f = lambda s: np.asarray(psi.offset(s)) ** (d - 1)
                exact = special.gamma(d) / special.gamma(d + al) * float(psi.offset(t)) ** (d + al - 1)
                worst = max(worst, abs(psi_frac_integral(psi, al, f, t) / exact - 1))
    return worst, 1e-7


def check_semigroup():
    worst = 0.0
    for psi in _clocks():
        al, be = 0.6, 0.7
        f = lambda s: frac_integral_of_sin(be, psi.offset(s))
        for t in np.linspace(0.1, 1.0, 10):
            lhs = psi_frac_integral(psi, al, f, t, lo_exp=be)
            rhs = frac_integral_of_sin(al + be, float(psi.offset(t)))
            worst = max(worst, abs(lhs - rhs))
    return worst, 1e-6


def check_hilfer_annihilation():
    worst = 0.0
    for psi in _clocks():
        order = FracOrder(0.75, 0.5)
        f = lambda s: np.asarray(psi.offset(s)) ** (order.gamma - 1.0)
        worst = max(worst, abs(psi_hilfer_derivative(psi, order, f, 0.7, lo_exp=order.gamma - 1.0)))
    return worst, 1e-4


def check_left_inverse():
    """D^{alpha,beta} I^alpha f = f with f = sin(Psi(t,a))."""
    worst = 0.0
    for psi in _clocks():
        for al, be in ((0.75, 0.5), (0.6, 0.0), (0.9, 1.0)):
            f = lambda s: frac_integral_of_sin(al, psi.offset(s))
            t = 0.7
            val = psi_hilfer_derivative(psi, FracOrder(al, be), f, t)
            worst = max(worst, abs(val - math.sin(float(psi.offset(t)))))
    return worst, 1e-4


def check_kernel_norm():
    psi = PsiFunction("linear", (), 0.0, 1.0)
    worst = 0.0
    for al in (0.55, 0.75, 1.0):
        for t in (0.5, 1.0):
            exact = math.sqrt(t ** (2 * al - 1) / (2 * al - 1))
            worst = max(worst, abs(kernel_l2_norm(psi, al, t) - exact))
    return worst, 1e-8


# ------------------------------------------------------------------ spectral


def check_heat_alpha_one():
    pr = EvolutionProblem(PsiFunction("linear", (), 0.0, 1.0), FracOrder(1.0, 0.0), n_modes=8)
    q = mild_solution(pr).endpoint().coeffs
    exact = np.exp(-pr.rates) * pr.x0.coeffs
    g = linctl.gramian(pr).entries
    n2 = pr.rates
    return max(float(np.max(np.abs(q - exact))), float(np.max(np.abs(g - (1 - np.exp(-2 * n2)) / (2 * n2))))), 1e-8


def check_operator_bounds(problem: EvolutionProblem):
    rng = np.random.default_rng(7)
    al, g = problem.alpha, problem.gamma
    M = problem.semigroup_bound
    worst = 0.0
    for s in rng.uniform(1e-3, 2.0, 20):
        for _ in range(5):
            x = SpectralState(rng.standard_normal(problem.n_modes))
            worst = max(worst, apply_K(problem, s, x).norm() - s ** (al - 1) * M / special.gamma(al) * x.norm())
            worst = max(worst, apply_S(problem, s, x).norm() - s ** (g - 1) * M / special.gamma(g) * x.norm())
    return max(worst, 0.0), 1e-12


def check_wright_P(problem: EvolutionProblem):
    al = problem.alpha
    if al >= 1.0:
        return 0.0, 1e-6
    err = 0.0
    for s in (0.25, 1.0):
        p = apply_P(problem, s, SpectralState.mode(1, problem.n_modes)).coeffs[0]
        err = max(err, abs(p - ml_via_wright_quadrature(al, problem.rates[0] * s**al)))
    return err, 1e-6


def check_weighted_norm(problem: EvolutionProblem):
    traj = mild_solution(problem)
    return (0.0 if np.isfinite(traj.weighted_norm) else np.inf), 0.0


# ------------------------------------------------------------------ linctl


def check_endpoint_identity(problem: EvolutionProblem, x1: SpectralState):
    rep = linctl.eps_sweep(problem, None, x1, (1.0, 0.1, 0.01))
    return max(rep.column("max_mode_gap")), 1e-5


def check_L_rho(problem: EvolutionProblem, convention: str = "argument"):
    xi = SpectralState.mode(1, problem.n_modes) + 0.5 * SpectralState.mode(2, problem.n_modes)
    return linctl.verify_L_rho(problem, xi, convention=convention), (1e-6 if problem.alpha == 1.0 else 1e-3)


def check_gramian_positive(problem: EvolutionProblem):
    r = linctl.gramian(problem).entries
    actuated = problem.control_gain > 0
    return (0.0 if np.all(r[actuated] > 0) and np.all(np.isfinite(r)) else 1.0), 0.0


def check_resolvent_contraction(problem: EvolutionProblem):
    r = linctl.gramian(problem).entries
    rng = np.random.default_rng(3)
    worst = 0.0
    for eps in (1.0, 1e-2, 1e-4):
        for _ in range(10):
            x = rng.standard_normal(problem.n_modes)
            worst = max(worst, np.linalg.norm(eps * x / (eps + r)) - np.linalg.norm(x))
    return max(worst, 0.0), 1e-15


def check_gronwall(problem: EvolutionProblem):
    """Uncontrolled trajectory against the envelope with c_U = 0 (a constant)."""
    traj = mild_solution(problem)
    bound = gronwall_bound(problem, 0.0, 0.0, float(np.max(problem.control_gain)), traj.grid)
    excess = np.linalg.norm(traj.weighted, axis=1) - bound
    return max(float(np.max(excess)), 0.0), 1e-12


def build_checks(problem: EvolutionProblem, x1: SpectralState, convention: str = "argument"):
    """Ordered (identifier, thunk) pairs covering the invariants."""
    return [
        ("specfn.gamma_values", check_gamma),
        ("specfn.ml_at_zero", check_ml_zero),
        ("specfn.ml_exp_identity", check_ml_exp),
        ("specfn.ml_monotone_positive", check_ml_monotone),
        ("specfn.wright_normalization", check_wright_normalization),
        ("specfn.laplace_bridge", check_laplace_bridge),
        ("psicalc.power_rule", check_power_rule),
        ("psicalc.semigroup", check_semigroup),
        ("psicalc.hilfer_left_inverse", check_left_inverse),
        ("psicalc.hilfer_annihilation", check_hilfer_annihilation),
        ("psicalc.kernel_l2_norm", check_kernel_norm),
        ("spectral.heat_degeneracy", check_heat_alpha_one),
        ("spectral.operator_bounds", lambda: check_operator_bounds(problem)),
        ("spectral.wright_oracle", lambda: check_wright_P(problem)),
        ("spectral.weighted_norm_finite", lambda: check_weighted_norm(problem)),
        ("spectral.gronwall_envelope", lambda: check_gronwall(problem)),
        ("linctl.gramian_positive", lambda: check_gramian_positive(problem)),
        ("linctl.resolvent_contraction", lambda: check_resolvent_contraction(problem)),
        ("linctl.endpoint_identity", lambda: check_endpoint_identity(problem, x1)),
        ("linctl.L_rho_identity", lambda: check_L_rho(problem, convention)),
    ]


def run_checks(problem: EvolutionProblem, x1: SpectralState, convention: str = "argument") -> list[CheckResult]:
    out = []
    for ident, fn in build_checks(problem, x1, convention):
        t0 = time.perf_counter()
        value, tol = fn()
        res = CheckResult(ident, float(value), float(tol), time.perf_counter() - t0)
        log.info("%-32s %.3e (tol %.1e) %s", ident, res.value, res.tolerance, "ok" if res.passed else "FAIL")
        out.append(res)
    return out
