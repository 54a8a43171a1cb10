"""Linear controllability: Gramian, target defect, steering and optimal controls.

The state space is the Hilbert space L2(0, pi), so the duality map is the
identity and every resolvent is diagonal in the sine basis:

    (eps I + R(b))^{-1} N  has coefficients  N_n / (eps + r_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import GateError, QuadratureError
from .psicalc import GATE_MESSAGE, singular_rule
from .report import ConvergenceReport
from .spectral import ControlFunction, EvolutionProblem, SpectralState, Trajectory, default_grid, mild_solution
from .specfn import ml_eval

DEFAULT_EPS = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)


def duality_map(x: SpectralState) -> SpectralState:
    """J on a Hilbert space: the identity (extension point for other norms)."""
    return x


@dataclass
class GramianDiag:
    entries: np.ndarray
    horizon: float

    def resolvent(self, eps: float, x: SpectralState) -> SpectralState:
        """(eps I + R)^{-1} x."""
        return SpectralState(x.coeffs / (eps + self.entries))


def _mode_integrand(problem: EvolutionProblem, n: int):
    """Integrand of r_n in the clock distance d = Psi(b, s), without d^(2a-2)."""
    psi, al = problem.psi, problem.alpha
    lam = problem.rates[n]
    Tb = problem.clock_span

    def g(d):
        s = psi.offset_inverse(Tb - d)
        p = ml_eval(al, al, -lam * d**al)
        return float(psi.derivative(s)) * p * p

    return g


def gramian_mode(problem: EvolutionProblem, n: int, quad_tol: float = 1e-11, lower: float = 0.0) -> float:
    """Reference value of r_n / B_n^2 by adaptive quadrature.

    r_n / B_n^2 = int psi'(s)^2 Psi(b,s)^(2a-2) P_n(Psi(b,s))^2 ds, written in
    d = Psi(b, s) (so psi' ds = dd) with the weight d^(2a-2) handled by QAWS
    on the layer where P_n varies and ordinary quadrature beyond it.
    ``lower > 0`` truncates the integral at d = lower, which is how the
    divergence at alpha = 1/2 is probed.  Slow; ``gramian`` uses a product rule.
    """
    al = problem.alpha
    L = problem.clock_span
    lam = problem.rates[n]
    g = _mode_integrand(problem, n)
    f = lambda d: g(d) * d ** (2 * al - 2)
    h = min(L, lam ** (-1.0 / al))
    pieces = []
    if lower > 0.0:
        start = lower
    else:
        pieces.append(integrate.quad(g, 0.0, h, weight="alg", wvar=(2 * al - 2, 0.0), epsabs=0.0,
                                     epsrel=quad_tol, limit=200))
        start = h
    edges = start * 4.0 ** np.arange(0, 80)
    edges = np.unique(np.concatenate([edges[edges < L], [L]]))
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces.append(integrate.quad(f, lo, hi, epsabs=0.0, epsrel=quad_tol, limit=200))
    val = sum(p[0] for p in pieces)
    err = sum(p[1] for p in pieces)
    if not np.isfinite(val) or err > max(100 * quad_tol, 1e-9) * abs(val):
        raise QuadratureError(f"Gramian mode {n + 1} did not converge (err {err:.2e})", operation="gramian")
    return val


def truncated_gramian_probe(alpha: float, lam: float, span: float, cutoffs) -> np.ndarray:
    """int_delta^span d^(2a-2) E_{a,a}(-lam d^a)^2 dd for each cutoff delta.

    Diagnostic for the gate: bypasses it on purpose so the growth as
    delta -> 0 can be observed (logarithmic at alpha = 1/2, bounded above).
    """
    out = []
    f = lambda d: d ** (2 * alpha - 2) * float(ml_eval(alpha, alpha, -lam * d**alpha)) ** 2
    for delta in np.atleast_1d(cutoffs):
        edges = np.unique(np.concatenate([delta * 4.0 ** np.arange(0, 200), [span]]))
        edges = edges[(edges >= delta) & (edges <= span)]
        out.append(sum(integrate.quad(f, lo, hi, epsrel=1e-10, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:])))
    return np.array(out)


def gramian(problem: EvolutionProblem, n_gauss: int = 16, levels: int = 40) -> GramianDiag:
    """Diagonal of R(b) = int {psi' Psi(b,s)^(a-1)}^2 P B B* P* ds.

    All modes at once with the singular product rule in the clock variable:
    the weight Psi(b,s)^(2a-2) is integrated exactly on the panel next to b
    and psi'(s) P_n^2 is sampled elsewhere.  The propagator uses the same
    rule at t = b, so simulated endpoints and Gramian entries agree to
    rounding.
    """
    if problem.alpha <= 0.5:
        raise GateError(GATE_MESSAGE, operation="gramian")
    key = ("gramian", n_gauss, levels, problem.control_gain.tobytes())
    if key not in problem._cache:
        psi, al = problem.psi, problem.alpha
        A = float(psi.value(problem.a))
        rule = singular_rule(A, A + problem.clock_span, al, hi_extra=al - 1.0, n_gauss=n_gauss, levels=levels)
        s = psi.offset_inverse(rule.dist_lo)
        d = rule.dist_hi
        w = rule.weights * np.asarray(psi.derivative(s)) * (d ** (al - 1.0) if al < 1.0 else 1.0)
        P = problem.p_kernel(d)
        r = problem.control_gain**2 * np.sum(w[:, None] * P * P, axis=0)
        problem._cache[key] = GramianDiag(r, problem.b)
    return problem._cache[key]


def free_endpoint(problem: EvolutionProblem, forcing: Callable | None = None, grid=None) -> SpectralState:
    """q(b) with zero control: S(Psi(b,a)) x0 + int K f."""
    return mild_solution(problem, forcing, None, grid).endpoint()


def target_defect(problem: EvolutionProblem, forcing: Callable | None, x1: SpectralState, grid=None) -> SpectralState:
    """N(f) = x1 - S(Psi(b,a)) x0 - int psi' K(Psi(b,s)) f(s) ds."""
    return x1 - free_endpoint(problem, forcing, grid)


def steering_profile(problem: EvolutionProblem, s, dist_b):
    """psi'(s) Psi(b,s)^(a-1) P_n(Psi(b,s)), cached per set of sample points."""
    s = np.asarray(s, dtype=float)
    d = np.asarray(dist_b, dtype=float)
    key = ("steer", s.shape, hash(s.tobytes()), hash(d.tobytes()))
    hit = problem._cache.get(key)
    if hit is None:
        al = problem.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.asarray(problem.psi.derivative(s)) * (d ** (al - 1.0) if al < 1.0 else np.ones_like(d))
            hit = w[..., None] * problem.p_kernel(d)
        if s.size > 1000:  # the propagator's nodes; one-off evaluations are not worth keeping
            problem._cache[key] = hit
    return hit


def _steering_control(problem: EvolutionProblem, coeff: np.ndarray, gram: GramianDiag, grid) -> ControlFunction:
    """u_n(t) = psi'(t) Psi(b,t)^(a-1) B_n P_n(Psi(b,t)) coeff_n."""
    Tb = problem.clock_span
    scale = problem.control_gain * np.asarray(coeff, dtype=float)

    def evaluate(s, dist_b=None):
        s = np.asarray(s, dtype=float)
        d = Tb - np.asarray(problem.psi.offset(s), dtype=float) if dist_b is None else dist_b
        with np.errstate(invalid="ignore"):
            return steering_profile(problem, s, d) * scale

    grid = np.asarray(grid, dtype=float)
    vals = evaluate(grid)
    singular = problem.alpha < 1.0
    if singular:
        vals[grid == problem.b] = np.nan
    energy = float(np.sum(np.asarray(coeff, dtype=float) ** 2 * gram.entries))
    return ControlFunction(grid, vals, evaluate, energy, singular)


def synthesize_control(
    problem: EvolutionProblem, eps: float, defect: SpectralState, gram: GramianDiag, grid=None
) -> ControlFunction:
    """u_eps(t) = psi'(t) Psi(b,t)^(a-1) B* P*(Psi(b,t)) J (eps I + R J)^{-1} N.

    For alpha < 1 the control is unbounded (but square integrable) at t = b;
    its grid value there is stored as NaN and ``singular_at_b`` is set.  Its
    energy is the exact value sum_n c_n^2 r_n.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = default_grid(problem) if grid is None else grid
    c = gram.resolvent(eps, duality_map(defect)).coeffs
    return _steering_control(problem, c, gram, grid)


def endpoint_error_closed_form(eps: float, defect: SpectralState, gram: GramianDiag) -> SpectralState:
    """q_eps(b) - x1 = -eps (eps I + R)^{-1} N for the linear problem."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return SpectralState(-eps * defect.coeffs / (eps + gram.entries))


def eps_sweep(
    problem: EvolutionProblem,
    forcing: Callable | None,
    x1: SpectralState,
    eps_list=DEFAULT_EPS,
    grid=None,
) -> ConvergenceReport:
    """Simulated vs closed-form endpoint miss along an eps schedule."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    grid = default_grid(problem) if grid is None else grid
    gram = gramian(problem)
    defect = target_defect(problem, forcing, x1, grid)
    rep = ConvergenceReport(
        ["eps", "endpoint_miss", "closed_form_miss", "max_mode_gap", "energy", "iterations", "converged"]
    )
    for eps in eps_list:
        u = synthesize_control(problem, eps, defect, gram, grid)
        traj = mild_solution(problem, forcing, u, grid)
        miss = traj.endpoint() - x1
        closed = endpoint_error_closed_form(eps, defect, gram)
        rep.add(
            eps=eps,
            endpoint_miss=miss.norm(),
            closed_form_miss=closed.norm(),
            max_mode_gap=float(np.max(np.abs(miss.coeffs - closed.coeffs))),
            energy=u.energy,
            iterations=1,
            converged=True,
        )
    rep.meta["defect_norm"] = defect.norm()
    return rep


# ------------------------------------------------------------ witness rho


SIGN_CONVENTIONS = ("argument", "time-chain-rule")


def rho_witness(
    problem: EvolutionProblem,
    xi: SpectralState,
    T: float | None = None,
    convention: str = "argument",
    grid=None,
) -> ControlFunction:
    """Control rho with L(rho) = xi on [a, T].

    rho(t) = c Psi(T,t)^(1-a) [P(Psi(T,t)) - 2 Psi(t,a) D(t)] xi,
    c = Gamma(a)^2 / Psi(T,a).  The derivative D is either the derivative of
    P with respect to its argument evaluated at Psi(T,t) ("argument"), or
    d/dt of t -> P(Psi(T,t)) ("time-chain-rule"), which differs by the factor
    -psi'(t).  Only the first makes the integration by parts close exactly.
    The Psi(T,t)^(1-a) factor cancels the t -> T singularity of dP, so rho
    is bounded; at t = T the limit value is used.
    """
    if convention not in SIGN_CONVENTIONS:
        raise ValueError(f"convention must be one of {SIGN_CONVENTIONS}")
    psi, al = problem.psi, problem.alpha
    T = problem.b if T is None else float(T)
    LT = float(psi.offset(T))
    c = special.gamma(al) ** 2 / LT
    lam = problem.rates
    xi_c = xi.coeffs

    def evaluate(s, dist_T=None):
        s = np.asarray(s, dtype=float)
        d = LT - np.asarray(psi.offset(s), dtype=float) if dist_T is None else np.asarray(dist_T, dtype=float)
        d = np.maximum(d, 0.0)
        lam_ = np.asarray(psi.offset(s), dtype=float)
        p = problem.p_kernel(d)
        # Psi^(1-a) dP/dtau = -lambda a E'(-lambda d^a), finite at d = 0
        wdp = -lam * al * ml_eval(al, al, -np.multiply.outer(d**al, lam).ravel(), deriv=True).reshape(p.shape)
        wp = (d ** (1.0 - al))[..., None] * p if al < 1.0 else p
        if convention == "time-chain-rule":
            wdp = -np.asarray(psi.derivative(s))[..., None] * wdp
        return c * (wp - 2.0 * lam_[..., None] * wdp) * xi_c

    grid = default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
    grid = grid[grid <= T]
    vals = evaluate(grid)
    u = ControlFunction(grid, vals, evaluate, None, False)
    u.convention = convention
    u.horizon = T
    return u


def apply_L(problem: EvolutionProblem, h: ControlFunction, T: float | None = None, grid=None) -> SpectralState:
    """L(h) = int_a^T psi'(s) Psi(T,s)^(a-1) P(Psi(T,s)) h(s) ds (B = I)."""
    T = problem.b if T is None else float(T)
    if grid is None:
        g = default_grid(problem)
        grid = np.concatenate([g[g < T], [T]])
    zero = problem.with_x0(SpectralState.zeros(problem.n_modes))
    zero.control_gain[:] = 1.0
    # evaluate h through its distance-to-T argument, which the propagator supplies
    traj = mild_solution(zero, None, _shifted(h, problem, T), grid)
    return traj.endpoint()


def _shifted(h: ControlFunction, problem: EvolutionProblem, T: float) -> ControlFunction:
    """Wrap h so the propagator's distance-to-b becomes the distance to T."""
    offset = problem.clock_span - float(problem.psi.offset(T))

    def ev(s, dist_b=None):
        return h.evaluate(s, None if dist_b is None else np.asarray(dist_b) - offset)

    return ControlFunction(h.grid, h.values, ev, h.exact_energy)


def verify_L_rho(
    problem: EvolutionProblem,
    xi: SpectralState,
    T: float | None = None,
    convention: str = "argument",
    grid=None,
) -> float:
    """||L(rho) - xi|| / ||xi||."""
    rho = rho_witness(problem, xi, T, convention, grid)
    Lr = apply_L(problem, rho, T)
    return (Lr - xi).norm() / xi.norm()


# -------------------------------------------------------- optimal control


@dataclass
class OptimalResult:
    control: ControlFunction
    trajectory: Trajectory
    cost: float
    miss: float
    energy: float
    target_gap: SpectralState  # x_b - S(Psi(b,a)) x0


def optimal_control_quadratic(
    problem: EvolutionProblem, lam: float, x_b: SpectralState, grid=None
) -> OptimalResult:
    """Minimiser of ||q(b) - x_b||^2 + lam int ||u||^2 dt for the linear system.

    u(t) = psi'(t) Psi(b,t)^(a-1) B* P*(Psi(b,t)) J (lam I + R J)^{-1} [x_b - S(Psi(b,a)) x0].
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
    gram = gramian(problem)
    gap = x_b - free_endpoint(problem, None, grid)
    c = gram.resolvent(lam, duality_map(gap)).coeffs
    u = _steering_control(problem, c, gram, grid)
    traj = mild_solution(problem, None, u, grid)
    miss = (traj.endpoint() - x_b).norm()
    cost = miss**2 + lam * u.energy
    return OptimalResult(u, traj, cost, miss, u.energy, gap)


def random_unit_control(problem: EvolutionProblem, grid, rng, n_freq: int = 6) -> ControlFunction:
    """Random smooth control of unit L2 norm.

    Each mode is a cosine series sum_k a_nk cos(k pi (t - a)/(b - a)),
    k < n_freq, with standard normal coefficients damped like 1/(1 + k);
    orthogonality of the cosines gives the norm exactly.  Smooth paths keep
    the Duhamel quadrature accurate, which rough nodal noise would not.
    """
    grid = np.asarray(grid, dtype=float)
    a, b = problem.a, problem.b
    k = np.arange(n_freq)
    coef = rng.standard_normal((n_freq, problem.n_modes)) / (1.0 + k)[:, None]
    mass = np.where(k == 0, b - a, 0.5 * (b - a))
    coef /= math.sqrt(float(np.sum(mass[:, None] * coef**2)))

    def evaluate(s, dist_b=None):
        s = np.asarray(s, dtype=float)
        return np.cos(np.multiply.outer(s - a, k) * (math.pi / (b - a))) @ coef

    return ControlFunction(grid, evaluate(grid), evaluate, 1.0)


def _pl_energy(grid, v) -> float:
    """Exact int |v(t)|^2 dt for a piecewise linear v."""
    h = np.diff(grid)[:, None]
    a, b = v[:-1], v[1:]
    return float(np.sum(h * (a * a + a * b + b * b) / 3.0))


def perturbed_cost(problem: EvolutionProblem, res: OptimalResult, w: ControlFunction, delta: float,
                   lam: float, x_b: SpectralState, grid) -> float:
    """J(u + delta w) with the cross term <u, w> taken from the adjoint identity.

    <u, w> = sum_n c_n int psi' Psi^(a-1) B_n P_n w_n = sum_n c_n (L B w)_n,
    where c_n are the resolvent coefficients of u, so the singular control
    never has to be sampled on the grid.
    """
    zero = problem.with_x0(SpectralState.zeros(problem.n_modes))
    Lw = mild_solution(zero, None, w, grid).endpoint()
    gram = gramian(problem)
    c = res.target_gap.coeffs / (lam + gram.entries)
    cross = float(np.sum(c * Lw.coeffs))
    end = res.trajectory.endpoint() + delta * Lw
    energy = res.energy + 2 * delta * cross + delta**2 * w.energy
    return (end - x_b).norm() ** 2 + lam * energy
