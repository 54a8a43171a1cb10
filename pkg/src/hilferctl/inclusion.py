"""Semilinear control with a set-valued right-hand side F(t, x) = a(t, xi) H(x).

H(x) collects the functions y(xi) squeezed between two envelopes,

    f1(xi, r) <= y(xi) <= f2(xi, r),    r = int phi(xi) x(xi) dxi,

and the solver replaces the existence argument for a selection with an
explicit rule (lower, upper, midpoint or switch).  With a selection fixed,
the eps-regularised control problem becomes a fixed point of

    Gamma(q)(t) = S(Psi(t,a)) x0 + int psi' K(Psi(t,s)) [f_q(s) + B u_q(s)] ds,

which is iterated by (optionally damped) Picard steps.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, EnvelopeError
from .linctl import DEFAULT_EPS, endpoint_error_closed_form, gramian, synthesize_control
from .psicalc import psi_frac_integral
from .report import ConvergenceReport
from .spectral import (
    ControlFunction,
    EvolutionProblem,
    SpectralState,
    Trajectory,
    default_grid,
    mild_solution,
    sine_basis,
    xi_quadrature,
)

log = logging.getLogger(__name__)

STRATEGIES = ("lower", "upper", "midpoint", "switch")


@dataclass
class MultimapSpec:
    """Envelopes, weight and coefficient of the multimap.

    ``f1``/``f2`` take arrays (xi, r) broadcast against each other,
    ``a_coeff`` takes (t, xi) likewise, and ``m(t)`` dominates |a_coeff|.
    ``phi`` is a function of xi.
    """

    f1: Callable
    f2: Callable
    phi: Callable
    K1: float
    a_coeff: Callable = lambda t, xi: 1.0
    m: Callable = lambda t: np.ones(np.shape(t))
    lip: Callable = lambda xi: np.zeros(np.shape(xi))
    limit_policy: str = "warn"

    def __post_init__(self):
        if self.limit_policy not in ("warn", "error"):
            raise ValueError("limit_policy must be 'warn' or 'error'")
        if not self.K1 >= 0:
            raise ValueError("K1 must be nonnegative")

    def phi_coeffs(self, n_modes: int, n_quad: int = 2048) -> np.ndarray:
        return SpectralState.from_function(self.phi, n_modes, n_quad).coeffs

    def is_zero(self, n_samples: int = 64) -> bool:
        """True when both envelopes vanish on a sample of (xi, r)."""
        xi = np.linspace(0.0, np.pi, n_samples)[:, None]
        r = np.linspace(-50.0, 50.0, n_samples)[None, :]
        return bool(np.all(self.f1(xi, r) == 0) and np.all(self.f2(xi, r) == 0))

    def check_envelopes(self, xi, r):
        """f1 and f2 at (xi, r); they may keep any shape that broadcasts."""
        lo, hi = np.asarray(self.f1(xi, r), dtype=float), np.asarray(self.f2(xi, r), dtype=float)
        if np.any(lo > hi):
            gap = np.broadcast_to(lo - hi, np.broadcast_shapes(lo.shape, hi.shape))
            i = np.unravel_index(np.argmax(gap), gap.shape)
            raise EnvelopeError(f"f1 > f2 at sample {i} (gap {gap[i]:.6g})", operation="evaluate_selection")
        return lo, hi

    def validate(self, n_samples: int = 64) -> None:
        """Sampled check of f1 <= f2 and |f_i| <= K1."""
        xi = np.linspace(0.0, np.pi, n_samples)[:, None]
        r = np.concatenate([-np.geomspace(1e3, 1e-3, n_samples // 2), [0.0], np.geomspace(1e-3, 1e3, n_samples // 2)])
        lo, hi = self.check_envelopes(xi, r[None, :])
        if max(np.max(np.abs(lo)), np.max(np.abs(hi))) > self.K1 * (1 + 1e-12) + 1e-300:
            raise EnvelopeError("an envelope exceeds K1 in absolute value", operation="MultimapSpec")

    @classmethod
    def default(cls) -> "MultimapSpec":
        """phi = e1, f1/f2 = arctan(r) -/+ 1/2, a = m = 1, K1 = pi/2 + 1/2."""
        e1 = lambda xi: math.sqrt(2.0 / math.pi) * np.sin(xi)
        return cls(
            f1=lambda xi, r: np.arctan(r) - 0.5,
            f2=lambda xi, r: np.arctan(r) + 0.5,
            phi=e1,
            K1=math.pi / 2 + 0.5,
        )

    @classmethod
    def zero(cls) -> "MultimapSpec":
        z = lambda xi, r: np.zeros(np.broadcast_shapes(np.shape(xi), np.shape(r)))
        return cls(f1=z, f2=z, phi=lambda xi: np.zeros(np.shape(xi)), K1=0.0)

    @classmethod
    def constant(cls, g: Callable) -> "MultimapSpec":
        """Single-valued, state-independent F(t, x) = {g(xi)} (a = 1)."""
        return cls(f1=lambda xi, r: g(xi) + 0.0 * r, f2=lambda xi, r: g(xi) + 0.0 * r,
                   phi=lambda xi: np.zeros(np.shape(xi)), K1=float(np.max(np.abs(g(np.linspace(0, np.pi, 257))))))


def _select(strategy: str, lo, hi, r):
    if strategy == "lower":
        return lo
    if strategy == "upper":
        return hi
    if strategy == "midpoint":
        return 0.5 * (lo + hi)
    if strategy == "switch":
        # ties at r = 0 go to the upper branch
        return np.where(r < 0, lo, hi)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


class SelectionField:
    """Vectorised selection s -> f(s) for a family of states.

    The state enters only through r = <phi, q>, computed from sine
    coefficients (Parseval), and the selected profile is projected back with
    Gauss-Legendre in xi using max(4N, 64) nodes.
    """

    def __init__(self, spec: MultimapSpec, strategy: str, n_modes: int):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        self.spec = spec
        self.strategy = strategy
        self.xi, self.w = xi_quadrature(n_modes)
        self.basis = sine_basis(self.xi, n_modes)  # (Q, N)
        self.phi = spec.phi_coeffs(n_modes)

    def __call__(self, t, Q):
        """t: (M,), Q: (M, N) states -> (M, N) coefficients of a(t,.) y(.)."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(Q, dtype=float) @ self.phi  # (M,)
        lo, hi = self.spec.check_envelopes(self.xi[None, :], r[:, None])
        y = _select(self.strategy, lo, hi, r[:, None])
        y = y * self.spec.a_coeff(t[:, None], self.xi[None, :])
        y = np.asarray(y, dtype=float)
        if y.ndim == 2 and y.shape[1] == 1:
            # profile constant in xi: project the constant once
            return y * (self.w @ self.basis)[None, :]
        y = np.broadcast_to(y, (r.size, self.xi.size))
        return (y * self.w) @ self.basis


def evaluate_selection(spec: MultimapSpec, strategy: str, t: float, q: SpectralState) -> SpectralState:
    """Coefficients of a(t, .) y(.), y the chosen selection of H(q)."""
    sel = SelectionField(spec, strategy, q.n_modes)
    return SpectralState(sel(np.array([t]), q.coeffs[None, :])[0])


def selection_bound(spec: MultimapSpec, t):
    """2 K1 m(t), the a-priori bound on |F(t, x)|."""
    return 2.0 * spec.K1 * np.asarray(spec.m(t), dtype=float)


def check_weighted_limit(
    problem: EvolutionProblem,
    m: Callable,
    policy: str = "warn",
    levels: int = 8,
    tol: float = 1e-2,
    m_exp: float = 0.0,
) -> bool:
    """Sample Psi(t,a)^(1-g) I^{a;psi} m(t) as t -> a and test that it decays.

    Passes when the samples decrease along t_k = a + (b-a) 10^-k and the last
    one is below ``tol`` times the first.  ``policy`` decides whether a
    failure warns or raises.  If m blows up like Psi(t,a)^m_exp at a
    (m_exp > -1), declare it so the quadrature can absorb the singularity.
    """
    psi, al, g = problem.psi, problem.alpha, problem.gamma
    ts = problem.a + (problem.b - problem.a) * 10.0 ** -np.arange(1, levels + 1)
    vals = np.array([float(psi.offset(t)) ** (1 - g) * psi_frac_integral(psi, al, m, t, lo_exp=m_exp) for t in ts])
    ok = bool(np.all(np.diff(vals) <= 0) and vals[-1] <= tol * max(vals[0], 1e-300))
    if not ok:
        msg = f"weighted-limit condition on m looks violated: samples {vals}"
        if policy == "error":
            raise DomainError(msg, operation="check_weighted_limit")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return ok


@dataclass
class FixedPointResult:
    trajectory: Trajectory
    control: ControlFunction
    iterations: int
    residual: float
    converged: bool
    forcing_nodes: np.ndarray = field(repr=False)
    defect: SpectralState = None
    history: list = field(default_factory=list)  # (iteration, distance, damping)
    max_selection_ratio: float = 0.0  # max |f(t)| / (2 K1 m(t)) over the nodes


def _trajectory(problem, grid, weighted):
    prop = problem.propagator(grid)
    return Trajectory(grid=grid, weighted=weighted, clock=prop.clock, gamma=problem.gamma)


def fixed_point_solve(
    problem: EvolutionProblem,
    spec: MultimapSpec,
    strategy: str,
    x1: SpectralState,
    eps: float,
    max_iter: int = 200,
    tol: float = 1e-9,
    damping: float = 1.0,
    grid=None,
) -> FixedPointResult:
    """Picard iteration q <- (1 - theta) q + theta Gamma_eps(q).

    theta starts at ``damping`` and is halved whenever the step length grows
    (oscillation).  The residual is the weighted distance between the final
    iterate and one more application of Gamma_eps.
    """
    if not eps > 0 or not tol > 0:
        raise ValueError("eps and tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    grid = default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
    prop = problem.propagator(grid)
    gram = gramian(problem)
    sel = SelectionField(spec, strategy, problem.n_modes)
    bound_nodes = selection_bound(spec, prop.nodes)
    bound_grid = selection_bound(spec, grid)
    trivial = spec.is_zero()
    end_scale = prop.clock[-1] ** (problem.gamma - 1.0)
    ratio = [0.0]

    def gamma_map(weighted):
        traj = _trajectory(problem, grid, weighted)
        q_nodes = traj.interpolant(problem.psi)(prop.nodes)
        F = sel(prop.nodes, q_nodes)
        fn = np.linalg.norm(F, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio[0] = max(ratio[0], float(np.max(np.where(bound_nodes > 0, fn / bound_nodes, fn * np.inf))))
        if np.any(fn > bound_nodes * (1 + 1e-12) + 1e-14):
            raise EnvelopeError("selection exceeds 2 K1 m(t)", operation="fixed_point_solve")
        forcing = lambda s: F if s is prop.nodes else sel(s, traj.interpolant(problem.psi)(s))
        # uncontrolled endpoint from the last quadrature segment alone
        free_b = prop.s_weighted[-1] * problem.x0.coeffs + prop.weight()[-1] * prop.endpoint_duhamel(F)
        defect = x1 - SpectralState(free_b * end_scale)
        u = synthesize_control(problem, eps, defect, gram, grid)
        return mild_solution(problem, forcing, u, grid).weighted, u, F, defect

    weighted = prop.homogeneous_weighted(problem.x0)  # q0: the uncontrolled, unforced solution
    theta = damping
    hist = []
    prev_dist = np.inf
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        new, u, F, defect = gamma_map(weighted)
        dist = float(np.max(np.linalg.norm(new - weighted, axis=1)))
        if trivial:
            weighted = new
            converged = True
            hist.append((it, dist, theta))
            break
        if dist > prev_dist and theta > 1e-3:
            theta *= 0.5
        hist.append((it, dist, theta))
        log.debug("fixed point iteration %d: step %.3e theta %.3g", it, dist, theta)
        weighted = weighted + theta * (new - weighted)
        prev_dist = dist
        if dist <= tol:
            converged = True
            break
    # one more application: the returned trajectory is exactly the mild
    # solution driven by the returned selection and control
    final, u, F, defect = gamma_map(weighted)
    residual = float(np.max(np.linalg.norm(final - weighted, axis=1)))
    weighted = final
    if not converged:
        log.warning("fixed point iteration stopped after %d steps (last step %.3e)", it, hist[-1][1])
    traj = _trajectory(problem, grid, weighted)
    res = FixedPointResult(traj, u, it, residual, converged, F, defect, hist, ratio[0])
    res.grid_bound = bound_grid
    return res


def inclusion_eps_sweep(
    problem: EvolutionProblem,
    spec: MultimapSpec,
    strategy: str,
    x1: SpectralState,
    eps_list=DEFAULT_EPS,
    max_iter: int = 200,
    tol: float = 1e-9,
    grid=None,
) -> ConvergenceReport:
    """eps against endpoint miss, energy and iteration count for one strategy."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    gram = gramian(problem)
    rep = ConvergenceReport(
        ["eps", "endpoint_miss", "closed_form_miss", "energy", "iterations", "residual", "converged"]
    )
    for eps in eps_list:
        res = fixed_point_solve(problem, spec, strategy, x1, eps, max_iter, tol, grid=grid)
        miss = (res.trajectory.endpoint() - x1).norm()
        rep.add(
            eps=eps,
            endpoint_miss=miss,
            closed_form_miss=endpoint_error_closed_form(eps, res.defect, gram).norm(),
            energy=res.control.energy,
            iterations=res.iterations,
            residual=res.residual,
            converged=res.converged,
        )
    rep.meta["strategy"] = strategy
    return rep
