"""Problem with a state-dependent control constraint and a running cost.

The admissible set is the weighted ball

    U(t, x) = { Psi(t,a)^(1-g) y : |y - g(x)| <= rho(x) },   g(x) = kappa x,  rho(x) = rho0 |x|,

and the search below builds feasible (trajectory, control) pairs by
alternating simulation and projection, then keeps the cheapest one.
Since u = Psi^(1-g) y and the stored trajectory is Psi^(1-g) q, the ball
test is carried out on weighted quantities and stays finite at t = a.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate

from .errors import GridMismatch, InfeasibleError, QuadratureError
from .report import ConvergenceReport
from .spectral import ControlFunction, EvolutionProblem, SpectralState, Trajectory, default_grid, gronwall_bound, mild_solution

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
MAX_ROUNDS = 50


@dataclass
class ConstraintSpec:
    kappa: float = 0.5
    rho0: float = 0.5

    def __post_init__(self):
        if self.kappa < 0 or self.rho0 < 0:
            raise ValueError("kappa and rho0 must be nonnegative")

    @property
    def a_U(self) -> float:
        return 0.0

    @property
    def c_U(self) -> float:
        return self.kappa + self.rho0

    @property
    def lipschitz(self) -> float:
        return max(self.kappa, self.rho0)


@dataclass
class RunningCostSpec:
    """h(t, x, u) = k1(t) + k2(t) |x| + c_h |u|."""

    k1: Callable = lambda t: np.zeros(np.shape(t))
    k2: Callable = lambda t: np.ones(np.shape(t))
    c_h: float = 1.0
    h: Callable | None = None  # optional convex-in-u replacement h(t, |x|, |u|)

    def evaluate(self, t, xnorm, unorm):
        if self.h is not None:
            return self.h(t, xnorm, unorm)
        return self.k1(t) + self.k2(t) * xnorm + self.c_h * unorm


def _weight(problem: EvolutionProblem, t) -> np.ndarray:
    return np.asarray(problem.psi.offset(t), dtype=float) ** (1.0 - problem.gamma)


def _ball_project(center, radius, y):
    """Euclidean projection of rows of y onto balls (center, radius)."""
    d = y - center
    n = np.linalg.norm(d, axis=-1)
    out = y.copy()
    far = n > radius
    if np.any(far):
        out[far] = center[far] + (radius[far] / n[far])[:, None] * d[far]
    return out


def project_feasible(spec: ConstraintSpec, problem: EvolutionProblem, t: float, q_t: SpectralState,
                     v: SpectralState) -> SpectralState:
    """Nearest point of U(t, q_t) to v (t in (a, b]).

    With w = Psi(t,a)^(1-g): y = v / w is projected onto the ball about
    kappa q_t of radius rho0 |q_t| and mapped back by w.
    """
    if t <= problem.a:
        raise ValueError("the weight is singular at t = a; the initial node is pinned to the centre")
    w = float(_weight(problem, t))
    y = v.coeffs / w
    center = spec.kappa * q_t.coeffs
    out = _ball_project(center[None, :], np.array([spec.rho0 * q_t.norm()]), y[None, :])[0]
    return SpectralState(w * out)


def feasibility_defect(spec: ConstraintSpec, traj: Trajectory, u_values) -> np.ndarray:
    """Per node distance of u(t) from U(t, q(t)), computed in weighted form.

    u in U(t,q) iff |u - kappa W q| <= rho0 |W q| with W q the stored
    weighted trajectory, so the test needs no division by the weight.
    """
    Y = traj.weighted
    gap = np.linalg.norm(u_values - spec.kappa * Y, axis=1) - spec.rho0 * np.linalg.norm(Y, axis=1)
    return np.maximum(gap, 0.0)


def project_control(spec: ConstraintSpec, traj: Trajectory, u_values) -> np.ndarray:
    """Project nodal control values onto U(t, q(t)); the node a goes to the centre."""
    Y = traj.weighted
    out = _ball_project(spec.kappa * Y, spec.rho0 * np.linalg.norm(Y, axis=1), np.asarray(u_values, dtype=float))
    at_a = traj.clock == 0.0
    out[at_a] = spec.kappa * Y[at_a]
    return out


def hausdorff_bound_check(spec: ConstraintSpec, problem: EvolutionProblem, t: float, x: SpectralState,
                          y: SpectralState) -> tuple[float, float]:
    """(2 L w |x - y|, w (|g(x) - g(y)| + |rho(x) - rho(y)|)), w = Psi(t,a)^(1-g).

    For two balls the Hausdorff distance is at most the centre distance plus
    the radius difference, which is the witnessed value.
    """
    w = float(_weight(problem, t))
    bound = 2.0 * spec.lipschitz * w * (x - y).norm()
    witnessed = w * (spec.kappa * (x - y).norm() + spec.rho0 * abs(x.norm() - y.norm()))
    return bound, witnessed


def _check_grids(traj: Trajectory, u: ControlFunction):
    if traj.grid.shape != u.grid.shape or np.any(traj.grid != u.grid):
        raise GridMismatch("trajectory and control live on different grids", operation="running_cost")


def running_cost(hspec: RunningCostSpec, traj: Trajectory, u: ControlFunction, problem: EvolutionProblem | None = None) -> float:
    """int_a^b h(t, q(t), u(t)) dt.

    A custom ``h`` is integrated by the trapezoid rule (it needs a bounded
    state).  The default h = k1 + k2 |q| + c_h |u| is integrated with
    5-point Gauss-Legendre on every grid interval, where |q| is the linear
    norm of a cubic spline (in the clock) of the weighted state times the exact factor Psi(t,a)^(g-1);
    when g < 1 the first interval is integrated adaptively because of that
    factor's singularity at a.  Pass ``problem`` so psi is available.
    """
    _check_grids(traj, u)
    t = traj.grid
    unorm = np.linalg.norm(u.values, axis=1)
    Ynorm = np.linalg.norm(traj.weighted, axis=1)
    singular = traj.gamma < 1.0 and traj.clock[0] == 0.0
    if hspec.h is not None:
        if singular:
            raise ValueError("a custom h needs a bounded state; use a Caputo-type order (beta = 1)")
        xnorm = Ynorm * np.where(traj.clock > 0, traj.clock, 1.0) ** (traj.gamma - 1.0)
        return float(np.trapezoid(hspec.evaluate(t, xnorm, unorm), t))
    if problem is None:
        raise ValueError("running_cost needs the problem for the clock weight")
    g = traj.gamma
    x, w = np.polynomial.legendre.leggauss(5)
    lo, hi = t[:-1, None], t[1:, None]
    frac = 0.5 * (x + 1.0)
    s = lo + (hi - lo) * frac
    half = 0.5 * (hi - lo) * w
    interp = lambda v: v[:-1, None] + (v[1:, None] - v[:-1, None]) * frac
    clock = np.asarray(problem.psi.offset(s), dtype=float)
    spline = interpolate.CubicSpline(traj.clock, traj.weighted, axis=0)
    Ys = np.linalg.norm(spline(clock), axis=-1)
    vals = hspec.k1(s) + hspec.k2(s) * Ys * clock ** (g - 1.0) + hspec.c_h * interp(unorm)
    per = np.sum(half * vals, axis=1)
    if singular:
        t0, t1 = t[0], t[1]
        f = lambda r: (hspec.k1(r) + hspec.c_h * np.interp(r, t[:2], unorm[:2])
                       + hspec.k2(r) * np.interp(r, t[:2], Ynorm[:2]) * float(problem.psi.offset(r)) ** (g - 1.0))
        per[0], _ = integrate.quad(f, t0, t1, limit=200, epsrel=1e-10)
        if not np.isfinite(per[0]):
            raise QuadratureError("running cost diverged on the first interval", operation="running_cost")
    return float(np.sum(per))


def cost_lower_bound(hspec: RunningCostSpec, traj: Trajectory, u: ControlFunction, problem: EvolutionProblem) -> float:
    """-(|k1|_1 + |k2|_inf (int Psi^(g-1) dt) |q|_C + c_h sqrt(b-a) |u|_2)."""
    t = traj.grid
    k1 = float(np.trapezoid(np.abs(hspec.k1(t)), t))
    k2 = float(np.max(np.abs(hspec.k2(t))))
    g = traj.gamma
    span_int = integrate.quad(lambda s: float(problem.psi.offset(s)) ** (g - 1.0), problem.a, problem.b, limit=200)[0]
    return -(k1 + k2 * span_int * traj.weighted_norm + hspec.c_h * math.sqrt(problem.b - problem.a) * math.sqrt(u.energy))


def apriori_bounds(problem: EvolutionProblem, cspec: ConstraintSpec) -> tuple[float, float]:
    """(M0, N0): bounds on the weighted trajectory norm and on |u|_L2.

    M0 is the Gronwall envelope at b; N0 = max(M0, |a_U| + c_U M0 sqrt(b - a)).
    """
    B_norm = float(np.max(problem.control_gain))
    M0 = float(gronwall_bound(problem, 0.0, cspec.c_U, B_norm, problem.b))
    N0 = max(M0, cspec.a_U + cspec.c_U * M0 * math.sqrt(problem.b - problem.a))
    return M0, N0


@dataclass
class Candidate:
    cid: int
    trajectory: Trajectory
    control: ControlFunction
    rounds: int
    cost: float
    accepted: bool
    defect: float


def realize(problem: EvolutionProblem, cspec: ConstraintSpec, u_values, grid, rounds: int = MAX_ROUNDS) -> Candidate:
    """Alternate simulate -> project until u(t) lies in U(t, q(t)) at every node."""
    u_values = np.asarray(u_values, dtype=float)
    traj = mild_solution(problem, None, ControlFunction(grid, u_values), grid)
    for k in range(1, rounds + 1):
        u_values = project_control(cspec, traj, u_values)
        new = mild_solution(problem, None, ControlFunction(grid, u_values), grid)
        step = new.weighted_distance(traj)
        traj = new
        defect = float(np.max(feasibility_defect(cspec, traj, u_values)))
        if defect <= FEAS_TOL and step <= FEAS_TOL:
            return Candidate(-1, traj, ControlFunction(grid, u_values), k, math.nan, True, defect)
    defect = float(np.max(feasibility_defect(cspec, traj, u_values)))
    return Candidate(-1, traj, ControlFunction(grid, u_values), rounds, math.nan, defect <= FEAS_TOL, defect)


def candidate_controls(n_modes: int, grid, cid: int, seed: int, scale: float = 1.0, n_freq: int = 6) -> np.ndarray:
    """Random smooth per-mode paths on the grid; candidate 0 is the zero control.

    Mode n is a cosine series in time with standard normal coefficients
    damped by 1/((1 + k) n), so the paths are smooth between grid nodes and
    the Duhamel quadrature resolves them.
    """
    grid = np.asarray(grid, dtype=float)
    if cid == 0:
        return np.zeros((len(grid), n_modes))
    rng = np.random.default_rng([seed, cid])
    k = np.arange(n_freq)
    coef = rng.standard_normal((n_freq, n_modes)) / np.outer(1.0 + k, np.arange(1, n_modes + 1))
    span = grid[-1] - grid[0]
    return scale * np.cos(np.multiply.outer(grid - grid[0], k) * (math.pi / span)) @ coef


@dataclass
class SearchResult:
    best: Candidate
    history: ConvergenceReport
    digest: str
    bounds: tuple = field(default=(math.nan, math.nan))


def feasible_search(
    problem: EvolutionProblem,
    cspec: ConstraintSpec,
    hspec: RunningCostSpec,
    n_candidates: int = 8,
    seed: int = 0,
    grid=None,
    scale: float = 1.0,
) -> SearchResult:
    """Projected random search for a low-cost feasible pair.

    Candidate i draws from default_rng([seed, i]), so the history does not
    depend on evaluation order.  The running-best column is nonincreasing.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be at least 1")
    grid = default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
    hist = ConvergenceReport(["candidate_id", "feasibility_rounds", "cost", "defect", "accepted", "running_best"])
    best = None
    for cid in range(n_candidates):
        cand = realize(problem, cspec, candidate_controls(problem.n_modes, grid, cid, seed, scale), grid)
        cand.cid = cid
        cand.cost = running_cost(hspec, cand.trajectory, cand.control, problem) if cand.accepted else math.inf
        if not cand.accepted:
            log.warning("candidate %d did not stabilise in %d rounds (defect %.2e)", cid, cand.rounds, cand.defect)
        if cand.accepted and (best is None or cand.cost < best.cost):
            best = cand
        hist.add(candidate_id=cid, feasibility_rounds=cand.rounds, cost=cand.cost, defect=cand.defect,
                 accepted=cand.accepted, running_best=best.cost if best else math.inf)
    if best is None:
        raise InfeasibleError("no candidate reached feasibility", operation="feasible_search")
    digest = hashlib.sha256(hist.to_csv().encode()).hexdigest()
    return SearchResult(best, hist, digest, apriori_bounds(problem, cspec))
