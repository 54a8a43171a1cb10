"""State space L2(0, pi) in the Dirichlet sine basis and the solution operators.

With A the Dirichlet Laplacian, the semigroup is diagonal, T(t) e_n =
exp(-n^2 t) e_n, and the subordinated families act per mode:

    P(s) e_n = E_{a,a}(-n^2 s^a) e_n,
    K(s) = s^(a-1) P(s),
    S(s) e_n = s^(g-1) E_{a,g}(-n^2 s^a) e_n,    g = a + b(1 - a).

The first identity is the Laplace transform of a theta M_a(theta); it is
cross-checked against the literal Wright integral in the test suite.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate, special

from .errors import DomainError
from .psicalc import FracOrder, PsiFunction, singular_rule
from .specfn import ml_eval

SQRT_2_PI = math.sqrt(2.0 / math.pi)


# ----------------------------------------------------------------- basis


def sine_basis(xi, n_modes: int):
    """e_n(xi) = sqrt(2/pi) sin(n xi), shape (len(xi), n_modes)."""
    xi = np.asarray(xi, dtype=float)
    n = np.arange(1, n_modes + 1)
    return SQRT_2_PI * np.sin(np.multiply.outer(xi, n))


def xi_quadrature(n_modes: int, n_nodes: int | None = None):
    """Gauss-Legendre nodes and weights on [0, pi] with >= 4N nodes."""
    m = max(4 * n_modes, 64) if n_nodes is None else n_nodes
    x, w = _leggauss(m)
    return 0.5 * np.pi * (x + 1.0), 0.5 * np.pi * w


@lru_cache(maxsize=16)
def _leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@dataclass
class SpectralState:
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("spectral coefficients must be finite")

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __call__(self, xi):
        return sine_basis(xi, self.n_modes) @ self.coeffs

    def __add__(self, other):
        return SpectralState(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralState(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralState(self.coeffs * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, n_modes: int):
        return cls(np.zeros(n_modes))

    @classmethod
    def mode(cls, k: int, n_modes: int, value: float = 1.0):
        c = np.zeros(n_modes)
        c[k - 1] = value
        return cls(c)

    @classmethod
    def from_function(cls, f: Callable, n_modes: int, n_quad: int = 2048):
        """Project f onto the first n_modes sine modes; also returns the tail bound.

        The tail ||f - P_N f|| follows from Parseval as
        sqrt(||f||^2 - sum c_n^2).
        """
        xi, w = xi_quadrature(n_modes, n_quad)
        fx = np.asarray(f(xi), dtype=float)
        c = (sine_basis(xi, n_modes) * (w * fx)[:, None]).sum(axis=0)
        total = float(np.sum(w * fx**2))
        tail = math.sqrt(max(total - float(c @ c), 0.0))
        state = cls(c)
        state.tail = tail
        return state


def parabola_coeffs(n_modes: int):
    """Exact sine coefficients of xi (pi - xi): sqrt(2/pi) 4 / n^3 for odd n."""
    n = np.arange(1, n_modes + 1)
    return np.where(n % 2 == 1, SQRT_2_PI * 4.0 / n.astype(float) ** 3, 0.0)


def parabola_tail(n_modes: int) -> float:
    """||xi(pi - xi) - P_N||, using ||xi(pi-xi)||^2 = pi^5/30."""
    c = parabola_coeffs(n_modes)
    return math.sqrt(max(math.pi**5 / 30.0 - float(c @ c), 0.0))


# --------------------------------------------------------------- problem


@dataclass(eq=False)
class EvolutionProblem:
    psi: PsiFunction
    order: FracOrder
    n_modes: int = 32
    x0: SpectralState | None = None
    control_gain: np.ndarray | None = None
    semigroup_bound: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.x0 is None:
            self.x0 = SpectralState.mode(1, self.n_modes)
        if self.x0.n_modes != self.n_modes:
            raise ValueError("x0 has the wrong number of modes")
        gain = np.ones(self.n_modes) if self.control_gain is None else np.asarray(self.control_gain, float)
        if gain.shape != (self.n_modes,) or np.any(gain < 0):
            raise ValueError("control_gain must be a nonnegative vector of length n_modes")
        self.control_gain = gain

    @property
    def rates(self):
        n = np.arange(1, self.n_modes + 1, dtype=float)
        return n * n

    @property
    def alpha(self):
        return self.order.alpha

    @property
    def gamma(self):
        return self.order.gamma

    @property
    def a(self):
        return self.psi.a

    @property
    def b(self):
        return self.psi.b

    @property
    def clock_span(self) -> float:
        """Psi(b, a)."""
        return float(self.psi.offset(self.psi.b))

    def with_x0(self, x0: SpectralState) -> "EvolutionProblem":
        """Same dynamics with another initial state; quadrature caches are shared."""
        return EvolutionProblem(self.psi, self.order, self.n_modes, x0, self.control_gain.copy(),
                                self.semigroup_bound, self._cache)

    # per-mode kernels (arrays broadcast against the mode axis) --------------

    def p_kernel(self, s):
        """E_{a,a}(-lambda_n s^a), shape s.shape + (N,)."""
        s = np.asarray(s, dtype=float)
        z = -np.multiply.outer(s**self.alpha, self.rates)
        return ml_eval(self.alpha, self.alpha, z.ravel()).reshape(z.shape)

    def s_weighted_kernel(self, s):
        """s^(1-g) S(s) per mode = E_{a,g}(-lambda_n s^a)."""
        s = np.asarray(s, dtype=float)
        z = -np.multiply.outer(s**self.alpha, self.rates)
        return ml_eval(self.alpha, self.gamma, z.ravel()).reshape(z.shape)

    def propagator(self, grid) -> "Propagator":
        grid = np.asarray(grid, dtype=float)
        key = ("prop", grid.tobytes())
        if key not in self._cache:
            self._cache[key] = Propagator(self, grid)
        return self._cache[key]


def default_grid(problem: EvolutionProblem, n_nodes: int = 201):
    """Nodes graded toward a with exponent 1/gamma."""
    a, b = problem.a, problem.b
    u = np.linspace(0.0, 1.0, n_nodes)
    g = a + (b - a) * u ** (1.0 / problem.gamma)
    g[-1] = b
    return g


# ------------------------------------------------------------- operators


def _check_state(problem, x):
    if x.n_modes != problem.n_modes:
        raise ValueError("state and problem disagree on the number of modes")


def apply_P(problem: EvolutionProblem, s: float, x: SpectralState) -> SpectralState:
    if s < 0:
        raise DomainError("P is defined for s >= 0", operation="apply_P")
    _check_state(problem, x)
    return SpectralState(problem.p_kernel(s) * x.coeffs)


def apply_K(problem: EvolutionProblem, s: float, x: SpectralState) -> SpectralState:
    if s <= 0:
        raise DomainError("K is singular at s = 0; integrate through it instead", operation="apply_K")
    return SpectralState(s ** (problem.alpha - 1.0) * apply_P(problem, s, x).coeffs)


def apply_S(problem: EvolutionProblem, s: float, x: SpectralState) -> SpectralState:
    if s <= 0:
        raise DomainError("S is defined for s > 0 (its weighted limit at 0 is x/Gamma(gamma))", operation="apply_S")
    _check_state(problem, x)
    return SpectralState(s ** (problem.gamma - 1.0) * problem.s_weighted_kernel(s) * x.coeffs)


# ------------------------------------------------------ trajectories etc.


@dataclass
class Trajectory:
    """States on a grid, stored in weighted form y(t) = Psi(t,a)^(1-g) q(t).

    The weighted form is finite at t = a, where it equals x0/Gamma(g).
    """

    grid: np.ndarray
    weighted: np.ndarray  # (n_nodes, N)
    clock: np.ndarray  # Psi(t_i, a)
    gamma: float

    @property
    def weighted_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.weighted, axis=1)))

    def state(self, i: int) -> SpectralState:
        if self.clock[i] == 0.0:
            if self.gamma < 1.0:
                raise DomainError("q(a) is singular; use the weighted value", operation="Trajectory.state")
            return SpectralState(self.weighted[i])
        return SpectralState(self.weighted[i] * self.clock[i] ** (self.gamma - 1.0))

    @property
    def states(self):
        """q at every node; the node a entry is the weighted limit when g < 1."""
        q = self.weighted.copy()
        pos = self.clock > 0
        q[pos] *= (self.clock[pos] ** (self.gamma - 1.0))[:, None]
        return q

    def endpoint(self) -> SpectralState:
        return self.state(len(self.grid) - 1)

    def weighted_distance(self, other: "Trajectory") -> float:
        return float(np.max(np.linalg.norm(self.weighted - other.weighted, axis=1)))

    def interpolant(self, psi: PsiFunction):
        """q(s) at arbitrary times: cubic spline of the weighted state in the clock."""
        spline = interpolate.CubicSpline(self.clock, self.weighted, axis=0)
        g = self.gamma

        def q_at(s):
            c = np.asarray(psi.offset(s), dtype=float)
            y = spline(np.clip(c, self.clock[0], self.clock[-1]))
            with np.errstate(divide="ignore"):
                w = np.where(c > 0, c ** (g - 1.0), 0.0) if g < 1.0 else np.ones_like(c)
            return y * w[..., None]

        return q_at


@dataclass
class ControlFunction:
    """Control u(t) in Y = L2(0, pi), stored per mode on a grid.

    ``evaluator(s, dist_b)`` gives off-grid values; dist_b = psi(b) - psi(s)
    is passed separately so controls that are singular at b can be evaluated
    without cancellation.  ``exact_energy`` overrides the grid quadrature for
    controls whose L2 norm is known in closed form.
    """

    grid: np.ndarray
    values: np.ndarray
    evaluator: Callable | None = field(default=None, repr=False)
    exact_energy: float | None = None
    singular_at_b: bool = False

    @property
    def energy(self) -> float:
        if self.exact_energy is not None:
            return float(self.exact_energy)
        sq = np.sum(self.values**2, axis=1)
        return float(np.trapezoid(sq, self.grid))

    def evaluate(self, s, dist_b=None):
        if self.evaluator is not None:
            return self.evaluator(np.asarray(s, dtype=float), dist_b)
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape + (self.values.shape[1],))
        for n in range(self.values.shape[1]):
            out[..., n] = np.interp(s, self.grid, self.values[:, n])
        return out

    @classmethod
    def zero(cls, grid, n_modes):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.zeros((grid.size, n_modes)), lambda s, d=None: np.zeros(np.shape(s) + (n_modes,)), 0.0)


class Propagator:
    """Cached quadrature for the Duhamel integral on a fixed grid.

    For node t_i the integral int_a^{t_i} psi'(s) Psi(t_i,s)^(a-1) P(Psi(t_i,s)) g(s) ds
    becomes sum_j w_ij P(d_ij) g(s_ij) with d_ij = Psi(t_i, s_ij).  Nodes,
    weights and the kernel values are computed once and reused for every
    forcing and control.
    """

    def __init__(self, problem: EvolutionProblem, grid, n_gauss: int = 12, levels: int = 16):
        grid = np.asarray(grid, dtype=float)
        if grid[0] != problem.a or np.any(np.diff(grid) <= 0) or grid[-1] > problem.b:
            raise DomainError("grid must start at a, increase strictly, and stay in [a, b]", operation="mild_solution")
        psi, alpha = problem.psi, problem.alpha
        self.problem = problem
        self.grid = grid
        self.clock = np.asarray(psi.offset(grid), dtype=float)
        A = float(psi.value(problem.a))
        Tb = problem.clock_span
        nodes, dist_b, kern, owner = [], [], [], []
        for i in range(1, grid.size):
            at_b = grid[i] == problem.b
            # the steering control adds Psi(b,s)^(a-1) at b; resolve that layer finer
            rule = singular_rule(A, A + self.clock[i], alpha, hi_extra=(alpha - 1.0) if at_b else 0.0,
                                 n_gauss=16 if at_b else n_gauss, levels=40 if at_b else levels)
            nodes.append(psi.offset_inverse(rule.dist_lo))
            dist_b.append((Tb - self.clock[i]) + rule.dist_hi)
            kern.append(rule.weights[:, None] * problem.p_kernel(rule.dist_hi))
            owner.append(np.full(rule.weights.size, i))
        self.nodes = np.concatenate(nodes)
        self.dist_b = np.concatenate(dist_b)
        self.kernel = np.concatenate(kern)
        self.owner = np.concatenate(owner)
        self.starts = np.searchsorted(self.owner, np.arange(1, grid.size))
        self.s_weighted = problem.s_weighted_kernel(self.clock)  # (n_nodes, N)

    def duhamel(self, g_vals):
        """Integral terms (n_nodes, N) from integrand samples g at self.nodes."""
        out = np.zeros((self.grid.size, self.kernel.shape[1]))
        out[1:] = np.add.reduceat(self.kernel * g_vals, self.starts, axis=0)
        return out

    def endpoint_duhamel(self, g_vals):
        """The integral term at the last grid node only."""
        sl = slice(self.starts[-1], None)
        return np.sum(self.kernel[sl] * np.asarray(g_vals)[sl], axis=0)

    def homogeneous_weighted(self, x0: SpectralState):
        return self.s_weighted * x0.coeffs

    def weight(self):
        g = self.problem.gamma
        with np.errstate(divide="ignore"):
            return np.where(self.clock > 0, self.clock ** (1.0 - g), 0.0)


def mild_solution(
    problem: EvolutionProblem,
    forcing: Callable | None = None,
    control: ControlFunction | None = None,
    grid=None,
) -> Trajectory:
    """Mild solution on a grid.

    ``forcing(s)`` returns f coefficients at an array of times, shape
    (len(s), N).  ``control`` contributes B u through its evaluator.
    """
    grid = default_grid(problem) if grid is None else np.asarray(grid, dtype=float)
    prop = problem.propagator(grid)
    g_vals = 0.0
    if forcing is not None:
        g_vals = g_vals + np.asarray(forcing(prop.nodes), dtype=float)
    if control is not None:
        g_vals = g_vals + problem.control_gain * control.evaluate(prop.nodes, prop.dist_b)
    if np.ndim(g_vals) == 0:
        g_vals = np.zeros_like(prop.kernel)
    integral = prop.duhamel(g_vals)
    weighted = prop.homogeneous_weighted(problem.x0) + prop.weight()[:, None] * integral
    return Trajectory(grid=grid, weighted=weighted, clock=prop.clock, gamma=problem.gamma)


def gronwall_bound(problem: EvolutionProblem, a_U_norm: float, c_U: float, B_norm: float, t) -> float:
    """C E_a(D Gamma(a) Psi(t,a)^a) bounding the weighted state norm.

    C = M/Gamma(g) |x0| + M/Gamma(a) |B| Psi(b,a)^(1-g) |a_U|_L2 (Psi(b,a)^(2a-1)/(2a-1))^(1/2)
    D = M c_U/Gamma(a) |B| Psi(b,a)^(1-g)
    """
    if min(a_U_norm, c_U, B_norm) < 0:
        raise ValueError("bound constants must be nonnegative")
    al, g, M = problem.alpha, problem.gamma, problem.semigroup_bound
    span = problem.clock_span
    C = M / special.gamma(g) * problem.x0.norm()
    C += M / special.gamma(al) * B_norm * span ** (1 - g) * a_U_norm * math.sqrt(span ** (2 * al - 1) / (2 * al - 1))
    D = M * c_U / special.gamma(al) * B_norm * span ** (1 - g)
    clock = np.asarray(problem.psi.offset(t), dtype=float)
    return C * ml_eval(al, 1.0, D * special.gamma(al) * clock**al)
