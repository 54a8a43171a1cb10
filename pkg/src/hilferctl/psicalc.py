"""The psi-clock: clock families, fractional integrals, Hilfer derivative.

Everything here works in the clock variable tau = psi(s).  The kernel
psi'(s) (psi(t) - psi(s))^(alpha - 1) ds becomes (T - tau)^(alpha - 1) dtau,
so singular integrals reduce to Jacobi-weighted integrals on [psi(a), psi(t)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, GateError, QuadratureError

KINDS = ("linear", "power", "exponential", "logarithmic", "custom")
_DEFAULT_PARAMS = {
    "linear": (1.0, 0.0),  # slope, offset
    "power": (2.0,),  # exponent
    "exponential": (1.0,),  # rate
    "logarithmic": (0.0,),  # shift: psi(t) = ln(t + shift)
    "custom": (),
}
GATE_MESSAGE = (
    "alpha must exceed 0.5: the kernel psi'(s)(psi(t)-psi(s))^(alpha-1) is square "
    "integrable on [a,t] only for alpha > 1/2, which the controllability Gramian "
    "and the a-priori estimates require"
)


@dataclass(frozen=True)
class FracOrder:
    alpha: float
    beta: float

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (0.5 < a <= 1.0):
            raise GateError(f"{GATE_MESSAGE} (got alpha={a})", operation="FracOrder")
        if not (0.0 <= b <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {b}")

    @property
    def gamma(self) -> float:
        return self.alpha + self.beta * (1.0 - self.alpha)


@dataclass(frozen=True, eq=False)
class PsiFunction:
    """Strictly increasing clock psi on [a, b].

    ``power`` with a = 0 and exponent > 1 has psi'(a) = 0; that single
    endpoint zero is tolerated because every integral is taken in the clock
    variable, where psi' never appears as a divisor.
    """

    kind: str = "linear"
    params: tuple = ()
    a: float = 0.0
    b: float = 1.0
    func: Callable | None = field(default=None, repr=False)
    deriv: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown psi kind {self.kind!r}; expected one of {KINDS}")
        if not self.b > self.a:
            raise DomainError(f"need b > a, got a={self.a}, b={self.b}", operation="PsiFunction")
        params = tuple(float(p) for p in self.params) or _DEFAULT_PARAMS[self.kind]
        if self.kind == "linear" and len(params) == 1:
            params = (params[0], 0.0)
        object.__setattr__(self, "params", params)
        a = self.a
        if self.kind == "linear" and params[0] <= 0:
            raise DomainError("linear psi needs a positive slope", operation="PsiFunction")
        if self.kind == "power":
            p = params[0]
            if p <= 0 or a < 0 or (p < 1 and a == 0):
                raise DomainError(
                    "power psi t^p needs p > 0, a >= 0, and a > 0 when p < 1 (psi' must stay finite)",
                    operation="PsiFunction",
                )
        if self.kind == "exponential" and params[0] <= 0:
            raise DomainError("exponential psi needs a positive rate", operation="PsiFunction")
        if self.kind == "logarithmic" and not a + params[0] > 0:
            raise DomainError(
                f"logarithmic psi ln(t + {params[0]}) is undefined at a={a}; need a + shift > 0",
                operation="PsiFunction",
            )
        if self.kind == "custom":
            if self.func is None or self.deriv is None:
                raise ValueError("custom psi needs both func and deriv callables")
            self._certify_monotone()

    def _certify_monotone(self, n: int = 1000):
        ts = np.linspace(self.a, self.b, n)
        d = np.asarray([float(self.deriv(t)) for t in ts])
        v = np.asarray([float(self.func(t)) for t in ts])
        if not np.all(np.isfinite(d)) or np.any(d <= 0) or np.any(np.diff(v) <= 0):
            bad = ts[np.argmax(~(d > 0))]
            raise DomainError(
                f"custom psi fails the monotonicity certificate near t={bad}",
                operation="PsiFunction",
            )

    # -- evaluation (vectorised) --------------------------------------------

    def value(self, t):
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "linear":
            return p[0] * t + p[1]
        if k == "power":
            return t ** p[0]
        if k == "exponential":
            return np.exp(p[0] * t)
        if k == "logarithmic":
            return np.log(t + p[0])
        return np.vectorize(lambda x: float(self.func(x)))(t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "linear":
            return np.full_like(t, p[0])
        if k == "power":
            return p[0] * t ** (p[0] - 1.0)
        if k == "exponential":
            return p[0] * np.exp(p[0] * t)
        if k == "logarithmic":
            return 1.0 / (t + p[0])
        return np.vectorize(lambda x: float(self.deriv(x)))(t)

    def inverse(self, y):
        """t with psi(t) = y, for y in [psi(a), psi(b)]."""
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.params
        if k == "linear":
            t = (y - p[1]) / p[0]
        elif k == "power":
            t = np.maximum(y, 0.0) ** (1.0 / p[0])
        elif k == "exponential":
            t = np.log(y) / p[0]
        elif k == "logarithmic":
            t = np.exp(y) - p[0]
        else:
            lo = np.full_like(y, self.a)
            hi = np.full_like(y, self.b)
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                below = self.value(mid) < y
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            t = 0.5 * (lo + hi)
        return np.clip(t, self.a, self.b)

    def offset(self, t):
        """psi(t) - psi(a), accurate for t next to a."""
        t = np.asarray(t, dtype=float)
        k, p, a = self.kind, self.params, self.a
        if k == "linear":
            return p[0] * (t - a)
        if k == "exponential":
            return math.exp(p[0] * a) * np.expm1(p[0] * (t - a))
        if k == "logarithmic":
            return np.log1p((t - a) / (a + p[0]))
        return self.value(t) - float(self.value(a))

    def offset_inverse(self, d):
        """t with psi(t) - psi(a) = d, accurate for tiny offsets d."""
        d = np.asarray(d, dtype=float)
        k, p, a = self.kind, self.params, self.a
        if k == "linear":
            t = a + d / p[0]
        elif k == "power":
            t = (a ** p[0] + d) ** (1.0 / p[0])
        elif k == "exponential":
            t = a + np.log1p(d / math.exp(p[0] * a)) / p[0]
        elif k == "logarithmic":
            t = a + (a + p[0]) * np.expm1(d)
        else:
            return self.inverse(float(self.value(a)) + d)
        return np.clip(t, self.a, self.b)

    def nodes_of(self, rule: "SingularRule", t: float):
        """Times of the rule's clock nodes on [a, t], without cancellation."""
        return self.offset_inverse(rule.dist_lo)

    def Psi(self, t, s):
        """psi(t) - psi(s)."""
        return self.value(t) - self.value(s)

    def check_domain(self, t, what="t"):
        t = np.asarray(t, dtype=float)
        span = self.b - self.a
        if np.any(t < self.a - 1e-12 * span) or np.any(t > self.b + 1e-12 * span):
            raise DomainError(f"{what} outside [{self.a}, {self.b}]", operation="psi_eval")


def psi_eval(psi: PsiFunction, t: float) -> tuple[float, float]:
    psi.check_domain(t)
    return float(psi.value(t)), float(psi.derivative(t))


# ----------------------------------------------------------- quadrature


@lru_cache(maxsize=64)
def _jacobi(n: int, beta_exp: float):
    """Gauss-Jacobi on [0, 1] for the weight x^beta_exp."""
    x, w = special.roots_jacobi(n, 0.0, beta_exp)
    return (x + 1.0) / 2.0, w / 2.0 ** (1.0 + beta_exp)


@lru_cache(maxsize=8)
def _legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@dataclass
class SingularRule:
    """Nodes and weights for int_A^T (T - tau)^(alpha-1) G(tau) dtau.

    ``dist_hi`` holds T - tau_j and ``dist_lo`` holds tau_j - A, both built
    without subtraction so kernels of the distance keep full relative
    accuracy next to either end point.
    """

    tau: np.ndarray
    dist_lo: np.ndarray
    dist_hi: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return np.tensordot(np.asarray(values), self.weights, axes=([-1], [0]))


def singular_rule(
    A: float,
    T: float,
    alpha: float,
    lo_exp: float = 0.0,
    hi_extra: float = 0.0,
    n_gauss: int = 8,
    levels: int = 16,
    ratio: float = 0.25,
) -> SingularRule:
    """Composite rule for the weight (T-tau)^(alpha-1) on [A, T].

    The interval is split at its midpoint and each half is cut geometrically
    (ratio ``ratio``, ``levels`` cuts) toward its end point.  Interior panels
    use Gauss-Legendre; the two innermost panels use Gauss-Jacobi with the
    end-point exponents, so G may carry an extra factor (tau - A)^lo_exp and
    (T - tau)^hi_extra, as the weighted initial layer and the steering
    control do.  The innermost panels have width ~ ratio^levels, so using
    them on integrands without that factor costs nothing measurable.
    """
    L = T - A
    if L <= 0:
        return SingularRule(*(np.zeros(0) for _ in range(4)))
    xg, wg = _legendre(n_gauss)
    cuts = 0.5 * ratio ** np.arange(levels + 1)  # 0.5, 0.5r, ..., fractions of L
    dlo, dhi, ws = [], [], []
    kexp = alpha - 1.0
    # half toward T: distances from T in [L cuts[j+1], L cuts[j]]
    for j in range(levels):
        u0, u1 = L * cuts[j + 1], L * cuts[j]
        d = u0 + (u1 - u0) * xg
        dhi.append(d)
        dlo.append(L - d)
        ws.append((u1 - u0) * wg * d**kexp)
    xj, wj = _jacobi(n_gauss, kexp + hi_extra)
    h = L * cuts[-1]
    d = h * xj
    dhi.append(d)
    dlo.append(L - d)
    ws.append(h ** (1.0 + kexp + hi_extra) * wj * d ** (-hi_extra) if hi_extra else h ** (1.0 + kexp) * wj)
    # half toward A: distances from A
    for j in range(levels):
        u0, u1 = L * cuts[j + 1], L * cuts[j]
        e = u0 + (u1 - u0) * xg
        dlo.append(e)
        dhi.append(L - e)
        ws.append((u1 - u0) * wg * (L - e) ** kexp)
    xj, wj = _jacobi(n_gauss, lo_exp)
    e = h * xj
    dlo.append(e)
    dhi.append(L - e)
    ws.append(h ** (1.0 + lo_exp) * wj * e ** (-lo_exp) * (L - e) ** kexp)
    dlo = np.concatenate(dlo)
    dhi = np.concatenate(dhi)
    w = np.concatenate(ws)
    tau = np.where(dlo < dhi, A + dlo, T - dhi)
    return SingularRule(tau=tau, dist_lo=dlo, dist_hi=dhi, weights=w)


def psi_frac_integral(
    psi: PsiFunction, alpha: float, f: Callable, t: float, lo_exp: float = 0.0, check: bool = True
) -> float:
    """(1/Gamma(alpha)) int_a^t psi'(s) (psi(t)-psi(s))^(alpha-1) f(s) ds.

    ``f`` is called with arrays of times.  ``lo_exp`` declares a known
    factor (psi(s)-psi(a))^lo_exp in f, which the rule then absorbs exactly.
    The result is cross-checked against a second rule with more levels and
    nodes; a mismatch beyond 1e-9 raises QuadratureError.  ``check=False``
    skips the second rule (used when f itself is a noisy difference quotient).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    psi.check_domain(t)
    A, T = float(psi.value(psi.a)), float(psi.value(t))
    if T <= A:
        raise DomainError("t must exceed a", operation="psi_frac_integral")
    vals = []
    for ng, lev in ((10, 16), (14, 20))[: 2 if check else 1]:
        rule = singular_rule(A, T, alpha, lo_exp=lo_exp, n_gauss=ng, levels=lev)
        s = psi.nodes_of(rule, t)
        vals.append(rule.integrate(np.asarray(f(s), dtype=float)) / special.gamma(alpha))
    if not check:
        return float(vals[0])
    scale = max(abs(vals[1]), 1e-300)
    if not np.isfinite(vals[1]) or abs(vals[0] - vals[1]) > 1e-9 * scale + 1e-14:
        raise QuadratureError(
            f"singular quadrature did not settle ({vals[0]!r} vs {vals[1]!r})",
            operation="psi_frac_integral",
        )
    return float(vals[1])


def psi_hilfer_derivative(
    psi: PsiFunction,
    order: FracOrder,
    f: Callable,
    t: float,
    h: float | None = None,
    lo_exp: float = 0.0,
) -> float:
    """Order-alpha, type-beta psi-Hilfer derivative (n = 1) of f at t.

    D f = I^{beta(1-alpha)} ( (1/psi') d/dt ) I^{(1-beta)(1-alpha)} f.

    The inner integral g = I^{(1-beta)(1-alpha)} f is differentiated in the
    clock variable by a central difference, and the outer integral is taken
    with the singular rule.  ``lo_exp`` declares a factor
    (Psi(s,a))^lo_exp of f (for instance gamma - 1) so the inner integral
    absorbs it exactly.
    """
    alpha, beta = order.alpha, order.beta
    nu_in = (1.0 - beta) * (1.0 - alpha)
    nu_out = beta * (1.0 - alpha)
    A = float(psi.value(psi.a))

    def inner(s_arr):
        s_arr = np.atleast_1d(s_arr)
        out = np.empty(s_arr.shape)
        for i, s in enumerate(s_arr):
            if nu_in == 0.0:
                out[i] = float(np.asarray(f(np.array([s])))[0])
            else:
                out[i] = psi_frac_integral(psi, nu_in, f, float(s), lo_exp=lo_exp) if s > psi.a else 0.0
        return out

    def dinner(s_arr):
        """d g / d tau at clock points tau = psi(s)."""
        s_arr = np.atleast_1d(np.asarray(s_arr, dtype=float))
        taus = psi.value(s_arr)
        out = np.empty(s_arr.shape)
        eps = np.finfo(float).eps
        top = float(psi.value(psi.b))
        for i, tau in enumerate(taus):
            span = tau - A
            step = h if h is not None else eps ** (1.0 / 3.0) * max(abs(tau), 1.0)
            if step <= 64 * eps * max(abs(tau), 1.0):
                raise QuadratureError("finite-difference step underflow", operation="psi_hilfer_derivative")
            if span >= 2.0 * step:
                lo, hi = tau - step, min(tau + step, top)
            elif span >= 2e-3 * step:
                lo, hi = tau - 0.5 * span, min(tau + 0.5 * span, top)
            else:
                # one-sided stencil in the thin layer next to a, whose
                # weight in the outer integral is negligible
                lo, hi = tau, min(tau + step, top)
            gp, gm = inner(psi.inverse(np.array([hi, lo])))
            out[i] = (gp - gm) / (hi - lo)
        return out

    if nu_out == 0.0:
        return float(dinner(np.array([t]))[0])
    return psi_frac_integral(psi, nu_out, dinner, t, check=False)


def kernel_l2_norm(psi: PsiFunction, alpha: float, t: float) -> float:
    """(int_a^t [psi'(s) (psi(t)-psi(s))^(alpha-1)]^2 ds)^(1/2)."""
    if alpha <= 0.5:
        raise GateError(f"{GATE_MESSAGE} (got alpha={alpha}; the integral diverges)", operation="kernel_l2_norm")
    psi.check_domain(t)
    A, T = float(psi.value(psi.a)), float(psi.value(t))
    if T <= A:
        raise DomainError("t must exceed a", operation="kernel_l2_norm")
    if psi.kind == "linear":
        c = psi.params[0]
        return math.sqrt(c * (T - A) ** (2 * alpha - 1) / (2 * alpha - 1))

    def g(tau):
        return float(psi.derivative(psi.inverse(tau)))

    val, err = integrate.quad(g, A, T, weight="alg", wvar=(0.0, 2 * alpha - 2), epsabs=0.0, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or err > 1e-9 * abs(val):
        raise QuadratureError("kernel norm quadrature failed", operation="kernel_l2_norm")
    return math.sqrt(val)
