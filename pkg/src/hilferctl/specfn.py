"""Gamma, two-parameter Mittag-Leffler and Mainardi-Wright functions.

Evaluation plan for E_{a,b}(z) on the real line:

* ``z > 0``: the power series summed in log space (all terms are positive).
* ``-Z0 <= z <= 0``: the power series directly.
* ``z < -Z0``: either the algebraic asymptotic expansion, when its own error
  estimate certifies 1e-14 relative accuracy, or the numerical inversion of
  the Laplace transform ``s^(a-b) / (s^a + x)`` on a Talbot contour.

The contour quadrature is written as a rational function
``sum_j c_j / (d_j + x)`` whose coefficients depend only on (a, b), so one
table serves a whole array of arguments and its derivative in x is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import PoleError, QuadratureError, UnsupportedRange

Z0 = 1.0
POSITIVE_LIMIT = 50.0
TALBOT_NODES = 24
ASYMPTOTIC_TERMS = 60
_ASYM_RTOL = 1e-14


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def gamma_fn(x):
    """Gamma function with an explicit error at the poles."""
    xa = np.asarray(x, dtype=float)
    if np.any((xa <= 0) & (xa == np.floor(xa))):
        raise PoleError(f"Gamma has a pole at {x}", operation="gamma_fn")
    out = special.gamma(xa)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- series


def _series_terms(alpha, beta, zmax):
    """Number of terms so that |z|^k / Gamma(alpha k + beta) < 1e-18 past the peak."""
    kmax = 20
    while True:
        k = np.arange(kmax + 1, dtype=float)
        lt = k * math.log(max(zmax, 1e-300)) - special.gammaln(alpha * k + beta)
        if (lt[-1] < -42.0 and lt[-1] < lt.max() - 42.0) or kmax > 4000:
            return kmax
        kmax *= 2


def _series(alpha, beta, z, deriv=False):
    """Direct power series by Horner's rule; returns (value, condition number)."""
    z = np.asarray(z, dtype=float)
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    kmax = _series_terms(alpha, beta, zmax)
    k = np.arange(kmax + 1, dtype=float)
    coef = special.rgamma(alpha * k + beta)
    if deriv:
        coef = k[1:] * coef[1:]
    total = np.zeros_like(z)
    absum = np.zeros_like(z)
    az = np.abs(z)
    for c in coef[::-1]:
        total = total * z + c
        absum = absum * az + abs(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(total != 0, absum / np.abs(total), np.inf)
    return total, cond


def _positive_series(alpha, beta, z):
    """E_{a,b}(z) for 0 < z by a log-space sum of positive terms."""
    z = np.asarray(z, dtype=float)
    zmax = float(z.max())
    kpeak = zmax ** (1.0 / alpha) / alpha
    kmax = int(2 * kpeak + 10 * math.sqrt(kpeak + 1) + 60)
    k = np.arange(kmax + 1, dtype=float)
    logt = k * np.log(z)[..., None] - special.gammaln(alpha * k + beta)
    sign = special.gammasgn(alpha * k + beta)
    ls = special.logsumexp(logt, axis=-1, b=np.broadcast_to(sign, logt.shape))
    with np.errstate(over="ignore"):
        out = np.exp(ls)
    if not np.all(np.isfinite(out)):
        raise UnsupportedRange(
            f"E_({alpha},{beta})({zmax}) overflows double precision",
            operation="mittag_leffler",
        )
    return out


# ---------------------------------------------------------------- contour


@lru_cache(maxsize=256)
def _talbot_table(alpha: float, beta: float, n: int = TALBOT_NODES):
    k = np.arange(n)
    th = -np.pi + (k + 0.5) * 2.0 * np.pi / n
    z = n * (0.5017 * th / np.tan(0.6407 * th) - 0.6122 + 0.2645j * th)
    dz = n * (
        0.5017 / np.tan(0.6407 * th)
        - 0.5017 * 0.6407 * th / np.sin(0.6407 * th) ** 2
        + 0.2645j
    )
    c = np.exp(z) * z ** (alpha - beta) * dz / (1j * n)
    d = z**alpha
    return c, d


def _talbot(alpha, beta, x, deriv=False):
    """E(-x) (or dE/dz at z=-x) for x > 0 by contour inversion."""
    c, d = _talbot_table(float(alpha), float(beta))
    den = d + np.asarray(x, dtype=float)[..., None]
    if deriv:
        return np.real(np.sum(c / den**2, axis=-1))
    return np.real(np.sum(c / den, axis=-1))


@lru_cache(maxsize=256)
def _asymptotic_table(alpha: float, beta: float, deriv: bool):
    k = np.arange(1, ASYMPTOTIC_TERMS + 1, dtype=float)
    # E(z) ~ -sum z^{-k}/Gamma(beta - alpha k); at z = -x this is
    # sum (-1)^{k+1} x^{-k}/Gamma(beta - alpha k), and the derivative series
    # sum k z^{-k-1}/Gamma(beta - alpha k) becomes sum (-1)^{k+1} k x^{-k-1}/...
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    coef = sign * special.rgamma(beta - alpha * k)
    if deriv:
        coef = coef * k
    # |1/Gamma(beta - alpha k)| <= Gamma(1 + alpha k - beta)/pi by reflection.
    # The log envelope is convex in k, so its minimiser over k is the number
    # of increments below log x.
    logenv0 = special.gammaln(1.0 + alpha * k - beta) - math.log(math.pi)
    if deriv:
        logenv0 = logenv0 + np.log(k)
    steps = np.diff(logenv0)
    steps = np.maximum.accumulate(steps)
    return coef, logenv0, steps


def _asymptotic(alpha, beta, x, deriv=False):
    """Algebraic expansion at z=-x with an error estimate per point.

    The expansion is truncated before its smallest envelope term; the error
    estimate is that term plus, for 2/3 < alpha < 1, the size of the
    exponentially small contribution generated near s = x^{1/alpha}
    e^{i pi/alpha}, which the algebraic series cannot see as alpha nears 1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coef, logenv0, steps = _asymptotic_table(float(alpha), float(beta), bool(deriv))
    logx = np.log(x)
    cut = np.searchsorted(steps, logx)  # index of the smallest envelope term
    inv = 1.0 / x
    lead = inv * inv if deriv else inv
    total = np.zeros_like(x)
    # Horner once per distinct truncation point (there are only a few)
    for m in np.unique(cut[cut > 0]):
        sel = cut == m
        total[sel] = lead[sel] * np.polynomial.polynomial.polyval(inv[sel], coef[:m])
    shift = 1.0 if deriv else 0.0
    tail = np.exp(logenv0[cut] - (cut + 1 + shift) * logx)
    with np.errstate(over="ignore", invalid="ignore"):
        r = x ** (1.0 / alpha)
        c = math.cos(math.pi / alpha)
        if c < 0.0:
            stokes = np.exp(r * c) * r ** (1.0 - beta + shift) / alpha
            stokes = np.where(np.isfinite(stokes), stokes, np.inf)
        else:
            stokes = np.zeros_like(r)
    return total, tail + stokes


@lru_cache(maxsize=256)
def _asymptotic_threshold(alpha: float, beta: float, deriv: bool) -> float:
    """Smallest x on a log grid beyond which the expansion certifies itself."""
    xs = np.geomspace(Z0, 1e12, 241)
    val, err = _asymptotic(alpha, beta, xs, deriv)
    ok = err <= _ASYM_RTOL * np.abs(val)
    if ok[-1] is False or not ok[-1]:
        return np.inf
    bad = np.nonzero(~ok)[0]
    return float(xs[bad[-1] + 1]) if bad.size else float(xs[0])


# ---------------------------------------------------------------- public


def _ml_negative(alpha, beta, x, deriv=False):
    """E_{a,b}(-x) or E'_{a,b}(-x) for x >= 0 (array)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= Z0
    if np.any(small):
        out[small] = _series(alpha, beta, -x[small], deriv=deriv)[0]
    big = ~small
    if np.any(big):
        xb = x[big]
        if alpha == 1.0:
            vals = _alpha_one(beta, -xb, deriv)
            if vals is not None:
                out[big] = vals
                return out
        if alpha > 1.0:
            raise UnsupportedRange(
                f"alpha={alpha} > 1 is supported only for |z| <= {Z0}",
                operation="mittag_leffler",
            )
        res = np.empty_like(xb)
        far = xb >= _asymptotic_threshold(alpha, beta, deriv)
        if np.any(far):
            val, err = _asymptotic(alpha, beta, xb[far], deriv)
            good = err <= _ASYM_RTOL * np.abs(val)
            vf = np.where(good, val, 0.0)
            if np.any(~good):
                vf[~good] = _talbot(alpha, beta, xb[far][~good], deriv)
            res[far] = vf
        if np.any(~far):
            res[~far] = _talbot(alpha, beta, xb[~far], deriv)
        out[big] = res
    return out


def _alpha_one(beta, z, deriv):
    """Closed forms of E_{1,b} for the integer b values the package needs."""
    ez = np.exp(z)
    if beta == 1.0:
        return ez
    if beta == 0.0:
        return (1.0 + z) * ez if deriv else z * ez
    if beta == 2.0 and not deriv:
        return np.expm1(z) / z
    return None


def ml_eval(alpha: float, beta: float, z, deriv: bool = False):
    """Vectorised E_{alpha,beta}(z) (or its z-derivative) on real arguments.

    ``beta`` may be any real number here; the negative values occur in the
    derivative identity and are used internally.
    """
    alpha = float(alpha)
    beta = float(beta)
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z > POSITIVE_LIMIT):
        raise UnsupportedRange(
            f"z={z.max()} exceeds the supported positive range {POSITIVE_LIMIT}",
            operation="mittag_leffler",
        )
    if not np.all(np.isfinite(z)):
        raise UnsupportedRange("non-finite argument", operation="mittag_leffler")
    out = np.empty_like(z)
    neg = z <= 0
    if np.any(neg):
        out[neg] = _ml_negative(alpha, beta, -z[neg], deriv)
    pos = ~neg
    if np.any(pos):
        zp = z[pos]
        if alpha == 1.0 and (r := _alpha_one(beta, zp, deriv)) is not None:
            out[pos] = r
        elif deriv:
            out[pos] = (ml_eval(alpha, beta - 1.0, zp) - (beta - 1.0) * ml_eval(alpha, beta, zp)) / (
                alpha * zp
            )
        else:
            smallp = zp <= Z0
            res = np.empty_like(zp)
            if np.any(smallp):
                res[smallp] = _series(alpha, beta, zp[smallp])[0]
            if np.any(~smallp):
                if beta <= 0.0:
                    # the log-space sum needs positive terms; shift the index
                    res[~smallp] = _series(alpha, beta, zp[~smallp])[0]
                else:
                    res[~smallp] = _positive_series(alpha, beta, zp[~smallp])
            out[pos] = res
    return float(out[0]) if scalar else out


def mittag_leffler(p: MLParams, z):
    """E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha k + beta)."""
    if p.alpha > 1.0:
        val, cond = _series(p.alpha, p.beta, np.atleast_1d(np.asarray(z, dtype=float)))
        if np.any(np.abs(np.asarray(z)) > 5.0) or np.any(cond > 1e5):
            raise UnsupportedRange(
                f"alpha={p.alpha} > 1 only supported where the series is stable",
                operation="mittag_leffler",
            )
        return float(val[0]) if np.ndim(z) == 0 else val
    return ml_eval(p.alpha, p.beta, z)


def ml_derivative(alpha: float, beta: float, z):
    """d/dz E_{alpha,beta}(z)."""
    return ml_eval(alpha, beta, z, deriv=True)


# ------------------------------------------------------- Mainardi-Wright

_MW_SERIES_LOSS = 1e6


def _mw_series(alpha, theta):
    theta = np.asarray(theta, dtype=float)
    tmax = float(theta.max()) if theta.size else 0.0
    nmax = 40
    while True:
        n = np.arange(nmax + 1, dtype=float)
        # |term| = theta^n Gamma(alpha(n+1)) |sin(pi alpha (n+1))| / (pi n!)
        lt = n * math.log(max(tmax, 1e-300)) + special.gammaln(alpha * (n + 1)) - special.gammaln(n + 1)
        if (lt[-1] < lt.max() - 40 and lt[-1] < -40) or nmax > 4000:
            break
        nmax *= 2
    n = np.arange(nmax + 1, dtype=float)
    # 1/Gamma(1 - x) = Gamma(x) sin(pi x) / pi with x = alpha (n + 1)
    sign = np.where(n % 2 == 0, 1.0, -1.0) * np.sin(np.pi * alpha * (n + 1)) / np.pi
    with np.errstate(divide="ignore"):
        logth = np.log(theta)[..., None]
    with np.errstate(invalid="ignore"):
        logmag = special.gammaln(alpha * (n + 1)) - special.gammaln(n + 1) + np.where(n > 0, n * logth, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = sign * np.exp(logmag)
        total = terms.sum(axis=-1)
        absum = np.abs(terms).sum(axis=-1)
    # unconverged tails are flagged through an infinite loss ratio
    converged = logmag[..., -1] < np.max(logmag, axis=-1) - 36.0
    absum = np.where(converged & np.isfinite(total), absum, np.inf)
    return total, absum


def _mw_integral(alpha, theta):
    """Integral form of M_alpha valid for every theta > 0."""
    q = 1.0 / (1.0 - alpha)

    def shape(phi):
        s_a = np.sin(alpha * phi)
        return (s_a / np.sin(phi)) ** q * np.sin((1.0 - alpha) * phi) / s_a

    out = []
    for th in np.atleast_1d(theta):
        if th == 0.0:
            out.append(float(special.rgamma(1.0 - alpha)))
            continue
        if q * math.log(th) > 700.0:
            out.append(0.0)  # exp(-lam A) underflows for every phi
            continue
        lam = th**q

        def f(phi):
            if phi <= 0.0:
                a0 = alpha ** (alpha * q) * (1.0 - alpha)
                a = a0
            else:
                a = shape(phi)
            return a * math.exp(-lam * a) if lam * a < 745 else 0.0

        val, err = integrate.quad(f, 0.0, math.pi, limit=200, epsabs=0.0, epsrel=1e-12)
        out.append(val * th ** (alpha * q) / (math.pi * (1.0 - alpha)))
    return np.array(out)


def mainardi_wright(alpha: float, theta, method: str = "auto"):
    """M_alpha(theta) = sum_n (-theta)^n / (n! Gamma(1 - alpha(n+1))).

    ``method='series'`` refuses arguments where the alternating series loses
    more than six digits; ``'auto'`` switches to an integral representation
    there; ``'integral'`` always uses it.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise ValueError("theta must be nonnegative")
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    if method == "integral":
        out = _mw_integral(alpha, th)
    else:
        val, absum = _mw_series(alpha, th)
        with np.errstate(divide="ignore", invalid="ignore"):
            loss = np.where(val != 0, absum / np.abs(val), np.inf)
        bad = ~(loss < _MW_SERIES_LOSS) & (th > 0)
        if np.any(bad) and method == "series":
            raise UnsupportedRange(
                f"series for M_{alpha} unstable at theta={th[bad].min()}",
                operation="mainardi_wright",
            )
        out = val.copy()
        if np.any(bad):
            out[bad] = _mw_integral(alpha, th[bad])
    return float(out[0]) if scalar else out


def _mw_support(alpha):
    """theta beyond which M_alpha is below 1e-18 of its scale."""
    hi = 1.0
    while mainardi_wright(alpha, hi) > 1e-18 * max(1.0, hi):
        hi *= 1.5
    return hi


def ml_via_wright_quadrature(alpha: float, z: float) -> float:
    """int_0^inf alpha theta M_alpha(theta) exp(-z theta) dtheta.

    This is the subordination integral evaluated literally, independent of
    the Mittag-Leffler routines.
    """
    if not (0.5 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (1/2, 1), got {alpha}")
    if z < 0:
        raise ValueError("z must be nonnegative")
    hi = _mw_support(alpha)
    pts = np.linspace(0.0, hi, 9)[1:-1]

    def f(th):
        return alpha * th * mainardi_wright(alpha, th) * math.exp(-z * th)

    val, err = integrate.quad(f, 0.0, hi, points=pts, limit=400, epsabs=1e-13, epsrel=1e-11)
    if not np.isfinite(val) or err > 1e-7:
        raise QuadratureError(
            f"Wright quadrature did not converge (error estimate {err:.2e})",
            operation="ml_via_wright_quadrature",
        )
    return float(val)
