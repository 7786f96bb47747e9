"""Special functions and low-level numerical routines used by the analytics.

All functions are pure. The special functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class OutOfRangeError(ValueError):
    """Target value not bracketed by the search interval."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of subdivisions.

    The best available estimate and its error bound are attached.
    """

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 1_000_000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


# ---------------------------------------------------------------------------
# Bessel I0

_I0_SERIES_TERMS = 120
_I0_ASYMPTOTIC_FROM = 50.0


def _i0_series(x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        return x.copy()
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for m in range(1, _I0_SERIES_TERMS):
        term = term * q / (m * m)
        total = total + term
        # terms decrease monotonically once m exceeds x/2
        if m * m > np.max(q) and not np.any(term > 1e-17 * total):
            break
    return total


def _i0e_asymptotic(x: np.ndarray) -> np.ndarray:
    # e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 40):
        term = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        total = total + term
    return total / np.sqrt(2.0 * math.pi * x)


def _check_i0_arg(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("bessel_i0 requires a finite argument")
    if np.any(arr < 0):
        raise DomainError("bessel_i0 requires a non-negative argument")
    return arr


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero."""
    arr = _check_i0_arg(x)
    small = arr <= _I0_ASYMPTOTIC_FROM
    out = np.empty_like(arr)
    out[small] = _i0_series(arr[small])
    big = arr[~small]
    with np.errstate(over="ignore"):
        out[~small] = _i0e_asymptotic(big) * np.exp(big)
    return out if out.ndim else float(out)


def bessel_i0e(x):
    """Exponentially scaled ``exp(-x) * I0(x)``; finite for every finite x >= 0."""
    arr = _check_i0_arg(x)
    small = arr <= _I0_ASYMPTOTIC_FROM
    out = np.empty_like(arr)
    xs = arr[small]
    out[small] = _i0_series(xs) * np.exp(-xs)
    out[~small] = _i0e_asymptotic(arr[~small])
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Zeta functions

# B_{2j} / (2j)! for j = 1..10
_BERNOULLI_OVER_FACT = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
    43867.0 / 5109094217170944000.0,
    -174611.0 / 802857662698291200000.0,
]
_ZETA_DIRECT_TERMS = 24


def hurwitz_zeta(s: float, a: float) -> float:
    """Hurwitz zeta ``sum_{n>=0} (n + a)^-s`` for real s > 1, a > 0.

    Direct summation of the leading terms followed by an Euler-Maclaurin
    correction for the tail.
    """
    s = float(s)
    a = float(a)
    if not (math.isfinite(s) and s > 1.0):
        raise DomainError(f"hurwitz_zeta requires s > 1, got {s}")
    if not (math.isfinite(a) and a > 0.0):
        raise DomainError(f"hurwitz_zeta requires a > 0, got {a}")

    n = _ZETA_DIRECT_TERMS
    head = math.fsum((k + a) ** -s for k in range(n))
    x = n + a
    tail = x ** (1.0 - s) / (s - 1.0) + 0.5 * x**-s
    # rising factorial s (s+1) ... (s+2j-2) times x^{-s-2j+1}
    rising = s
    power = x ** (-s - 1.0)
    for j, coef in enumerate(_BERNOULLI_OVER_FACT, start=1):
        tail += coef * rising * power
        rising *= (s + 2 * j - 1) * (s + 2 * j)
        power /= x * x
    return head + tail


def riemann_zeta(s: float) -> float:
    return hurwitz_zeta(s, 1.0)


def log_gamma(x):
    """Natural log of the Gamma function for x > 0 (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("log_gamma requires x > 0")
    out = np.vectorize(math.lgamma, otypes=[float])(arr)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Quadrature: adaptive Gauss-Kronrod (7/15)

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS_W = np.zeros(15)
# Gauss points are the odd-indexed Kronrod nodes (1, 3, 5 from each end, plus centre)
_GAUSS_W[[1, 3, 5]] = _WG[:3]
_GAUSS_W[7] = _WG[3]
_GAUSS_W[[13, 11, 9]] = _WG[:3]


def _gk15(f, a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    fx = np.asarray(f(mid + half * _NODES), dtype=float)
    if fx.shape != _NODES.shape:
        fx = np.broadcast_to(fx, _NODES.shape)
    kron = half * float(np.dot(_KRONROD_W, fx))
    gauss = half * float(np.dot(_GAUSS_W, fx))
    return kron, abs(kron - gauss)


def integrate_1d(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    points: tuple[float, ...] = (),
) -> float:
    """Adaptive 15-point Gauss-Kronrod quadrature of ``f`` over [lo, hi].

    ``f`` is called with a 1-D array of abscissae and must return an array of
    the same shape. ``points`` are interior breakpoints (kinks or branch
    changes) where the interval is split up front.

    Raises:
        QuadratureError: the subdivision budget is exhausted before the
            tolerance is met. The exception carries the best estimate.
    """
    lo = float(lo)
    hi = float(hi)
    if hi < lo:
        raise ValueError("integrate_1d requires lo <= hi")
    if hi == lo:
        return 0.0

    edges = sorted({lo, hi, *(p for p in points if lo < p < hi)})
    panels = []
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = _gk15(f, a, b)
        panels.append([err, a, b, val])
    total = math.fsum(p[3] for p in panels)
    error = math.fsum(p[0] for p in panels)
    n_sub = len(panels)

    while error > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if n_sub >= spec.max_subdivisions:
            raise QuadratureError(
                f"subdivision budget {spec.max_subdivisions} exhausted on "
                f"[{lo}, {hi}]: estimate {total}, error {error}",
                total,
                error,
            )
        # bisect the worst panel
        worst = max(range(len(panels)), key=lambda i: panels[i][0])
        err, a, b, _ = panels.pop(worst)
        m = 0.5 * (a + b)
        if not (a < m < b):
            # floating point resolution reached; accept what we have
            panels.append([0.0, a, b, _])
            error = math.fsum(p[0] for p in panels)
            continue
        v1, e1 = _gk15(f, a, m)
        v2, e2 = _gk15(f, m, b)
        panels.append([e1, a, m, v1])
        panels.append([e2, m, b, v2])
        n_sub += 1
        total = math.fsum(p[3] for p in panels)
        error = math.fsum(p[0] for p in panels)
    return total


def invert_monotone(
    f: Callable[[float], float],
    y: float,
    lo: float,
    hi: float,
    tol: float = 1e-12,
) -> float:
    """Solve ``f(x) = y`` for an increasing ``f`` by bisection on [lo, hi]."""
    f_lo = f(lo)
    f_hi = f(hi)
    if y < f_lo or y > f_hi:
        raise OutOfRangeError(f"target {y} outside [{f_lo}, {f_hi}]")
    if y == f_lo:
        return lo
    if y == f_hi:
        return hi
    a, b = lo, hi
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if f(m) < y:
            a = m
        else:
            b = m
    return 0.5 * (a + b)
