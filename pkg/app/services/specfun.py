from __future__ import annotations

import logging
import math
from typing import Union

import numpy as np
from scipy import special
from scipy.optimize import brentq

from app.db.models import BesselRoot, RootKind
from app.errors import DomainError, RootBracketError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Consecutive zeros of J_n and J'_n are never closer than ~3, so a half-unit scan
# step sees every sign change exactly once.
SCAN_STEP = 0.5
ROOT_XTOL = 1e-14

ZETA2 = math.pi**2 / 6.0
ZETA3 = float(special.zeta(3.0, 1.0))
ZETA4 = math.pi**4 / 90.0


def _positive(x: ArrayLike, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def _unwrap(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(values) if np.ndim(like) == 0 else values


def bessel_k0(x: ArrayLike) -> ArrayLike:
    arr = _positive(x)
    return _unwrap(special.k0(arr), x)


def bessel_k1(x: ArrayLike) -> ArrayLike:
    arr = _positive(x)
    return _unwrap(special.k1(arr), x)


def kernel_k1prime(x: ArrayLike) -> ArrayLike:
    """K1'(x) = -K0(x) - K1(x)/x, the derivative of K1; negative and increasing on x > 0."""
    arr = _positive(x)
    return _unwrap(-(special.k0(arr) + special.k1(arr) / arr), x)


def bessel_j(order_n: int, x: ArrayLike) -> ArrayLike:
    if order_n < 0:
        raise DomainError("order_n must be non-negative")
    return _unwrap(special.jv(order_n, np.asarray(x, dtype=float)), x)


def bessel_jprime(order_n: int, x: ArrayLike) -> ArrayLike:
    if order_n < 0:
        raise DomainError("order_n must be non-negative")
    return _unwrap(special.jvp(order_n, np.asarray(x, dtype=float)), x)


def dirichlet_beta(s: float) -> float:
    """beta(s) = sum_k (-1)^k/(2k+1)^s through Hurwitz zeta values."""
    return float((special.zeta(s, 0.25) - special.zeta(s, 0.75)) / 4.0**s)


def mcmahon_estimate(order_n: int, index_m: int, kind: RootKind = RootKind.J) -> float:
    """Large-m asymptote of the m-th zero of J_n (or J'_n)."""
    mu = 4.0 * order_n * order_n
    if kind == RootKind.J:
        beta = (index_m + 0.5 * order_n - 0.25) * math.pi
        return beta - (mu - 1.0) / (8.0 * beta)
    beta = (index_m + 0.5 * order_n - 0.75) * math.pi
    return beta - (mu + 3.0) / (8.0 * beta)


def _target(order_n: int, kind: RootKind):
    if kind == RootKind.J:
        return lambda x: special.jv(order_n, x)
    return lambda x: special.jvp(order_n, x)


def _scan_start(order_n: int) -> float:
    # J_n and J'_n keep their sign on (0, n]; for n = 0 this skips the trivial zero of J'_0.
    return max(float(order_n), 1e-3)


def _roots_between(order_n: int, kind: RootKind, lo: float, hi: float) -> list[float]:
    fn = _target(order_n, kind)
    n_steps = max(2, int(math.ceil((hi - lo) / SCAN_STEP)) + 1)
    grid = np.linspace(lo, hi, n_steps)
    values = fn(grid)
    roots = [float(x) for x in grid[values == 0.0]]
    for i in np.nonzero(values[:-1] * values[1:] < 0)[0]:
        a, b = float(grid[i]), float(grid[i + 1])
        roots.append(brentq(fn, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    return sorted(roots)


def bessel_roots(order_n: int, count: int, kind: RootKind = RootKind.J) -> list[BesselRoot]:
    """First `count` positive zeros of J_n (or J'_n, trivial zero of J'_0 excluded)."""
    if order_n < 0:
        raise DomainError("order_n must be non-negative")
    if count < 1:
        raise DomainError("count must be >= 1")
    kind = RootKind(kind)

    lo = _scan_start(order_n)
    hi = max(mcmahon_estimate(order_n, count, kind), lo) + math.pi
    limit = 2.0 * hi + 10.0
    found: list[float] = []
    while len(found) < count:
        if lo >= limit:
            raise RootBracketError(
                f"found {len(found)} of {count} zeros of order {order_n} below x={limit:.6g}"
            )
        found.extend(_roots_between(order_n, kind, lo, hi))
        lo, hi = hi, min(hi + max(hi - lo, 4 * math.pi), limit)
        # grid endpoints are shared between chunks
        found = sorted(set(found))

    return [
        BesselRoot(order_n=order_n, index_m=m, root=x, kind=kind)
        for m, x in enumerate(found[:count], start=1)
    ]


def bessel_roots_below(order_n: int, x_max: float, kind: RootKind = RootKind.J) -> np.ndarray:
    """All positive zeros of J_n (or J'_n) up to and including x_max, ascending."""
    if order_n < 0:
        raise DomainError("order_n must be non-negative")
    lo = _scan_start(order_n)
    if x_max <= lo:
        return np.empty(0)
    roots = _roots_between(order_n, RootKind(kind), lo, float(x_max) + SCAN_STEP)
    return np.array([x for x in roots if x <= x_max], dtype=float)
