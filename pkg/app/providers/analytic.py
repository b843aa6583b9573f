from __future__ import annotations

import logging
import math

import numpy as np

from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    RootKind,
    ShapeKind,
    Spectrum,
    SpectrumSource,
)
from app.errors import ConfigurationError
from app.services.billiards import merge_levels
from app.services.specfun import bessel_roots_below

logger = logging.getLogger(__name__)


def _check_bound(lambda_max: float, first: float) -> None:
    if not lambda_max > first:
        raise ConfigurationError(
            f"lambda_max={lambda_max:g} does not exceed the first eigenvalue {first:.6g}"
        )


def rectangle_spectrum(
    lx: float, ly: float, lambda_max: float, bc: BoundaryCondition = BoundaryCondition.DIRICHLET
) -> Spectrum:
    """lambda_nm = pi sqrt((n/Lx)^2 + (m/Ly)^2); Neumann lets one index vanish."""
    bc = BoundaryCondition(bc)
    start = 1 if bc == BoundaryCondition.DIRICHLET else 0
    first = math.pi * (
        math.hypot(1.0 / lx, 1.0 / ly) if start else 1.0 / max(lx, ly)
    )
    _check_bound(lambda_max, first)

    n = np.arange(start, int(math.floor(lambda_max * lx / math.pi)) + 1, dtype=float)
    m = np.arange(start, int(math.floor(lambda_max * ly / math.pi)) + 1, dtype=float)
    nn, mm = np.meshgrid(n, m, indexing="ij")
    lam = math.pi * np.sqrt((nn / lx) ** 2 + (mm / ly) ** 2)
    keep = (lam <= lambda_max) & ((nn > 0) | (mm > 0))
    levels, mult = merge_levels(lam[keep])
    return Spectrum(
        levels=levels,
        multiplicities=mult,
        bc=bc,
        lambda_max=lambda_max,
        source=SpectrumSource.ANALYTIC,
    )


def triangle_spectrum(
    side: float, lambda_max: float, bc: BoundaryCondition = BoundaryCondition.DIRICHLET
) -> Spectrum:
    """lambda_nm = (4 pi / 3L) sqrt(n^2 + m^2 - nm).

    Dirichlet: n >= 1, m >= n + 1. Neumann: n >= 0, m >= n, (0, 0) excluded.
    """
    bc = BoundaryCondition(bc)
    scale = 4.0 * math.pi / (3.0 * side)
    first = scale * (math.sqrt(3.0) if bc == BoundaryCondition.DIRICHLET else 1.0)
    _check_bound(lambda_max, first)

    # n^2 + m^2 - nm >= max(n, m - n)^2, so both n and m - n stay below k_max
    k_max = int(math.floor(lambda_max / scale))
    n = np.arange(0, k_max + 1, dtype=float)
    m = np.arange(0, 2 * k_max + 1, dtype=float)
    nn, mm = np.meshgrid(n, m, indexing="ij")
    if bc == BoundaryCondition.DIRICHLET:
        allowed = (nn >= 1) & (mm >= nn + 1)
    else:
        allowed = (mm >= nn) & (mm > 0)
    lam = scale * np.sqrt(nn * nn + mm * mm - nn * mm)
    keep = allowed & (lam <= lambda_max)
    levels, mult = merge_levels(lam[keep])
    return Spectrum(
        levels=levels,
        multiplicities=mult,
        bc=bc,
        lambda_max=lambda_max,
        source=SpectrumSource.ANALYTIC,
    )


def _bessel_spectrum(
    radius: float,
    lambda_max: float,
    bc: BoundaryCondition,
    orders: range,
    degenerate: bool,
) -> Spectrum:
    kind = RootKind.J if bc == BoundaryCondition.DIRICHLET else RootKind.JPRIME
    x_max = radius * lambda_max
    values: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for order_n in orders:
        roots = bessel_roots_below(order_n, x_max, kind)
        if roots.size == 0:
            # first zeros grow with the order
            break
        values.append(roots / radius)
        weights.append(np.full(roots.size, 2 if degenerate and order_n > 0 else 1))
    if not values:
        raise ConfigurationError(f"lambda_max={lambda_max:g} is below the first eigenvalue")
    levels, mult = merge_levels(np.concatenate(values), np.concatenate(weights))
    logger.debug("bessel spectrum: %d orders, %d distinct levels", len(values), levels.size)
    return Spectrum(
        levels=levels,
        multiplicities=mult,
        bc=bc,
        lambda_max=lambda_max,
        source=SpectrumSource.BESSEL_ROOTS,
    )


def circle_spectrum(
    radius: float, lambda_max: float, bc: BoundaryCondition = BoundaryCondition.DIRICHLET
) -> Spectrum:
    """Zeros of J_n (Dirichlet) or J'_n (Neumann) over R; orders n >= 1 are doubly degenerate."""
    bc = BoundaryCondition(bc)
    return _bessel_spectrum(radius, lambda_max, bc, range(0, 1 << 30), degenerate=True)


def quarter_circle_spectrum(radius: float, lambda_max: float) -> Spectrum:
    """Dirichlet quarter disk: zeros of the even orders J_2, J_4, ... over R, all simple."""
    return _bessel_spectrum(
        radius, lambda_max, BoundaryCondition.DIRICHLET, range(2, 1 << 30, 2), degenerate=False
    )


def analytic_spectrum(
    shape: BilliardShape, lambda_max: float, bc: BoundaryCondition = BoundaryCondition.DIRICHLET
) -> Spectrum:
    """Dispatch by shape kind; the stadium with l = 0 is the quarter circle."""
    bc = BoundaryCondition(bc)
    if shape.kind == ShapeKind.RECTANGLE:
        return rectangle_spectrum(shape.lx, shape.ly, lambda_max, bc)
    if shape.kind == ShapeKind.EQUILATERAL_TRIANGLE:
        return triangle_spectrum(shape.side, lambda_max, bc)
    if shape.kind == ShapeKind.CIRCLE:
        return circle_spectrum(shape.radius, lambda_max, bc)
    if shape.kind == ShapeKind.QUARTER_CIRCLE or (
        shape.kind == ShapeKind.STADIUM and shape.length == 0
    ):
        if bc != BoundaryCondition.DIRICHLET:
            raise ConfigurationError("quarter-circle spectra are Dirichlet only")
        return quarter_circle_spectrum(shape.radius, lambda_max)
    raise ConfigurationError(f"{shape.label} has no closed-form spectrum")


def has_analytic_spectrum(shape: BilliardShape) -> bool:
    return shape.kind != ShapeKind.STADIUM or shape.length == 0
