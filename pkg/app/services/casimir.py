r"""Casimir force and energy between two pistons inside a cylinder of arbitrary section.

Every transverse eigenvalue :math:`\lambda` of the section behaves as a one-dimensional
massive field of mass :math:`\lambda` between the plates; the piston force is the sum of
those massive forces over the spectrum.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import count
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from app.db.models import (
    AsymptoteSet,
    BesselZeros,
    BoundaryCondition,
    ContourConfig,
    FieldContent,
    ForceCurve,
    ForcePoint,
    GuardReport,
    RootKind,
    Spectrum,
    TransitionRow,
    TruncationPolicy,
    WeylData,
)
from app.errors import ContourError, PolicyError
from app.services.specfun import (
    ZETA2,
    ZETA3,
    ZETA4,
    bessel_k1,
    bessel_roots,
    kernel_k1prime,
)

logger = logging.getLogger(__name__)

DEFAULT_ACCURACY_EXPONENT = 25.0
PLATEAU_FLATNESS = 0.1
GUARD_MIN_SLOPE = 0.5
POLICY_SLACK = 1e-12


def _l_max(lam: np.ndarray, a: float, accuracy_exponent: float) -> np.ndarray:
    return np.maximum(1, np.ceil(accuracy_exponent / (2.0 * lam * a))).astype(np.int64)


def _expand_terms(lam: np.ndarray, a: float, accuracy_exponent: float):
    """Flattened (level index, l) pairs: levels ascending, l ascending within a level."""
    l_max = _l_max(lam, a, accuracy_exponent)
    idx = np.repeat(np.arange(lam.size), l_max)
    starts = np.repeat(np.cumsum(l_max) - l_max, l_max)
    l = (np.arange(idx.size) - starts + 1).astype(float)
    return idx, l


def massive_energy_1d(
    m: float, a: float, accuracy_exponent: float = DEFAULT_ACCURACY_EXPONENT
) -> float:
    """-(1/2 pi) sum_l m K1(2 l m a)/l, truncated where 2 l m a exceeds D."""
    if not (m > 0 and a > 0):
        raise ValueError("mass and separation must be positive")
    l = np.arange(1, int(_l_max(np.array([m]), a, accuracy_exponent)[0]) + 1, dtype=float)
    return -math.fsum(m * bessel_k1(2.0 * l * m * a) / l) / (2.0 * math.pi)


def massive_force_1d(
    m: float, a: float, accuracy_exponent: float = DEFAULT_ACCURACY_EXPONENT
) -> float:
    """(1/pi) sum_l m^2 K1'(2 l m a)."""
    if not (m > 0 and a > 0):
        raise ValueError("mass and separation must be positive")
    l = np.arange(1, int(_l_max(np.array([m]), a, accuracy_exponent)[0]) + 1, dtype=float)
    return math.fsum(m * m * kernel_k1prime(2.0 * l * m * a)) / math.pi


def single_level_force(
    lam: float, a: float, accuracy_exponent: float = DEFAULT_ACCURACY_EXPONENT
) -> float:
    """Force of one transverse level. a^2 times it tends to -zeta(2)/(4 pi) as a -> 0,
    so a complete spectrum missing one level shows a 1/a^2 term in its correcting force."""
    return massive_force_1d(lam, a, accuracy_exponent)


def check_policy(spectrum: Spectrum, a: float, policy: TruncationPolicy) -> None:
    if a < policy.a_min * (1.0 - POLICY_SLACK):
        raise PolicyError(f"a={a:g} is below the certified a_min={policy.a_min:g}")
    required = policy.required_lambda_max
    if spectrum.lambda_max < required * (1.0 - POLICY_SLACK):
        raise PolicyError(
            f"spectrum is complete to lambda_max={spectrum.lambda_max:g}; the policy "
            f"(D={policy.accuracy_exponent:g}, a_min={policy.a_min:g}) needs {required:g}",
            required_lambda_max=required,
        )


def piston_force(spectrum: Spectrum, a: float, policy: TruncationPolicy) -> float:
    r"""Exact piston force per unit of the transverse spectrum.

    .. math::
        F(a) = \frac{1}{\pi} \sum_k g_k \sum_{l=1}^{l_{max}} \lambda_k^2 K_1'(2 l \lambda_k a)

    Parameters
    ----------
    spectrum: Spectrum
        complete up to ``spectrum.lambda_max``
    a: float
        plate separation, not below ``policy.a_min``
    policy: TruncationPolicy
        accuracy exponent D and the smallest certified separation

    Returns
    -------
    float
        negative (attractive) force
    """
    check_policy(spectrum, a, policy)
    lam = spectrum.levels
    idx, l = _expand_terms(lam, a, policy.accuracy_exponent)
    terms = spectrum.multiplicities[idx] * lam[idx] ** 2 * kernel_k1prime(2.0 * l * lam[idx] * a)
    return math.fsum(terms) / math.pi


def piston_energy(spectrum: Spectrum, a: float, policy: TruncationPolicy) -> float:
    check_policy(spectrum, a, policy)
    lam = spectrum.levels
    idx, l = _expand_terms(lam, a, policy.accuracy_exponent)
    terms = spectrum.multiplicities[idx] * lam[idx] * bessel_k1(2.0 * l * lam[idx] * a) / l
    return -math.fsum(terms) / (2.0 * math.pi)


def electromagnetic_force(
    dirichlet: Spectrum, neumann: Spectrum, a: float, policy: TruncationPolicy
) -> float:
    """TM modes see the Dirichlet spectrum, TE modes the Neumann one."""
    if dirichlet.bc != BoundaryCondition.DIRICHLET or neumann.bc != BoundaryCondition.NEUMANN:
        raise PolicyError("electromagnetic force needs a Dirichlet and a Neumann spectrum")
    return piston_force(dirichlet, a, policy) + piston_force(neumann, a, policy)


def weyl_terms(weyl: WeylData) -> tuple[float, float, float]:
    """Coefficients of a^-4, a^-3 and a^-2 in the short-distance force."""
    area_term = -3.0 * ZETA4 * weyl.area / (16.0 * math.pi**2)
    perimeter_term = -weyl.perimeter_sign * ZETA3 * weyl.perimeter / (32.0 * math.pi)
    chi_term = -ZETA2 * weyl.chi_bc / (4.0 * math.pi)
    return area_term, perimeter_term, chi_term


def weyl_force(weyl: WeylData, a: float, terms: int = 3) -> float:
    if not a > 0:
        raise ValueError("separation must be positive")
    if terms not in (1, 2, 3):
        raise ValueError("terms must be 1, 2 or 3")
    coefficients = weyl_terms(weyl)[:terms]
    return math.fsum(c / a ** (4 - i) for i, c in enumerate(coefficients))


def far_asymptote(spectrum: Spectrum, a: float, order: int = 1) -> float:
    """l = 1 term of the lowest `order` distinct levels."""
    if order < 1 or order > len(spectrum):
        raise ValueError(f"order must lie in [1, {len(spectrum)}]")
    lam = spectrum.levels[:order]
    mult = spectrum.multiplicities[:order]
    return math.fsum(mult * lam**2 * kernel_k1prime(2.0 * lam * a)) / math.pi


def far_asymptote_closed_form(lam1: float, a: float, multiplicity: int = 1) -> float:
    return -0.5 * multiplicity * math.sqrt(lam1**3 / (math.pi * a)) * math.exp(-2.0 * lam1 * a)


def delta_force(
    spectrum: Spectrum, weyl: WeylData, a: float, policy: TruncationPolicy
) -> float:
    return piston_force(spectrum, a, policy) - weyl_force(weyl, a, terms=3)


def asymptote_set(weyl: WeylData, spectrum: Spectrum, orders: int = 4) -> AsymptoteSet:
    area_term, perimeter_term, chi_term = weyl_terms(weyl)
    return AsymptoteSet(
        area_term=area_term,
        perimeter_term=perimeter_term,
        chi_term=chi_term,
        far_params=spectrum.distinct_levels(orders),
    )


def log_grid(a_min: float, a_max: float, points_per_decade: int) -> np.ndarray:
    if not 0 < a_min < a_max:
        raise PolicyError("a-grid needs 0 < a_min < a_max")
    n_points = int(math.ceil(math.log10(a_max / a_min) * points_per_decade)) + 1
    return np.logspace(math.log10(a_min), math.log10(a_max), n_points)


def force_curve(
    spectra: Sequence[Spectrum],
    weyls: Sequence[WeylData],
    policy: TruncationPolicy,
    a_grid: Iterable[float],
    shape: str = "",
    overlays: bool = False,
    workers: int = 1,
) -> ForceCurve:
    """Force, Weyl force and correcting force on a grid.

    One spectrum gives the TM (Dirichlet) or TE (Neumann) curve; a Dirichlet/Neumann pair
    gives the full electromagnetic curve. Points are evaluated in parallel and collected
    by index.
    """
    if len(spectra) != len(weyls) or not spectra:
        raise ValueError("one WeylData per spectrum is required")
    if len(spectra) == 2:
        content = FieldContent.EM
    elif spectra[0].bc == BoundaryCondition.DIRICHLET:
        content = FieldContent.TM
    else:
        content = FieldContent.TE
    grid = [float(a) for a in a_grid]
    for spectrum in spectra:
        check_policy(spectrum, min(grid), policy)

    def evaluate(a: float) -> ForcePoint:
        force = math.fsum(piston_force(s, a, policy) for s in spectra)
        weyl = math.fsum(weyl_force(w, a) for w in weyls)
        extra: dict[str, float] = {}
        if overlays:
            for terms in (1, 2):
                extra[f"F_weyl_{terms}"] = math.fsum(weyl_force(w, a, terms) for w in weyls)
            for order in range(1, 5):
                if all(order <= len(s) for s in spectra):
                    extra[f"F_far_{order}"] = math.fsum(far_asymptote(s, a, order) for s in spectra)
        delta = force - weyl
        return ForcePoint(
            a=a, force=force, weyl=weyl, delta=delta, a_delta=a * delta, overlays=extra
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            points = list(executor.map(evaluate, grid))
    else:
        points = [evaluate(a) for a in grid]

    return ForceCurve(
        points=points,
        bc_content=content,
        spectrum_id="+".join(s.digest() for s in spectra),
        policy=policy,
        shape=shape,
        lambda_max=min(s.lambda_max for s in spectra),
    )


def _smallest_decades(curve: ForceCurve, decades: float) -> tuple[np.ndarray, np.ndarray]:
    a = curve.column("a")
    order = np.argsort(a)
    a = a[order]
    keep = a <= a[0] * 10.0**decades
    return a[keep], order[keep]


def short_distance_guard(curve: ForceCurve, decades: float = 1.0) -> GuardReport:
    """Fit log|a^2 dF| against log a on the smallest decade; a complete spectrum has
    a^2 dF -> 0 and a slope above GUARD_MIN_SLOPE, a missing level gives slope ~ 0."""
    a, order = _smallest_decades(curve, decades)
    y = np.abs(a**2 * curve.column("delta")[order])
    usable = y > 0
    if usable.sum() < 3:
        raise PolicyError("short-distance guard needs at least three non-zero points")
    slope = float(np.polyfit(np.log(a[usable]), np.log(y[usable]), 1)[0])
    return GuardReport(
        passed=slope > GUARD_MIN_SLOPE,
        slope=slope,
        delta_exponent=slope - 2.0,
        a_lo=float(a[0]),
        a_hi=float(a[-1]),
    )


def plateau_fit(curve: ForceCurve, decades: float = 1.0) -> tuple[float, float, float, float]:
    """(c0, c1, spread, flatness) for a dF ~ c0 + c1 a on the smallest decades."""
    a, order = _smallest_decades(curve, decades)
    y = curve.column("a_delta")[order]
    if a.size < 3:
        raise PolicyError("plateau fit needs at least three grid points")
    c1, c0 = np.polyfit(a, y, 1)
    spread = float(y.max() - y.min())
    flatness = spread / abs(c0) if c0 != 0 else math.inf
    return float(c0), float(c1), spread, float(flatness)


def transition_limit_U(
    family: Sequence[tuple[float, Spectrum, WeylData]],
    policy: TruncationPolicy,
    a_grid: Iterable[float],
    fit_decades: float = 1.0,
    workers: int = 1,
) -> list[TransitionRow]:
    """Plateau value U of a dF(a) for each (ratio, spectrum, weyl) of a shape family."""
    grid = list(a_grid)
    rows: list[TransitionRow] = []
    for ratio, spectrum, weyl in family:
        curve = force_curve([spectrum], [weyl], policy, grid, workers=workers)
        c0, _, spread, flatness = plateau_fit(curve, fit_decades)
        plateau = bool(flatness <= PLATEAU_FLATNESS)
        if not plateau:
            logger.warning(
                "no plateau for ratio %.6g: flatness %.3g over %.3g decades",
                ratio,
                flatness,
                fit_decades,
            )
        rows.append(
            TransitionRow(ratio=ratio, U=c0, flatness=flatness, spread=spread, plateau=plateau)
        )
    return rows


def jump_statistic(
    rows: Sequence[TransitionRow],
    jump: tuple[float, float] = (0.0, 0.005),
    controls: Sequence[tuple[float, float]] = ((0.2, 0.205), (0.7, 0.705)),
) -> float:
    """|U(jump pair)| difference over the largest control-pair difference."""
    by_ratio = {row.ratio: row.U for row in rows}
    missing = [r for pair in (jump, *controls) for r in pair if r not in by_ratio]
    if missing:
        raise PolicyError(f"jump statistic needs ratios {sorted(set(missing))}")
    numerator = abs(by_ratio[jump[1]] - by_ratio[jump[0]])
    denominator = max(abs(by_ratio[hi] - by_ratio[lo]) for lo, hi in controls)
    if denominator == 0:
        return math.inf
    return numerator / denominator


def find_crossover(first: ForceCurve, second: ForceCurve) -> Optional[float]:
    """Separation where the two force curves cross, interpolated in log a."""
    a1, a2 = first.column("a"), second.column("a")
    if a1.shape != a2.shape or not np.allclose(a1, a2, rtol=1e-12):
        raise ValueError("crossover needs curves on the same grid")
    diff = first.column("force") - second.column("force")
    changes = np.nonzero(diff[:-1] * diff[1:] < 0)[0]
    if changes.size == 0:
        return None
    i = int(changes[0])
    t = diff[i] / (diff[i] - diff[i + 1])
    return float(math.exp(math.log(a1[i]) + t * (math.log(a1[i + 1]) - math.log(a1[i]))))


# Argument-theorem summation over Bessel zeros.


def _log_derivative(zeros: BesselZeros, z: np.ndarray) -> np.ndarray:
    w = zeros.radius * z
    n = zeros.order_n
    if zeros.kind == RootKind.J:
        f, fp = special.jv(n, w), special.jvp(n, w, 1)
    else:
        f, fp = special.jvp(n, w, 1), special.jvp(n, w, 2)
    return zeros.radius * fp / f


def _weight(z: np.ndarray, a: float, l: int) -> np.ndarray:
    w = 2.0 * l * a * z
    return -z * z * (special.kv(0, w) + special.kv(1, w) / w)


def _edge(
    fn: Callable[[np.ndarray], np.ndarray],
    z0: complex,
    z1: complex,
    panels: int,
    nodes: np.ndarray,
    weights: np.ndarray,
) -> tuple[complex, float]:
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    t = (edges[:-1, None] + half[:, None] * (nodes[None, :] + 1.0)).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    values = fn(z0 + (z1 - z0) * t)
    return complex(np.sum(values * w) * (z1 - z0)), float(np.sum(np.abs(values) * w) * abs(z1 - z0))


def _integrate_edge(
    fn: Callable[[np.ndarray], np.ndarray],
    z0: complex,
    z1: complex,
    panels: int,
    cfg: ContourConfig,
) -> complex:
    nodes, weights = leggauss(cfg.nodes_per_panel)
    estimate, _ = _edge(fn, z0, z1, panels, nodes, weights)
    while panels < cfg.max_panels:
        panels *= 2
        refined, mass = _edge(fn, z0, z1, panels, nodes, weights)
        if not np.isfinite(refined):
            raise ContourError(f"integrand is not finite on [{z0}, {z1}]")
        if abs(refined - estimate) <= cfg.rel_tol * mass:
            return refined
        estimate = refined
    raise ContourError(f"quadrature did not converge on [{z0}, {z1}] with {panels} panels")


def _check_crossing(zeros: BesselZeros, x: float, cfg: ContourConfig) -> None:
    distance = abs(1.0 / _log_derivative(zeros, np.array([x], dtype=complex))[0])
    if distance < cfg.min_zero_distance:
        raise ContourError(
            f"contour crosses the real axis at {x:.12g}, within {distance:.3g} of a zero"
        )


def contour_integral(
    zeros: BesselZeros,
    a: float,
    l: int,
    z_lo: float,
    z_hi: float,
    cfg: Optional[ContourConfig] = None,
) -> float:
    r"""(1/2 pi i) times the contour integral of z^2 K1'(2 z l a) f'(z)/f(z).

    The contour is the rectangle with corners z_lo +- ih and z_hi +- ih, h = 1/(l a), so
    that |Im(2 z l a)| stays at 2. It counts every zero of f with z_lo < z < z_hi.
    """
    cfg = cfg or ContourConfig()
    if not 0 < z_lo < z_hi:
        raise ContourError("contour needs 0 < z_lo < z_hi")
    _check_crossing(zeros, z_lo, cfg)
    _check_crossing(zeros, z_hi, cfg)

    h = 1.0 / (l * a)

    def integrand(z: np.ndarray) -> np.ndarray:
        return _weight(z, a, l) * _log_derivative(zeros, z)

    horizontal = max(4, int(math.ceil((z_hi - z_lo) / min(h, math.pi / zeros.radius))))
    vertical = 4
    corners = [
        (complex(z_lo, -h), complex(z_hi, -h), horizontal),
        (complex(z_hi, -h), complex(z_hi, h), vertical),
        (complex(z_hi, h), complex(z_lo, h), horizontal),
        (complex(z_lo, h), complex(z_lo, -h), vertical),
    ]
    total = sum(_integrate_edge(integrand, z0, z1, panels, cfg) for z0, z1, panels in corners)
    return float((total / (2j * math.pi)).real)


def contour_bound(zeros: BesselZeros, upper: float, cfg: Optional[ContourConfig] = None) -> float:
    """Point in [upper, upper + pi/R] farthest from the zeros of f."""
    cfg = cfg or ContourConfig()
    probe = np.linspace(upper, upper + math.pi / zeros.radius, cfg.probe_points)
    distance = np.abs(1.0 / _log_derivative(zeros, probe.astype(complex)))
    return float(probe[int(np.argmax(distance))])


def contour_sum(
    zeros: BesselZeros,
    a: float,
    l: int,
    upper: float,
    cfg: Optional[ContourConfig] = None,
) -> float:
    """Sum of z_k^2 K1'(2 z_k l a) over the zeros of f up to (about) `upper`."""
    first = bessel_roots(zeros.order_n, 1, zeros.kind)[0].root / zeros.radius
    if upper < first:
        return 0.0
    return contour_integral(zeros, a, l, 0.5 * first, contour_bound(zeros, upper, cfg), cfg)


def circle_force_contour(
    radius: float,
    a: float,
    policy: TruncationPolicy,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
    cfg: Optional[ContourConfig] = None,
) -> float:
    """Disk piston force with every order's zero sum done by the argument theorem."""
    if a < policy.a_min * (1.0 - POLICY_SLACK):
        raise PolicyError(f"a={a:g} is below the certified a_min={policy.a_min:g}")
    kind = RootKind.J if BoundaryCondition(bc) == BoundaryCondition.DIRICHLET else RootKind.JPRIME
    upper = policy.required_lambda_max
    terms: list[float] = []
    for order_n in count():
        first = bessel_roots(order_n, 1, kind)[0].root / radius
        if first > upper:
            break
        zeros = BesselZeros(order_n=order_n, radius=radius, kind=kind)
        z_hi = contour_bound(zeros, upper, cfg)
        degeneracy = 1 if order_n == 0 else 2
        l_max = int(_l_max(np.array([first]), a, policy.accuracy_exponent)[0])
        for l in range(1, l_max + 1):
            terms.append(degeneracy * contour_integral(zeros, a, l, 0.5 * first, z_hi, cfg))
    logger.debug("contour force at a=%.6g: %d contour integrals", a, len(terms))
    return math.fsum(terms) / math.pi
