"""Periodic-orbit lattice sums and the short-distance constants of the correcting
energy and force for rectangular and equilateral-triangular pistons."""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special
from scipy.integrate import quad

from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    IdentityCheck,
    OrbitLattice,
    OrbitSums,
    ShapeKind,
)
from app.errors import ConfigurationError
from app.services.specfun import ZETA3, bessel_roots_below

logger = logging.getLogger(__name__)

START_CUTOFF = 16
MAX_CUTOFF = 1 << 14
DEFAULT_REL_TOL = 1e-8
DIRECT_TERMS = 100_000


def orbit_lattice(shape: BilliardShape) -> OrbitLattice:
    if shape.kind == ShapeKind.RECTANGLE:
        return OrbitLattice(
            kind=shape.kind, g11=4.0 * shape.lx**2, g12=0.0, g22=4.0 * shape.ly**2
        )
    if shape.kind == ShapeKind.EQUILATERAL_TRIANGLE:
        g = 3.0 * shape.side**2
        return OrbitLattice(kind=shape.kind, g11=g, g12=0.5 * g, g22=g)
    raise ConfigurationError(f"no periodic-orbit lattice for {shape.label}")


def _annulus_sum(lattice: OrbitLattice, power: int, inner: int, outer: int) -> float:
    """Sum of L_M^-power over inner < max(|M1|, |M2|) <= outer."""
    full = np.arange(-outer, outer + 1, dtype=float)
    rim = np.concatenate(
        [np.arange(-outer, -inner, dtype=float), np.arange(inner + 1, outer + 1, dtype=float)]
    )
    rows: list[float] = []
    for m1 in range(-outer, outer + 1):
        m2 = full if abs(m1) > inner else rim
        rows.append(float(np.sum(lattice.length(float(m1), m2) ** -float(power))))
    return math.fsum(rows)


def _eigen_bounds(lattice: OrbitLattice) -> tuple[float, float]:
    gram = np.array([[lattice.g11, lattice.g12], [lattice.g12, lattice.g22]])
    eig = np.linalg.eigvalsh(gram)
    return float(eig[0]), float(eig[-1])


def _angular_constant(lattice: OrbitLattice, power: int) -> float:
    """Angular factor of the integral of L^-power outside a square."""

    def integrand(theta: float) -> float:
        c, s = math.cos(theta), math.sin(theta)
        q = lattice.g11 * c * c + 2.0 * lattice.g12 * c * s + lattice.g22 * s * s
        edge = 1.0 / max(abs(c), abs(s))
        return q ** (-0.5 * power) * edge ** (2.0 - power)

    breaks = [k * math.pi / 4.0 for k in range(1, 8)]
    value, _ = quad(
        integrand, 0.0, 2.0 * math.pi, points=breaks, epsabs=0.0, epsrel=1e-13, limit=400
    )
    return value


def _outside_square_integral(angular: float, power: int, half_width: float) -> float:
    return angular * half_width ** (2.0 - power) / (power - 2.0)


def _tail_bound(lattice: OrbitLattice, power: int, cutoff: int) -> float:
    """Majorant of the midpoint-rule error made by replacing the lattice tail by its integral.

    Per unit cell the error is at most sup(|f_xx| + |f_yy|)/24 with f = L^-power, and
    |f_xx| + |f_yy| <= k_p r^-(p+2) for the quadratic form's extreme eigenvalues.
    """
    mu_min, mu_max = _eigen_bounds(lattice)
    p = float(power)
    trace = lattice.g11 + lattice.g22
    k_p = p * trace * mu_min ** (-p / 2 - 1) + p * (p + 2) * mu_max**2 * mu_min ** (-p / 2 - 2)
    r0 = max(cutoff - 1.0, 1.0)
    return k_p / 24.0 * 2.0 * math.pi * r0 ** (-p) / p


def lattice_sum(
    lattice: OrbitLattice, power: int, rel_tol: float = DEFAULT_REL_TOL
) -> OrbitSums:
    """Sum of L_M^-power over M in Z^2 without the origin.

    Square shells up to the cutoff are summed exactly; the remainder is the integral over
    the outside of the square of half-width cutoff + 1/2. The cutoff doubles until the
    tail bound drops below rel_tol times the value.
    """
    if power not in (3, 4):
        raise ConfigurationError("lattice sums are defined for powers 3 and 4")
    if rel_tol < 1e-12:
        raise ConfigurationError("rel_tol must be >= 1e-12")

    angular = _angular_constant(lattice, power)
    cutoff = START_CUTOFF
    partial = _annulus_sum(lattice, power, 0, cutoff)
    while True:
        tail = _outside_square_integral(angular, power, cutoff + 0.5)
        bound = _tail_bound(lattice, power, cutoff)
        value = partial + tail
        if bound <= rel_tol * value or cutoff >= MAX_CUTOFF:
            break
        partial += _annulus_sum(lattice, power, cutoff, 2 * cutoff)
        cutoff *= 2

    if bound > rel_tol * value:
        logger.warning(
            "lattice sum power %d stopped at cutoff %d with tail bound %.3g", power, cutoff, bound
        )
    logger.debug("lattice sum power %d: %.15g (cutoff %d)", power, value, cutoff)
    return OrbitSums(
        power=power,
        value=value,
        partial=partial,
        tail_estimate=tail,
        cutoff=cutoff,
        tail_bound=bound,
    )


def _sign(bc: BoundaryCondition) -> float:
    return 1.0 if BoundaryCondition(bc) == BoundaryCondition.DIRICHLET else -1.0


def _boundary_terms(shape: BilliardShape) -> tuple[float, float]:
    """(energy, force) coefficients of the cosine part, Dirichlet sign."""
    if shape.kind == ShapeKind.RECTANGLE:
        return (
            math.pi / 96.0 * (1.0 / shape.lx + 1.0 / shape.ly),
            ZETA3 / (32.0 * math.pi) * (1.0 / shape.lx**2 + 1.0 / shape.ly**2),
        )
    return math.pi / (36.0 * shape.side), ZETA3 / (9.0 * math.pi * shape.side**2)


def _area(shape: BilliardShape) -> float:
    if shape.kind == ShapeKind.RECTANGLE:
        return shape.lx * shape.ly
    return math.sqrt(3.0) * shape.side**2 / 4.0


def delta_force_constant(
    shape: BilliardShape,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
    rel_tol: float = DEFAULT_REL_TOL,
) -> float:
    """Limit of the correcting force as a -> 0 for polygonal pistons."""
    s4 = lattice_sum(orbit_lattice(shape), 4, rel_tol).value
    _, boundary = _boundary_terms(shape)
    return -_area(shape) / (2.0 * math.pi**2) * s4 + _sign(bc) * boundary


def delta_energy_coeffs(
    shape: BilliardShape,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
    rel_tol: float = DEFAULT_REL_TOL,
) -> tuple[float, float]:
    """(c0, c1) with dE(a) ~ c0 + c1 a; -c1 is the force constant."""
    lattice = orbit_lattice(shape)
    s3 = lattice_sum(lattice, 3, rel_tol).value
    s4 = lattice_sum(lattice, 4, rel_tol).value
    energy_boundary, force_boundary = _boundary_terms(shape)
    sign = _sign(bc)
    area = _area(shape)
    c0 = -area / (8.0 * math.pi) * s3 + sign * energy_boundary
    c1 = area / (2.0 * math.pi**2) * s4 - sign * force_boundary
    return c0, c1


# Analytic integral and sum identities behind the constants above.


def bessel_j0_integral(l: int, a: float, length: float) -> float:
    """int_0^inf 2 k^2 K1(2 l a k) J0(L k) dk, summed between the zeros of J0."""
    decay = 2.0 * l * a
    k_end = (60.0 + 5.0 * math.log1p(length / decay)) / decay
    nodes = np.concatenate([[0.0], bessel_roots_below(0, k_end * length) / length, [k_end]])

    def integrand(k: float) -> float:
        return 2.0 * k * k * special.k1(decay * k) * special.j0(length * k)

    pieces = [
        quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        for lo, hi in zip(nodes[:-1], nodes[1:])
        if hi > lo
    ]
    return math.fsum(pieces)


def bessel_j0_closed_form(l: int, a: float, length: float) -> float:
    return l / (2.0 * a**3 * (l * l + (length / (2.0 * a)) ** 2) ** 2)


def cosine_integral(l: int, a: float, rm: float) -> float:
    """int_0^inf 2 k K1(2 l a k) cos(R_m k) dk with a cosine-weighted quadrature, cut
    where K1 has decayed by e^-70."""
    decay = 2.0 * l * a
    value, _ = quad(
        lambda k: 2.0 * k * special.k1(decay * k) if k > 0 else 2.0 / decay,
        0.0,
        70.0 / decay,
        weight="cos",
        wvar=rm,
        epsabs=0.0,
        epsrel=1e-13,
        limit=400,
    )
    return value


def cosine_closed_form(l: int, a: float, rm: float) -> float:
    return math.pi * l / (4.0 * a * a * (l * l + (rm / (2.0 * a)) ** 2) ** 1.5)


def inverse_square_sum(alpha: float, terms: int = DIRECT_TERMS) -> float:
    """sum_{l>=1} (l^2 + alpha^2)^-2: direct part plus the integral beyond terms + 1/2."""
    l = np.arange(1, terms + 1, dtype=float)
    x = terms + 0.5
    tail = math.atan(alpha / x) / (2.0 * alpha**3) - x / (2.0 * alpha**2 * (x * x + alpha**2))
    return math.fsum((l * l + alpha * alpha) ** -2.0) + tail


def inverse_square_closed_form(alpha: float) -> float:
    t = math.pi * alpha
    return (
        math.pi / (math.tanh(t) * 4.0 * alpha**3)
        + math.pi**2 / (4.0 * alpha**2 * math.sinh(t) ** 2)
        - 1.0 / (2.0 * alpha**4)
    )


def inverse_square_asymptote(alpha: float) -> float:
    return math.pi / (4.0 * alpha**3) - 1.0 / (2.0 * alpha**4)


def inverse_three_halves_sum(alpha: float, terms: int = DIRECT_TERMS) -> float:
    l = np.arange(1, terms + 1, dtype=float)
    x = terms + 0.5
    tail = (1.0 - x / math.sqrt(x * x + alpha * alpha)) / alpha**2
    return math.fsum((l * l + alpha * alpha) ** -1.5) + tail


def inverse_three_halves_asymptote(alpha: float) -> float:
    return 1.0 / alpha**2 - 1.0 / (2.0 * alpha**3)


def _check(name: str, tolerance: float, cases: list[tuple[dict[str, float], float, float]]):
    worst_params: dict[str, float] = {}
    worst = -1.0
    for params, numeric, exact in cases:
        error = abs(numeric - exact) / abs(exact)
        if error > worst:
            worst, worst_params = error, params
    return IdentityCheck(
        name=name,
        tolerance=tolerance,
        worst_rel_error=worst,
        worst_params=worst_params,
        passed=worst <= tolerance,
    )


def verify_identities(samples: int = 6, seed: int = 12345) -> list[IdentityCheck]:
    """Check the four integral and sum identities at random parameters."""
    rng = np.random.default_rng(seed)
    checks: list[IdentityCheck] = []

    cases = []
    for _ in range(samples):
        l, a = int(rng.integers(1, 5)), float(rng.uniform(0.1, 0.5))
        length = float(rng.uniform(0.5, 2.0))
        cases.append(
            (
                {"l": l, "a": a, "L": length},
                bessel_j0_integral(l, a, length),
                bessel_j0_closed_form(l, a, length),
            )
        )
    checks.append(_check("bessel_j0_integral", 1e-8, cases))

    cases = []
    for _ in range(samples):
        alpha = float(rng.uniform(10.0, 40.0))
        cases.append(({"alpha": alpha}, inverse_square_sum(alpha), inverse_square_asymptote(alpha)))
    checks.append(_check("inverse_square_asymptote", 1e-8, cases))

    cases = [({"alpha": 1.0}, inverse_square_sum(1.0), inverse_square_closed_form(1.0))]
    for _ in range(samples):
        alpha = float(rng.uniform(0.2, 5.0))
        cases.append(
            ({"alpha": alpha}, inverse_square_sum(alpha), inverse_square_closed_form(alpha))
        )
    checks.append(_check("inverse_square_closed_form", 1e-10, cases))

    cases = []
    for _ in range(samples):
        l, a = int(rng.integers(1, 5)), float(rng.uniform(0.1, 0.5))
        rm = float(rng.uniform(0.5, 2.0))
        cases.append(
            ({"l": l, "a": a, "Rm": rm}, cosine_integral(l, a, rm), cosine_closed_form(l, a, rm))
        )
    checks.append(_check("cosine_integral", 1e-8, cases))

    cases = []
    for _ in range(samples):
        alpha = float(rng.uniform(10.0, 40.0))
        cases.append(
            (
                {"alpha": alpha},
                inverse_three_halves_sum(alpha),
                inverse_three_halves_asymptote(alpha),
            )
        )
    checks.append(_check("inverse_three_halves_asymptote", 1e-8, cases))

    for check in checks:
        if not check.passed:
            logger.warning(
                "identity %s failed: %.3g at %s",
                check.name,
                check.worst_rel_error,
                check.worst_params,
            )
    return checks
