from __future__ import annotations

import logging
import math
from typing import Callable

from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    CheckResult,
    TruncationPolicy,
    VerificationReport,
)
from app.errors import CasimirError
from app.services import casimir, orbits
from app.services.billiards import shape_from_name, weyl_data
from app.services.specfun import ZETA2, dirichlet_beta
from app.services.spectrum_service import SpectrumService

logger = logging.getLogger(__name__)

# (perimeter, chi, lambda_1) of the unit-area shapes, to the printed digits
GEOMETRY_TABLE: dict[str, tuple[float, float, float]] = {
    "circle": (3.54, 0.16, 4.26),
    "square": (4.0, 0.25, 4.44),
    "triangle": (4.56, 0.33, 4.77),
    "rectangle": (5.0, 0.25, 6.47),
}
GEOMETRY_TOL = 0.01

CERTIFY_SHAPES = ("square", "triangle", "circle", "quarter_circle")
CERTIFY_LAMBDA_MAX = 150.0

CONTOUR_SEPARATIONS = (0.1, 0.2, 0.35, 0.6, 1.0)
CONTOUR_TOL = 1e-6
ORBIT_TOL = 1e-8

# removed from the square to check the guard; low enough to dominate at a_min
DEFECT_LEVEL_INDEX = 2


def _table_shape(name: str) -> BilliardShape:
    return shape_from_name(name, 4.0 if name == "rectangle" else None)


class VerifyService:
    """Runs every self-check; failures are recorded per check, never raised."""

    def __init__(self, spectra: SpectrumService, seed: int = 12345, workers: int = 1):
        self.spectra = spectra
        self.seed = int(seed)
        self.workers = max(1, int(workers))
        self.checks: dict[str, Callable[[], list[CheckResult]]] = {
            "identities": self.check_identities,
            "geometry": self.check_geometry,
            "certification": self.check_certification,
            "defect": self.check_defect_detection,
            "contour": self.check_contour,
            "orbits": self.check_orbit_constant,
        }

    def run(self, names: list[str] | None = None) -> VerificationReport:
        results: list[CheckResult] = []
        for name in names or list(self.checks):
            try:
                results.extend(self.checks[name]())
            except CasimirError as err:
                logger.warning("check %s failed with %s", name, err)
                results.append(CheckResult(name=name, passed=False, detail=str(err)))
        return VerificationReport(ok=all(r.passed for r in results), checks=results)

    def check_identities(self) -> list[CheckResult]:
        return [
            CheckResult(
                name=f"identity:{check.name}",
                passed=check.passed,
                detail=f"tol={check.tolerance:g} at {check.worst_params}",
                worst=check.worst_rel_error,
            )
            for check in orbits.verify_identities(seed=self.seed)
        ]

    def check_geometry(self) -> list[CheckResult]:
        results = []
        for name, printed in GEOMETRY_TABLE.items():
            shape = _table_shape(name)
            weyl = weyl_data(shape)
            lam1 = self.spectra.get_spectrum(shape, "D", 10.0).first
            values = (weyl.perimeter, weyl.chi, lam1)
            worst = max(abs(v - p) for v, p in zip(values, printed))
            results.append(
                CheckResult(
                    name=f"geometry:{name}",
                    passed=worst <= GEOMETRY_TOL,
                    detail="P={:.4f} chi={:.4f} lambda1={:.4f}".format(*values),
                    worst=worst,
                )
            )
        return results

    def check_certification(self) -> list[CheckResult]:
        results = []
        for name in CERTIFY_SHAPES:
            shape = shape_from_name(name)
            spectrum = self.spectra.get_spectrum(shape, "D", CERTIFY_LAMBDA_MAX)
            report = self.spectra.certify(shape, spectrum)
            results.append(
                CheckResult(
                    name=f"certification:{name}",
                    passed=report.ok,
                    detail=f"{len(report.suspects)} suspect interval(s)",
                    worst=report.max_abs_block_mean,
                )
            )
        return results

    def check_defect_detection(self) -> list[CheckResult]:
        """Guard passes on the complete square spectrum and fails once a level is removed."""
        policy = TruncationPolicy()
        shape = shape_from_name("square")
        weyl = weyl_data(shape)
        complete = self.spectra.get_spectrum(shape, "D", policy.required_lambda_max)
        defective = complete.without_level(DEFECT_LEVEL_INDEX)
        removed = float(complete.levels[DEFECT_LEVEL_INDEX])
        grid = casimir.log_grid(policy.a_min, 10.0 * policy.a_min, 20)

        good = casimir.short_distance_guard(
            casimir.force_curve([complete], [weyl], policy, grid, workers=self.workers)
        )
        bad = casimir.short_distance_guard(
            casimir.force_curve([defective], [weyl], policy, grid, workers=self.workers)
        )
        report = self.spectra.certify(shape, defective)
        located = any(
            s.kind == "deficit" and s.lambda_lo <= removed <= s.lambda_hi for s in report.suspects
        )
        return [
            CheckResult(
                name="guard:complete",
                passed=good.passed,
                detail=f"dF exponent {good.delta_exponent:.3f}",
                worst=good.slope,
            ),
            CheckResult(
                name="guard:missing_level",
                passed=not bad.passed,
                detail=f"dF exponent {bad.delta_exponent:.3f} without lambda={removed:.6g}",
                worst=bad.slope,
            ),
            CheckResult(
                name="certification:missing_level",
                passed=located,
                detail=f"suspects {[(s.lambda_lo, s.lambda_hi) for s in report.suspects]}",
            ),
        ]

    def check_contour(self) -> list[CheckResult]:
        """Disk force from the argument theorem against the sum over Bessel roots."""
        policy = TruncationPolicy(a_min=min(CONTOUR_SEPARATIONS))
        shape = shape_from_name("circle")
        spectrum = self.spectra.get_spectrum(shape, "D", policy.required_lambda_max)
        worst = 0.0
        for a in CONTOUR_SEPARATIONS:
            direct = casimir.piston_force(spectrum, a, policy)
            contour = casimir.circle_force_contour(shape.radius, a, policy)
            worst = max(worst, abs(contour - direct) / abs(direct))
        return [
            CheckResult(
                name="contour:circle",
                passed=worst <= CONTOUR_TOL,
                detail=f"a in {list(CONTOUR_SEPARATIONS)}",
                worst=worst,
            )
        ]

    def check_orbit_constant(self) -> list[CheckResult]:
        """Unit square: the quartic orbit sum is 4 zeta(2) beta(2) / 16."""
        s4 = orbits.lattice_sum(orbits.orbit_lattice(BilliardShape.square(1.0)), 4, 1e-10).value
        exact = 4.0 * ZETA2 * dirichlet_beta(2.0) / 16.0
        error = abs(s4 - exact) / exact
        return [
            CheckResult(
                name="orbits:square_s4",
                passed=error <= ORBIT_TOL and math.isfinite(s4),
                detail=f"s4={s4:.12f}",
                worst=error,
            )
        ]
