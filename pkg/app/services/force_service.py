from __future__ import annotations

import logging
from typing import Any, Iterable, Optional, Sequence

from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    ForceCurve,
    ShapeKind,
    Spectrum,
    TransitionRow,
    TruncationPolicy,
    WeylData,
)
from app.errors import PolicyError
from app.services import casimir, orbits
from app.services.billiards import unit_area_stadium, weyl_data
from app.services.spectrum_service import SpectrumService
from app.settings import DEFAULT_WORKERS

logger = logging.getLogger(__name__)

JUMP_PAIR = (0.0, 0.005)
CONTROL_PAIRS = ((0.2, 0.205), (0.7, 0.705))


def _content_bcs(content: str) -> list[BoundaryCondition]:
    if content == "EM":
        return [BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN]
    return [BoundaryCondition(content)]


class ForceService:
    def __init__(self, spectra: SpectrumService, workers: int = DEFAULT_WORKERS):
        self.spectra = spectra
        self.workers = max(1, int(workers))

    def spectra_for(
        self, shape: BilliardShape, content: str, lambda_max: float
    ) -> tuple[list[Spectrum], list[WeylData]]:
        """Spectra and Weyl data for TM ("D"), TE ("N") or both ("EM")."""
        bcs = _content_bcs(content)
        spectra = [self.spectra.get_spectrum(shape, bc, lambda_max) for bc in bcs]
        return spectra, [weyl_data(shape, bc) for bc in bcs]

    def force_curve(
        self,
        shape: BilliardShape,
        content: str,
        policy: TruncationPolicy,
        a_grid: Iterable[float],
        lambda_max: Optional[float] = None,
        overlays: bool = False,
    ) -> ForceCurve:
        lam = policy.required_lambda_max if lambda_max is None else float(lambda_max)
        spectra, weyls = self.spectra_for(shape, content, lam)
        return casimir.force_curve(
            spectra,
            weyls,
            policy,
            a_grid,
            shape=shape.label,
            overlays=overlays,
            workers=self.workers,
        )

    def forces_at(
        self,
        shape: BilliardShape,
        content: str,
        policy: TruncationPolicy,
        separations: Sequence[float],
    ) -> list[dict[str, Any]]:
        curve = self.force_curve(shape, content, policy, separations)
        return [
            {
                "a": point.a,
                "force": point.force,
                "weylForce": point.weyl,
                "deltaForce": point.delta,
            }
            for point in curve.points
        ]

    def transition(
        self,
        ratios: Sequence[float],
        policy: TruncationPolicy,
        a_grid: Iterable[float],
        lambda_max: Optional[float] = None,
        fit_decades: float = 1.0,
    ) -> tuple[list[TransitionRow], Optional[float]]:
        """U(l/r) over unit-area stadiums, plus the jump statistic when its ratios are present."""
        lam = policy.required_lambda_max if lambda_max is None else float(lambda_max)
        family = []
        for ratio in sorted(set(float(r) for r in ratios)):
            shape = unit_area_stadium(ratio)
            family.append((ratio, self.spectra.get_spectrum(shape, "D", lam), weyl_data(shape)))
        rows = casimir.transition_limit_U(family, policy, a_grid, fit_decades, self.workers)
        try:
            jump = casimir.jump_statistic(rows, JUMP_PAIR, CONTROL_PAIRS)
        except PolicyError:
            jump = None
        return rows, jump

    def asymptotes(
        self, shape: BilliardShape, content: str, lambda_max: float, orders: int = 4
    ) -> dict[str, Any]:
        """Weyl coefficients and far-field parameters; orbit constants for polygons."""
        payload: dict[str, Any] = {"shape": shape.label, "bc": content, "lambdaMax": lambda_max}
        entries = []
        for bc in _content_bcs(content):
            spectrum = self.spectra.get_spectrum(shape, bc, lambda_max)
            weyl = weyl_data(shape, bc)
            terms = casimir.asymptote_set(weyl, spectrum, orders)
            entry: dict[str, Any] = {
                "bc": bc.value,
                "area": weyl.area,
                "perimeter": weyl.perimeter,
                "chi": weyl.chi,
                "areaTerm": terms.area_term,
                "perimeterTerm": terms.perimeter_term,
                "chiTerm": terms.chi_term,
                "lowestLevels": [
                    {"lambda": lam, "multiplicity": mult} for lam, mult in terms.far_params
                ],
            }
            if shape.kind in (ShapeKind.RECTANGLE, ShapeKind.EQUILATERAL_TRIANGLE):
                c0, c1 = orbits.delta_energy_coeffs(shape, bc)
                entry["deltaForceConstant"] = orbits.delta_force_constant(shape, bc)
                entry["deltaEnergyCoeffs"] = [c0, c1]
            entries.append(entry)
        payload["terms"] = entries
        return payload
