from __future__ import annotations

import hashlib
import json
import logging
from typing import Any, Callable, Optional

from app.db.database import SpectrumStore
from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    CompletenessReport,
    SolverConfig,
    Spectrum,
)
from app.errors import ConfigurationError, PolicyError
from app.providers.analytic import analytic_spectrum, has_analytic_spectrum
from app.providers.helmholtz import certify_completeness, solve_up_to
from app.services.billiards import weyl_data
from app.settings import SOLVER_LAMBDA_LIMIT

logger = logging.getLogger(__name__)

ProviderFn = Callable[
    [BilliardShape, BoundaryCondition, float, SolverConfig, Optional[SpectrumStore]], Spectrum
]


def _analytic_provider(
    shape: BilliardShape,
    bc: BoundaryCondition,
    lambda_max: float,
    solver: SolverConfig,
    store: Optional[SpectrumStore],
) -> Spectrum:
    return analytic_spectrum(shape, lambda_max, bc)


def _solver_provider(
    shape: BilliardShape,
    bc: BoundaryCondition,
    lambda_max: float,
    solver: SolverConfig,
    store: Optional[SpectrumStore],
) -> Spectrum:
    if bc != BoundaryCondition.DIRICHLET:
        raise ConfigurationError("the boundary solver computes Dirichlet spectra only")
    return solve_up_to(shape, lambda_max, solver, store)


class SpectrumService:
    """Spectra by shape, served from the store when a covering one was computed before."""

    def __init__(
        self,
        store: Optional[SpectrumStore] = None,
        solver: Optional[SolverConfig] = None,
        solver_lambda_limit: float = SOLVER_LAMBDA_LIMIT,
    ):
        self.store = store
        self.solver = solver or SolverConfig()
        self.solver_lambda_limit = float(solver_lambda_limit)
        self.providers: dict[str, ProviderFn] = {
            "analytic": _analytic_provider,
            "helmholtz": _solver_provider,
        }

    @staticmethod
    def build_key(payload: dict[str, Any]) -> str:
        normalized = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(normalized.encode("utf-8")).hexdigest()

    @staticmethod
    def provider_name(shape: BilliardShape) -> str:
        return "analytic" if has_analytic_spectrum(shape) else "helmholtz"

    def _family_payload(self, shape: BilliardShape, bc: BoundaryCondition) -> dict[str, Any]:
        provider = self.provider_name(shape)
        payload: dict[str, Any] = {
            "shape": shape.model_dump(mode="json"),
            "bc": bc.value,
            "provider": provider,
        }
        if provider == "helmholtz":
            payload["solver"] = self.solver.model_dump(mode="json", exclude={"workers"})
        return payload

    def cache_keys(
        self, shape: BilliardShape, bc: BoundaryCondition, lambda_max: float
    ) -> tuple[str, str]:
        """(cache_key, family_key); the family key leaves lambda_max out."""
        family = self._family_payload(shape, bc)
        return self.build_key({**family, "lambdaMax": float(lambda_max)}), self.build_key(family)

    def get_spectrum(
        self,
        shape: BilliardShape,
        bc: BoundaryCondition | str = BoundaryCondition.DIRICHLET,
        lambda_max: float = 250.0,
    ) -> Spectrum:
        bc = BoundaryCondition(bc)
        provider = self.provider_name(shape)
        if provider == "helmholtz" and lambda_max > self.solver_lambda_limit:
            raise PolicyError(
                f"{shape.label}: solver spectra are limited to lambda_max <= "
                f"{self.solver_lambda_limit:g}",
                required_lambda_max=lambda_max,
            )
        cache_key, family_key = self.cache_keys(shape, bc, lambda_max)

        if self.store is not None:
            cached = self.store.get_spectrum(cache_key)
            if cached is None:
                covering = self.store.find_covering(family_key, lambda_max)
                cached = covering.truncated(lambda_max) if covering is not None else None
            if cached is not None:
                logger.info("cache hit for %s (%s), %d levels", shape.label, bc.value, len(cached))
                return cached
            logger.info("cache miss for %s (%s) up to %.6g", shape.label, bc.value, lambda_max)

        spectrum = self.providers[provider](shape, bc, lambda_max, self.solver, self.store)
        logger.info(
            "%s spectrum of %s: %d levels (%d with multiplicity) up to %.6g",
            provider,
            shape.label,
            len(spectrum),
            spectrum.total,
            lambda_max,
        )
        if self.store is not None:
            self.store.put_spectrum(cache_key, family_key, shape.label, spectrum)
        return spectrum

    def certify(
        self, shape: BilliardShape, spectrum: Spectrum
    ) -> CompletenessReport:
        return certify_completeness(spectrum, weyl_data(shape, spectrum.bc))

    def list_spectra(self) -> list[dict[str, Any]]:
        if self.store is None:
            return []
        return self.store.list_spectra()
