from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class BoundaryCondition(str, Enum):
    DIRICHLET = "D"
    NEUMANN = "N"


class FieldContent(str, Enum):
    TM = "TM"
    TE = "TE"
    EM = "TM+TE"


class ShapeKind(str, Enum):
    RECTANGLE = "rectangle"
    EQUILATERAL_TRIANGLE = "triangle"
    CIRCLE = "circle"
    QUARTER_CIRCLE = "quarter_circle"
    STADIUM = "stadium"


class SpectrumSource(str, Enum):
    ANALYTIC = "analytic"
    BESSEL_ROOTS = "bessel_roots"
    NUMERIC_SOLVER = "numeric_solver"


class RootKind(str, Enum):
    J = "J"
    JPRIME = "Jprime"


HTTP_LAMBDA_LIMIT = 1000.0

DIMENSION_FIELDS = ("lx", "ly", "side", "radius", "length")

REQUIRED_DIMENSIONS: dict[ShapeKind, tuple[str, ...]] = {
    ShapeKind.RECTANGLE: ("lx", "ly"),
    ShapeKind.EQUILATERAL_TRIANGLE: ("side",),
    ShapeKind.CIRCLE: ("radius",),
    ShapeKind.QUARTER_CIRCLE: ("radius",),
    ShapeKind.STADIUM: ("radius", "length"),
}


class BilliardShape(BaseModel):
    """Piston cross-section. Stadium is the quarter stadium: an r x l rectangle glued
    to a quarter disk of radius r, walls on both symmetry axes."""

    model_config = ConfigDict(frozen=True)

    kind: ShapeKind
    lx: Optional[float] = Field(default=None, gt=0)
    ly: Optional[float] = Field(default=None, gt=0)
    side: Optional[float] = Field(default=None, gt=0)
    radius: Optional[float] = Field(default=None, gt=0)
    length: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "BilliardShape":
        required = REQUIRED_DIMENSIONS[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} requires {', '.join(missing)}")
        extra = [
            name
            for name in DIMENSION_FIELDS
            if name not in required and getattr(self, name) is not None
        ]
        if extra:
            raise ValueError(f"{self.kind.value} does not take {', '.join(extra)}")
        return self

    @classmethod
    def rectangle(cls, lx: float, ly: float) -> "BilliardShape":
        return cls(kind=ShapeKind.RECTANGLE, lx=lx, ly=ly)

    @classmethod
    def square(cls, side: float = 1.0) -> "BilliardShape":
        return cls(kind=ShapeKind.RECTANGLE, lx=side, ly=side)

    @classmethod
    def triangle(cls, side: float) -> "BilliardShape":
        return cls(kind=ShapeKind.EQUILATERAL_TRIANGLE, side=side)

    @classmethod
    def circle(cls, radius: float) -> "BilliardShape":
        return cls(kind=ShapeKind.CIRCLE, radius=radius)

    @classmethod
    def quarter_circle(cls, radius: float) -> "BilliardShape":
        return cls(kind=ShapeKind.QUARTER_CIRCLE, radius=radius)

    @classmethod
    def stadium(cls, radius: float, length: float) -> "BilliardShape":
        return cls(kind=ShapeKind.STADIUM, radius=radius, length=length)

    @property
    def ratio(self) -> Optional[float]:
        """l/r for the stadium family (0 for the quarter circle)."""
        if self.kind == ShapeKind.STADIUM:
            return float(self.length) / float(self.radius)
        if self.kind == ShapeKind.QUARTER_CIRCLE:
            return 0.0
        return None

    def dimensions(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in REQUIRED_DIMENSIONS[self.kind]}

    def scaled(self, factor: float) -> "BilliardShape":
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        update = {name: value * factor for name, value in self.dimensions().items()}
        return self.model_copy(update=update)

    @property
    def label(self) -> str:
        dims = ",".join(f"{name}={value:.12g}" for name, value in self.dimensions().items())
        return f"{self.kind.value}({dims})"


class WeylData(BaseModel):
    area: float = Field(gt=0)
    perimeter: float = Field(gt=0)
    chi: float
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET

    @property
    def perimeter_sign(self) -> float:
        """Sign of the perimeter term in the counting function."""
        return -1.0 if self.bc == BoundaryCondition.DIRICHLET else 1.0

    @property
    def chi_bc(self) -> float:
        return self.chi if self.bc == BoundaryCondition.DIRICHLET else self.chi - 1.0


@dataclass(frozen=True, slots=True)
class BesselRoot:
    order_n: int
    index_m: int
    root: float
    kind: RootKind


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sorted distinct eigenvalues with multiplicities, complete up to lambda_max."""

    levels: np.ndarray
    multiplicities: np.ndarray
    bc: BoundaryCondition
    lambda_max: float
    source: SpectrumSource

    def __post_init__(self) -> None:
        levels = np.array(self.levels, dtype=float).reshape(-1)
        mult = np.array(self.multiplicities, dtype=np.int64).reshape(-1)
        if levels.shape != mult.shape:
            raise ValueError("levels and multiplicities differ in length")
        if levels.size and np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if np.any(mult < 1):
            raise ValueError("multiplicities must be positive")
        if levels.size and levels[0] <= 0:
            raise ValueError("eigenvalues must be positive")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")
        levels.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "multiplicities", mult)
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))
        object.__setattr__(self, "source", SpectrumSource(self.source))
        object.__setattr__(self, "lambda_max", float(self.lambda_max))

    def __len__(self) -> int:
        return int(self.levels.size)

    @property
    def total(self) -> int:
        return int(self.multiplicities.sum())

    @property
    def first(self) -> float:
        return float(self.levels[0])

    def counting_function(self, lam) -> np.ndarray:
        """N(lam): number of levels <= lam, counted with multiplicity."""
        cumulative = np.concatenate([[0], np.cumsum(self.multiplicities)])
        idx = np.searchsorted(self.levels, np.asarray(lam, dtype=float), side="right")
        return cumulative[idx]

    def count(self, lam: float) -> int:
        return int(self.counting_function(lam))

    def distinct_levels(self, n: int) -> list[tuple[float, int]]:
        return [(float(x), int(m)) for x, m in zip(self.levels[:n], self.multiplicities[:n])]

    def truncated(self, lambda_max: float) -> "Spectrum":
        if lambda_max > self.lambda_max:
            raise ValueError("cannot extend a spectrum beyond its completeness bound")
        keep = self.levels <= lambda_max
        return Spectrum(
            levels=self.levels[keep],
            multiplicities=self.multiplicities[keep],
            bc=self.bc,
            lambda_max=lambda_max,
            source=self.source,
        )

    def without_level(self, index: int) -> "Spectrum":
        """Drop one copy of the index-th distinct level."""
        mult = self.multiplicities.copy()
        mult[index] -= 1
        keep = mult > 0
        return Spectrum(
            levels=self.levels[keep],
            multiplicities=mult[keep],
            bc=self.bc,
            lambda_max=self.lambda_max,
            source=self.source,
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.bc.value}|{self.lambda_max!r}|{self.source.value}|".encode("utf-8"))
        h.update(self.levels.tobytes())
        h.update(self.multiplicities.tobytes())
        return h.hexdigest()[:20]


class SolverConfig(BaseModel):
    points_per_wavelength: float = Field(default=10.0, ge=8)
    basis_factor: float = Field(default=1.5, gt=0)
    window_width: float = Field(default=0.4, gt=0)
    tension_threshold: float = Field(default=1e-2, gt=0)
    target_accuracy: float = Field(default=1e-6, gt=0, lt=1e-2)
    scan_resolution: int = Field(default=16, ge=4)
    min_basis: int = Field(default=20, ge=4)
    interior_factor: float = Field(default=1.0, gt=0)
    basis: Literal["auto", "plane_waves", "fourier_bessel", "two_centre"] = "auto"
    seed: int = 20100
    workers: int = Field(default=1, ge=1)


class FoundLevel(BaseModel):
    lam: float
    residual: float
    multiplicity: int = 1


class SpectrumWindow(BaseModel):
    lambda_lo: float
    lambda_hi: float
    found: list[FoundLevel] = Field(default_factory=list)
    weyl_expected: float = 0.0


class SuspectInterval(BaseModel):
    lambda_lo: float
    lambda_hi: float
    offset: int
    kind: Literal["deficit", "surplus"]


class CompletenessReport(BaseModel):
    ok: bool
    lambda_max: float
    block_width: float
    block_offsets: list[float]
    max_abs_block_mean: float
    suspects: list[SuspectInterval] = Field(default_factory=list)


class TruncationPolicy(BaseModel):
    accuracy_exponent: float = Field(default=25.0, gt=0)
    a_min: float = Field(default=0.05, gt=0)

    @property
    def required_lambda_max(self) -> float:
        return self.accuracy_exponent / (2.0 * self.a_min)

    def l_max(self, lam: float, a: float) -> int:
        return max(1, math.ceil(self.accuracy_exponent / (2.0 * lam * a)))


class ForcePoint(BaseModel):
    a: float
    force: float
    weyl: float
    delta: float
    a_delta: float
    overlays: dict[str, float] = Field(default_factory=dict)


class ForceCurve(BaseModel):
    points: list[ForcePoint]
    bc_content: FieldContent
    spectrum_id: str
    policy: TruncationPolicy
    shape: str
    lambda_max: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)


class GuardReport(BaseModel):
    passed: bool
    slope: float
    delta_exponent: float
    a_lo: float
    a_hi: float


class BesselZeros(BaseModel):
    """Zeros of f(z) = J_n(R z) (kind J) or J'_n(R z) (kind Jprime)."""

    model_config = ConfigDict(frozen=True)

    order_n: int = Field(ge=0)
    radius: float = Field(gt=0)
    kind: RootKind = RootKind.J


class ContourConfig(BaseModel):
    nodes_per_panel: int = Field(default=32, ge=4)
    rel_tol: float = Field(default=1e-12, gt=0)
    max_panels: int = Field(default=4096, ge=8)
    min_zero_distance: float = Field(default=1e-6, gt=0)
    probe_points: int = Field(default=64, ge=8)


class AsymptoteSet(BaseModel):
    area_term: float
    perimeter_term: float
    chi_term: float
    far_params: list[tuple[float, int]]


class OrbitLattice(BaseModel):
    """Periodic-orbit lengths L_M^2 = g11 M1^2 + 2 g12 M1 M2 + g22 M2^2."""

    model_config = ConfigDict(frozen=True)

    kind: ShapeKind
    g11: float = Field(gt=0)
    g12: float
    g22: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_positive_definite(self) -> "OrbitLattice":
        if self.g11 * self.g22 - self.g12 * self.g12 <= 0:
            raise ValueError("orbit length form must be positive definite")
        return self

    def length(self, m1, m2):
        return np.sqrt(self.g11 * m1 * m1 + 2.0 * self.g12 * m1 * m2 + self.g22 * m2 * m2)


class OrbitSums(BaseModel):
    power: int
    value: float
    partial: float
    tail_estimate: float
    cutoff: int
    tail_bound: float


class TransitionRow(BaseModel):
    ratio: float
    U: float
    flatness: float
    spread: float
    plateau: bool


class IdentityCheck(BaseModel):
    name: str
    tolerance: float
    worst_rel_error: float
    worst_params: dict[str, float]
    passed: bool


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    worst: Optional[float] = None


class VerificationReport(BaseModel):
    ok: bool
    checks: list[CheckResult]


class RunConfig(BaseModel):
    """One CLI invocation after merging defaults, the INI file and the flags."""

    command: Literal["spectrum", "force", "transition", "verify", "asymptotes"] = "force"
    shape: Literal["square", "rectangle", "triangle", "circle", "quarter_circle", "stadium"] = (
        "square"
    )
    ratio: Optional[float] = Field(default=None, ge=0)
    bc: Literal["D", "N", "EM"] = "D"
    lambda_max: Optional[float] = Field(default=None, gt=0)
    policy: TruncationPolicy = Field(default_factory=TruncationPolicy)
    a_max: float = Field(default=2.0, gt=0)
    points_per_decade: int = Field(default=60, ge=2)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    solver_lambda_limit: float = Field(default=125.0, gt=0)
    ratios: list[float] = Field(default_factory=lambda: [0.0, 0.005, 0.2, 0.205, 0.7, 0.705])
    fit_decades: float = Field(default=1.0, gt=0)
    overlay: bool = False
    out: Optional[Path] = None
    cache_dir: Optional[Path] = None
    seed: int = 12345
    workers: int = Field(default=1, ge=1)

    @property
    def uses_solver(self) -> bool:
        if self.command == "transition":
            return any(r > 0 for r in self.ratios)
        return self.shape == "stadium" and (self.ratio or 0.0) > 0

    @property
    def effective_lambda_max(self) -> float:
        if self.lambda_max is not None:
            return self.lambda_max
        return self.policy.required_lambda_max

    @model_validator(mode="after")
    def _check_policy(self) -> "RunConfig":
        required = self.policy.required_lambda_max
        evaluates_force = self.command in ("force", "transition")
        if evaluates_force and self.lambda_max is not None and self.lambda_max < required:
            raise ValueError(
                f"lambda_max={self.lambda_max:g} is below D/(2 a_min)={required:g} "
                "required by the truncation policy"
            )
        if self.a_max <= self.policy.a_min:
            raise ValueError("a_max must exceed a_min")
        if self.command != "transition":
            if self.shape == "stadium" and self.ratio is None:
                raise ValueError("stadium requires --ratio (l/r)")
            if self.shape in ("stadium", "quarter_circle") and self.bc != "D":
                raise ValueError("stadium family spectra are Dirichlet only")
        if self.command == "transition" and not self.ratios:
            raise ValueError("transition needs at least one ratio")
        if self.uses_solver and self.effective_lambda_max > self.solver_lambda_limit:
            raise ValueError(
                f"solver shapes are limited to lambda_max <= {self.solver_lambda_limit:g}; "
                f"the run needs {self.effective_lambda_max:g}"
            )
        return self


class WeylRequest(BaseModel):
    shape: Literal["square", "rectangle", "triangle", "circle", "quarter_circle", "stadium"]
    ratio: Optional[float] = Field(default=None, ge=0)
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET


class ForceRequest(BaseModel):
    shape: Literal["square", "rectangle", "triangle", "circle", "quarter_circle", "stadium"]
    ratio: Optional[float] = Field(default=None, ge=0)
    bc: Literal["D", "N", "EM"] = "D"
    separations: list[float] = Field(min_length=1, max_length=200)
    D: float = Field(default=25.0, gt=0)
    aMin: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_separations(self) -> "ForceRequest":
        if any(not a > 0 for a in self.separations):
            raise ValueError("separations must be positive")
        if self.aMin is not None and min(self.separations) < self.aMin:
            raise ValueError("separations below aMin")
        if self.policy().required_lambda_max > HTTP_LAMBDA_LIMIT:
            raise ValueError(f"D/(2 aMin) must not exceed {HTTP_LAMBDA_LIMIT:g}")
        return self

    def policy(self) -> TruncationPolicy:
        a_min = self.aMin if self.aMin is not None else min(self.separations)
        return TruncationPolicy(accuracy_exponent=self.D, a_min=a_min)
