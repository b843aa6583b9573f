from __future__ import annotations

import math
from typing import Optional, Union

import numpy as np

from app.db.models import BilliardShape, BoundaryCondition, ShapeKind, WeylData
from app.errors import ConfigurationError

ArrayLike = Union[float, np.ndarray]

MERGE_TOLERANCE = 1e-9

# (pi/alpha - alpha/pi)/24 for a right angle and for the pi/3 corners of the triangle
RIGHT_CORNER = 1.0 / 16.0
SIXTY_DEGREE_CORNER = 1.0 / 9.0

SHAPE_NAMES = ("square", "rectangle", "triangle", "circle", "quarter_circle", "stadium")


def area(shape: BilliardShape) -> float:
    if shape.kind == ShapeKind.RECTANGLE:
        return shape.lx * shape.ly
    if shape.kind == ShapeKind.EQUILATERAL_TRIANGLE:
        return math.sqrt(3.0) * shape.side**2 / 4.0
    if shape.kind == ShapeKind.CIRCLE:
        return math.pi * shape.radius**2
    if shape.kind == ShapeKind.QUARTER_CIRCLE:
        return math.pi * shape.radius**2 / 4.0
    return shape.radius * shape.length + math.pi * shape.radius**2 / 4.0


def perimeter(shape: BilliardShape) -> float:
    if shape.kind == ShapeKind.RECTANGLE:
        return 2.0 * (shape.lx + shape.ly)
    if shape.kind == ShapeKind.EQUILATERAL_TRIANGLE:
        return 3.0 * shape.side
    if shape.kind == ShapeKind.CIRCLE:
        return 2.0 * math.pi * shape.radius
    if shape.kind == ShapeKind.QUARTER_CIRCLE:
        return (2.0 + math.pi / 2.0) * shape.radius
    return (2.0 + math.pi / 2.0) * shape.radius + 2.0 * shape.length


def corner_curvature_constant(shape: BilliardShape) -> float:
    """chi: corner terms plus (1/12 pi) times the total curvature of the smooth arcs.

    The quarter stadium has three right-angle corners; the arc meets the straight top
    wall tangentially and contributes a quarter turn of curvature.
    """
    if shape.kind == ShapeKind.RECTANGLE:
        return 4 * RIGHT_CORNER
    if shape.kind == ShapeKind.EQUILATERAL_TRIANGLE:
        return 3 * SIXTY_DEGREE_CORNER
    if shape.kind == ShapeKind.CIRCLE:
        return 2.0 * math.pi / (12.0 * math.pi)
    return 3 * RIGHT_CORNER + (math.pi / 2.0) / (12.0 * math.pi)


def weyl_data(
    shape: BilliardShape, bc: BoundaryCondition = BoundaryCondition.DIRICHLET
) -> WeylData:
    return WeylData(
        area=area(shape),
        perimeter=perimeter(shape),
        chi=corner_curvature_constant(shape),
        bc=BoundaryCondition(bc),
    )


def normalize_to_unit_area(shape: BilliardShape) -> BilliardShape:
    return shape.scaled(1.0 / math.sqrt(area(shape)))


def weyl_count(weyl: WeylData, epsilon: ArrayLike) -> ArrayLike:
    """Smooth part of the counting function at energy epsilon = lambda^2."""
    eps = np.asarray(epsilon, dtype=float)
    if np.any(eps < 0):
        raise ValueError("epsilon must be non-negative")
    value = (
        weyl.area / (4.0 * math.pi) * eps
        + weyl.perimeter_sign * weyl.perimeter / (4.0 * math.pi) * np.sqrt(eps)
        + weyl.chi_bc
    )
    return float(value) if np.ndim(epsilon) == 0 else value


def mean_level_spacing(weyl: WeylData, lam: float) -> float:
    """Mean spacing in lambda from the leading Weyl density A lambda / 2 pi."""
    return 2.0 * math.pi / (weyl.area * lam)


def merge_levels(
    values: np.ndarray, multiplicities: Optional[np.ndarray] = None, tol: float = MERGE_TOLERANCE
) -> tuple[np.ndarray, np.ndarray]:
    """Sort and merge values closer than tol * value, summing their multiplicities."""
    values = np.asarray(values, dtype=float).reshape(-1)
    if multiplicities is None:
        multiplicities = np.ones(values.size, dtype=np.int64)
    multiplicities = np.asarray(multiplicities, dtype=np.int64).reshape(-1)
    if values.size == 0:
        return values, multiplicities

    order = np.argsort(values, kind="stable")
    values, multiplicities = values[order], multiplicities[order]
    starts = np.concatenate([[True], np.diff(values) > tol * values[1:]])
    group = np.cumsum(starts) - 1
    merged_mult = np.bincount(group, weights=multiplicities).astype(np.int64)
    return values[starts], merged_mult


def unit_area_stadium(ratio: float) -> BilliardShape:
    if ratio < 0:
        raise ConfigurationError("stadium ratio l/r must be non-negative")
    return normalize_to_unit_area(BilliardShape.stadium(radius=1.0, length=ratio))


def stadium_perimeter_minimum() -> float:
    """l/r minimising the perimeter of the unit-area quarter stadium."""
    return 1.0 - math.pi / 4.0


def shape_from_name(name: str, ratio: Optional[float] = None) -> BilliardShape:
    """Unit-area shape for a CLI name; ratio is Lx/Ly for rectangles, l/r for stadiums."""
    if name == "square":
        return BilliardShape.square(1.0)
    if name == "rectangle":
        aspect = 1.0 if ratio is None else float(ratio)
        if aspect <= 0:
            raise ConfigurationError("rectangle aspect ratio must be positive")
        return BilliardShape.rectangle(math.sqrt(aspect), 1.0 / math.sqrt(aspect))
    if name == "triangle":
        return normalize_to_unit_area(BilliardShape.triangle(1.0))
    if name == "circle":
        return normalize_to_unit_area(BilliardShape.circle(1.0))
    if name == "quarter_circle":
        return normalize_to_unit_area(BilliardShape.quarter_circle(1.0))
    if name == "stadium":
        if ratio is None:
            raise ConfigurationError("stadium requires a ratio l/r")
        return unit_area_stadium(float(ratio))
    raise ConfigurationError(f"unknown shape {name!r}; expected one of {', '.join(SHAPE_NAMES)}")
