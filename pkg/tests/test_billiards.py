from __future__ import annotations

import math

import numpy as np
import pytest

from app.db.models import BilliardShape, BoundaryCondition, ShapeKind
from app.errors import ConfigurationError
from app.services.billiards import (
    area,
    merge_levels,
    normalize_to_unit_area,
    perimeter,
    shape_from_name,
    stadium_perimeter_minimum,
    unit_area_stadium,
    weyl_count,
    weyl_data,
)


@pytest.mark.parametrize(
    "name, ratio, expected_perimeter, expected_chi",
    [
        ("circle", None, 3.54, 0.16),
        ("square", None, 4.0, 0.25),
        ("triangle", None, 4.56, 0.33),
        ("rectangle", 4.0, 5.0, 0.25),
        ("stadium", 1.0, 4.16, 0.23),
        ("stadium", 0.2, 4.00, 0.23),
    ],
)
def test_geometry_table(name, ratio, expected_perimeter, expected_chi):
    shape = shape_from_name(name, ratio)
    weyl = weyl_data(shape)
    assert weyl.area == pytest.approx(1.0)
    assert weyl.perimeter == pytest.approx(expected_perimeter, abs=0.01)
    assert weyl.chi == pytest.approx(expected_chi, abs=0.01)


def test_exact_corner_constants():
    assert weyl_data(shape_from_name("circle")).chi == pytest.approx(1 / 6)
    assert weyl_data(shape_from_name("triangle")).chi == pytest.approx(1 / 3)
    for ratio in (0.0, 0.2, 1.0):
        assert weyl_data(unit_area_stadium(ratio)).chi == pytest.approx(11 / 48)
    assert weyl_data(shape_from_name("quarter_circle")).chi == pytest.approx(11 / 48)


def test_unit_area_stadium_perimeters():
    assert perimeter(unit_area_stadium(1.0)) == pytest.approx(4.1692, abs=1e-3)
    assert perimeter(unit_area_stadium(0.2)) == pytest.approx(4.0001, abs=1e-3)
    best = stadium_perimeter_minimum()
    assert best == pytest.approx(1 - math.pi / 4)
    p_best = perimeter(unit_area_stadium(best))
    assert p_best < perimeter(unit_area_stadium(0.1))
    assert p_best < perimeter(unit_area_stadium(0.4))


def test_stadium_with_zero_length_is_the_quarter_circle():
    stadium = unit_area_stadium(0.0)
    quarter = shape_from_name("quarter_circle")
    assert stadium.kind == ShapeKind.STADIUM
    assert stadium.radius == quarter.radius
    assert area(stadium) == pytest.approx(area(quarter))
    assert perimeter(stadium) == pytest.approx(perimeter(quarter))


def test_weyl_count_dirichlet_and_neumann():
    weyl = weyl_data(BilliardShape.square(1.0))
    eps = 200.0**2
    expected = eps / (4 * math.pi) - 4 * 200.0 / (4 * math.pi) + 0.25
    assert weyl_count(weyl, eps) == pytest.approx(expected)
    assert weyl_count(weyl, eps) == pytest.approx(3119.69, abs=0.01)

    neumann = weyl_data(BilliardShape.square(1.0), BoundaryCondition.NEUMANN)
    assert neumann.chi_bc == pytest.approx(-0.75)
    assert weyl_count(neumann, eps) > weyl_count(weyl, eps)

    values = weyl_count(weyl, np.array([0.0, 100.0, 400.0]))
    assert values.shape == (3,)
    assert values[0] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        weyl_count(weyl, -1.0)


def test_scaling_preserves_shape_kind():
    shape = normalize_to_unit_area(BilliardShape.rectangle(2.0, 8.0))
    assert area(shape) == pytest.approx(1.0)
    assert shape.ratio is None
    assert shape.lx / shape.ly == pytest.approx(0.25)


def test_merge_levels_sums_multiplicities():
    values, mult = merge_levels(
        np.array([3.0, 1.0, 3.0 * (1 + 1e-12), 2.0]), np.array([1, 1, 2, 1])
    )
    np.testing.assert_allclose(values, [1.0, 2.0, 3.0])
    assert mult.tolist() == [1, 1, 3]


def test_shape_from_name_errors():
    with pytest.raises(ConfigurationError):
        shape_from_name("hexagon")
    with pytest.raises(ConfigurationError):
        shape_from_name("stadium")
    with pytest.raises(ConfigurationError):
        shape_from_name("rectangle", 0.0)
    with pytest.raises(ValueError):
        BilliardShape(kind=ShapeKind.RECTANGLE, lx=1.0)
