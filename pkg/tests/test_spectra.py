from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from app.db.database import SpectrumStore
from app.db.models import BilliardShape, BoundaryCondition, Spectrum, SpectrumSource
from app.db.spectrum_io import format_spectrum, parse_spectrum, read_spectrum, write_spectrum
from app.errors import ConfigurationError
from app.providers.analytic import (
    analytic_spectrum,
    circle_spectrum,
    has_analytic_spectrum,
    quarter_circle_spectrum,
    rectangle_spectrum,
    triangle_spectrum,
)
from app.services.billiards import shape_from_name, unit_area_stadium, weyl_count, weyl_data


def _spectrum(levels, mult=None, lambda_max=10.0):
    levels = np.asarray(levels, dtype=float)
    return Spectrum(
        levels=levels,
        multiplicities=np.ones(levels.size, dtype=np.int64) if mult is None else mult,
        bc=BoundaryCondition.DIRICHLET,
        lambda_max=lambda_max,
        source=SpectrumSource.ANALYTIC,
    )


def test_square_counts_at_thirty_thousand_levels():
    spectrum = analytic_spectrum(shape_from_name("square"), 616.0)
    assert spectrum.count(615.95) == 29996
    assert spectrum.count(615.96) == 30000
    assert spectrum.first == pytest.approx(math.pi * math.sqrt(2.0))


def test_long_rectangle_counts():
    spectrum = analytic_spectrum(shape_from_name("rectangle", 4.0), 617.0)
    assert spectrum.count(616.45) == 29996
    assert spectrum.count(616.46) == 30000
    assert spectrum.first == pytest.approx(6.47, abs=0.01)


def test_triangle_counts_and_degeneracy():
    shape = shape_from_name("triangle")
    spectrum = analytic_spectrum(shape, 964.0)
    assert spectrum.count(963.35) == 73497
    assert spectrum.count(963.36) == 73501

    cumulative = np.cumsum(spectrum.multiplicities)
    index = int(np.searchsorted(cumulative, 61075))
    assert spectrum.levels[index] == pytest.approx(878.398774, abs=1e-6)

    # (1, 2) is simple, then (1, 3) and (2, 3) coincide
    assert spectrum.distinct_levels(2)[0][1] == 1
    assert spectrum.distinct_levels(2)[1][1] == 2
    scale = 4.0 * math.pi / (3.0 * shape.side)
    assert spectrum.first == pytest.approx(scale * math.sqrt(3.0))


def test_neumann_spectra_admit_zero_indices():
    square = rectangle_spectrum(1.0, 1.0, 10.0, BoundaryCondition.NEUMANN)
    assert square.first == pytest.approx(math.pi)
    assert square.multiplicities[0] == 2
    assert square.count(10.0) > rectangle_spectrum(1.0, 1.0, 10.0).count(10.0)

    triangle = triangle_spectrum(1.0, 10.0, BoundaryCondition.NEUMANN)
    assert triangle.first == pytest.approx(4.0 * math.pi / 3.0)
    assert triangle.multiplicities[0] == 2


def test_circle_levels_are_bessel_zeros():
    radius = 1.0 / math.sqrt(math.pi)
    spectrum = circle_spectrum(radius, 60.0)
    expected = [special.jn_zeros(n, 30) / radius for n in range(0, 40)]
    values = np.concatenate([z[z <= 60.0] for z in expected])
    np.testing.assert_allclose(spectrum.levels, np.sort(values), rtol=1e-10)
    assert spectrum.first == pytest.approx(4.26, abs=0.01)
    assert spectrum.multiplicities[0] == 1
    assert spectrum.multiplicities[1] == 2
    assert spectrum.source == SpectrumSource.BESSEL_ROOTS


def test_circle_neumann_uses_derivative_zeros():
    spectrum = circle_spectrum(1.0, 8.0, BoundaryCondition.NEUMANN)
    assert spectrum.first == pytest.approx(1.841183781340659)
    assert spectrum.multiplicities[0] == 2


@pytest.mark.parametrize("name, lam", [("circle", 200.0), ("quarter_circle", 60.0)])
def test_bessel_counts_follow_weyl(name, lam):
    shape = shape_from_name(name)
    spectrum = analytic_spectrum(shape, lam)
    expected = weyl_count(weyl_data(shape), lam * lam)
    assert abs(spectrum.count(lam) - expected) < 0.02 * expected


def test_quarter_circle_uses_even_orders():
    spectrum = quarter_circle_spectrum(1.0, 12.0)
    assert spectrum.first == pytest.approx(special.jn_zeros(2, 1)[0])
    assert np.all(spectrum.multiplicities == 1)
    values = np.sort(np.concatenate([special.jn_zeros(n, 4) for n in (2, 4, 6, 8)]))
    np.testing.assert_allclose(spectrum.levels, values[values <= 12.0], rtol=1e-10)


def test_zero_length_stadium_is_the_quarter_circle():
    stadium = unit_area_stadium(0.0)
    assert has_analytic_spectrum(stadium)
    assert not has_analytic_spectrum(unit_area_stadium(0.2))
    a = analytic_spectrum(stadium, 60.0)
    b = analytic_spectrum(shape_from_name("quarter_circle"), 60.0)
    np.testing.assert_array_equal(a.levels, b.levels)


def test_analytic_errors():
    with pytest.raises(ConfigurationError):
        analytic_spectrum(unit_area_stadium(0.2), 30.0)
    with pytest.raises(ConfigurationError):
        analytic_spectrum(shape_from_name("quarter_circle"), 30.0, BoundaryCondition.NEUMANN)
    with pytest.raises(ConfigurationError):
        rectangle_spectrum(1.0, 1.0, 4.0)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        _spectrum([2.0, 1.0])
    with pytest.raises(ValueError):
        _spectrum([1.0, 2.0], np.array([1, 0]))
    with pytest.raises(ValueError):
        _spectrum([0.0, 2.0])


def test_spectrum_counting_truncation_and_removal():
    spectrum = _spectrum([1.0, 2.0, 3.0], np.array([1, 2, 1]))
    assert spectrum.total == 4
    assert spectrum.counting_function(np.array([0.5, 2.0, 2.5, 9.0])).tolist() == [0, 3, 3, 4]

    short = spectrum.truncated(2.5)
    assert short.total == 3 and short.lambda_max == 2.5
    with pytest.raises(ValueError):
        spectrum.truncated(11.0)

    reduced = spectrum.without_level(1)
    assert reduced.multiplicities.tolist() == [1, 1, 1]
    assert spectrum.without_level(0).levels.tolist() == [2.0, 3.0]
    assert reduced.digest() != spectrum.digest()


def test_spectrum_file_format(tmp_path):
    spectrum = analytic_spectrum(shape_from_name("triangle"), 40.0)
    text = format_spectrum(spectrum)
    assert text.startswith("# bc=D lambda_max=40.0 source=analytic\n")

    path = write_spectrum(spectrum, tmp_path / "sub" / "triangle.txt")
    loaded = read_spectrum(path)
    np.testing.assert_allclose(loaded.levels, spectrum.levels, rtol=1e-12)
    assert loaded.multiplicities.tolist() == spectrum.multiplicities.tolist()
    assert loaded.lambda_max == spectrum.lambda_max


@pytest.mark.parametrize(
    "text",
    ["", "bc=D lambda_max=1 source=analytic\n", "# bc=D lambda_max=5.0 source=analytic\n1.0;1\n"],
)
def test_bad_spectrum_files(text):
    with pytest.raises(ConfigurationError):
        parse_spectrum(text)


def test_store_covers_smaller_requests(store: SpectrumStore):
    big = analytic_spectrum(shape_from_name("square"), 50.0)
    small = big.truncated(20.0)
    store.put_spectrum("key-50", "fam", "square", big)
    store.put_spectrum("key-20", "fam", "square", small)

    assert store.get_spectrum("missing") is None
    assert store.get_spectrum("key-50").total == big.total
    assert store.find_covering("fam", 15.0).lambda_max == 20.0
    assert store.find_covering("fam", 30.0).lambda_max == 50.0
    assert store.find_covering("fam", 60.0) is None
    assert store.find_covering("other", 10.0) is None

    rows = store.list_spectra()
    assert {row["cacheKey"] for row in rows} == {"key-50", "key-20"}
    assert set(rows[0]) >= {"shape", "bc", "lambdaMax", "source", "levels", "path", "createdAt"}


def test_store_upserts_and_keeps_windows(store: SpectrumStore):
    spectrum = analytic_spectrum(shape_from_name("square"), 20.0)
    store.put_spectrum("key", "fam", "square", spectrum)
    store.put_spectrum("key", "fam", "square", spectrum)
    assert len(store.list_spectra()) == 1

    payload = {"lambda_lo": 1.0, "lambda_hi": 2.0, "found": [], "weyl_expected": 0.5}
    assert store.get_window("fam", 1.0, 2.0) is None
    store.put_window("fam", 1.0, 2.0, payload)
    assert store.get_window("fam", 1.0, 2.0) == payload
    store.put_window("fam", 1.0, 2.0, {**payload, "weyl_expected": 0.75})
    assert store.get_window("fam", 1.0, 2.0)["weyl_expected"] == 0.75


def test_ground_level_ordering():
    names = [("circle", None), ("square", None), ("triangle", None), ("rectangle", 4.0)]
    dirichlet = {}
    for name, ratio in names:
        shape = shape_from_name(name, ratio)
        d = analytic_spectrum(shape, 20.0).first
        n = analytic_spectrum(shape, 20.0, BoundaryCondition.NEUMANN).first
        assert n < d
        dirichlet[name] = d
    assert min(dirichlet, key=dirichlet.get) == "circle"
    assert dirichlet["circle"] == pytest.approx(4.26, abs=0.01)
    assert dirichlet["rectangle"] == pytest.approx(6.47, abs=0.01)


@pytest.mark.parametrize(
    "small, large, factor",
    [
        (BilliardShape.square(1.0), BilliardShape.square(2.0), 2.0),
        (BilliardShape.rectangle(1.0, 4.0), BilliardShape.rectangle(3.0, 12.0), 3.0),
        (BilliardShape.triangle(1.0), BilliardShape.triangle(2.5), 2.5),
        (BilliardShape.circle(0.5), BilliardShape.circle(1.5), 3.0),
    ],
)
def test_levels_scale_inversely_with_size(small, large, factor):
    lam = 60.0
    base = analytic_spectrum(small, lam)
    scaled = analytic_spectrum(large, lam / factor)
    assert scaled.multiplicities.tolist() == base.multiplicities.tolist()
    np.testing.assert_allclose(scaled.levels * factor, base.levels, rtol=1e-10)
