from __future__ import annotations

import pytest

from app.db.models import BoundaryCondition, SolverConfig, TruncationPolicy
from app.errors import ConfigurationError, PolicyError
from app.services.billiards import shape_from_name, unit_area_stadium
from app.services.casimir import log_grid
from app.services.force_service import ForceService
from app.services.spectrum_service import SpectrumService
from app.services.verify_service import VerifyService


def _counting_service(store):
    service = SpectrumService(store=store)
    calls = {"analytic": 0}
    provider = service.providers["analytic"]

    def counted(*args, **kwargs):
        calls["analytic"] += 1
        return provider(*args, **kwargs)

    service.providers["analytic"] = counted
    return service, calls


def test_spectrum_service_caches_and_truncates(store):
    service, calls = _counting_service(store)
    square = shape_from_name("square")

    first = service.get_spectrum(square, "D", 80.0)
    again = service.get_spectrum(square, "D", 80.0)
    smaller = service.get_spectrum(square, BoundaryCondition.DIRICHLET, 40.0)
    assert calls["analytic"] == 1
    assert again.total == first.total
    assert smaller.lambda_max == 40.0
    assert smaller.count(40.0) == first.count(40.0)

    service.get_spectrum(square, "N", 40.0)
    service.get_spectrum(shape_from_name("triangle"), "D", 40.0)
    assert calls["analytic"] == 3
    assert len(service.list_spectra()) == 3


def test_spectrum_service_without_store():
    service = SpectrumService()
    spectrum = service.get_spectrum(shape_from_name("circle"), "D", 30.0)
    assert spectrum.first == pytest.approx(4.26, abs=0.01)
    assert service.list_spectra() == []


def test_cache_keys_separate_lambda_but_share_family():
    service = SpectrumService()
    square = shape_from_name("square")
    key_a, family_a = service.cache_keys(square, BoundaryCondition.DIRICHLET, 50.0)
    key_b, family_b = service.cache_keys(square, BoundaryCondition.DIRICHLET, 60.0)
    _, family_n = service.cache_keys(square, BoundaryCondition.NEUMANN, 50.0)
    assert key_a != key_b
    assert family_a == family_b != family_n
    assert service.build_key({"b": 1, "a": 2}) == service.build_key({"a": 2, "b": 1})


def test_solver_settings_enter_the_stadium_key():
    stadium = unit_area_stadium(0.2)
    loose = SpectrumService(solver=SolverConfig(tension_threshold=5e-2))
    strict = SpectrumService(solver=SolverConfig())
    assert loose.cache_keys(stadium, BoundaryCondition.DIRICHLET, 30.0) != strict.cache_keys(
        stadium, BoundaryCondition.DIRICHLET, 30.0
    )
    square = shape_from_name("square")
    assert loose.cache_keys(square, BoundaryCondition.DIRICHLET, 30.0) == strict.cache_keys(
        square, BoundaryCondition.DIRICHLET, 30.0
    )


def test_provider_choice_and_solver_limit():
    service = SpectrumService(solver_lambda_limit=100.0)
    assert service.provider_name(shape_from_name("quarter_circle")) == "analytic"
    assert service.provider_name(unit_area_stadium(0.0)) == "analytic"
    assert service.provider_name(unit_area_stadium(0.3)) == "helmholtz"
    with pytest.raises(PolicyError):
        service.get_spectrum(unit_area_stadium(0.3), "D", 150.0)
    with pytest.raises(ConfigurationError):
        service.get_spectrum(unit_area_stadium(0.3), "N", 20.0)


def test_forces_at_returns_camel_case_rows(store):
    forces = ForceService(SpectrumService(store=store), workers=2)
    policy = TruncationPolicy(accuracy_exponent=20.0, a_min=0.1)
    rows = forces.forces_at(shape_from_name("square"), "D", policy, [0.1, 0.2, 0.4])
    assert [row["a"] for row in rows] == [0.1, 0.2, 0.4]
    assert set(rows[0]) == {"a", "force", "weylForce", "deltaForce"}
    assert all(row["force"] < 0 for row in rows)
    assert rows[0]["deltaForce"] == pytest.approx(rows[0]["force"] - rows[0]["weylForce"])


def test_electromagnetic_curve_uses_both_spectra(store):
    forces = ForceService(SpectrumService(store=store), workers=1)
    policy = TruncationPolicy(accuracy_exponent=20.0, a_min=0.1)
    grid = log_grid(0.1, 1.0, 4)
    shape = shape_from_name("triangle")
    em = forces.force_curve(shape, "EM", policy, grid)
    tm = forces.force_curve(shape, "D", policy, grid)
    te = forces.force_curve(shape, "N", policy, grid)
    assert em.bc_content.value == "TM+TE"
    for total, d, n in zip(em.points, tm.points, te.points):
        assert total.force == pytest.approx(d.force + n.force)
        assert total.weyl == pytest.approx(d.weyl + n.weyl)


def test_asymptotes_payload(store):
    forces = ForceService(SpectrumService(store=store), workers=1)
    square = forces.asymptotes(shape_from_name("square"), "EM", 30.0)
    assert [entry["bc"] for entry in square["terms"]] == ["D", "N"]
    dirichlet = square["terms"][0]
    assert dirichlet["areaTerm"] == pytest.approx(-0.0205617, abs=1e-7)
    assert dirichlet["deltaForceConstant"] == pytest.approx(0.00483, abs=1e-4)
    assert len(dirichlet["lowestLevels"]) == 4
    assert dirichlet["lowestLevels"][1]["multiplicity"] == 2

    circle = forces.asymptotes(shape_from_name("circle"), "D", 30.0)
    assert "deltaForceConstant" not in circle["terms"][0]
    assert circle["terms"][0]["chi"] == pytest.approx(1 / 6)


def test_transition_on_the_quarter_circle(store):
    forces = ForceService(SpectrumService(store=store), workers=1)
    policy = TruncationPolicy(accuracy_exponent=20.0, a_min=0.1)
    grid = log_grid(0.1, 1.0, 10)
    rows, jump = forces.transition([0.0, 0.0], policy, grid)
    assert [row.ratio for row in rows] == [0.0]
    assert jump is None


def test_verify_cheap_checks_pass(store):
    report = VerifyService(SpectrumService(store=store)).run(["identities", "geometry", "orbits"])
    assert report.ok, [(c.name, c.detail) for c in report.checks if not c.passed]
    names = [check.name for check in report.checks]
    assert "geometry:circle" in names
    assert "orbits:square_s4" in names


def test_verify_defect_check_separates_complete_and_defective(store):
    checks = VerifyService(SpectrumService(store=store)).check_defect_detection()
    assert {c.name: c.passed for c in checks} == {
        "guard:complete": True,
        "guard:missing_level": True,
        "certification:missing_level": True,
    }


def test_verify_records_failures(store):
    service = VerifyService(SpectrumService(store=store))

    def broken():
        raise ConfigurationError("no spectrum")

    service.checks["broken"] = broken
    report = service.run(["orbits", "broken"])
    assert not report.ok
    assert report.checks[-1].name == "broken"
    assert report.checks[-1].detail == "no spectrum"


@pytest.mark.slow
def test_verify_full_run(store):
    report = VerifyService(SpectrumService(store=store), workers=2).run()
    assert report.ok, [(c.name, c.detail) for c in report.checks if not c.passed]
