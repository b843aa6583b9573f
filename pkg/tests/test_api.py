from __future__ import annotations

import importlib

import pytest
from fastapi.testclient import TestClient


@pytest.fixture
def client(monkeypatch, tmp_path):
    monkeypatch.setenv("CASIMIR_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("APP_VERSION", "test")
    monkeypatch.setenv("CASIMIR_WORKERS", "1")

    import app.settings as settings_mod
    import app.main as main_mod

    importlib.reload(settings_mod)
    importlib.reload(main_mod)
    return TestClient(main_mod.app), main_mod


def test_health(client):
    http, _ = client
    body = http.get("/health").json()
    assert body["ok"] is True
    assert body["version"] == "test"
    assert body["uptimeSeconds"] >= 0


def test_weyl_terms(client):
    http, _ = client
    r = http.post("/api/weyl", json={"shape": "square"})
    assert r.status_code == 200
    body = r.json()
    assert body["area"] == pytest.approx(1.0)
    assert body["chi"] == pytest.approx(0.25)
    assert body["forceTerms"][0] == pytest.approx(-0.0205617, abs=1e-7)

    r = http.post("/api/weyl", json={"shape": "stadium", "ratio": 1.0, "bc": "N"})
    assert r.status_code == 200
    assert r.json()["perimeter"] == pytest.approx(4.1692, abs=1e-3)


def test_force_and_spectrum_listing(client):
    http, main_mod = client
    calls = {"analytic": 0}
    provider = main_mod.spectrum_service.providers["analytic"]

    def counted(*args, **kwargs):
        calls["analytic"] += 1
        return provider(*args, **kwargs)

    main_mod.spectrum_service.providers["analytic"] = counted
    payload = {"shape": "triangle", "bc": "EM", "separations": [0.1, 0.3], "D": 20}

    r1 = http.post("/api/force", json=payload)
    assert r1.status_code == 200
    points = r1.json()["points"]
    assert [p["a"] for p in points] == [0.1, 0.3]
    assert all(p["force"] < 0 for p in points)
    assert calls["analytic"] == 2

    r2 = http.post("/api/force", json={**payload, "separations": [0.2]})
    assert r2.status_code == 200
    assert calls["analytic"] == 2

    spectra = http.get("/api/spectra").json()["spectra"]
    assert {entry["bc"] for entry in spectra} == {"D", "N"}
    assert all(entry["lambdaMax"] == pytest.approx(100.0) for entry in spectra)


def test_force_rejections(client):
    http, _ = client
    r = http.post("/api/force", json={"shape": "stadium", "ratio": 0.3, "separations": [0.2]})
    assert r.status_code == 400

    r = http.post("/api/force", json={"shape": "hexagon", "separations": [0.2]})
    assert r.status_code == 422

    r = http.post("/api/force", json={"shape": "square", "separations": [0.001]})
    assert r.status_code == 422

    r = http.post("/api/force", json={"shape": "square", "separations": []})
    assert r.status_code == 422

    r = http.post("/api/force", json={"shape": "stadium", "separations": [0.2]})
    assert r.status_code == 400
