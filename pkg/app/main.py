from __future__ import annotations

import time

from fastapi import FastAPI, HTTPException

from app.db.database import SpectrumStore
from app.db.models import ForceRequest, WeylRequest
from app.errors import CasimirError, ConfigurationError
from app.services.billiards import shape_from_name, weyl_data
from app.services.casimir import weyl_terms
from app.services.force_service import ForceService
from app.services.spectrum_service import SpectrumService
from app.settings import APP_PORT, APP_VERSION, DEFAULT_WORKERS, cache_dir

STARTED_AT = time.time()

store = SpectrumStore(cache_dir())
spectrum_service = SpectrumService(store=store)
force_service = ForceService(spectrum_service, workers=DEFAULT_WORKERS)

app = FastAPI(title="CasimirPistons", version=APP_VERSION)


def _http_error(err: CasimirError) -> HTTPException:
    status = 400 if isinstance(err, ConfigurationError) else 422
    return HTTPException(status_code=status, detail=str(err))


@app.get("/health")
def health():
    return {
        "ok": True,
        "version": APP_VERSION,
        "uptimeSeconds": int(time.time() - STARTED_AT),
    }


@app.post("/api/weyl")
def weyl(payload: WeylRequest):
    try:
        shape = shape_from_name(payload.shape, payload.ratio)
    except CasimirError as err:
        raise _http_error(err) from err
    data = weyl_data(shape, payload.bc)
    area_term, perimeter_term, chi_term = weyl_terms(data)
    return {
        "ok": True,
        "shape": shape.label,
        "dimensions": shape.dimensions(),
        "area": data.area,
        "perimeter": data.perimeter,
        "chi": data.chi,
        "forceTerms": [area_term, perimeter_term, chi_term],
    }


@app.post("/api/force")
def force(payload: ForceRequest):
    try:
        shape = shape_from_name(payload.shape, payload.ratio)
        if spectrum_service.provider_name(shape) != "analytic":
            raise ConfigurationError("the HTTP surface serves shapes with closed-form spectra")
        rows = force_service.forces_at(shape, payload.bc, payload.policy(), payload.separations)
    except CasimirError as err:
        raise _http_error(err) from err
    return {"ok": True, "shape": shape.label, "bc": payload.bc, "points": rows}


@app.get("/api/spectra")
def list_spectra():
    return {"ok": True, "spectra": spectrum_service.list_spectra()}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.main:app", host="0.0.0.0", port=APP_PORT, reload=False)
