from __future__ import annotations

import os
from pathlib import Path

APP_VERSION = os.environ.get("APP_VERSION", "0.1.0")
APP_PORT = int(os.environ.get("APP_PORT", "8092"))
DEFAULT_WORKERS = max(1, int(os.environ.get("CASIMIR_WORKERS", "4")))
LOG_LEVEL = os.environ.get("CASIMIR_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"

# Stadium spectra above this bound are out of desk scale unless configured.
SOLVER_LAMBDA_LIMIT = float(os.environ.get("CASIMIR_SOLVER_LAMBDA_LIMIT", "125"))


def cache_dir() -> Path:
    raw = os.environ.get("CASIMIR_CACHE_DIR", "").strip()
    if raw:
        return Path(raw).expanduser()
    return Path.home() / ".cache" / "casimir-pistons"
