from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.db.database import SpectrumStore  # noqa: E402
from app.db.models import BilliardShape, TruncationPolicy  # noqa: E402
from app.providers.analytic import analytic_spectrum  # noqa: E402


@pytest.fixture
def store(tmp_path):
    return SpectrumStore(tmp_path / "cache")


@pytest.fixture(scope="session")
def policy():
    return TruncationPolicy()


@pytest.fixture(scope="session")
def unit_square():
    return BilliardShape.square(1.0)


@pytest.fixture(scope="session")
def square_spectrum(unit_square, policy):
    return analytic_spectrum(unit_square, policy.required_lambda_max)
