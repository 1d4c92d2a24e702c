import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile(
    "dev",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("dev")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vwap_model_path() -> Path:
    return FIXTURES / "vwap.sheet.json"


@pytest.fixture(scope="session")
def vwap_inputs() -> dict:
    return {"trades": FIXTURES / "trades.csv", "quotes": FIXTURES / "quotes.csv"}
