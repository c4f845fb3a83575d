import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from nli_sidecar.app import create_app
from nli_sidecar.config import SidecarConfig
from nli_sidecar.scorers import OverlapHeuristicScorer

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def scorer_fixture() -> dict:
    """Frozen reference logits for the built-in lexical scorer."""
    with open(FIXTURES / "scorer_fixture.json") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def directional_examples() -> dict:
    with open(FIXTURES / "directional_examples.json") as f:
        return json.load(f)


@pytest.fixture()
def debug_config() -> SidecarConfig:
    return SidecarConfig(model_identifier="debug", max_batch=32)


@pytest.fixture()
def client(debug_config) -> TestClient:
    app = create_app(debug_config, scorer=OverlapHeuristicScorer())
    return TestClient(app)
