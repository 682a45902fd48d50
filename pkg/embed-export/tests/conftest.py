from pathlib import Path

import pytest

from embed_export.encoder import make_encoder

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def onedoc_path() -> Path:
    return FIXTURES / "onedoc.json"


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory) -> Path:
    """The seed-0 offline encoder every test shares."""
    out = tmp_path_factory.mktemp("encoder") / "tiny"
    return make_encoder(out, seed=0)
