import pytest

from embed_export.export import load_encoder
from embed_export.toy_encoder import build_toy_encoder


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("encoder") / "toy"
    return build_toy_encoder(directory, seed=0)


@pytest.fixture(scope="session")
def encoder(encoder_dir):
    return load_encoder(encoder_dir)
