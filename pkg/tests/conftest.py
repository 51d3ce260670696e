import textwrap

import numpy as np
import pytest

from qudit_reupload.cli_parser import ENV_OUTPUT_DIR, ENV_WORKERS
from qudit_reupload.utils import DIGITS_FIXTURE, get_resource_path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def digits_path():
    return str(get_resource_path(DIGITS_FIXTURE))


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    monkeypatch.delenv(ENV_WORKERS, raising=False)


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML config into tmp_path and return its path"""

    def write(text: str, name: str = "config.yml") -> str:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return str(path)

    return write
