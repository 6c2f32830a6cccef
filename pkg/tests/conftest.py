from pathlib import Path

import hypothesis
import pytest

from mfsoc import load_config

hypothesis.settings.register_profile(
    "default", max_examples=50, deadline=None
)
hypothesis.settings.register_profile(
    "fast", max_examples=10, deadline=None
)
hypothesis.settings.load_profile("default")

REPO_ROOT = Path(__file__).resolve().parents[1]
BENCHMARK_CFG = REPO_ROOT / "configs" / "benchmark.cfg"


@pytest.fixture(scope="session")
def benchmark_cfg_path():
    return BENCHMARK_CFG


@pytest.fixture(scope="session")
def benchmark():
    """The bundled 200-agent desk-scale problem."""
    return load_config(BENCHMARK_CFG)
