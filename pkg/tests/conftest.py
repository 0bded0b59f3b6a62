import textwrap
from pathlib import Path

import numpy as np
import pytest

from fbf_tools.core.operators import AffineOperator, BoxNormalCone, ZeroMap
from fbf_tools.core.oracles import RngStream, StochasticOracle
from fbf_tools.problems import make_bilinear_saddle, make_strongly_monotone_affine


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stream():
    return RngStream(seed=7, stream_id=0)


@pytest.fixture
def identity_oracle():
    """Exact oracle for ``B = Id`` in one dimension."""
    return StochasticOracle.exact(AffineOperator(1.0))


@pytest.fixture
def zero_map():
    return ZeroMap()


@pytest.fixture
def unit_box():
    return BoxNormalCone(-1.0, 1.0)


@pytest.fixture(scope="session")
def small_affine():
    return make_strongly_monotone_affine(d=6, mu=1.0, L=3.0, seed=11)


@pytest.fixture(scope="session")
def small_bilinear():
    return make_bilinear_saddle(3, 2, seed=5, offset_scale=2.0)


@pytest.fixture
def write_yaml(tmp_path):
    """Write dedented YAML text under ``tmp_path`` and return its path."""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return path

    return _write
