import numpy as np
import pytest

from specpcm.config import Config
from specpcm.hdc_core import make_rng
from specpcm.pcm_device import NoiseParams, SBTE_GST467


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def noiseless():
    return NoiseParams.noiseless()


@pytest.fixture
def sbte():
    return SBTE_GST467


@pytest.fixture
def default_cfg():
    return Config()


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def random_packed_pair(rng, dimension, n):
    """Random bipolar pair at the padded dimension plus their packings."""
    from specpcm.hdc_core import pack, pad_dimension, random_bipolar

    d = pad_dimension(dimension, n)
    a = random_bipolar(rng, d)
    b = random_bipolar(rng, d)
    return a, b, pack(a, n), pack(b, n)
