import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from octseg.fileio import write_ascan_text
from octseg.volume import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def volume_dir(tmp_path):
    """Write a small random volume as A-scan text and return (dir, volume)."""
    data = np.random.default_rng(5).integers(0, 200, size=(3, 60, 8)).astype(np.int32)
    vol = Volume(data)
    d = tmp_path / "vol"
    d.mkdir()
    write_ascan_text(vol, d)
    return d, vol
