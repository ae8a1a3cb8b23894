from pathlib import Path

import numpy as np
import pytest

from qpdsynth.core.channels import ChoiMatrix, depolarizing_choi
from qpdsynth.core.noise import NoiseModel, SimulatorOracle
from qpdsynth.utils import logging as qpd_logging


@pytest.fixture(autouse=True)
def qpdsynth_home(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    home = tmp_path / "home"
    monkeypatch.setenv("QPDSYNTH_HOME", str(home))
    monkeypatch.setattr(qpd_logging, "_SESSION", None)
    return home


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def noiseless_oracle() -> SimulatorOracle:
    return SimulatorOracle(NoiseModel())


@pytest.fixture
def depolarized() -> ChoiMatrix:
    return depolarizing_choi(0.1)

