from __future__ import annotations

import sys

import numpy as np
import pytest

from uavtraj.camera import CameraIntrinsics


@pytest.fixture
def K() -> CameraIntrinsics:
    return CameraIntrinsics(1000.0, 1000.0, 640.0, 360.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(1234))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
