import numpy as np
import pytest
from hypothesis import settings

from tdmtrap.chain import ChainParams
from tdmtrap.compiler import DacSpec, GainStage
from tdmtrap.trap import SurfaceTrap, TrapDrive, find_minimum, representative_geometry

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def spec():
    return DacSpec()


@pytest.fixture(scope="session")
def gain():
    return GainStage()


@pytest.fixture(scope="session")
def measured_chain():
    return ChainParams()


@pytest.fixture(scope="session")
def geometry():
    return representative_geometry()


@pytest.fixture(scope="session")
def trap(geometry):
    return SurfaceTrap(geometry, TrapDrive.demonstration())


@pytest.fixture(scope="session")
def trap_minimum(trap):
    return find_minimum(trap, [0.0, 0.0, trap.rf_null_height()])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
