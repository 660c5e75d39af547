import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pdmplp.capacity import CapacityParams, build_capacity_instance


@pytest.fixture(scope="session")
def cycle():
    from pdmplp.fixtures import two_state_cycle
    return two_state_cycle()


@pytest.fixture(scope="session")
def capacity_fixture():
    """The flagship configuration used throughout acceptance."""
    params = CapacityParams(lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=5,
                            alpha=1.0)
    model, inst = build_capacity_instance(params)
    return params, model, inst


@pytest.fixture(scope="session")
def capacity_constrained():
    params = CapacityParams(
        lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=5, alpha=1.0,
        f_demand=(1.0, 0.0), f_mode=((0.0, 0.3, 0.8), (0.0, 1.0, 1.0)),
        r_mode=((0.0, 0.2, 0.4), (0.0, 0.0, 0.0)), d=(0.6,))
    model, inst = build_capacity_instance(params)
    return params, model, inst


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
