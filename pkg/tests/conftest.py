import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stochknap import ProblemInstance  # noqa: E402

PRICES4 = (1.0, 0.8, 0.65, 0.45)
RATES4 = (0.2, 0.3, 0.1, 0.4)


@pytest.fixture
def four_class():
    return ProblemInstance.build(PRICES4, RATES4, W=12, T=20.0)


def random_unit_instance(rng, m_max=4, W_max=30, T_max=20.0):
    m = int(rng.integers(1, m_max + 1))
    prices = np.sort(rng.uniform(0.2, 2.0, size=m))[::-1]
    rates = rng.uniform(0.1, 2.0, size=m)
    W = int(rng.integers(1, W_max + 1))
    T = float(rng.uniform(1.0, T_max))
    return ProblemInstance.build(prices, rates, W, T)
