import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hftlens.tickdata import SynthConfig, synth_market


@pytest.fixture(scope="session")
def small_market():
    """A modest deterministic labeled market shared across tests."""
    config = SynthConfig(
        n_stocks=4, n_days=3, seed=20100104,
        trade_intensity_range=(150.0, 600.0),
    )
    return synth_market(config)
