# =============================================================================
# tests/conftest.py
# =============================================================================

import numpy as np
import pytest

from src.core.datapack import stack_samples, synth_dataset
from src.utils.config import preset


@pytest.fixture
def tiny_cfg():
    """T=6, C=3, d_a=4, d_v=6, H=W=2, d_e=4"""
    return preset('tiny').validate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_samples(tiny_cfg):
    return synth_dataset(tiny_cfg, 8, seed=3)


@pytest.fixture
def tiny_batch(tiny_cfg, tiny_samples):
    return stack_samples(tiny_samples[:3], tiny_cfg.bg_index)


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv('VSCG_SEED', raising=False)
