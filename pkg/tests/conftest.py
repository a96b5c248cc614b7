from __future__ import annotations

import os

import pytest
import torch
from hypothesis import settings

from ltsf_lab.config import ModelConfig

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_num_threads(1)

# Filled by test_acceptance.verdict; printed after the run.
ACCEPTANCE: dict[int, str] = {}


def micro_config(**overrides) -> ModelConfig:
    """d_model=8, two heads, two layers, 3 look-back + 3 forecasting tokens."""
    base = dict(architecture="encoder_only", aggregation="complete", paradigm="direct", norm="layer",
                d_model=8, n_heads=2, layers=2, patch_len=2, seq_len=6, pred_len=6)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def micro():
    return micro_config


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
