from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltsf_lab.config import (ConfigError, DataConfig, ModelConfig, TrainConfig, default_split, dumps, from_kv,
                             load_run_config, parse_kv)


def test_parse_kv_comments_and_errors():
    assert parse_kv("a = 1  # note\n\n# only comment\nb=x = y\n") == {"a": "1", "b": "x = y"}
    for bad in ("a = 1\na = 2\n", "novalue\n", " = 3\n"):
        with pytest.raises(ConfigError):
            parse_kv(bad)


@pytest.mark.parametrize("cfg", [ModelConfig(), ModelConfig(architecture="encoder_decoder", norm="layer", pre_norm=True),
                                 TrainConfig(lr=0.0, seed=7), DataConfig(split=(0.7, 0.1, 0.2), raw_scale=True)])
def test_dump_and_load_round_trip(cfg):
    assert from_kv(type(cfg), parse_kv(dumps(cfg))) == cfg


@given(st.sampled_from(["encoder_only", "prefix_decoder", "decoder_only", "double_encoder", "encoder_decoder",
                        "double_decoder"]), st.sampled_from(["none", "partial", "complete"]),
       st.sampled_from(["layer", "batch"]), st.integers(0, 2**31))
def test_model_config_round_trip_property(arch, agg, norm, seed):
    cfg = ModelConfig(architecture=arch, aggregation=agg, norm=norm, dropout=(seed % 5) / 10)
    back = from_kv(ModelConfig, parse_kv(dumps(cfg)))
    assert back == cfg and back.digest() == cfg.digest()


def test_load_run_config_rejects_unknown_and_picks_split():
    data, model, train = load_run_config({"dataset": "ETTm2", "d_model": "32", "lr": "0.01"})
    assert data.split == (0.6, 0.2, 0.2) and model.d_model == 32 and train.lr == 0.01
    assert default_split("Weather") == (0.7, 0.1, 0.2)
    with pytest.raises(ConfigError):
        load_run_config({"d_modle": "32"})
    with pytest.raises(ConfigError):
        from_kv(ModelConfig, {"d_model": "wide"})
    with pytest.raises(ConfigError):
        from_kv(ModelConfig, {"pre_norm": "maybe"})


def test_invalid_combinations_rejected():
    for bad in (dict(architecture="encoder_only", paradigm="autoregressive", aggregation="none"),
                dict(paradigm="autoregressive", architecture="decoder_only", aggregation="complete"),
                dict(architecture="sideways"), dict(d_model=10, n_heads=4), dict(seq_len=100, patch_len=16)):
        with pytest.raises(ConfigError):
            ModelConfig(**bad)
