from __future__ import annotations

import json

import numpy as np
import pytest

from ltsf_lab.cli import main
from ltsf_lab.config import ConfigError
from ltsf_lab.grid import GridSpec, enumerate_cells, run_grid
from ltsf_lab.presets import desk, forecast_lengths, preset, preset_names
from ltsf_lab.series import write_csv
from ltsf_lab.synthetic import sum_of_sines

MICRO = dict(d_model="8", n_heads="2", layers="2", patch_len="4", seq_len="24", max_epochs="1", max_steps="3")


# --- presets ----------------------------------------------------------------------


def test_presets():
    c = preset("combined")
    assert (c.architecture, c.aggregation, c.paradigm, c.norm) == ("encoder_only", "complete", "direct", "batch")
    ar = preset("decoder-autoregressive")
    assert (ar.architecture, ar.paradigm, ar.aggregation) == ("decoder_only", "autoregressive", "none")
    assert preset("encoder-only-baseline").aggregation == "none"
    ili = preset("combined", "illness")
    assert (ili.seq_len, ili.patch_len, ili.pred_len) == (120, 6, 24)
    assert forecast_lengths("ili") == (24, 36, 48, 60) and forecast_lengths("ETTh1") == (96, 192, 336, 720)
    assert desk("combined").d_model == 32 and desk("combined", d_model=16).d_model == 16
    with pytest.raises(ConfigError):
        preset("best-model")
    for name in preset_names():
        preset(name)


# --- grid -------------------------------------------------------------------------


def spec(**kv) -> GridSpec:
    base = {"datasets": "synthetic:sines", **MICRO, "pred_lens": "12"}
    base.update(kv)
    return GridSpec.from_kv({k: v for k, v in base.items() if v is not None})


def test_grid_spec_validation():
    with pytest.raises(ConfigError):
        spec(colour="blue")
    with pytest.raises(ConfigError):
        spec(seed="1")
    s = spec(architecture="encoder_only,decoder_only", paradigm="direct,autoregressive", aggregation="none")
    # encoder_only + autoregressive is invalid and dropped
    assert len(s.model_configs()) == 3


def test_empty_grid_writes_header_only(tmp_path):
    outcome = run_grid(spec(datasets=None), tmp_path)
    assert outcome.n_cells == 0 and not outcome.all_failed
    assert (tmp_path / "results.jsonl").read_text() == ""
    assert (tmp_path / "results.md").read_text().count("\n") == 2


def test_two_configs_two_lengths(tmp_path):
    s = spec(architecture="encoder_only,decoder_only", pred_lens="12,24")
    assert len(enumerate_cells(s)) == 4
    outcome = run_grid(s, tmp_path)
    lines = (tmp_path / "results.jsonl").read_text().splitlines()
    assert len(lines) == 4 and not outcome.failures
    recs = [json.loads(line) for line in lines]
    assert [(r["arch"], r["pred_len"]) for r in recs] == [
        ("decoder_only", 12), ("decoder_only", 24), ("encoder_only", 12), ("encoder_only", 24)]
    assert all(r["wall_time_s"] is None for r in recs)
    table = (tmp_path / "results.md").read_text().splitlines()
    assert len(table) == 4


def test_variable_length_shares_one_model_per_cell():
    s = spec(pred_lens="12,24", variable_length="true")
    [cell] = enumerate_cells(s)
    assert cell.lengths == (12, 24) and cell.config.pred_len == 24


def test_failed_cells_are_recorded(tmp_path):
    outcome = run_grid(spec(datasets="synthetic:nothing"), tmp_path)
    assert outcome.all_failed and "DataError" in (tmp_path / "failures.txt").read_text()


# --- CLI --------------------------------------------------------------------------


@pytest.fixture
def csv_path(tmp_path):
    path = tmp_path / "toy.csv"
    write_csv(sum_of_sines(n=400, noise=0.1, seed=0, name="toy"), path)
    return path


def write_config(tmp_path, csv_path, **extra):
    kv = {"dataset": "toy", "data_path": str(csv_path), **MICRO, "pred_len": "12", **extra}
    path = tmp_path / "run.txt"
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return path


def test_ingest_and_anomaly(csv_path, capsys):
    assert main(["ingest", str(csv_path), "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "n_steps = 400" in out and "split_sizes = 280,40,80" in out
    assert main(["analyze-anomaly", str(csv_path), "--sample-len", "50"]) == 0
    assert 0.0 <= float(capsys.readouterr().out) <= 1.0


def test_train_eval_and_attention(tmp_path, csv_path, capsys):
    cfg = write_config(tmp_path, csv_path, architecture="decoder_only", aggregation="none",
                       paradigm="autoregressive")
    ckpt = tmp_path / "ckpt"
    assert main(["train", "--config", str(cfg), "--out", str(ckpt), "--lengths", "12,20"]) == 0
    trained = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [r["pred_len"] for r in trained] == [12, 20]
    assert main(["eval", "--checkpoint", str(ckpt), "--lengths", "12,20"]) == 0
    evaluated = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [r["mse"] for r in evaluated] == pytest.approx([r["mse"] for r in trained], rel=1e-5)
    assert main(["dump-attention", "--checkpoint", str(ckpt), "--head", "0", "--out", str(tmp_path / "a")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["heads"] == 1 and info["shape"] == [6, 6]
    mat = np.loadtxt(next((tmp_path / "a").glob("*.csv")), delimiter=",", ndmin=2)
    assert np.allclose(mat.sum(axis=1), 1, atol=1e-5)
    assert main(["dump-attention", "--checkpoint", str(ckpt), "--layer", "9"]) == 1


def test_exit_codes(tmp_path, csv_path, capsys):
    assert main(["ingest", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("d_modle = 3\n")
    assert main(["train", "--config", str(bad)]) == 1
    diverge = write_config(tmp_path, csv_path, lr="1e30", max_steps="50", max_epochs="5", norm="layer")
    assert main(["train", "--config", str(diverge)]) == 3
    gspec = tmp_path / "grid.txt"
    gspec.write_text("datasets = synthetic:nothing\n")
    assert main(["grid", "--spec", str(gspec), "--out", str(tmp_path / "g")]) == 3
