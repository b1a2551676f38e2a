from __future__ import annotations

import json

import pytest

from emrecg import pipeline
from emrecg.cli import main
from emrecg.evaluation import TABLE_TITLES
from emrecg.features import ConfigError
from emrecg.mlp import NumericalError
from emrecg.pipeline import PipelineConfig


@pytest.fixture
def env(tmp_path):
    cfg = {
        "data": "synthetic:28",
        "out": str(tmp_path / "out"),
        "hidden": [6, 6, 6],
        "train": {"epochs": 2, "batch_size": 50},
        "embedding": {"dim": 8, "epochs": 1},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return tmp_path, ["--config", str(path)]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def manifest(tmp_path):
    return json.loads((tmp_path / "out" / "manifest.json").read_text())


def test_synth_then_ingest(env, capsys):
    tmp, base = env
    code, out, _ = run(capsys, "synth", "--n", "12", "--seed", "3", "--out", str(tmp / "d.csv"))
    assert code == 0 and (tmp / "d.csv").is_file()
    code, out, _ = run(capsys, "ingest", *base, "--data", str(tmp / "d.csv"))
    assert code == 0 and out.startswith("12 records, 0 violations")
    m = manifest(tmp)
    assert m["command"] == "ingest"
    assert set(m["versions"]) == {"emrecg", "python", "numpy"}
    assert str(tmp / "d.csv") in m["inputs"]
    assert "dataset_summary.json" in m["artifacts"]


def test_trace_and_cg_alias(env, capsys):
    tmp, base = env
    code, out, _ = run(capsys, "trace", *base, "v0000")
    assert code == 0
    d = json.loads(out)
    assert d["record_id"] == "v0000"
    code, out2, _ = run(capsys, "cg", "trace", *base, "v0000")
    assert code == 0 and json.loads(out2) == d
    assert (tmp / "out" / "trace" / "v0000.json").is_file()


def test_unknown_record(env, capsys):
    _, base = env
    code, _, err = run(capsys, "trace", *base, "nope")
    assert code == 1 and json.loads(err)["error"] == "ConfigError"


def test_embed_featurize_train(env, capsys):
    tmp, base = env
    assert run(capsys, "embed", *base)[0] == 0
    assert any(p.name.startswith("wordvectors-") for p in (tmp / "out" / "cache").iterdir())
    code, out, _ = run(capsys, "featurize", *base, "--groups", "raw,formal,se", "--subset", "language")
    assert code == 0
    m = manifest(tmp)
    assert m["spec"]["modality_subset"] == "language_only"
    assert {"features.csv", "schema.json"} <= set(m["artifacts"])
    code, out, _ = run(capsys, "train", *base, "--groups", "formal")
    assert code == 0 and "final loss" in out
    assert {"model.emlp", "loss_history.json", "model_schema.json"} <= set(manifest(tmp)["artifacts"])


def test_evaluate_uses_cache(env, capsys, monkeypatch):
    tmp, base = env
    code, first, _ = run(capsys, "evaluate", *base, "--groups", "raw", "--seed", "5")
    assert code == 0 and "Raw features" in first
    assert manifest(tmp)["seed"] == 5

    def boom(*a, **k):
        raise AssertionError("cache miss")

    monkeypatch.setattr(pipeline, "run_ablations", boom)
    code, second, _ = run(capsys, "evaluate", *base, "--groups", "raw", "--seed", "5")
    assert code == 0 and second == first


def test_ablate_and_report(env, capsys):
    tmp, base = env
    code, out, _ = run(capsys, "ablate", *base, "--table", "3")
    assert code == 0
    assert "Raw features" in out and "Formal only" in out
    assert (tmp / "out" / "table3.txt").read_text().startswith(TABLE_TITLES[3])
    code, out2, _ = run(capsys, "report", str(tmp / "out" / "table3.json"), "--csv", str(tmp / "r.csv"))
    assert code == 0 and out2 == out
    assert (tmp / "r.csv").read_text().count("\n") == 6


def test_parse(env, capsys):
    _, base = env
    code, out, _ = run(capsys, "parse", *base, "--utterance", "the red block")
    assert code == 0
    d = json.loads(out)
    assert d["head"] == "block" and d["logical_form"] == ["block(x)", "red(x)"]
    code, _, err = run(capsys, "parse", *base, "--utterance", "the zorp")
    assert code == 1 and json.loads(err)["error"] == "ParseError"


def test_usage_errors(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and json.loads(err.splitlines()[-1])["error"] == "usage"
    code, _, err = run(capsys, "ablate", "--table", "9")
    assert code == 1


def test_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "ingest", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o"))
    assert code == 1
    assert json.loads(err)["error"] in ("FileNotFoundError", "DatasetError", "ConfigError")


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 1, "learning_rate": 3}))
    code, _, err = run(capsys, "ingest", "--config", str(path))
    assert code == 1
    e = json.loads(err)
    assert e["error"] == "ConfigError" and "learning_rate" in e["message"]
    with pytest.raises(ConfigError):
        PipelineConfig.from_json({"train": {"epochs": 3, "momentum": 1}})
    code, _, _ = run(capsys, "evaluate", "--data", "synthetic:14", "--epochs", "0", "--out", str(tmp_path / "o"))
    assert code == 1


def test_numerical_error_exit_2(env, capsys, monkeypatch):
    _, base = env

    def explode(*a, **k):
        raise NumericalError("non-finite loss")

    monkeypatch.setattr(pipeline, "train", explode)
    code, _, err = run(capsys, "train", *base, "--groups", "raw")
    assert code == 2 and json.loads(err)["error"] == "numerical"


def test_config_round_trip():
    cfg = PipelineConfig(data="synthetic:10").with_seed(4)
    assert PipelineConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    assert cfg.train.seed == cfg.embedding.seed == 4
