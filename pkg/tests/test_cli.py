import json

import numpy as np
import pytest

from dcrnet.cli import run
from dcrnet.corpus import write_canonical
from dcrnet.relation import read_attention_csv

from conftest import write_jsonl


@pytest.fixture
def data_dir(tmp_path, toy):
    d = tmp_path / "data"
    d.mkdir()
    for split in ("train", "dev"):
        (d / f"{split}.jsonl").write_text(write_canonical(toy.split(split)))
    write_jsonl(d / "test.jsonl", [x.to_json() for x in toy.split("train")])
    return d


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# toy run\nd_emb = 12\nd = 12\nlayers = 1\nepochs = 3\nbatch_size = 1\nrelation = coattention\n")
    return p


def _train(cfg_file, data_dir, out, seed=7, extra=()):
    return run(["train", "--config", str(cfg_file), "--data", str(data_dir), "--out-dir", str(out), "--seed", str(seed), *extra])


def test_train_twice_is_byte_identical(tmp_path, cfg_file, data_dir):
    assert _train(cfg_file, data_dir, tmp_path / "a") == 0
    assert _train(cfg_file, data_dir, tmp_path / "b") == 0
    for name in ("train_log.jsonl", "best.ckpt", "config.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cfg = (tmp_path / "a" / "config.txt").read_text()
    assert "seed = 7" in cfg and "d = 12" in cfg


def test_set_overrides_config_file(tmp_path, cfg_file, data_dir):
    assert _train(cfg_file, data_dir, tmp_path / "o", extra=["--set", "epochs=2", "--set", "relation=mlp"]) == 0
    log = (tmp_path / "o" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 2
    assert "relation = mlp" in (tmp_path / "o" / "config.txt").read_text()


def test_eval_json_report(tmp_path, cfg_file, data_dir, capsys):
    _train(cfg_file, data_dir, tmp_path / "m")
    capsys.readouterr()
    rc = run(["eval", "--checkpoint", str(tmp_path / "m/best.ckpt"), "--data", str(data_dir), "--protocol", "mastodon", "--out-dir", str(tmp_path / "r")])
    assert rc == 0
    obj = json.loads(capsys.readouterr().out)
    for task in ("da", "sentiment"):
        assert {"f1", "recall", "precision"} <= set(obj[task])
    assert obj["da"]["scheme"] == "prevalence_weighted"
    assert json.loads((tmp_path / "r/report_test.json").read_text()) == obj
    rc = run(["eval", "--checkpoint", str(tmp_path / "m/best.ckpt"), "--data", str(data_dir), "--format", "table"])
    assert rc == 0 and "F1" in capsys.readouterr().out


def test_predict_without_labels(tmp_path, cfg_file, data_dir):
    _train(cfg_file, data_dir, tmp_path / "m")
    inp = write_jsonl(tmp_path / "in.jsonl", [{"id": "u1", "utterances": [{"speaker": "A", "tokens": ["hi", "zzz"]}, {"tokens": ["thanks"]}]}])
    assert run(["predict", "--checkpoint", str(tmp_path / "m/best.ckpt"), "--input", str(inp), "--out-dir", str(tmp_path / "p")]) == 0
    (rec,) = [json.loads(x) for x in (tmp_path / "p/predictions.jsonl").read_text().splitlines()]
    assert rec["id"] == "u1" and all("da_pred" in u and "sentiment_pred" in u for u in rec["utterances"])


def test_export_attention_row_stochastic(tmp_path, cfg_file, data_dir):
    _train(cfg_file, data_dir, tmp_path / "m", extra=["--set", "layers=2"])
    out = tmp_path / "att"
    assert run(["export-attention", "--checkpoint", str(tmp_path / "m/best.ckpt"), "--data", str(data_dir), "--dialog-id", "toy2", "--out-dir", str(out)]) == 0
    names = sorted(p.name for p in out.glob("layer*.csv"))
    assert names == ["layer1_act_to_sentiment.csv", "layer1_sentiment_to_act.csv", "layer2_act_to_sentiment.csv", "layer2_sentiment_to_act.csv"]
    for p in out.glob("*.csv"):
        m = read_attention_csv(p)
        assert m.shape == (4, 4) and np.all(np.abs(m.sum(axis=1) - 1) < 1e-9)


def test_export_attention_needs_coattention(tmp_path, cfg_file, data_dir):
    _train(cfg_file, data_dir, tmp_path / "m", extra=["--set", "relation=concat"])
    out = tmp_path / "att"
    rc = run(["export-attention", "--checkpoint", str(tmp_path / "m/best.ckpt"), "--data", str(data_dir), "--dialog-id", "toy1", "--out-dir", str(out)])
    assert rc == 1 and not out.exists()


def test_gradcheck_command(capsys):
    assert run(["gradcheck", "--relation", "concat", "--seed", "1"]) == 0
    assert capsys.readouterr().out.split()[:2] == ["concat", "PASS"]


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--data", "MISSING", "--out-dir", "OUT"],
        ["train", "--config", "BADCFG", "--data", "DATA", "--out-dir", "OUT"],
        ["eval", "--checkpoint", "NOPE", "--data", "DATA", "--out-dir", "OUT"],
        ["export-attention", "--checkpoint", "CKPT", "--data", "DATA", "--dialog-id", "absent", "--out-dir", "OUT"],
        ["eval", "--checkpoint", "CKPT", "--data", "ALIEN", "--out-dir", "OUT"],
    ],
)
def test_errors_exit_nonzero_without_output(argv, tmp_path, cfg_file, data_dir, capsys):
    _train(cfg_file, data_dir, tmp_path / "m")
    (tmp_path / "bad.cfg").write_text("d = twelve\n")
    alien = tmp_path / "alien"
    alien.mkdir()
    write_jsonl(alien / "test.jsonl", [{"id": "x", "utterances": [{"tokens": ["a"], "da": "mystery", "sentiment": "neutral"}]}])
    subs = {"MISSING": str(tmp_path / "missing"), "OUT": str(tmp_path / "out"), "BADCFG": str(tmp_path / "bad.cfg"),
            "DATA": str(data_dir), "NOPE": str(tmp_path / "nope.ckpt"), "CKPT": str(tmp_path / "m/best.ckpt"), "ALIEN": str(alien)}
    capsys.readouterr()
    assert run([subs.get(a, a) for a in argv]) != 0
    assert capsys.readouterr().err.strip()
    assert not (tmp_path / "out").exists()


def test_unknown_command_and_flag():
    assert run(["frobnicate"]) != 0
    assert run(["gradcheck", "--bogus"]) != 0
