"""Acceptance criteria, one pass/fail line each (collected in the terminal summary)."""
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dcrnet.cli import run
from dcrnet.config import ModelConfig
from dcrnet.corpus import load_canonical, write_canonical
from dcrnet.experiments import RELATION_VARIANTS, desk_config, relation_trend, run_ablation
from dcrnet.metrics import macro_prf, prevalence_weighted_f1
from dcrnet.trainer import _encode_all, accuracy, evaluate, gradcheck, tiny_config, toy_corpus, train

from conftest import ACCEPTANCE_LINES
from test_metrics import reference_macro, reference_weighted

ROOT = Path(__file__).resolve().parents[1]


def report(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def mastodon_dir() -> Path | None:
    d = Path(os.environ.get("DCRNET_MASTODON_DIR", ROOT / "data" / "mastodon"))
    return d if (d / "train.jsonl").exists() and (d / "dev.jsonl").exists() else None


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    results = {}
    for kind in ("coattention", "mlp", "concat", "none"):
        results[kind] = gradcheck(tiny_config(kind), np.random.default_rng(0))
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in results.values())
    ok = all(r.passed for r in results.values()) and worst < 1e-4 and elapsed < 120
    detail = ", ".join(f"{k} {r.max_rel_error:.2e}" for k, r in results.items())
    report(1, ok, f"gradcheck max rel err {worst:.2e} < 1e-4 ({detail}); {elapsed:.0f}s < 120s")


def test_criterion_2_metrics_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(1, 50))
        g, p = rng.integers(0, k, n).tolist(), rng.integers(0, k, n).tolist()
        ex = int(rng.integers(0, k)) if rng.random() < 0.3 else None
        ours = macro_prf(g, p, k, exclude=ex)
        ref = reference_macro(g, p, ex)
        worst = max(worst, abs(ours.precision - ref[0]), abs(ours.recall - ref[1]), abs(ours.f1 - ref[2]))
        worst = max(worst, abs(prevalence_weighted_f1(g, p, k).f1 - reference_weighted(g, p)))
    macro = macro_prf([0, 0, 1, 1], [0, 1, 0, 1], 2).f1
    weighted = prevalence_weighted_f1([0, 0, 0, 1], [0, 0, 0, 0], 2).f1
    ok = worst <= 1e-12 and abs(macro - 50.0) <= 1e-12 and abs(weighted - 75 * 6 / 7) <= 1e-12
    report(2, ok, f"1000 random pairs max |diff| {worst:.1e} <= 1e-12; macro example {macro:.2f}; weighted example {weighted:.2f}")


PROPERTY_TESTS = [
    "tests/test_numerics.py::test_softmax_rows_stochastic_and_shift_invariant",
    "tests/test_numerics.py::test_attention_output_in_convex_hull_of_values",
    "tests/test_decoder.py::test_rows_are_distributions",
    "tests/test_decoder.py::test_joint_loss_is_exactly_additive",
    "tests/test_decoder.py::test_detaching_sentiment_loss_leaves_da_gradients_exact",
    "tests/test_relation.py::test_concat_branches_fuse_identical_matrix",
    "tests/test_relation.py::test_coattention_equal_inputs_symmetric",
    "tests/test_relation.py::test_coattention_logits_are_transposes",
    "tests/test_relation.py::test_shape_preserved_through_depth",
    "tests/test_relation.py::test_three_coattention_layers_trace",
    "tests/test_metrics.py::test_macro_permutation_invariant",
    "tests/test_metrics.py::test_weighted_bounded_by_per_label",
]


def test_criterion_3_structural_invariants():
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
        cwd=ROOT, capture_output=True, text=True,
    )
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(3, proc.returncode == 0 and elapsed < 60, f"property suite ({len(PROPERTY_TESTS)} tests): {tail}; {elapsed:.0f}s < 60s")


@pytest.mark.parametrize("kind", ["coattention", "mlp", "concat"])
def test_criterion_4_overfit(kind):
    toy = toy_corpus()
    cfg = ModelConfig(d_emb=32, d=32, relation=kind, layers=1, epochs=300, batch_size=2, seed=0)
    reached = {}

    def stop_when_perfect(record, model):
        acc = accuracy(model, _encode_all(toy.split("train"), model))
        if acc == (1.0, 1.0):
            reached["epoch"] = record["epoch"]
            return True
        return False

    t0 = time.perf_counter()
    train(cfg, toy, on_epoch=stop_when_perfect)
    elapsed = time.perf_counter() - t0
    ok = "epoch" in reached and elapsed < 60
    when = f"epoch {reached['epoch']}" if reached else "not within 300 epochs"
    report(4, ok, f"{kind}: 100% train accuracy on both tasks at {when}; {elapsed:.1f}s < 60s")


def test_criterion_5_ablation_trend():
    data = mastodon_dir()
    if data is None:
        report(
            5, False,
            "Mastodon corpus not available (set DCRNET_MASTODON_DIR or convert into data/mastodon); trend not measured",
        )
    corpus = load_canonical(data)
    t0 = time.perf_counter()
    summary = run_ablation(corpus, desk_config(), RELATION_VARIANTS, seeds=(0, 1, 2))
    elapsed = time.perf_counter() - t0
    trend = relation_trend(summary)
    means = "; ".join(
        f"{v} DA {summary.mean(v, 'dev_da_f1'):.1f} SC {summary.mean(v, 'dev_sc_f1'):.1f}" for v in RELATION_VARIANTS
    )
    ok = trend["ordering"] and trend["beats_none"] and elapsed <= 3600
    report(5, ok, f"ordering {trend['ordering']}, coattention > none on both {trend['beats_none']} ({means}); {elapsed / 60:.0f} min")


def test_criterion_6_stretch():
    data = mastodon_dir()
    if data is None or not os.environ.get("DCRNET_RUN_STRETCH"):
        line = "[SKIP] criterion 6: non-blocking stretch run not executed (needs Mastodon data and DCRNET_RUN_STRETCH=1)"
        ACCEPTANCE_LINES.append(line)
        pytest.skip(line)
    corpus = load_canonical(data)
    cfg = ModelConfig(relation="coattention", protocol="mastodon", seed=0)
    reports = evaluate(train(cfg, corpus).best, corpus.split("test"))
    sc, da = reports["sentiment"].f1, reports["da"].f1
    within = abs(sc - 45.1) <= 8 and abs(da - 58.6) <= 8
    # reported, not gated
    line = f"[{'PASS' if within else 'FAIL'}] criterion 6 (non-blocking): test SC F1 {sc:.1f}, DA F1 {da:.1f}; within +/-8 of 45.1/58.6: {within}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_7_determinism(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    toy = toy_corpus()
    for split in ("train", "dev"):
        (data / f"{split}.jsonl").write_text(write_canonical(toy.split(split)))
    args = ["--data", str(data), "--seed", "11", "--set", "d_emb=16", "--set", "d=16", "--set", "epochs=4", "--set", "batch_size=1"]
    assert run(["train", "--out-dir", str(tmp_path / "a"), *args]) == 0
    assert run(["train", "--out-dir", str(tmp_path / "b"), *args]) == 0
    same = {
        name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("train_log.jsonl", "best.ckpt")
    }
    report(7, all(same.values()), f"two identical runs byte-identical: {same}")
