"""Relation-kind ablations over several seeds, plus a synthetic stand-in corpus.

The synthetic generator only exists so the harness can be exercised without
the real annotated data; its numbers say nothing about the method.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from dcrnet.config import ModelConfig
from dcrnet.corpus import Corpus, Dialog, Utterance, build_label_maps
from dcrnet.trainer import train

log = logging.getLogger(__name__)

# relation-kind axis of the ablation table, plus the encoder ablations
RELATION_VARIANTS: dict[str, dict] = {
    "coattention": {"relation": "coattention"},
    "mlp": {"relation": "mlp"},
    "concat": {"relation": "concat"},
    "none": {"relation": "none"},
}
ENCODER_VARIANTS: dict[str, dict] = {
    "no_self_attention": {"no_self_attention": True},
    "cnn_context": {"cnn_context": True},
}


def desk_config(**overrides) -> ModelConfig:
    """Settings sized for a CPU run of a few minutes per model on ~1k utterances."""
    base = dict(
        d_emb=64, d=64, layers=3, dropout=0.25, epochs=30, batch_size=8, lr=2e-3,
        protocol="mastodon", selection_metric="mean",
    )
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class RunResult:
    variant: str
    seed: int
    dev_da_f1: float
    dev_sc_f1: float
    best_epoch: int
    seconds: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AblationSummary:
    runs: list[RunResult] = field(default_factory=list)

    def mean(self, variant: str, key: str) -> float:
        vals = [getattr(r, key) for r in self.runs if r.variant == variant]
        return float(np.mean(vals)) if vals else float("nan")

    def table(self) -> str:
        lines = [f"{'variant':<18} {'seeds':>5} {'dev DA F1':>10} {'dev SC F1':>10}"]
        for v in dict.fromkeys(r.variant for r in self.runs):
            n = sum(r.variant == v for r in self.runs)
            lines.append(f"{v:<18} {n:>5} {self.mean(v, 'dev_da_f1'):>10.2f} {self.mean(v, 'dev_sc_f1'):>10.2f}")
        return "\n".join(lines)


def run_ablation(
    corpus: Corpus,
    base: ModelConfig,
    variants: dict[str, dict],
    seeds=(0, 1, 2),
    on_result=None,
) -> AblationSummary:
    summary = AblationSummary()
    for name, overrides in variants.items():
        for seed in seeds:
            cfg = base.replace(seed=seed, **overrides)
            t0 = time.perf_counter()
            best = train(cfg, corpus).best
            res = RunResult(name, seed, best.dev_scores["da_f1"], best.dev_scores["sc_f1"], best.epoch, time.perf_counter() - t0)
            log.info("%s seed %d: da %.2f sc %.2f (%.0fs)", name, seed, res.dev_da_f1, res.dev_sc_f1, res.seconds)
            summary.runs.append(res)
            if on_result is not None:
                on_result(res)
    return summary


def relation_trend(summary: AblationSummary) -> dict[str, bool]:
    """Check the expected ordering coattention >= (mlp or concat) >= none.

    ``ordering`` needs the chain on at least one task; ``beats_none`` needs
    co-attention strictly above the no-relation model on both tasks.
    """
    checks = {}
    ordered = []
    for key in ("dev_da_f1", "dev_sc_f1"):
        co, none = summary.mean("coattention", key), summary.mean("none", key)
        mid = max(summary.mean("mlp", key), summary.mean("concat", key))
        ordered.append(co >= mid >= none)
        checks[f"coattention_beats_none_{key}"] = co > none
    checks["ordering"] = any(ordered)
    checks["beats_none"] = checks["coattention_beats_none_dev_da_f1"] and checks["coattention_beats_none_dev_sc_f1"]
    return checks


# ---------------------------------------------------------------- synthetic data

_ACTS = ("statement", "question", "answer", "agreement", "disagreement", "thanking")
_SENTS = ("positive", "neutral", "negative")
_CUES = {
    "positive": ("great", "love", "thanks", "nice", "awesome"),
    "neutral": ("maybe", "today", "server", "post", "instance"),
    "negative": ("awful", "hate", "broken", "sad", "wrong"),
}
_ACT_CUES = {
    "statement": ("i", "think", "it", "is"),
    "question": ("what", "why", "how", "?"),
    "answer": ("because", "yes", "it", "was"),
    "agreement": ("agree", "exactly", "yes", "right"),
    "disagreement": ("no", "but", "not", "really"),
    "thanking": ("thank", "you", "much", "appreciated"),
}
_FILLER = tuple(f"w{i}" for i in range(40))


def synthetic_corpus(seed: int = 0, n_train: int = 240, n_dev: int = 30, n_test: int = 60) -> Corpus:
    """Small Mastodon-shaped corpus where the two label streams depend on each other.

    Replies copy the sentiment of the utterance they answer with high
    probability, and agreement/thanking lean positive while disagreement leans
    negative, so sentiment evidence helps the act task and vice versa.
    """
    rng = np.random.default_rng(seed)

    def dialog(i: int) -> Dialog:
        T = int(rng.integers(2, 7))
        utts = []
        prev_sent = _SENTS[int(rng.integers(3))]
        for t in range(T):
            if t == 0:
                act = _ACTS[int(rng.choice([0, 1], p=[0.6, 0.4]))]
            else:
                act = _ACTS[int(rng.integers(len(_ACTS)))]
            if act in ("agreement", "thanking"):
                sent = "positive" if rng.random() < 0.8 else "neutral"
            elif act == "disagreement":
                sent = "negative" if rng.random() < 0.8 else "neutral"
            else:
                sent = prev_sent if rng.random() < 0.6 else _SENTS[int(rng.integers(3))]
            words = list(rng.choice(_FILLER, size=int(rng.integers(2, 8))))
            # cues are noisy: each appears with probability below one
            if rng.random() < 0.6:
                words.insert(int(rng.integers(len(words) + 1)), str(rng.choice(_CUES[sent])))
            if rng.random() < 0.6:
                words.insert(int(rng.integers(len(words) + 1)), str(rng.choice(_ACT_CUES[act])))
            utts.append(Utterance([str(w) for w in words], act, sent, "AB"[t % 2]))
            prev_sent = sent
        return Dialog(f"syn{i}", utts)

    ids = iter(range(n_train + n_dev + n_test))
    splits = {
        "train": [dialog(next(ids)) for _ in range(n_train)],
        "dev": [dialog(next(ids)) for _ in range(n_dev)],
        "test": [dialog(next(ids)) for _ in range(n_test)],
    }
    da, sent = build_label_maps(splits)
    return Corpus(splits, da, sent)
