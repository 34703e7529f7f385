"""Precision/recall/F1 under the two evaluation protocols.

* ``dailydialog``: macro-averaged P/R/F1 for both tasks.
* ``mastodon``: sentiment is macro-averaged with the neutral label left out;
  dialog acts use per-label F1 weighted by gold prevalence.

Per-label P, R and F1 are 0 whenever their denominator is 0. A macro average
runs over the labels that occur in gold or predictions, minus any excluded
label.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def from_labels(cls, gold, pred, num_labels: int) -> ConfusionCounts:
        gold, pred = _check(gold, pred, num_labels)
        hit = gold == pred
        tp = np.bincount(gold[hit], minlength=num_labels)
        fp = np.bincount(pred[~hit], minlength=num_labels)
        fn = np.bincount(gold[~hit], minlength=num_labels)
        return cls(tp, fp, fn)

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn

    def per_label(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        tp = self.tp.astype(np.float64)
        pred_pos = tp + self.fp
        gold_pos = tp + self.fn
        p = np.divide(tp, pred_pos, out=np.zeros_like(tp), where=pred_pos > 0)
        r = np.divide(tp, gold_pos, out=np.zeros_like(tp), where=gold_pos > 0)
        s = p + r
        f = np.divide(2 * p * r, s, out=np.zeros_like(tp), where=s > 0)
        return p, r, f

    def to_json(self) -> dict:
        return {"tp": self.tp.tolist(), "fp": self.fp.tolist(), "fn": self.fn.tolist()}


@dataclass
class EvalReport:
    task: str
    scheme: str  # "macro" | "prevalence_weighted"
    precision: float
    recall: float
    f1: float
    per_label: dict = field(default_factory=dict)
    counts: ConfusionCounts | None = None

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "scheme": self.scheme,
            "f1": self.f1,
            "recall": self.recall,
            "precision": self.precision,
            "per_label": self.per_label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> EvalReport:
        return cls(obj["task"], obj["scheme"], obj["precision"], obj["recall"], obj["f1"], obj.get("per_label", {}))

    def table(self) -> str:
        lines = [f"{self.task} ({self.scheme})  F1 {self.f1:6.2f}  R {self.recall:6.2f}  P {self.precision:6.2f}"]
        for name, row in self.per_label.items():
            lines.append(
                f"  {name:<24} F1 {row['f1']:6.2f}  R {row['recall']:6.2f}  P {row['precision']:6.2f}  n={row['support']}"
            )
        return "\n".join(lines)


def _check(gold, pred, num_labels):
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if gold.shape != pred.shape:
        raise ValueError(f"gold and pred lengths differ: {gold.size} vs {pred.size}")
    for name, arr in (("gold", gold), ("pred", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_labels):
            raise ValueError(f"{name} contains a label outside [0, {num_labels})")
    return gold, pred


def _per_label_table(counts: ConfusionCounts, names, keep) -> dict:
    p, r, f = counts.per_label()
    support = counts.support
    return {
        str(names[i]): {
            "precision": 100 * p[i],
            "recall": 100 * r[i],
            "f1": 100 * f[i],
            "support": int(support[i]),
        }
        for i in keep
    }


def macro_prf(
    gold,
    pred,
    num_labels: int,
    exclude: int | None = None,
    exclusion: str = "from_average",
    names=None,
    task: str = "",
) -> EvalReport:
    """Unweighted mean of per-label P/R/F1 (percent).

    ``exclusion="from_average"`` drops ``exclude`` from the averaged label set
    only; ``"from_data"`` also removes utterances whose gold is ``exclude``.
    Either way, predicting the excluded label for another gold label is
    still a false negative for that gold label.
    """
    gold, pred = _check(gold, pred, num_labels)
    if exclusion not in ("from_average", "from_data"):
        raise ValueError(f"unknown exclusion mode {exclusion!r}")
    if exclude is not None and exclusion == "from_data":
        keep_rows = gold != exclude
        gold, pred = gold[keep_rows], pred[keep_rows]
    counts = ConfusionCounts.from_labels(gold, pred, num_labels)
    present = np.zeros(num_labels, dtype=bool)
    present[gold] = True
    present[pred] = True
    if exclude is not None:
        present[exclude] = False
    keep = np.flatnonzero(present)
    p, r, f = counts.per_label()
    names = names if names is not None else list(range(num_labels))
    if keep.size == 0:
        mp = mr = mf = 0.0
    else:
        mp, mr, mf = (float(100 * x[keep].mean()) for x in (p, r, f))
    return EvalReport(task, "macro", mp, mr, mf, _per_label_table(counts, names, keep), counts)


def prevalence_weighted_f1(gold, pred, num_labels: int, names=None, task: str = "") -> EvalReport:
    """Per-label scores averaged with weight ``gold_count / N``."""
    gold, pred = _check(gold, pred, num_labels)
    counts = ConfusionCounts.from_labels(gold, pred, num_labels)
    p, r, f = counts.per_label()
    n = gold.size
    w = counts.support / n if n else np.zeros(num_labels)
    names = names if names is not None else list(range(num_labels))
    keep = np.flatnonzero(counts.support > 0)
    return EvalReport(
        task,
        "prevalence_weighted",
        float(100 * (w * p).sum()),
        float(100 * (w * r).sum()),
        float(100 * (w * f).sum()),
        _per_label_table(counts, names, keep),
        counts,
    )


def evaluate_protocol(
    protocol: str,
    gold_da,
    pred_da,
    gold_sent,
    pred_sent,
    da_names,
    sent_names,
    neutral_index: int | None = None,
    exclusion: str = "from_average",
) -> dict[str, EvalReport]:
    if protocol == "dailydialog":
        return {
            "da": macro_prf(gold_da, pred_da, len(da_names), names=da_names, task="da"),
            "sentiment": macro_prf(gold_sent, pred_sent, len(sent_names), names=sent_names, task="sentiment"),
        }
    if protocol == "mastodon":
        return {
            "da": prevalence_weighted_f1(gold_da, pred_da, len(da_names), names=da_names, task="da"),
            "sentiment": macro_prf(
                gold_sent, pred_sent, len(sent_names), exclude=neutral_index, exclusion=exclusion,
                names=sent_names, task="sentiment",
            ),
        }
    raise ValueError(f"unknown protocol {protocol!r}; expected 'dailydialog' or 'mastodon'")


def reports_json(reports: dict[str, EvalReport]) -> str:
    return json.dumps({k: v.to_json() for k, v in reports.items()}, indent=2, sort_keys=True) + "\n"
