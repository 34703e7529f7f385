"""Per-utterance softmax decoders and the joint objective."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from dcrnet import numerics as nx
from dcrnet.corpus import Dialog, LabelMap
from dcrnet.encoder import Params
from dcrnet.numerics import Tensor


@dataclass
class PredictionBatch:
    da_probs: Tensor  # T x |DA|
    sentiment_probs: Tensor  # T x |Sent|

    @property
    def da_pred(self) -> np.ndarray:
        # np.argmax returns the first maximum, so ties go to the lowest index
        return np.argmax(self.da_probs.data, axis=1)

    @property
    def sentiment_pred(self) -> np.ndarray:
        return np.argmax(self.sentiment_probs.data, axis=1)


def init_decoder_params(rng: np.random.Generator, d: int, n_da: int, n_sent: int) -> Params:
    return {
        "dec.W_da": nx.glorot(rng, d, n_da, name="dec.W_da"),
        "dec.b_da": nx.zeros(n_da, name="dec.b_da"),
        "dec.W_sent": nx.glorot(rng, d, n_sent, name="dec.W_sent"),
        "dec.b_sent": nx.zeros(n_sent, name="dec.b_sent"),
    }


def predict(D: Tensor, S: Tensor, params: Params) -> PredictionBatch:
    da = nx.softmax_rows(nx.add_bias(nx.matmul(D, params["dec.W_da"]), params["dec.b_da"]))
    sent = nx.softmax_rows(nx.add_bias(nx.matmul(S, params["dec.W_sent"]), params["dec.b_sent"]))
    return PredictionBatch(da, sent)


def task_losses(pred: PredictionBatch, gold_da, gold_sent) -> tuple[Tensor, Tensor]:
    """Summed (over utterances) cross-entropy for each task."""
    T = pred.da_probs.shape[0]
    if len(gold_da) != T or len(gold_sent) != T:
        raise nx.DimensionError(f"expected {T} gold labels per task, got {len(gold_da)} and {len(gold_sent)}")
    return nx.cross_entropy(pred.da_probs, gold_da), nx.cross_entropy(pred.sentiment_probs, gold_sent)


def l2_penalty(params: Params, lam: float) -> Tensor:
    terms = [nx.sum_squares(p) for p in params.values()]
    acc = terms[0]
    for t in terms[1:]:
        acc = nx.add(acc, t)
    return nx.scale(acc, lam)


def joint_loss(pred: PredictionBatch, gold_da, gold_sent, params: Params | None = None, l2: float = 0.0) -> Tensor:
    """DA loss + sentiment loss, plus ``l2 * sum ||theta||^2`` when params are given."""
    da_loss, sent_loss = task_losses(pred, gold_da, gold_sent)
    loss = nx.add(da_loss, sent_loss)
    if params is not None and l2 > 0.0:
        loss = nx.add(loss, l2_penalty(params, l2))
    return loss


def prediction_record(dialog: Dialog, da_pred, sent_pred, da_map: LabelMap, sent_map: LabelMap) -> dict:
    obj = dialog.to_json()
    for u, a, s in zip(obj["utterances"], da_pred, sent_pred):
        u["da_pred"] = da_map.label(int(a))
        u["sentiment_pred"] = sent_map.label(int(s))
    return obj


def dump_predictions(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
