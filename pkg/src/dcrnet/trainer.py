"""Training with dev-set model selection, evaluation, checkpoints and gradient checks."""
from __future__ import annotations

import base64
import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from dcrnet import numerics as nx
from dcrnet.config import ModelConfig, RelationKind
from dcrnet.corpus import (
    Corpus,
    Dialog,
    EncodedDialog,
    LabelMap,
    UnknownLabelError,
    Utterance,
    Vocabulary,
    build_vocab,
    encode_dialog,
)
from dcrnet.decoder import l2_penalty
from dcrnet.metrics import EvalReport, evaluate_protocol
from dcrnet.model import DCRNet
from dcrnet.numerics import AdamState

log = logging.getLogger(__name__)

MAGIC = b"DCRN1"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class LabelMapMismatch(ValueError):
    pass


# ---------------------------------------------------------------- checkpoints


def _pack(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack(obj: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8").reshape(obj["shape"]).astype(np.float64)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int
    dev_scores: dict
    vocab: Vocabulary
    da_map: LabelMap
    sent_map: LabelMap

    def model(self) -> DCRNet:
        params = {k: nx.Tensor(v, requires_grad=True, name=k) for k, v in self.params.items()}
        return DCRNet(self.config, self.vocab, self.da_map, self.sent_map, params)

    @classmethod
    def capture(cls, model: DCRNet, adam: AdamState, epoch: int, dev_scores: dict) -> Checkpoint:
        return cls(
            config=model.cfg,
            params={k: p.data.copy() for k, p in model.params.items()},
            adam=copy.deepcopy(adam),
            epoch=epoch,
            dev_scores=dict(dev_scores),
            vocab=model.vocab,
            da_map=model.da_map,
            sent_map=model.sent_map,
        )

    def to_bytes(self) -> bytes:
        body = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "dev_scores": self.dev_scores,
            "vocab": self.vocab.to_json(),
            "da_map": self.da_map.to_json(),
            "sent_map": self.sent_map.to_json(),
            "params": {k: _pack(v) for k, v in self.params.items()},
            "adam": {
                "lr": self.adam.lr,
                "beta1": self.adam.beta1,
                "beta2": self.adam.beta2,
                "eps": self.adam.eps,
                "step": self.adam.step,
                "m": {k: _pack(v) for k, v in self.adam.m.items()},
                "v": {k: _pack(v) for k, v in self.adam.v.items()},
            },
        }
        payload = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
        digest = hashlib.sha256(payload).hexdigest().encode("ascii")
        return MAGIC + b"\n" + digest + b"\n" + payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> Checkpoint:
        try:
            magic, digest, payload = raw.split(b"\n", 2)
        except ValueError:
            raise CheckpointError("truncated checkpoint") from None
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint (magic {magic[:8]!r})")
        if hashlib.sha256(payload).hexdigest().encode("ascii") != digest:
            raise CheckpointError("checkpoint integrity hash mismatch")
        body = json.loads(payload)
        if body.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {body.get('format_version')}")
        a = body["adam"]
        adam = AdamState(
            a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"],
            {k: _unpack(v) for k, v in a["m"].items()},
            {k: _unpack(v) for k, v in a["v"].items()},
        )
        return cls(
            config=ModelConfig.from_dict(body["config"]),
            params={k: _unpack(v) for k, v in body["params"].items()},
            adam=adam,
            epoch=body["epoch"],
            dev_scores=body["dev_scores"],
            vocab=Vocabulary.from_json(body["vocab"]),
            da_map=LabelMap.from_json(body["da_map"]),
            sent_map=LabelMap.from_json(body["sent_map"]),
        )


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return Checkpoint.from_bytes(fh.read())


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    best: Checkpoint
    log: list[dict] = field(default_factory=list)

    def log_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


def _encode_all(dialogs, model: DCRNet, require_labels: bool = True) -> list[EncodedDialog]:
    out = []
    for d in dialogs:
        try:
            enc = encode_dialog(d, model.vocab, model.da_map, model.sent_map)
        except UnknownLabelError as e:
            raise LabelMapMismatch(str(e)) from None
        if require_labels and (enc.da is None or enc.sentiment is None):
            raise LabelMapMismatch(f"dialog {d.id!r} lacks gold labels")
        out.append(enc)
    return out


def selection_score(cfg: ModelConfig, da_f1: float, sc_f1: float) -> float:
    if cfg.selection_metric == "da":
        return da_f1
    if cfg.selection_metric == "sentiment":
        return sc_f1
    return 0.5 * (da_f1 + sc_f1)


def _score(model: DCRNet, encoded: list[EncodedDialog], protocol: str) -> dict[str, EvalReport]:
    gd, pd, gs, ps = [], [], [], []
    for enc in encoded:
        da, sent = model.predict(enc)
        gd += enc.da
        gs += enc.sentiment
        pd += da.tolist()
        ps += sent.tolist()
    return evaluate_protocol(
        protocol, gd, pd, gs, ps, model.da_map.labels, model.sent_map.labels,
        model.sent_map.neutral_index, model.cfg.exclusion,
    )


def _with_neutral(lm: LabelMap, neutral_label: str) -> LabelMap:
    if not neutral_label:
        return lm
    if neutral_label not in lm:
        raise ValueError(f"neutral label {neutral_label!r} not among sentiment labels {lm.labels}")
    return LabelMap(lm.labels, neutral_label=neutral_label)


def train(cfg: ModelConfig, corpus: Corpus, on_epoch=None) -> TrainResult:
    """Train on ``train``, select the epoch with the best dev score.

    ``on_epoch(record, model)`` is called after each epoch; returning True
    stops training early.
    """
    train_dialogs, dev_dialogs = corpus.split("train"), corpus.split("dev")
    if not train_dialogs or not dev_dialogs:
        raise TrainingError("train and dev splits must both be non-empty")
    vocab = build_vocab(corpus, cfg.min_freq)
    model = DCRNet(cfg, vocab, corpus.da_labels, _with_neutral(corpus.sentiment_labels, cfg.neutral_label))
    train_enc = _encode_all(train_dialogs, model)
    dev_enc = _encode_all(dev_dialogs, model)
    log.info("vocab %d, params %d, train dialogs %d", len(vocab), model.num_parameters(), len(train_enc))

    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    adam = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    params = model.params
    best, best_score = None, -np.inf
    records: list[dict] = []
    history: list[float] = []

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_enc))
        batch_losses = []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_enc[i] for i in order[start:start + cfg.batch_size]]
            acc = None
            for enc in batch:
                li = model.loss(enc, training=True, rng=dropout_rng, l2=0.0)
                acc = li if acc is None else nx.add(acc, li)
            loss = nx.scale(acc, 1.0 / len(batch))
            if cfg.l2 > 0:
                loss = nx.add(loss, l2_penalty(params, cfg.l2))
            value = loss.item()
            history.append(value)
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b}: {value}; "
                    f"last losses {history[-10:]}"
                )
            grads = nx.backward(loss)
            nx.adam_step(params, grads, adam)
            batch_losses.append(value)

        reports = _score(model, dev_enc, cfg.protocol)
        da_f1, sc_f1 = reports["da"].f1, reports["sentiment"].f1
        score = selection_score(cfg, da_f1, sc_f1)
        selected = score > best_score
        if selected:
            best_score = score
            best = Checkpoint.capture(model, adam, epoch, {"da_f1": da_f1, "sc_f1": sc_f1, "score": score})
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            "dev_da_f1": da_f1,
            "dev_sc_f1": sc_f1,
            "selected": bool(selected),
        }
        records.append(record)
        log.info("epoch %d loss %.4f dev da %.2f sc %.2f%s", epoch, record["train_loss"], da_f1, sc_f1, " *" if selected else "")
        if on_epoch is not None and on_epoch(record, model):
            break
    return TrainResult(best, records)


# ---------------------------------------------------------------- evaluation


def evaluate(ckpt: Checkpoint, dialogs: list[Dialog], protocol: str | None = None) -> dict[str, EvalReport]:
    model = ckpt.model()
    encoded = _encode_all(dialogs, model)
    return _score(model, encoded, protocol or ckpt.config.protocol)


def accuracy(model: DCRNet, encoded: list[EncodedDialog]) -> tuple[float, float]:
    hits_da = hits_s = n = 0
    for enc in encoded:
        da, sent = model.predict(enc)
        hits_da += int((da == np.array(enc.da)).sum())
        hits_s += int((sent == np.array(enc.sentiment)).sum())
        n += len(enc)
    return hits_da / n, hits_s / n


# ---------------------------------------------------------------- gradient check


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_error: float
    per_tensor: dict[str, float]
    worst: str
    threshold: float

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max relative error {self.max_rel_error:.3e} (tensor {self.worst}, threshold {self.threshold:g})"


def tiny_config(relation="coattention", **overrides) -> ModelConfig:
    base = dict(d_emb=6, d=8, relation=relation, layers=2, dropout=0.0, epochs=1, batch_size=1)
    base.update(overrides)
    return ModelConfig(**base)


def random_dialog(rng: np.random.Generator, vocab_size: int, n_da: int, n_sent: int, max_T: int = 3, max_K: int = 4) -> EncodedDialog:
    # full-length dialog with at least one max-length utterance, so every
    # recurrent weight receives a data gradient well above roundoff
    T = max_T
    lengths = rng.integers(1, max_K + 1, size=T)
    lengths[rng.integers(T)] = max_K
    tokens = [rng.integers(2, vocab_size, size=int(k)).tolist() for k in lengths]
    return EncodedDialog(
        "gradcheck",
        tokens,
        rng.integers(0, n_da, size=T).tolist(),
        rng.integers(0, n_sent, size=T).tolist(),
    )


def gradcheck(
    cfg: ModelConfig,
    rng: np.random.Generator,
    h: float = 1e-4,
    threshold: float = 1e-4,
    tamper=None,
    dialog: EncodedDialog | None = None,
    norm_floor: float = 1e-6,
) -> GradcheckReport:
    """Compare backprop gradients of the joint loss against central differences.

    Every element of every parameter tensor is perturbed. The per-tensor error
    is ``||analytic - numeric|| / max(||analytic||, ||numeric||, norm_floor)``;
    the floor keeps tensors whose whole gradient sits near the central-difference
    roundoff level (about 1e-11 per element here) from reading as failures.
    ``tamper(name, grad)`` may return a modified analytic gradient (negative
    controls).
    """
    if cfg.d > 8:
        raise ValueError("gradcheck is meant for tiny models (d <= 8)")
    vocab = Vocabulary([f"w{i}" for i in range(8)])
    da_map, sent_map = LabelMap(["a0", "a1", "a2"]), LabelMap(["neg", "neutral", "pos"], neutral_label="neutral")
    cfg = cfg.replace(seed=int(rng.integers(2**31)))
    model = DCRNet(cfg, vocab, da_map, sent_map)
    enc = dialog or random_dialog(rng, len(vocab), len(da_map), len(sent_map))

    grads = nx.backward(model.loss(enc))
    per_tensor = {}
    for name, p in model.params.items():
        analytic = grads[p]
        if tamper is not None:
            analytic = tamper(name, analytic)
        numeric = np.zeros(p.shape)
        flat, nflat = p.data.reshape(-1), numeric.reshape(-1)
        with nx.no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = model.loss(enc).item()
                flat[i] = orig - h
                down = model.loss(enc).item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * h)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), norm_floor)
        per_tensor[name] = float(np.linalg.norm(analytic - numeric) / scale)
    worst = max(per_tensor, key=per_tensor.get)
    err = per_tensor[worst]
    return GradcheckReport(err < threshold, err, per_tensor, worst, threshold)


def toy_corpus() -> Corpus:
    """Two short dialogs for overfitting checks; train == dev."""
    from dcrnet.corpus import build_label_maps

    d1 = Dialog("toy1", [
        Utterance("hi there how are you".split(), "greet", "neutral", "A"),
        Utterance("i am great thanks".split(), "answer", "positive", "B"),
        Utterance("that is awful news".split(), "statement", "negative", "A"),
    ])
    d2 = Dialog("toy2", [
        Utterance("can you help me".split(), "question", "neutral", "A"),
        Utterance("sure happy to help".split(), "answer", "positive", "B"),
        Utterance("this is broken again".split(), "statement", "negative", "A"),
        Utterance("thanks a lot".split(), "thanking", "positive", "B"),
    ])
    splits = {"train": [d1, d2], "dev": [d1, d2]}
    da, sent = build_label_maps(splits)
    return Corpus(splits, da, sent)

