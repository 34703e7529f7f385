"""Relation layers fusing dialog-act (D) and sentiment (S) states.

Each layer first makes the two streams task-specific (a sequence BiLSTM over
the act stream, a position-wise tanh MLP over the sentiment stream), then
fuses them with one of three operators: concatenation, an MLP over the
concatenation, or utterance-level co-attention. Layers stack to depth L.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import NamedTuple

import numpy as np

from dcrnet import numerics as nx
from dcrnet._io import atomic_write_many
from dcrnet.config import ModelConfig, RelationKind
from dcrnet.encoder import Params, init_lstm, lstm_steps
from dcrnet.numerics import Tensor


class RelationStep(NamedTuple):
    act: Tensor
    sentiment: Tensor
    trace: dict


# ---------------------------------------------------------------- parameters


def _linear(rng, name, d_in, d_out) -> Params:
    return {f"{name}.W": nx.glorot(rng, d_in, d_out, name=f"{name}.W"), f"{name}.b": nx.zeros(d_out, name=f"{name}.b")}


def _affine(x: Tensor, p: Params, name: str) -> Tensor:
    return nx.add_bias(nx.matmul(x, p[f"{name}.W"]), p[f"{name}.b"])


def init_pre_transform(rng, prefix: str, d: int) -> Params:
    p = {}
    p.update(init_lstm(rng, f"{prefix}.act.fwd", d, d // 2))
    p.update(init_lstm(rng, f"{prefix}.act.bwd", d, d // 2))
    p.update(_linear(rng, f"{prefix}.sent.hidden", d, d))
    p.update(_linear(rng, f"{prefix}.sent.out", d, d))
    return p


def init_fusion(rng, prefix: str, kind: RelationKind, d: int, shared_fusion_mlp: bool = False) -> Params:
    p = {}
    if kind is RelationKind.CONCAT:
        p.update(_linear(rng, f"{prefix}.proj_act", 2 * d, d))
        p.update(_linear(rng, f"{prefix}.proj_sent", 2 * d, d))
    elif kind is RelationKind.MLP:
        for branch in ("act",) if shared_fusion_mlp else ("act", "sent"):
            p.update(_linear(rng, f"{prefix}.mlp_{branch}.hidden", 2 * d, 2 * d))
            p.update(_linear(rng, f"{prefix}.mlp_{branch}.out", 2 * d, d))
    return p


def layer_prefix(cfg: ModelConfig, layer: int) -> str:
    return "rel0" if cfg.tie_layers else f"rel{layer}"


def pre_prefix(cfg: ModelConfig, layer: int) -> str:
    return "rel0.pre" if (cfg.tie_layers or cfg.pre_transform_once) else f"rel{layer}.pre"


def init_relation_params(rng: np.random.Generator, cfg: ModelConfig) -> Params:
    p: Params = {}
    for layer in range(cfg.depth):
        pre = pre_prefix(cfg, layer)
        if not any(k.startswith(pre + ".") for k in p):
            p.update(init_pre_transform(rng, pre, cfg.d))
        fuse = layer_prefix(cfg, layer)
        if not any(k.startswith(fuse + ".") and ".pre." not in k for k in p):
            p.update(init_fusion(rng, fuse, cfg.relation, cfg.d, cfg.shared_fusion_mlp))
    return p


# ---------------------------------------------------------------- operations


def bilstm_sequence(X: Tensor, params: Params, prefix: str) -> Tensor:
    """BiLSTM over the rows of X (rows are time steps); T x d -> T x d."""
    T = X.shape[0]
    half = params[f"{prefix}.fwd.Wh"].shape[0]
    out = []
    for direction, order in (("fwd", np.arange(T)), ("bwd", np.arange(T)[::-1])):
        xp = nx.matmul(X, params[f"{prefix}.{direction}.Wx"])
        steps = [nx.take_rows(xp, [t]) for t in order]
        states = lstm_steps(steps, params, f"{prefix}.{direction}", half)
        if direction == "bwd":
            states = states[::-1]
        out.append(nx.concat_rows(*states))
    return nx.concat_cols(*out)


def pre_transform(D: Tensor, S: Tensor, params: Params, prefix: str) -> tuple[Tensor, Tensor]:
    """Task-specific maps: BiLSTM over the act stream, tanh MLP over the sentiment stream."""
    D2 = bilstm_sequence(D, params, f"{prefix}.act")
    S2 = _affine(nx.tanh(_affine(S, params, f"{prefix}.sent.hidden")), params, f"{prefix}.sent.out")
    return D2, S2


def relate_concat(D: Tensor, S: Tensor, params: Params, prefix: str, residual: bool = True) -> RelationStep:
    # both branches fuse the same [S | D] matrix; separate projections restore width d
    fused_act = nx.concat_cols(S, D)
    fused_sent = nx.concat_cols(S, D)
    act = _affine(fused_act, params, f"{prefix}.proj_act")
    sent = _affine(fused_sent, params, f"{prefix}.proj_sent")
    if residual:
        act, sent = nx.add(act, D), nx.add(sent, S)
    return RelationStep(act, sent, {"fused_act": fused_act, "fused_sentiment": fused_sent})


def _fusion_mlp(F: Tensor, params: Params, name: str) -> Tensor:
    return _affine(nx.tanh(_affine(F, params, f"{name}.hidden")), params, f"{name}.out")


def relate_mlp(
    D: Tensor, S: Tensor, params: Params, prefix: str, residual: bool = True, shared: bool = False
) -> RelationStep:
    F = nx.concat_cols(S, D)
    act_mlp = _fusion_mlp(F, params, f"{prefix}.mlp_act")
    sent_mlp = act_mlp if shared else _fusion_mlp(F, params, f"{prefix}.mlp_sent")
    act, sent = (nx.add(act_mlp, D), nx.add(sent_mlp, S)) if residual else (act_mlp, sent_mlp)
    return RelationStep(act, sent, {"fused_act": act_mlp, "fused_sentiment": sent_mlp})


def relate_coattention(D: Tensor, S: Tensor) -> RelationStep:
    """``D + softmax_rows(D S^T) S`` and ``S + softmax_rows(S D^T) D``; parameter-free."""
    logits_as = nx.matmul(D, nx.transpose(S))
    logits_sa = nx.matmul(S, nx.transpose(D))
    a2s = nx.softmax_rows(logits_as)
    s2a = nx.softmax_rows(logits_sa)
    act = nx.add(D, nx.matmul(a2s, S))
    sent = nx.add(S, nx.matmul(s2a, D))
    trace = {
        "act_to_sentiment": a2s.data,
        "sentiment_to_act": s2a.data,
        "logits_act_to_sentiment": logits_as.data,
        "logits_sentiment_to_act": logits_sa.data,
    }
    return RelationStep(act, sent, trace)


def relate(kind: RelationKind, D: Tensor, S: Tensor, params: Params, prefix: str, cfg: ModelConfig) -> RelationStep:
    if kind is RelationKind.CONCAT:
        return relate_concat(D, S, params, prefix, cfg.relation_residual)
    if kind is RelationKind.MLP:
        return relate_mlp(D, S, params, prefix, cfg.relation_residual, cfg.shared_fusion_mlp)
    if kind is RelationKind.COATTENTION:
        return relate_coattention(D, S)
    raise ValueError(f"no fusion operator for relation kind {kind}")


def stack(D0: Tensor, S0: Tensor, cfg: ModelConfig, params: Params) -> tuple[Tensor, Tensor, list[dict]]:
    """Apply ``cfg.depth`` relation layers; returns ``(D_L, S_L, per-layer traces)``.

    Trace entries carry the two co-attention matrices for the co-attention
    kind and are empty dicts otherwise.
    """
    D, S = D0, S0
    traces = []
    for layer in range(cfg.depth):
        if layer == 0 or not cfg.pre_transform_once:
            D, S = pre_transform(D, S, params, pre_prefix(cfg, layer))
        step = relate(cfg.relation, D, S, params, layer_prefix(cfg, layer), cfg)
        D, S = step.act, step.sentiment
        traces.append({k: v for k, v in step.trace.items() if k in ("act_to_sentiment", "sentiment_to_act")})
    return D, S, traces


# ---------------------------------------------------------------- export


def attention_csv(matrix: np.ndarray) -> str:
    """Rows are query utterance positions, columns key positions."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["utterance"] + list(range(matrix.shape[1])))
    for i, row in enumerate(matrix):
        w.writerow([i] + [repr(float(x)) for x in row])
    return buf.getvalue()


def export_attention(traces: list[dict], out_dir, prefix: str = "") -> list[Path]:
    out_dir = Path(out_dir)
    files = {}
    for layer, trace in enumerate(traces, start=1):
        for direction, matrix in trace.items():
            files[out_dir / f"{prefix}layer{layer}_{direction}.csv"] = attention_csv(matrix)
    atomic_write_many(files)
    return sorted(files)


def read_attention_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]])
