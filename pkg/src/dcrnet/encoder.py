"""Shared hierarchical encoder: embeddings -> word BiLSTM -> utterance self-attention."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcrnet import numerics as nx
from dcrnet.config import ModelConfig
from dcrnet.corpus import PAD, EncodedDialog
from dcrnet.numerics import Tensor

Params = dict[str, Tensor]


@dataclass
class DialogEncoding:
    H: Tensor  # T x d utterance vectors
    C: Tensor  # T x d context-aware vectors
    D0: Tensor
    S0: Tensor
    attention: np.ndarray | None  # T x T self-attention weights


# ---------------------------------------------------------------- LSTM


def init_lstm(rng: np.random.Generator, prefix: str, d_in: int, hidden: int) -> Params:
    """Gate blocks are laid out [input | forget | cell | output] along columns."""
    return {
        f"{prefix}.Wx": nx.glorot(rng, d_in, 4 * hidden, name=f"{prefix}.Wx"),
        f"{prefix}.Wh": nx.glorot(rng, hidden, 4 * hidden, name=f"{prefix}.Wh"),
        f"{prefix}.b": nx.zeros(4 * hidden, name=f"{prefix}.b"),
    }


def lstm_steps(x_proj: list[Tensor], params: Params, prefix: str, hidden: int) -> list[Tensor]:
    """Run an LSTM given per-step input projections ``x_t @ Wx`` (each n x 4h).

    Returns the hidden state after every step. Initial state is zero.
    """
    b = params[f"{prefix}.b"]
    h = c = None
    states = []
    for xp in x_proj:
        z = nx.add_bias(xp if h is None else nx.add(xp, nx.matmul(h, params[f"{prefix}.Wh"])), b)
        i = nx.sigmoid(nx.slice_cols(z, 0, hidden))
        f = nx.sigmoid(nx.slice_cols(z, hidden, 2 * hidden))
        g = nx.tanh(nx.slice_cols(z, 2 * hidden, 3 * hidden))
        o = nx.sigmoid(nx.slice_cols(z, 3 * hidden, 4 * hidden))
        c = nx.mul(i, g) if c is None else nx.add(nx.mul(f, c), nx.mul(i, g))
        h = nx.mul(o, nx.tanh(c))
        states.append(h)
    return states


def _gather_steps(states: list[Tensor], step_index: np.ndarray) -> Tensor:
    """Row r of the result is ``states[step_index[r]][r]``."""
    if np.all(step_index == step_index[0]):
        return states[int(step_index[0])]
    n = states[0].shape[0]
    flat = nx.concat_rows(*states[: int(step_index.max()) + 1])
    return nx.take_rows(flat, step_index * n + np.arange(n))


# ---------------------------------------------------------------- utterance encoder


def init_encoder_params(rng: np.random.Generator, cfg: ModelConfig, vocab_size: int) -> Params:
    half = cfg.d // 2
    p: Params = {"enc.emb": Tensor(rng.uniform(-0.1, 0.1, size=(vocab_size, cfg.d_emb)), requires_grad=True, name="enc.emb")}
    p.update(init_lstm(rng, "enc.fwd", cfg.d_emb, half))
    p.update(init_lstm(rng, "enc.bwd", cfg.d_emb, half))
    if cfg.utterance_repr == "last_position":
        # the backward direction is read after its first step only
        del p["enc.bwd.Wh"]
    if cfg.cnn_context:
        p["enc.cnn.W"] = nx.glorot(rng, cfg.cnn_kernel * cfg.d, cfg.d, name="enc.cnn.W")
        p["enc.cnn.b"] = nx.zeros(cfg.d, name="enc.cnn.b")
    elif not cfg.no_self_attention:
        for key, width in (("Wq", cfg.key_dim), ("Wk", cfg.key_dim), ("Wv", cfg.d)):
            p[f"enc.{key}"] = nx.glorot(rng, cfg.d, width, name=f"enc.{key}")
    return p


def encode_utterances(
    token_ids: list[list[int]],
    params: Params,
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Encode T utterances at once; returns H (T x d).

    Utterances are right-padded to a common length. The backward direction
    runs over each utterance reversed within its own length, so its first
    step always sees the final token and padding never leaks into any state
    that is read out.
    """
    lengths = np.array([len(t) for t in token_ids])
    if lengths.min() < 1:
        raise ValueError("cannot encode an empty utterance")
    T, kmax = len(token_ids), int(lengths.max())
    fwd_idx = np.full((T, kmax), PAD, dtype=np.int64)
    bwd_idx = np.full((T, kmax), PAD, dtype=np.int64)
    for r, toks in enumerate(token_ids):
        fwd_idx[r, : len(toks)] = toks
        bwd_idx[r, : len(toks)] = toks[::-1]

    emb = params["enc.emb"]
    p_drop = cfg.dropout if cfg.dropout_embed else 0.0
    half = cfg.d // 2
    projected = {}
    for direction, idx in (("fwd", fwd_idx), ("bwd", bwd_idx)):
        # embed every (step, utterance) pair at once, step-major
        x = nx.take_rows(emb, idx.T.reshape(-1))
        x = nx.dropout(x, p_drop, training, rng)
        xp = nx.matmul(x, params[f"enc.{direction}.Wx"])
        projected[direction] = [nx.take_rows(xp, np.arange(k * T, (k + 1) * T)) for k in range(kmax)]

    fwd = lstm_steps(projected["fwd"], params, "enc.fwd", half)
    last = lengths - 1
    fwd_out = _gather_steps(fwd, last)
    if cfg.utterance_repr == "last_position":
        # both directions read at the final token position
        bwd = lstm_steps(projected["bwd"][:1], params, "enc.bwd", half)
        bwd_out = bwd[0]
    else:
        bwd = lstm_steps(projected["bwd"], params, "enc.bwd", half)
        bwd_out = _gather_steps(bwd, last)
    return nx.concat_cols(fwd_out, bwd_out)


def encode_utterance(token_ids: list[int], params: Params, cfg: ModelConfig) -> Tensor:
    """Single utterance -> 1 x d."""
    if not token_ids:
        raise ValueError("cannot encode an empty utterance")
    return encode_utterances([token_ids], params, cfg)


# ---------------------------------------------------------------- dialog context


def self_attention(H: Tensor, params: Params, key_dim: int | None = None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention across utterances with a residual.

    Returns ``(C, weights)`` where ``C = softmax_rows(Q K^T / sqrt(d_k)) V + H``.
    """
    Q = nx.matmul(H, params["enc.Wq"])
    K = nx.matmul(H, params["enc.Wk"])
    V = nx.matmul(H, params["enc.Wv"])
    d_k = key_dim or Q.shape[1]
    weights = nx.softmax_rows(nx.scale(nx.matmul(Q, nx.transpose(K)), 1.0 / np.sqrt(d_k)))
    return nx.add(nx.matmul(weights, V), H), weights


def cnn_context(H: Tensor, params: Params, kernel: int) -> Tensor:
    """Zero-padded 1-d convolution over utterance positions, ReLU, residual."""
    left = (kernel - 1) // 2
    taps = [nx.shift_rows(H, left - j) for j in range(kernel)]
    conv = nx.add_bias(nx.matmul(nx.concat_cols(*taps), params["enc.cnn.W"]), params["enc.cnn.b"])
    return nx.add(nx.relu(conv), H)


def encode_dialog(
    enc: EncodedDialog,
    params: Params,
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> DialogEncoding:
    H = encode_utterances(enc.tokens, params, cfg, training, rng)
    weights = None
    if cfg.cnn_context:
        C = cnn_context(H, params, cfg.cnn_kernel)
    elif cfg.no_self_attention:
        C = H
    else:
        C, w = self_attention(H, params, cfg.key_dim)
        weights = w.data
    if cfg.dropout_context:
        C = nx.dropout(C, cfg.dropout, training, rng)
    return DialogEncoding(H=H, C=C, D0=C, S0=C, attention=weights)
