"""Full model: shared encoder, stacked relation layers, two decoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcrnet import numerics as nx
from dcrnet.config import ModelConfig
from dcrnet.corpus import EncodedDialog, LabelMap, Vocabulary
from dcrnet.decoder import PredictionBatch, init_decoder_params, joint_loss, predict
from dcrnet.encoder import DialogEncoding, Params, encode_dialog, init_encoder_params
from dcrnet.numerics import Tensor
from dcrnet.relation import init_relation_params, stack


@dataclass
class ForwardResult:
    encoding: DialogEncoding
    act: Tensor  # D^L
    sentiment: Tensor  # S^L
    traces: list[dict]
    prediction: PredictionBatch


class DCRNet:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, da_map: LabelMap, sent_map: LabelMap, params: Params | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.da_map = da_map
        self.sent_map = sent_map
        if params is None:
            rng = np.random.default_rng(cfg.seed)
            params = {}
            params.update(init_encoder_params(rng, cfg, len(vocab)))
            params.update(init_relation_params(rng, cfg))
            params.update(init_decoder_params(rng, cfg.d, len(da_map), len(sent_map)))
        self.params = params

    def forward(self, enc: EncodedDialog, training: bool = False, rng: np.random.Generator | None = None) -> ForwardResult:
        encoding = encode_dialog(enc, self.params, self.cfg, training, rng)
        D, S, traces = stack(encoding.D0, encoding.S0, self.cfg, self.params)
        return ForwardResult(encoding, D, S, traces, predict(D, S, self.params))

    def loss(self, enc: EncodedDialog, training: bool = False, rng=None, l2: float | None = None) -> Tensor:
        out = self.forward(enc, training, rng)
        lam = self.cfg.l2 if l2 is None else l2
        return joint_loss(out.prediction, enc.da, enc.sentiment, self.params, lam)

    def predict(self, enc: EncodedDialog) -> tuple[np.ndarray, np.ndarray]:
        with nx.no_grad():
            pred = self.forward(enc).prediction
        return pred.da_pred, pred.sentiment_pred

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
