"""Subword encoder -> first-subtoken gather -> word-level layer -> label scores.

Parameters live in a flat ``dict[str, Tensor]`` whose keys double as the
checkpoint tensor names (``encoder.0.attn.q.weight``, ``word.fwd.w_ih``, ...).
The functional entry points take that dict explicitly, so the same code runs
with live or EMA-shadow parameters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .crf import ConstraintMask, CrfParameters, nll_loss, viterbi_decode
from .tokenizer import PAD_ID, TokenizedSentence

Params = Mapping[str, Tensor]

WORD_LAYER_KINDS = ("transformer", "bilstm", "none")


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    max_positions: int = 256
    vocab_size: int = 32

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        for field in ("hidden_dim", "num_heads", "ffn_dim", "max_positions", "vocab_size"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )


@dataclass(frozen=True)
class WordLayerConfig:
    kind: str = "transformer"
    hidden_dim: int = 64
    num_heads: int = 8
    ffn_dim: int = 256

    def __post_init__(self):
        if self.kind not in WORD_LAYER_KINDS:
            raise ValueError(f"word layer kind must be one of {WORD_LAYER_KINDS}")
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        if self.kind == "transformer":
            if self.num_heads <= 0 or self.ffn_dim <= 0:
                raise ValueError("num_heads and ffn_dim must be positive")
            if self.hidden_dim % self.num_heads:
                raise ValueError(
                    f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
                )
        if self.kind == "bilstm" and self.hidden_dim % 2:
            raise ValueError("bilstm hidden_dim must be even (split across directions)")


# -- initialization ----------------------------------------------------------


def _normal(rng, shape, std):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def _transformer_layer_params(prefix: str, d: int, ffn: int, rng, std: float) -> dict:
    p = {}
    for name in ("q", "k", "v", "o"):
        p[f"{prefix}.attn.{name}.weight"] = _normal(rng, (d, d), std)
        p[f"{prefix}.attn.{name}.bias"] = _zeros(d)
    p[f"{prefix}.ln1.gamma"] = _ones(d)
    p[f"{prefix}.ln1.beta"] = _zeros(d)
    p[f"{prefix}.ffn.in.weight"] = _normal(rng, (d, ffn), std)
    p[f"{prefix}.ffn.in.bias"] = _zeros(ffn)
    p[f"{prefix}.ffn.out.weight"] = _normal(rng, (ffn, d), std)
    p[f"{prefix}.ffn.out.bias"] = _zeros(d)
    p[f"{prefix}.ln2.gamma"] = _ones(d)
    p[f"{prefix}.ln2.beta"] = _zeros(d)
    return p


def init_parameters(
    encoder: EncoderConfig,
    word_layer: WordLayerConfig,
    num_labels: int,
    rng: np.random.Generator,
    std: float = 0.02,
) -> dict[str, Tensor]:
    """Normal(0, std) weights, zero biases, unit layer-norm gains."""
    d = encoder.hidden_dim
    if word_layer.hidden_dim != d:
        raise ValueError(f"word layer dim {word_layer.hidden_dim} != encoder dim {d}")
    p = {
        "embed.tokens": _normal(rng, (encoder.vocab_size, d), std),
        "embed.positions": _normal(rng, (encoder.max_positions, d), std),
    }
    for i in range(encoder.num_layers):
        p.update(_transformer_layer_params(f"encoder.{i}", d, encoder.ffn_dim, rng, std))
    if word_layer.kind == "transformer":
        p.update(_transformer_layer_params("word", d, word_layer.ffn_dim, rng, std))
    elif word_layer.kind == "bilstm":
        h = d // 2
        for direction in ("fwd", "bwd"):
            p[f"word.{direction}.w_ih"] = _normal(rng, (d, 4 * h), std)
            p[f"word.{direction}.w_hh"] = _normal(rng, (h, 4 * h), std)
            p[f"word.{direction}.bias"] = _zeros(4 * h)
    p["proj.weight"] = _normal(rng, (d, num_labels), std)
    p["proj.bias"] = _zeros(num_labels)
    p["crf.transitions"] = _normal(rng, (num_labels, num_labels), std)
    p["crf.start"] = _zeros(num_labels)
    p["crf.end"] = _zeros(num_labels)
    for name, t in p.items():
        t.name = name
    return p


def count_parameters(params: Mapping) -> int:
    """Total number of scalar entries across all tensors."""
    return int(sum(np.asarray(getattr(t, "data", t)).size for t in params.values()))


# -- layers ------------------------------------------------------------------


def transformer_layer(
    x: Tensor,
    params: Params,
    prefix: str,
    num_heads: int,
    key_mask: Optional[np.ndarray] = None,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    eps: float = 1e-5,
) -> Tensor:
    """Post-norm encoder layer: self-attention, add&norm, GELU FFN, add&norm.

    ``key_mask`` is a boolean vector over positions; False entries are
    excluded as attention keys.
    """
    S, d = x.shape
    dh = d // num_heads

    def heads(name, axes):
        proj = x @ params[f"{prefix}.attn.{name}.weight"] + params[f"{prefix}.attn.{name}.bias"]
        return proj.reshape(S, num_heads, dh).transpose(*axes)

    q = heads("q", (1, 0, 2))  # [h, S, dh]
    k_t = heads("k", (1, 2, 0))  # [h, dh, S]
    v = heads("v", (1, 0, 2))
    scores = (q @ k_t) * (1.0 / math.sqrt(dh))
    if key_mask is not None:
        scores = scores + np.where(key_mask, 0.0, -np.inf)
    attn = ag.dropout(ag.softmax(scores, axis=-1), dropout, rng)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(S, d)
    out = ctx @ params[f"{prefix}.attn.o.weight"] + params[f"{prefix}.attn.o.bias"]
    x = ag.layer_norm(
        x + ag.dropout(out, dropout, rng),
        params[f"{prefix}.ln1.gamma"],
        params[f"{prefix}.ln1.beta"],
        eps,
    )
    hidden = ag.gelu(x @ params[f"{prefix}.ffn.in.weight"] + params[f"{prefix}.ffn.in.bias"])
    ff = hidden @ params[f"{prefix}.ffn.out.weight"] + params[f"{prefix}.ffn.out.bias"]
    return ag.layer_norm(
        x + ag.dropout(ff, dropout, rng),
        params[f"{prefix}.ln2.gamma"],
        params[f"{prefix}.ln2.beta"],
        eps,
    )


def _lstm_direction(xw: Tensor, w_hh: Tensor, order: Sequence[int], h_dim: int) -> list:
    """Run one LSTM direction; ``xw`` holds precomputed input projections."""
    h = Tensor(np.zeros((1, h_dim)))
    c = Tensor(np.zeros((1, h_dim)))
    outputs = {}
    for t in order:
        hc = ag.lstm_cell(xw[t : t + 1] + h @ w_hh, c)
        h, c = hc[:, :h_dim], hc[:, h_dim:]
        outputs[t] = h
    return [outputs[t] for t in range(len(order))]


def bilstm_layer(x: Tensor, params: Params, prefix: str = "word") -> Tensor:
    """Forward and backward LSTMs of width d/2 each, concatenated to width d.

    Gate order in the packed weights is input, forget, cell, output.
    """
    W, d = x.shape
    h_dim = d // 2
    halves = []
    for direction, order in (("fwd", range(W)), ("bwd", range(W - 1, -1, -1))):
        xw = x @ params[f"{prefix}.{direction}.w_ih"] + params[f"{prefix}.{direction}.bias"]
        steps = _lstm_direction(xw, params[f"{prefix}.{direction}.w_hh"], order, h_dim)
        halves.append(ag.concat(steps, axis=0))
    return ag.concat(halves, axis=1)


# -- pipeline stages -----------------------------------------------------------


def encode_subwords(
    sent: Union[TokenizedSentence, Sequence[int]],
    params: Params,
    config: EncoderConfig,
    *,
    attention_mask: Optional[np.ndarray] = None,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Contextual embeddings ``[S, d]`` for a subword id sequence.

    PAD ids are masked out as attention keys unless ``attention_mask`` is
    given explicitly.
    """
    ids = np.asarray(getattr(sent, "subword_ids", sent), dtype=np.int64)
    S = ids.shape[0]
    if ids.ndim != 1 or S == 0:
        raise ValueError("expected a non-empty 1-d id sequence")
    if S > config.max_positions:
        raise ValueError(f"sequence length {S} exceeds max_positions {config.max_positions}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError(f"subword id out of range [0, {config.vocab_size})")
    if attention_mask is None:
        attention_mask = ids != PAD_ID
    x = params["embed.tokens"][ids] + params["embed.positions"][np.arange(S)]
    for i in range(config.num_layers):
        x = transformer_layer(
            x, params, f"encoder.{i}", config.num_heads, attention_mask, dropout, rng
        )
    return x


def gather_first_subtokens(H: Tensor, word_first_index: Sequence[int]) -> Tensor:
    idx = np.asarray(word_first_index, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("word_first_index must be a non-empty list")
    if idx.min() < 0 or idx.max() >= H.shape[0]:
        raise IndexError(f"word_first_index {list(idx)} out of bounds for {H.shape[0]} rows")
    return H[idx]


def word_interaction(
    Hw: Tensor,
    params: Params,
    cfg: WordLayerConfig,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    if Hw.shape[-1] != cfg.hidden_dim:
        raise ValueError(f"input dim {Hw.shape[-1]} != word layer dim {cfg.hidden_dim}")
    if cfg.kind == "none":
        return Hw
    if cfg.kind == "bilstm":
        return bilstm_layer(Hw, params)
    return transformer_layer(Hw, params, "word", cfg.num_heads, None, dropout, rng)


def project_to_labels(Hw: Tensor, params: Params) -> Tensor:
    W, P = params["proj.weight"], params["proj.bias"]
    if Hw.shape[-1] != W.shape[0] or P.shape != (W.shape[1],):
        raise ValueError(
            f"shape mismatch: input {Hw.shape}, weight {W.shape}, bias {P.shape}"
        )
    return Hw @ W + P


def crf_parameters(params: Params) -> CrfParameters:
    return CrfParameters(params["crf.transitions"], params["crf.start"], params["crf.end"])


class Tagger:
    """Bundles the configs with a parameter dict and wires the stages together."""

    def __init__(
        self,
        encoder: EncoderConfig,
        word_layer: WordLayerConfig,
        num_labels: int,
        params: Optional[dict[str, Tensor]] = None,
        *,
        dropout: float = 0.1,
        seed: int = 0,
        masked_training: bool = False,
    ):
        self.encoder = encoder
        self.word_layer = word_layer
        self.num_labels = num_labels
        self.dropout = dropout
        self.masked_training = masked_training
        if params is None:
            params = init_parameters(encoder, word_layer, num_labels, np.random.default_rng(seed))
        self.params = params

    def config_dict(self) -> dict:
        return {
            "encoder": asdict(self.encoder),
            "word_layer": asdict(self.word_layer),
            "num_labels": self.num_labels,
            "dropout": self.dropout,
            "masked_training": self.masked_training,
        }

    def emissions(
        self,
        sent: TokenizedSentence,
        params: Optional[Params] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """Label scores ``[W, L]``; passing ``rng`` turns dropout on."""
        params = self.params if params is None else params
        rate = self.dropout if rng is not None else 0.0
        H = encode_subwords(sent, params, self.encoder, dropout=rate, rng=rng)
        Hw = gather_first_subtokens(H, sent.word_first_index)
        Hw = word_interaction(Hw, params, self.word_layer, rate, rng)
        return project_to_labels(Hw, params)

    def loss(
        self,
        sent: TokenizedSentence,
        labels: Sequence[int],
        params: Optional[Params] = None,
        rng: Optional[np.random.Generator] = None,
        mask: Optional[ConstraintMask] = None,
    ) -> Tensor:
        params = self.params if params is None else params
        em = self.emissions(sent, params, rng)
        return nll_loss(em, crf_parameters(params), labels, mask if self.masked_training else None)

    def decode(
        self, sent: TokenizedSentence, mask: Optional[ConstraintMask], params: Optional[Params] = None
    ) -> list[int]:
        params = self.params if params is None else params
        path, _ = viterbi_decode(self.emissions(sent, params), crf_parameters(params), mask)
        return path
