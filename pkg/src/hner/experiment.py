"""Wiring used by the CLI: corpora -> examples, configs -> models, models <-> checkpoints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import config as cfgmod
from .autograd import Tensor
from .checkpoint import Checkpoint, CheckpointError, check_names
from .crf import LabelScheme
from .data import Corpus, Sentence
from .model import EncoderConfig, Tagger, WordLayerConfig
from .tokenizer import Vocabulary, build_vocabulary, tokenize_sentence
from .trainer import Example, Snapshot, as_params

FORMAT_NAME = "hner"


def make_examples(
    sentences: Sequence[Sentence], vocab: Vocabulary, scheme: Optional[LabelScheme]
) -> list[Example]:
    """Tokenize and label-encode; with ``scheme=None`` labels are left empty (evaluation only)."""
    out = []
    for s in sentences:
        tags = list(s.tags) if s.tags is not None else ["O"] * len(s.words)
        labels = scheme.encode(tags) if scheme is not None else []
        out.append(Example(tokenize_sentence(s.words, vocab), labels, tags))
    return out


def merged_scheme(*corpora: Optional[Corpus]) -> LabelScheme:
    types = set()
    for c in corpora:
        if c is not None:
            types.update(c.scheme.entity_types)
    return LabelScheme(sorted(types))


def vocabulary_for(corpus: Corpus, min_count: int) -> Vocabulary:
    return build_vocabulary((w for s in corpus.sentences for w in s.words), min_count)


def build_model(values: dict, vocab_size: int, num_labels: int, seed: Optional[int] = None) -> Tagger:
    return Tagger(
        cfgmod.encoder_config(values, vocab_size),
        cfgmod.word_layer_config(values),
        num_labels,
        dropout=values["dropout"],
        seed=values["seed"] if seed is None else seed,
        masked_training=values["crf.masked_training"],
    )


def ablation_values(values: dict, mode: str) -> dict:
    """Config variant for an ablation arm.

    ``word``: the configured encoder plus a word-level transformer layer.
    ``subword``: no word layer, one more encoder layer instead; the word
    layer's FFN width is forced to the encoder's so both arms hold the same
    number of parameters. ``lstm``: a Bi-LSTM word layer.
    """
    v = dict(values)
    v["word_layer.ffn"] = v["encoder.ffn"]
    if mode == "word":
        v["word_layer.kind"] = "transformer"
    elif mode == "subword":
        v["word_layer.kind"] = "none"
        v["encoder.layers"] = values["encoder.layers"] + 1
    elif mode == "lstm":
        v["word_layer.kind"] = "bilstm"
    else:
        raise ValueError(f"unknown ablation mode {mode!r}")
    return v


# -- checkpoints -------------------------------------------------------------


def to_checkpoint(
    model: Tagger,
    vocab: Vocabulary,
    scheme: LabelScheme,
    snap: Optional[Snapshot] = None,
    metadata: Optional[dict] = None,
) -> Checkpoint:
    """Serialize a model; ``snap`` supplies live/EMA/optimizer tensors when given."""
    if snap is None:
        snap = Snapshot({n: p.data for n, p in model.params.items()}, None, None)
    tensors = {f"model.{n}": a for n, a in snap.live.items()}
    meta = dict(metadata or {})
    if snap.ema is not None:
        tensors.update({f"ema.{n}": a for n, a in snap.ema.items()})
        meta["ema_step"] = snap.ema_step
    if snap.opt is not None:
        tensors.update({f"adam.m.{n}": a for n, a in snap.opt.m.items()})
        tensors.update({f"adam.v.{n}": a for n, a in snap.opt.v.items()})
        meta["adam_step"] = snap.opt.step
    configs = {
        "format": FORMAT_NAME,
        **model.config_dict(),
        "entity_types": scheme.entity_types,
        "vocab": vocab.tokens,
        "continuation_prefix": vocab.continuation_prefix,
    }
    return Checkpoint(tensors, configs, meta)


@dataclass
class LoadedModel:
    model: Tagger
    vocab: Vocabulary
    scheme: LabelScheme
    ema_params: Optional[dict[str, Tensor]]
    checkpoint: Checkpoint

    def params_for(self, which: str) -> dict[str, Tensor]:
        if which == "live":
            return self.model.params
        if which == "ema":
            if self.ema_params is None:
                raise CheckpointError("checkpoint holds no EMA parameters")
            return self.ema_params
        raise ValueError(f"unknown parameter set {which!r}")


def from_checkpoint(ckpt: Checkpoint) -> LoadedModel:
    c = ckpt.configs
    try:
        encoder = EncoderConfig(**c["encoder"])
        word = WordLayerConfig(**c["word_layer"])
        vocab = Vocabulary(c["vocab"], c.get("continuation_prefix", "##"))
        scheme = LabelScheme(c["entity_types"])
        num_labels = int(c["num_labels"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint configs invalid: {e}") from None
    if num_labels != len(scheme):
        raise CheckpointError(f"num_labels {num_labels} != {len(scheme)} labels in scheme")
    reference = Tagger(encoder, word, num_labels, dropout=c.get("dropout", 0.1))
    names = list(reference.params)

    def group(prefix):
        return {k[len(prefix):]: v for k, v in ckpt.tensors.items() if k.startswith(prefix)}

    live = group("model.")
    check_names(names, live)
    for n in names:
        if live[n].shape != reference.params[n].shape:
            raise CheckpointError(
                f"tensor {n!r} has shape {live[n].shape}, model expects {reference.params[n].shape}"
            )
    params = {n: Tensor(live[n], requires_grad=True, name=n) for n in names}
    model = Tagger(
        encoder,
        word,
        num_labels,
        params,
        dropout=c.get("dropout", 0.1),
        masked_training=c.get("masked_training", False),
    )
    shadow = group("ema.")
    ema = None
    if shadow:
        check_names(names, shadow)
        ema = as_params({n: shadow[n] for n in names})
    return LoadedModel(model, vocab, scheme, ema, ckpt)
