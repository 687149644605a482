"""End-to-end gradient check of the tagger NLL against central differences."""

from __future__ import annotations

import numpy as np

from .autograd import Tape, backward, zero_grad
from .crf import nll_loss
from .model import (
    EncoderConfig,
    Tagger,
    WordLayerConfig,
    crf_parameters,
    encode_subwords,
    gather_first_subtokens,
    project_to_labels,
    word_interaction,
)
from .numeric import finite_difference_gradient, relative_error
from .tokenizer import TokenizedSentence

GROUPS = (
    ("embeddings", lambda n: n.startswith("embed.")),
    ("attention", lambda n: n.startswith("encoder.") and ".attn." in n),
    ("ffn", lambda n: n.startswith("encoder.") and ".ffn." in n),
    ("layer_norm", lambda n: n.startswith("encoder.") and ".ln" in n),
    ("word_layer", lambda n: n.startswith("word.")),
    ("projection", lambda n: n.startswith("proj.")),
    ("transitions", lambda n: n == "crf.transitions"),
    ("start_end", lambda n: n in ("crf.start", "crf.end")),
)


def group_of(name: str) -> str:
    for group, match in GROUPS:
        if match(name):
            return group
    raise KeyError(name)


def _stage(name: str) -> str:
    if name.startswith(("embed.", "encoder.")):
        return "encoder"
    return name.split(".")[0]


def random_case(
    seed: int,
    kind: str = "transformer",
    d: int = 8,
    num_labels: int = 3,
    scale: float = 0.5,
) -> tuple[Tagger, TokenizedSentence, list[int]]:
    """A small tagger with all parameters randomized, plus a 3-word, 5-subword
    sentence and random gold labels."""
    rng = np.random.default_rng(seed)
    vocab_size = 9
    encoder = EncoderConfig(
        num_layers=1, hidden_dim=d, num_heads=2, ffn_dim=d, max_positions=6, vocab_size=vocab_size
    )
    word = WordLayerConfig(kind=kind, hidden_dim=d, num_heads=2, ffn_dim=d)
    model = Tagger(encoder, word, num_labels, dropout=0.0, seed=seed)
    for name, p in model.params.items():
        base = 1.0 if name.endswith("gamma") else 0.0
        p.data = base + scale * rng.standard_normal(p.shape)
    ids = [int(i) for i in rng.integers(4, vocab_size, size=5)]
    sent = TokenizedSentence(["w0", "w1", "w2"], ids, [0, 2, 3], [str(i) for i in ids])
    labels = [int(y) for y in rng.integers(0, num_labels, size=3)]
    return model, sent, labels


def check_gradients(
    seed: int, eps: float = 1e-5, kind: str = "transformer", num_labels: int = 3
) -> dict[str, float]:
    """Norm-wise relative error per parameter group.

    Errors are pooled per group rather than per tensor: the attention key bias
    has an identically zero gradient (softmax ignores a per-query shift), so on
    its own it only measures finite-difference noise.
    """
    model, sent, labels = random_case(seed, kind, num_labels=num_labels)
    params = model.params
    zero_grad(params.values())
    with Tape() as tape:
        loss = model.loss(sent, labels)
    backward(loss, tape)

    # Each parameter's loss is evaluated from the last activation that does
    # not depend on it; this is the same function, only cheaper to evaluate.
    H = encode_subwords(sent, params, model.encoder)
    Hw = gather_first_subtokens(H, sent.word_first_index)
    Hi = word_interaction(Hw, params, model.word_layer)
    em = project_to_labels(Hi, params)
    crf = crf_parameters(params)
    stages = {
        "encoder": lambda: float(model.loss(sent, labels)),
        "word": lambda: float(
            nll_loss(project_to_labels(word_interaction(Hw, params, model.word_layer), params), crf, labels)
        ),
        "proj": lambda: float(nll_loss(project_to_labels(Hi, params), crf, labels)),
        "crf": lambda: float(nll_loss(em, crf, labels)),
    }

    names = list(params)
    numeric = [
        finite_difference_gradient(stages[_stage(n)], [params[n]], eps)[0] for n in names
    ]
    pooled: dict[str, tuple[list, list]] = {}
    for name, fd in zip(names, numeric):
        analytic = params[name].grad if params[name].grad is not None else np.zeros(fd.shape)
        a_list, n_list = pooled.setdefault(group_of(name), ([], []))
        a_list.append(analytic.ravel())
        n_list.append(fd.ravel())
    return {
        g: relative_error(np.concatenate(a), np.concatenate(n)) for g, (a, n) in pooled.items()
    }
