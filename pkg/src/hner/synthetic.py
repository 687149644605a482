"""Small generated NER corpus with deterministic entity patterns.

Every entity phrase always carries the same type, so a working tagger can fit
the corpus exactly. Used for smoke runs and end-to-end tests.
"""

from __future__ import annotations

import numpy as np

from .crf import LabelScheme
from .data import Corpus, Sentence

METHODS = [
    ["neural", "network"],
    ["CRF"],
    ["SVM"],
    ["transformer"],
    ["random", "forest"],
    ["BiLSTM", "encoder"],
    ["decision", "tree"],
]
TASKS = [
    ["parsing"],
    ["machine", "translation"],
    ["entity", "recognition"],
    ["summarization"],
    ["question", "answering"],
]
TEMPLATES = [
    "we apply {M} to {T} .",
    "{M} improves {T} results .",
    "the {M} model is used for {T} .",
    "results on {T} show that {M} works well .",
    "{T} remains hard for {M} .",
    "our {M} baseline is strong .",
    "{T} is studied .",
]


def _tagged(words: list[str], typ: str) -> list[tuple[str, str]]:
    return [(w, ("B-" if i == 0 else "I-") + typ) for i, w in enumerate(words)]


def make_corpus(n_sentences: int = 50, seed: int = 0) -> Corpus:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sentences):
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        method = METHODS[rng.integers(len(METHODS))]
        task = TASKS[rng.integers(len(TASKS))]
        pairs: list[tuple[str, str]] = []
        for tok in template.split():
            if tok == "{M}":
                pairs += _tagged(method, "Method")
            elif tok == "{T}":
                pairs += _tagged(task, "Task")
            else:
                pairs.append((tok, "O"))
        out.append(Sentence([w for w, _ in pairs], [t for _, t in pairs]))
    return Corpus(out, LabelScheme(["Method", "Task"]))
