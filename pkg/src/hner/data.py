"""CoNLL-style token-per-line corpora."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .crf import LabelScheme, parse_tag
from .metrics import extract_spans


class ConllError(ValueError):
    """Malformed or BIO-invalid input; carries the offending line number."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass
class Sentence:
    words: list[str]
    tags: Optional[list[str]]


@dataclass
class Corpus:
    sentences: list[Sentence]
    scheme: LabelScheme

    def __len__(self) -> int:
        return len(self.sentences)


def parse_conll(path, repair: bool = False, require_tags: bool = True) -> Corpus:
    """Read a token-per-line file: token and tag separated by whitespace.

    With more than two columns the first is the token and the last the tag.
    Blank lines end sentences and ``-DOCSTART-`` lines are skipped. An ``I-t``
    that does not follow ``B-t``/``I-t`` is an error, or is rewritten to
    ``B-t`` when ``repair`` is set. With ``require_tags=False`` single-column
    lines are accepted and such sentences carry ``tags=None``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConllError(f"not valid UTF-8 ({e})", path) from None
    sentences: list[Sentence] = []
    words: list[str] = []
    tags: list[str] = []
    untagged = False

    def flush():
        nonlocal words, tags, untagged
        if words:
            if untagged and tags:
                raise ConllError("sentence mixes tagged and untagged lines", path, lineno)
            sentences.append(Sentence(words, None if untagged else tags))
        words, tags, untagged = [], [], False

    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            continue
        fields = line.split()
        if len(fields) == 1:
            if require_tags:
                raise ConllError(f"expected 'token tag', got {raw!r}", path, lineno)
            untagged = True
            words.append(fields[0])
            continue
        token, tag = fields[0], fields[-1]
        try:
            prefix, typ = parse_tag(tag)
        except ValueError:
            raise ConllError(f"invalid tag {tag!r}", path, lineno) from None
        if prefix == "I":
            prev = tags[-1] if tags else "O"
            if prev not in (f"B-{typ}", f"I-{typ}"):
                if not repair:
                    raise ConllError(f"{tag} cannot follow {prev}", path, lineno)
                tag = f"B-{typ}"
        words.append(token)
        tags.append(tag)
    flush()
    if not sentences:
        raise ConllError("no sentences found", path)
    scheme = LabelScheme.from_tags(t for s in sentences for t in (s.tags or ()))
    return Corpus(sentences, scheme)


def format_conll(sentences: Sequence[Sentence]) -> str:
    blocks = []
    for s in sentences:
        if s.tags is None:
            blocks.append("\n".join(s.words))
        else:
            blocks.append("\n".join(f"{w}\t{t}" for w, t in zip(s.words, s.tags)))
    return "\n\n".join(blocks) + "\n"


def write_conll(sentences: Sequence[Sentence], path) -> None:
    Path(path).write_text(format_conll(sentences), encoding="utf-8")


def corpus_stats(corpus: Corpus) -> dict:
    """Sentence, token and per-type entity counts (lenient chunking)."""
    entities = {t: 0 for t in corpus.scheme.entity_types}
    for s in corpus.sentences:
        for span in extract_spans(s.tags or []):
            entities[span.entity_type] = entities.get(span.entity_type, 0) + 1
    return {
        "sentences": len(corpus.sentences),
        "tokens": sum(len(s.words) for s in corpus.sentences),
        "entities": dict(sorted(entities.items())),
    }


# Sentence counts per split (train, dev, test); None where a split does not exist.
REFERENCE_SPLIT_SIZES = {
    "scierc": (350, 50, 50),
    "tdm": (1523, None, 487),
    "ncbi": (5432, 923, 940),
}
