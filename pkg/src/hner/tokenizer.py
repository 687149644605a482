"""WordPiece-style subword tokenization that remembers where each word starts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)


class VocabularyError(ValueError):
    pass


class Vocabulary:
    """Subword inventory with dense ids; the four special tokens take ids 0-3."""

    def __init__(self, tokens: Sequence[str], continuation_prefix: str = "##"):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise VocabularyError(f"first four entries must be {SPECIAL_TOKENS}")
        index: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise VocabularyError(f"empty subword at id {i}")
            if tok in index:
                raise VocabularyError(f"duplicate subword {tok!r} at ids {index[tok]} and {i}")
            index[tok] = i
        self.tokens = tokens
        self.index = index
        self.continuation_prefix = continuation_prefix

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.tokens == other.tokens
            and self.continuation_prefix == other.continuation_prefix
        )

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    @classmethod
    def from_pieces(cls, pieces: Iterable[str], continuation_prefix: str = "##") -> "Vocabulary":
        """Specials first, then ``pieces`` in order (duplicates and specials skipped)."""
        seen = set(SPECIAL_TOKENS)
        tokens = list(SPECIAL_TOKENS)
        for p in pieces:
            if p not in seen:
                seen.add(p)
                tokens.append(p)
        return cls(tokens, continuation_prefix)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")


def build_vocabulary(words: Iterable[str], min_count: int = 2) -> Vocabulary:
    """Inventory from a word list: frequent whole words plus every character
    as both an initial piece and a ``##`` continuation piece.

    This is not a subword learner; it only guarantees that any word built from
    seen characters segments without falling back to ``[UNK]``.
    """
    counts = Counter(words)
    frequent = sorted(w for w, c in counts.items() if c >= min_count)
    chars = sorted({ch for w in counts for ch in w})
    return Vocabulary.from_pieces([*frequent, *chars, *("##" + ch for ch in chars)])


@dataclass
class TokenizedSentence:
    words: list[str]
    subword_ids: list[int]
    word_first_index: list[int]
    pieces: list[str]

    def __post_init__(self):
        if len(self.word_first_index) != len(self.words):
            raise ValueError("one first-subtoken index per word is required")
        prev = -1
        for i in self.word_first_index:
            if i <= prev or i >= len(self.subword_ids):
                raise ValueError(f"invalid word_first_index {self.word_first_index}")
            prev = i

    def __len__(self) -> int:
        return len(self.subword_ids)


def tokenize_word(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match segmentation; an uncoverable word becomes ``[UNK]``."""
    if not word:
        raise ValueError("cannot tokenize an empty word")
    if any(ch.isspace() for ch in word):
        raise ValueError(f"word contains whitespace: {word!r}")
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while end > start:
            candidate = word[start:end]
            if start > 0:
                candidate = vocab.continuation_prefix + candidate
            if candidate in vocab:
                piece = candidate
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


def tokenize_sentence(
    words: Sequence[str], vocab: Vocabulary, add_boundaries: bool = True
) -> TokenizedSentence:
    if not words:
        raise ValueError("cannot tokenize an empty sentence")
    pieces = [CLS] if add_boundaries else []
    first = []
    for w in words:
        first.append(len(pieces))
        pieces.extend(tokenize_word(w, vocab))
    if add_boundaries:
        pieces.append(SEP)
    return TokenizedSentence(
        words=list(words),
        subword_ids=[vocab.id_of(p) for p in pieces],
        word_first_index=first,
        pieces=pieces,
    )
