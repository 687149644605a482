"""Linear-chain CRF over word emissions with BIO-constrained Viterbi decoding."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .autograd import Tensor, _as_tensor, _result, concat, tsum
from .numeric import logsumexp_axis

_TAG = re.compile(r"^(?:O|([BI])-(.+))$")


def parse_tag(tag: str) -> tuple[str, Optional[str]]:
    """Split a BIO tag into (prefix, type); ``"O"`` gives ``("O", None)``."""
    m = _TAG.match(tag)
    if m is None:
        raise ValueError(f"not a BIO tag: {tag!r}")
    if m.group(1) is None:
        return "O", None
    return m.group(1), m.group(2)


class LabelScheme:
    """BIO labels over ordered entity types: ``O`` is 0, then ``B-t``, ``I-t`` per type."""

    def __init__(self, entity_types: Sequence[str]):
        if len(set(entity_types)) != len(entity_types):
            raise ValueError(f"duplicate entity types in {entity_types}")
        self.entity_types = list(entity_types)
        self.labels = ["O"]
        for t in self.entity_types:
            self.labels += [f"B-{t}", f"I-{t}"]
        self.label_to_id = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelScheme) and self.entity_types == other.entity_types

    def __repr__(self) -> str:
        return f"LabelScheme({self.entity_types})"

    @classmethod
    def from_tags(cls, tags: Iterable[str]) -> "LabelScheme":
        types = {parse_tag(t)[1] for t in tags}
        types.discard(None)
        return cls(sorted(types))

    def encode(self, tags: Sequence[str]) -> list[int]:
        try:
            return [self.label_to_id[t] for t in tags]
        except KeyError as e:
            raise ValueError(f"tag {e.args[0]!r} is not in {self}") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.labels[i] for i in ids]

    def allows(self, prev: Optional[int], nxt: int) -> bool:
        """Whether label ``nxt`` may follow ``prev`` (``None`` = sentence start)."""
        prefix, typ = parse_tag(self.labels[nxt])
        if prefix != "I":
            return True
        if prev is None:
            return False
        return self.labels[prev] in (f"B-{typ}", f"I-{typ}")


@dataclass
class CrfParameters:
    transitions: Tensor  # [L, L], score of label j following label i
    start: Tensor  # [L]
    end: Tensor  # [L]

    @property
    def num_labels(self) -> int:
        return self.start.shape[0]

    @classmethod
    def zeros(cls, num_labels: int) -> "CrfParameters":
        L = num_labels
        return cls(
            Tensor(np.zeros((L, L)), requires_grad=True),
            Tensor(np.zeros(L), requires_grad=True),
            Tensor(np.zeros(L), requires_grad=True),
        )


@dataclass
class ConstraintMask:
    allowed_transition: np.ndarray  # bool [L, L]
    allowed_start: np.ndarray  # bool [L]
    allowed_end: np.ndarray  # bool [L]

    def disallowed_pairs(self) -> list[tuple[int, int]]:
        return [tuple(p) for p in np.argwhere(~self.allowed_transition)]

    def is_valid(self, path: Sequence[int]) -> bool:
        if not path:
            return False
        if not self.allowed_start[path[0]] or not self.allowed_end[path[-1]]:
            return False
        return all(self.allowed_transition[a, b] for a, b in zip(path, path[1:]))

    def penalties(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Additive scores: 0 where allowed, ``-inf`` where not."""
        f = lambda m: np.where(m, 0.0, -np.inf)
        return f(self.allowed_transition), f(self.allowed_start), f(self.allowed_end)


def build_constraint_mask(scheme: LabelScheme) -> ConstraintMask:
    L = len(scheme)
    trans = np.array([[scheme.allows(i, j) for j in range(L)] for i in range(L)])
    start = np.array([scheme.allows(None, j) for j in range(L)])
    return ConstraintMask(trans, start, np.ones(L, dtype=bool))


def _check_shapes(emissions: Tensor, crf: CrfParameters) -> None:
    L = crf.num_labels
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ValueError(f"emissions must be [W, L] with W >= 1, got {emissions.shape}")
    if emissions.shape[1] != L or crf.transitions.shape != (L, L) or crf.end.shape != (L,):
        raise ValueError(
            f"shape mismatch: emissions {emissions.shape}, transitions "
            f"{crf.transitions.shape}, start {crf.start.shape}, end {crf.end.shape}"
        )


def score_sequence(emissions, crf: CrfParameters, labels: Sequence[int]) -> Tensor:
    """Unnormalized score of one label path (differentiable)."""
    emissions = _as_tensor(emissions)
    _check_shapes(emissions, crf)
    W, L = emissions.shape
    if len(labels) != W:
        raise ValueError(f"{len(labels)} labels for {W} positions")
    y = np.asarray(labels, dtype=np.int64)
    if y.min() < 0 or y.max() >= L:
        raise ValueError(f"label ids must lie in [0, {L})")
    parts = [
        crf.start[y[:1]],
        tsum(emissions[np.arange(W), y]).reshape(1),
        crf.end[y[-1:]],
    ]
    if W > 1:
        parts.append(tsum(crf.transitions[y[:-1], y[1:]]).reshape(1))
    return tsum(concat(parts))


def _forward(e, trans, start, end):
    """Log-space forward table (rows are positions) and the log partition."""
    W, L = e.shape
    alpha = np.empty((W, L))
    alpha[0] = start + e[0]
    for t in range(1, W):
        alpha[t] = logsumexp_axis(alpha[t - 1][:, None] + trans, axis=0) + e[t]
    return alpha, float(logsumexp_axis(alpha[W - 1] + end, axis=0))


def _backward(e, trans, end):
    W, L = e.shape
    beta = np.empty((W, L))
    beta[W - 1] = end
    for t in range(W - 2, -1, -1):
        beta[t] = logsumexp_axis(trans + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions, crf: CrfParameters, mask: Optional[ConstraintMask] = None) -> Tensor:
    """Log-sum over all label paths of exp(path score).

    With ``mask`` the sum runs over constraint-satisfying paths only. The
    gradient is the matrix of node/edge marginals from the forward-backward
    recursion.
    """
    emissions = _as_tensor(emissions)
    _check_shapes(emissions, crf)
    e = emissions.data
    if crf.num_labels == 1 and (mask is None or mask.is_valid([0] * e.shape[0])):
        # one path only: score it directly so that nll_loss is exactly 0
        return score_sequence(emissions, crf, [0] * e.shape[0])
    trans, start, end = crf.transitions.data, crf.start.data, crf.end.data
    if mask is not None:
        pt, ps, pe = mask.penalties()
        trans, start, end = trans + pt, start + ps, end + pe
    alpha, log_z = _forward(e, trans, start, end)

    def fn(g):
        beta = _backward(e, trans, end)
        node = np.exp(alpha + beta - log_z)
        if e.shape[0] > 1:
            edge = np.exp(
                alpha[:-1, :, None] + trans[None] + (e[1:] + beta[1:])[:, None, :] - log_z
            ).sum(axis=0)
        else:
            edge = np.zeros_like(trans)
        return g * node, g * edge, g * node[0], g * node[-1]

    return _result(
        np.array(log_z), (emissions, crf.transitions, crf.start, crf.end), fn
    )


def nll_loss(
    emissions, crf: CrfParameters, gold: Sequence[int], mask: Optional[ConstraintMask] = None
) -> Tensor:
    """Negative log-likelihood of the gold path; ``mask`` restricts the partition."""
    return log_partition(emissions, crf, mask) - score_sequence(emissions, crf, gold)


def viterbi_decode(
    emissions, crf: CrfParameters, mask: Optional[ConstraintMask] = None
) -> tuple[list[int], float]:
    """Best path among those allowed by ``mask``.

    Ties go to the lowest label id. The returned score is recomputed with
    :func:`path_score` on the returned path.
    """
    emissions = _as_tensor(emissions)
    _check_shapes(emissions, crf)
    e = emissions.data
    W, L = e.shape
    trans, start, end = crf.transitions.data, crf.start.data, crf.end.data
    if mask is not None:
        pt, ps, pe = mask.penalties()
        trans, start, end = trans + pt, start + ps, end + pe

    delta = start + e[0]
    back = np.zeros((W, L), dtype=np.int64)
    for t in range(1, W):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + e[t]
    last = int(np.argmax(delta + end))
    if not np.isfinite((delta + end)[last]):
        raise ValueError("no path satisfies the constraint mask")
    path = [last]
    for t in range(W - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, path_score(e, crf, path)


def path_score(emissions: np.ndarray, crf: CrfParameters, labels: Sequence[int]) -> float:
    """Array version of :func:`score_sequence` (same summation order, no tape)."""
    y = np.asarray(labels, dtype=np.int64)
    W = len(y)
    parts = [
        crf.start.data[y[0]],
        emissions[np.arange(W), y].sum(),
        crf.end.data[y[-1]],
    ]
    if W > 1:
        parts.append(crf.transitions.data[y[:-1], y[1:]].sum())
    return float(np.sum(parts))
