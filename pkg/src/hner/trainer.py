"""Mini-batch training with Adam, EMA parameter shadowing and best-dev selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .autograd import Tape, Tensor, backward, zero_grad
from .crf import ConstraintMask, LabelScheme, build_constraint_mask
from .metrics import EvalReport, evaluate_tags
from .model import Tagger
from .tokenizer import TokenizedSentence

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 3e-5
    batch_size: int = 4
    max_epochs: int = 25
    ema_lambda: float = 0.99
    ema_enabled: bool = True
    seed: int = 0
    grad_clip_norm: Optional[float] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.ema_enabled and not 0.0 <= self.ema_lambda < 1.0:
            raise ValueError("ema_lambda must lie in [0, 1)")


@dataclass
class Example:
    sentence: TokenizedSentence
    labels: list[int]
    tags: list[str]


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], **kw) -> "OptimizerState":
        return cls(
            m={n: np.zeros(p.shape) for n, p in params.items()},
            v={n: np.zeros(p.shape) for n, p in params.items()},
            **kw,
        )


@dataclass
class EmaState:
    shadow: dict[str, Tensor]
    lam: float
    step: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], lam: float) -> "EmaState":
        return cls({n: Tensor(p.data.copy(), name=n) for n, p in params.items()}, lam)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
) -> OptimizerState:
    """Bias-corrected Adam update, applied in place to ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def ema_update(ema: EmaState, params: Mapping[str, Tensor]) -> EmaState:
    """shadow <- lam * shadow + (1 - lam) * params."""
    lam = ema.lam
    for name, p in params.items():
        s = ema.shadow[name]
        if s.shape != p.shape:
            raise ValueError(f"shadow shape {s.shape} != parameter shape {p.shape} for {name!r}")
        s.data = lam * s.data + (1.0 - lam) * p.data
    ema.step += 1
    return ema


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def shuffled_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Fisher-Yates shuffle of ``range(n)`` cut into batches; last one may be short."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train_epoch(
    model: Tagger,
    data: Sequence[Example],
    opt: OptimizerState,
    ema: Optional[EmaState],
    cfg: TrainConfig,
    rng: np.random.Generator,
    mask: Optional[ConstraintMask] = None,
) -> float:
    """One pass over ``data``; returns the mean of the per-batch mean losses."""
    if not data:
        raise ValueError("no training data")
    params = model.params
    batch_losses = []
    for batch in shuffled_batches(len(data), cfg.batch_size, rng):
        zero_grad(params.values())
        with Tape() as tape:
            total = None
            for i in batch:
                ex = data[i]
                loss = model.loss(ex.sentence, ex.labels, rng=rng, mask=mask)
                total = loss if total is None else total + loss
            mean_loss = total * (1.0 / len(batch))
        value = float(mean_loss)
        if not np.isfinite(value):
            raise TrainingError(
                f"non-finite loss {value} at optimizer step {opt.step + 1} "
                f"(batch {[data[i].sentence.words for i in batch]})"
            )
        backward(mean_loss, tape)
        grads = {n: (p.grad if p.grad is not None else np.zeros(p.shape)) for n, p in params.items()}
        if cfg.grad_clip_norm is not None:
            clip_grad_norm(grads, cfg.grad_clip_norm)
        adam_step(params, grads, opt, cfg.learning_rate)
        if ema is not None:
            ema_update(ema, params)
        batch_losses.append(value)
    return float(np.mean(batch_losses))


def predict(
    model: Tagger,
    sentences: Sequence[TokenizedSentence],
    scheme: LabelScheme,
    params: Optional[Mapping[str, Tensor]] = None,
) -> list[list[str]]:
    mask = build_constraint_mask(scheme)
    return [scheme.decode(model.decode(s, mask, params)) for s in sentences]


def evaluate(
    model: Tagger,
    data: Sequence[Example],
    scheme: LabelScheme,
    params: Optional[Mapping[str, Tensor]] = None,
) -> EvalReport:
    pred = predict(model, [ex.sentence for ex in data], scheme, params)
    return evaluate_tags([ex.tags for ex in data], pred)


@dataclass
class HistoryEntry:
    epoch: int
    dev_f1: float
    snapshot: Optional["Snapshot"] = None


@dataclass
class Snapshot:
    """Training state captured at the end of an epoch."""

    live: dict[str, np.ndarray]
    ema: Optional[dict[str, np.ndarray]]
    opt: Optional[OptimizerState]
    ema_step: int = 0

    @classmethod
    def capture(cls, params, opt: OptimizerState, ema: Optional[EmaState]) -> "Snapshot":
        return cls(
            live=snapshot(params),
            ema=snapshot(ema.shadow) if ema is not None else None,
            opt=OptimizerState(
                {n: a.copy() for n, a in opt.m.items()},
                {n: a.copy() for n, a in opt.v.items()},
                opt.step,
                opt.beta1,
                opt.beta2,
                opt.eps,
            ),
            ema_step=ema.step if ema is not None else 0,
        )

    @property
    def selected(self) -> dict[str, np.ndarray]:
        """The parameter set used for selection: EMA if tracked, else live."""
        return self.ema if self.ema is not None else self.live


def select_checkpoint(history: Sequence[HistoryEntry]) -> HistoryEntry:
    """Entry with the highest dev F1; ties go to the earliest epoch."""
    if not history:
        raise ValueError("empty checkpoint history")
    best = history[0]
    for entry in history[1:]:
        if entry.dev_f1 > best.dev_f1:
            best = entry
    return best


def snapshot(params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return {n: p.data.copy() for n, p in params.items()}


def as_params(snap: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    return {n: Tensor(a, name=n) for n, a in snap.items()}


@dataclass
class FitResult:
    best: HistoryEntry
    log: list[dict] = field(default_factory=list)


def fit(
    model: Tagger,
    train: Sequence[Example],
    dev: Optional[Sequence[Example]],
    scheme: LabelScheme,
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
    stop_at_f1: Optional[float] = None,
) -> FitResult:
    """Train for up to ``cfg.max_epochs`` and keep the best-scoring snapshot.

    Selection scores dev micro-F1 of the EMA shadow when EMA is enabled and of
    the live parameters otherwise. Without dev data the negated training loss
    is used instead. ``stop_at_f1`` ends training once the selection score
    reaches that value.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = OptimizerState.for_params(model.params)
    ema = EmaState.for_params(model.params, cfg.ema_lambda) if cfg.ema_enabled else None
    mask = build_constraint_mask(scheme)
    history: list[HistoryEntry] = []
    records = []
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        train_loss = train_epoch(model, train, opt, ema, cfg, rng, mask)
        rec = {"epoch": epoch, "train_loss": train_loss, "dev_f1_live": None, "dev_f1_ema": None}
        if dev:
            rec["dev_f1_live"] = evaluate(model, dev, scheme).micro.f1
            if ema is not None:
                rec["dev_f1_ema"] = evaluate(model, dev, scheme, ema.shadow).micro.f1
        rec["seconds"] = time.perf_counter() - t0
        records.append(rec)
        log.info(
            "epoch %d loss %.6f dev live %s ema %s",
            epoch, train_loss, rec["dev_f1_live"], rec["dev_f1_ema"],
        )
        if on_epoch is not None:
            on_epoch(rec)

        if dev:
            score = rec["dev_f1_ema"] if ema is not None else rec["dev_f1_live"]
        else:
            score = -train_loss
        history.append(HistoryEntry(epoch, score, Snapshot.capture(model.params, opt, ema)))
        best = select_checkpoint(history)
        # entries that lost can never win later (ties go to the earlier epoch)
        for entry in history:
            if entry is not best:
                entry.snapshot = None
        if stop_at_f1 is not None and dev and score >= stop_at_f1:
            break
    return FitResult(select_checkpoint(history), records)
