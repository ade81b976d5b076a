"""Deterministic training loop: Adam, cosine annealing with warm restarts,
trace-level validation split and best-epoch checkpointing.

Everything stochastic (the train/validation split and the per-epoch batch
order) is driven by one seed, so identical inputs reproduce identical
parameter trajectories and reports bit for bit on the same build.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import PreparedDataset, Split
from .errors import TrainingError
from .model import NextActivityModel

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; scheduler defaults restart at epoch 10, 30, 70, ..."""

    learning_rate: float = 1e-3
    t0: int = 10
    t_mult: int = 2
    lr_min: float = 0.0
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    fold: int = 0
    clip_norm: float | None = 5.0
    val_fraction: float = 0.2

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class TrainReport:
    """Per-epoch curves plus the selected checkpoint."""

    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint: str = ""
    events: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def split_train_val(trace_ids: Sequence[int], seed: int,
                    val_fraction: float = 0.2) -> tuple[list[int], list[int]]:
    """Seeded 80/20 split at trace granularity; all prefixes of a trace stay together."""
    ids = list(trace_ids)
    if len(ids) < 5:
        raise TrainingError(f"need at least 5 traces to split, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = max(1, int(round(len(ids) * val_fraction)))
    val = sorted(ids[i] for i in order[:n_val])
    train = sorted(ids[i] for i in order[n_val:])
    return train, val


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Cosine annealing with warm restarts, evaluated at integer epochs.

    Within a period of length T: lr = lr_min + (lr_max - lr_min) * (1 + cos(pi*t/T)) / 2,
    t being the offset since the last restart; periods grow by t_mult.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    t, period = epoch, config.t0
    while t >= period:
        t -= period
        period *= config.t_mult
    return config.lr_min + 0.5 * (config.learning_rate - config.lr_min) * (
        1.0 + math.cos(math.pi * t / period))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr_t: float) -> None:
    """In-place Adam update with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""
    for g in grads.values():
        if not np.isfinite(g).all():
            raise TrainingError("non-finite gradient")
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for k, p in params.items():
        g = grads[k]
        state.m[k] = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g
        state.v[k] = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= (lr_t * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(p.dtype)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def accuracy(model: NextActivityModel, split: Split, indices: Sequence[int],
             sig: str = "", batch_size: int = 256) -> float:
    """Fraction of prefixes whose argmax prediction matches the target."""
    idx = np.asarray(indices)
    if idx.size == 0:
        return 0.0
    correct = 0
    for lo in range(0, idx.size, batch_size):
        b = split.batch(idx[lo:lo + batch_size], sig=sig)
        pred = model.forward(b).argmax(axis=1)
        correct += int((pred == b.targets).sum())
    return correct / idx.size


def train(model: NextActivityModel, prepared: PreparedDataset, config: TrainConfig,
          out_dir: str | Path, split_name: str = "train") -> TrainReport:
    """Optimize on the split's 80% of traces, select the epoch with the best
    validation accuracy (first on ties) and checkpoint those parameters."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split = prepared.splits[split_name]
    trace_ids = sorted(set(int(t) for t in split.trace_idx))
    train_traces, val_traces = split_train_val(trace_ids, config.seed, config.val_fraction)
    train_set = set(train_traces)
    train_idx = np.asarray([i for i, t in enumerate(split.trace_idx) if int(t) in train_set])
    val_idx = np.asarray([i for i, t in enumerate(split.trace_idx) if int(t) not in train_set])

    report = TrainReport()
    state = AdamState.for_params(model.params)
    rng = np.random.default_rng(config.seed)
    best_params = {k: p.copy() for k, p in model.params.items()}
    best_acc = -1.0

    for epoch in range(config.max_epochs):
        lr = lr_at(config, epoch)
        order = rng.permutation(train_idx.size)
        losses = []
        aborted = False
        for lo in range(0, order.size, config.batch_size):
            b = split.batch(train_idx[order[lo:lo + config.batch_size]], sig=prepared.sig)
            loss, grads = model.loss_and_grads(b)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            if config.clip_norm:
                clip_gradients(grads, config.clip_norm)
            try:
                adam_step(model.params, grads, state, lr)
            except TrainingError as exc:
                report.events.append(f"epoch {epoch}: aborted ({exc})")
                aborted = True
                break
            losses.append(loss)
        report.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
        val_acc = accuracy(model, split, val_idx, sig=prepared.sig)
        report.val_accuracy.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            report.best_epoch = epoch
            best_params = {k: p.copy() for k, p in model.params.items()}
        if aborted:
            continue

    model.params = best_params
    ckpt = out_dir / "checkpoint"
    model.save(ckpt, vocab_sha=prepared.vocab_sha())
    report.checkpoint = ckpt.name
    (out_dir / "train_report.json").write_text(report.to_json())
    return report
