"""Cross-validation orchestration, accuracy reports and prediction serving.

Folds are disjoint trace sets stratified by trace-length quartile; every fold
run refits vocabularies and time buckets on its own training traces, trains
with validation-based epoch selection and evaluates on the held-out traces.
Reports contain no timestamps or absolute paths, so identical inputs and seed
produce byte-identical JSON.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataset as ds
from . import encoding, eventlog, petrinet
from .errors import CompatibilityError, TrainingError
from .eventlog import EventLog
from .model import ModelConfig, NextActivityModel
from .petrinet import PetriNet
from .training import TrainConfig, train

log = logging.getLogger(__name__)

N_FOLDS = 5


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint trace-index sets covering the log; sizes differ by at most one."""

    folds: tuple[tuple[int, ...], ...]
    seed: int

    def train_indices(self, fold: int) -> list[int]:
        return sorted(i for f, members in enumerate(self.folds) if f != fold for i in members)

    def test_indices(self, fold: int) -> list[int]:
        return sorted(self.folds[fold])


def make_folds(log_: EventLog, seed: int, n_folds: int = N_FOLDS) -> FoldPlan:
    """Stratify traces by length quartile, shuffle within strata, deal round-robin."""
    n = len(log_.traces)
    if n < n_folds:
        raise TrainingError(f"need at least {n_folds} traces, got {n}")
    lengths = np.asarray([len(t) for t in log_.traces])
    edges = np.quantile(lengths, [0.25, 0.5, 0.75])
    strata = np.searchsorted(edges, lengths, side="right")
    rng = np.random.default_rng(seed)
    ordered: list[int] = []
    for s in range(4):
        members = np.flatnonzero(strata == s)
        ordered.extend(members[rng.permutation(members.size)].tolist())
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for pos, trace_i in enumerate(ordered):
        folds[pos % n_folds].append(int(trace_i))
    return FoldPlan(tuple(tuple(sorted(f)) for f in folds), seed)


def config_hash(train_cfg: TrainConfig, model_cfg: ModelConfig, extra: dict | None = None) -> str:
    payload = {
        "train": train_cfg.__dict__,
        "model": {**model_cfg.__dict__, "grnn_hidden": list(model_cfg.grnn_hidden)},
        "extra": extra or {},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def evaluate(model: NextActivityModel, prepared: ds.PreparedDataset,
             split_name: str = "test", batch_size: int = 256) -> dict:
    """Accuracy plus per-class confusion counts over one split."""
    if model.sig and prepared.sig and model.sig != prepared.sig:
        raise CompatibilityError(
            f"checkpoint signature {model.sig} does not match dataset {prepared.sig}")
    split = prepared.splits[split_name]
    vocab = prepared.activity_vocab
    confusion: dict[str, dict[str, int]] = {}
    correct = 0
    for lo in range(0, len(split), batch_size):
        b = split.batch(range(lo, min(lo + batch_size, len(split))), sig=prepared.sig)
        pred = model.forward(b).argmax(axis=1)
        correct += int((pred == b.targets).sum())
        for t, p in zip(b.targets.tolist(), pred.tolist()):
            row = confusion.setdefault(eventlog.target_label(vocab, t), {})
            lab = eventlog.target_label(vocab, p)
            row[lab] = row.get(lab, 0) + 1
    total = len(split)
    return {
        "accuracy": correct / total if total else 0.0,
        "correct": correct,
        "n_prefixes": total,
        "confusion": confusion,
    }


def run_cv(
    log_: EventLog,
    net: PetriNet,
    pnml: bytes,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    out_dir: str | Path,
    *,
    n_buckets: int = 10,
    include_end: bool = True,
    on_missing: str = "skip",
) -> dict:
    """Full 5-fold cross-validation; returns (and writes) the evaluation report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = make_folds(log_, train_cfg.seed)
    folds_out = []
    confusion: dict[str, dict[str, int]] = {}
    for fold in range(len(plan.folds)):
        fold_seed = train_cfg.seed + fold
        prepared = ds.build_dataset(
            log_, net, pnml,
            train_trace_indices=plan.train_indices(fold),
            test_trace_indices=plan.test_indices(fold),
            n_buckets=n_buckets, include_end=include_end,
            on_missing=on_missing, seed=fold_seed,
        )
        fold_cfg = TrainConfig(**{**train_cfg.__dict__, "seed": fold_seed, "fold": fold})
        model = NextActivityModel.initialize(
            model_cfg, prepared.model_dims(), prepared.adjacency_norm,
            seed=fold_seed, sig=prepared.sig)
        fold_dir = out_dir / f"fold{fold}"
        report = train(model, prepared, fold_cfg, fold_dir)
        result = evaluate(model, prepared, "test")
        log.info("fold %d: accuracy %.4f over %d prefixes", fold,
                 result["accuracy"], result["n_prefixes"])
        for t_lab, row in result["confusion"].items():
            dst = confusion.setdefault(t_lab, {})
            for p_lab, c in row.items():
                dst[p_lab] = dst.get(p_lab, 0) + c
        folds_out.append({
            "fold": fold,
            "seed": fold_seed,
            "accuracy": result["accuracy"],
            "correct": result["correct"],
            "n_prefixes": result["n_prefixes"],
            "best_epoch": report.best_epoch,
            "checkpoint": f"fold{fold}/{report.checkpoint}",
        })
    report_obj = {
        "folds": folds_out,
        "mean_accuracy": float(np.mean([f["accuracy"] for f in folds_out])),
        "total_prefixes": int(sum(f["n_prefixes"] for f in folds_out)),
        "seed": train_cfg.seed,
        "config_hash": config_hash(train_cfg, model_cfg,
                                   {"n_buckets": n_buckets, "include_end": include_end,
                                    "on_missing": on_missing}),
        "confusion": confusion,
    }
    (out_dir / "eval_report.json").write_text(json.dumps(report_obj, indent=1, sort_keys=True))
    return report_obj


# ---------------------------------------------------------------------------
# prediction serving

def predict(
    model: NextActivityModel,
    prepared: ds.PreparedDataset,
    events: Sequence[dict],
    top_k: int = 5,
    on_missing: str = "skip",
) -> dict:
    """Rank the next activities for a partial case.

    ``events`` rows carry ``activity``, ``timestamp`` (ISO-8601 or POSIX
    seconds) and optionally ``attrs`` (name -> value). Unknown activities and
    attribute values map to UNK with a warning.
    """
    if not events:
        raise ValueError("a partial case must contain at least one event")
    vocab = prepared.activity_vocab
    parsed = []
    for i, ev in enumerate(events):
        label = ev["activity"]
        if label not in vocab:
            log.warning("unknown activity %r mapped to UNK", label)
        ts = ev["timestamp"]
        if isinstance(ts, str):
            ts = eventlog.parse_iso_timestamp(ts, f"event {i}")
        attr_values = ev.get("attrs", {})
        attrs = []
        for name, av in zip(prepared.attr_names, prepared.attr_vocabs):
            value = attr_values.get(name)
            if value is not None and value not in av:
                log.warning("unknown value %r for attribute %s mapped to UNK", value, name)
            attrs.append(av.index(value) if value is not None else eventlog.UNK)
        parsed.append(eventlog.Event(vocab.index(label), "case", int(ts), tuple(attrs)))
    trace = eventlog.Trace(tuple(parsed))
    prefix = eventlog.Prefix(trace, len(parsed), 0)

    labels = [vocab.label(e.activity) for e in parsed]
    steps = petrinet.replay_prefix(prepared.net, labels, on_missing=on_missing)
    node_seq = encoding.encode_nodes(prepared.net, steps, vocab)
    attr_mat = encoding.encode_attributes(prefix, prepared.dprev_buckets, prepared.dstart_buckets)
    k = len(parsed)
    lo = max(0, k - prepared.max_len)
    item = encoding.EncodedPrefix(
        encoding.NodeFeatureSeq(node_seq.steps[lo:]),
        encoding.AttributeFeatureMatrix(attr_mat.rows[lo:]),
        target=0, sig=prepared.sig)
    b = encoding.batch([item], length=k - lo)
    probs = model.predict_proba(b)[0]

    order = np.argsort(-probs, kind="stable")
    ranked = [{"activity": eventlog.target_label(vocab, int(i)),
               "probability": float(probs[i])} for i in order[:top_k]]
    return {
        "ranked": ranked,
        "probabilities": {eventlog.target_label(vocab, i): float(p)
                          for i, p in enumerate(probs)},
    }
