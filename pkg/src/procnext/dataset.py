"""Prepared-dataset construction and the on-disk layout.

A prepared dataset bundles everything a training or evaluation run needs:
the fitted vocabularies and time buckets (training traces only), the place
graph with its normalized adjacency, the model net, and the encoded prefix
tensors per split. Arrays are stored as .npy files (numpy's versioned binary
format), everything else as JSON; manifest.json records shapes, counts, the
seed and the configuration hash so mismatched artifacts are caught early.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoding, eventlog, petrinet
from .errors import CompatibilityError
from .eventlog import EventLog, TimeBuckets, Vocab
from .petrinet import PetriNet

DATASET_FORMAT_VERSION = 1
SPLIT_ARRAYS = ("nodes", "attrs", "mask", "targets", "trace_idx")


@dataclass
class Split:
    """Encoded prefixes of one portion of the data, uniformly padded."""

    nodes: np.ndarray      # (N, L, n_places, C+1) int16
    attrs: np.ndarray      # (N, L, n_attr_cols) int16
    mask: np.ndarray       # (N, L) uint8
    targets: np.ndarray    # (N,) int64
    trace_idx: np.ndarray  # (N,) int64, position of the source trace in the split

    def __len__(self) -> int:
        return len(self.targets)

    def batch(self, indices: Sequence[int], sig: str = "") -> encoding.Batch:
        idx = np.asarray(indices)
        sub_mask = self.mask[idx]
        length = max(int(sub_mask.sum(axis=1).max()), 1)
        return encoding.Batch(
            nodes=np.ascontiguousarray(self.nodes[idx][:, :length]),
            attrs=np.ascontiguousarray(self.attrs[idx][:, :length]),
            mask=np.ascontiguousarray(sub_mask[:, :length]),
            targets=np.ascontiguousarray(self.targets[idx]),
            sig=sig,
        )


@dataclass
class PreparedDataset:
    """Artifacts shared across splits plus the encoded splits themselves."""

    net: PetriNet
    pnml: bytes
    activity_vocab: Vocab
    attr_names: tuple[str, ...]
    attr_vocabs: tuple[Vocab, ...]
    dprev_buckets: TimeBuckets
    dstart_buckets: TimeBuckets
    adjacency: np.ndarray
    adjacency_norm: np.ndarray
    max_len: int
    sig: str
    splits: dict[str, Split] = field(default_factory=dict)
    seed: int = 0
    n_fit_traces: int = 0

    @property
    def slot_cols(self) -> int:
        return encoding.slot_count(self.net)

    def vocabs_json(self) -> str:
        return eventlog.vocabs_to_json(self.activity_vocab, self.attr_names, self.attr_vocabs)

    def buckets_json(self) -> str:
        return json.dumps({"since_previous": self.dprev_buckets.to_json(),
                           "since_start": self.dstart_buckets.to_json()},
                          sort_keys=True, indent=1)

    def vocab_sha(self) -> str:
        return hashlib.sha256(self.vocabs_json().encode()).hexdigest()

    def buckets_sha(self) -> str:
        return hashlib.sha256(self.buckets_json().encode()).hexdigest()

    def model_dims(self):
        from .model import DataDims

        nb = self.dprev_buckets.n_buckets
        attr_sizes = [len(self.activity_vocab), nb + 1, nb + 1]
        attr_sizes += [len(v) for v in self.attr_vocabs]
        return DataDims(
            n_places=self.net.n_places,
            slot_cols=self.slot_cols,
            source_vocab_size=encoding.source_vocab_size(self.activity_vocab),
            attr_vocab_sizes=tuple(attr_sizes),
            n_classes=eventlog.n_classes(self.activity_vocab),
        )


def fit_time_buckets(log: EventLog, n_buckets: int, method: str = "width"
                     ) -> tuple[TimeBuckets, TimeBuckets]:
    """Fit the two time quantizers on every event of the given (training) log."""
    dprev_values: list[int] = []
    dstart_values: list[int] = []
    for i, tr in enumerate(log.traces):
        full = eventlog.Prefix(tr, len(tr), 0, i)
        dprev, dstart = eventlog.time_deltas(full)
        dprev_values.extend(dprev)
        dstart_values.extend(dstart)
    return (
        eventlog.fit_buckets(dprev_values, n_buckets, kind="since-previous", method=method),
        eventlog.fit_buckets(dstart_values, n_buckets, kind="since-case-start", method=method),
    )


def _encode_split(log: EventLog, prepared: PreparedDataset, include_end: bool,
                  on_missing: str) -> Split:
    """Encode every prefix of a (re-vocabularied) log against fitted artifacts."""
    prefixes = eventlog.extract_prefixes(log, include_end=include_end)
    n_items = len(prefixes)
    n = prepared.net.n_places
    s = prepared.slot_cols + 1
    m = 3 + len(prepared.attr_names)
    length = prepared.max_len
    nodes = np.zeros((n_items, length, n, s), dtype=encoding.INDEX_DTYPE)
    attrs = np.zeros((n_items, length, m), dtype=encoding.INDEX_DTYPE)
    mask = np.zeros((n_items, length), dtype=np.uint8)
    targets = np.zeros(n_items, dtype=np.int64)
    trace_idx = np.zeros(n_items, dtype=np.int64)

    per_trace_nodes: dict[int, np.ndarray] = {}
    per_trace_attrs: dict[int, np.ndarray] = {}
    for t_i, tr in enumerate(log.traces):
        labels = log.activity_labels(tr)
        steps = petrinet.replay_prefix(prepared.net, labels, on_missing=on_missing)
        per_trace_nodes[t_i] = encoding.encode_nodes(
            prepared.net, steps, prepared.activity_vocab).steps
        full = eventlog.Prefix(tr, len(tr), 0, t_i)
        per_trace_attrs[t_i] = encoding.encode_attributes(
            full, prepared.dprev_buckets, prepared.dstart_buckets).rows

    for i, pfx in enumerate(prefixes):
        k = pfx.k
        lo = max(0, k - length)  # truncate from the left, keep the most recent steps
        span = k - lo
        nodes[i, :span] = per_trace_nodes[pfx.trace_index][lo:k]
        attrs[i, :span] = per_trace_attrs[pfx.trace_index][lo:k]
        mask[i, :span] = 1
        targets[i] = pfx.target
        trace_idx[i] = pfx.trace_index
    return Split(nodes, attrs, mask, targets, trace_idx)


def build_dataset(
    log: EventLog,
    net: PetriNet,
    pnml: bytes,
    train_trace_indices: Sequence[int],
    test_trace_indices: Sequence[int] = (),
    *,
    n_buckets: int = 10,
    bucket_method: str = "width",
    include_end: bool = True,
    on_missing: str = "skip",
    seed: int = 0,
) -> PreparedDataset:
    """Fit vocabularies/buckets on the training traces only and encode both splits."""
    train_log = eventlog.subset_log(log, train_trace_indices)
    if not train_log.traces:
        raise ValueError("training split has no traces")
    dprev_b, dstart_b = fit_time_buckets(train_log, n_buckets, method=bucket_method)
    graph = encoding.to_place_graph(net)
    a_norm = encoding.normalize(graph.adjacency)
    prepared = PreparedDataset(
        net=net,
        pnml=pnml,
        activity_vocab=train_log.activity_vocab,
        attr_names=train_log.attr_names,
        attr_vocabs=train_log.attr_vocabs,
        dprev_buckets=dprev_b,
        dstart_buckets=dstart_b,
        adjacency=graph.adjacency,
        adjacency_norm=a_norm,
        max_len=train_log.max_trace_len,
        sig="",
        seed=seed,
        n_fit_traces=len(train_log.traces),
    )
    prepared.sig = encoding.config_signature([
        prepared.vocabs_json(), prepared.buckets_json(),
        hashlib.sha256(pnml).hexdigest(), str(prepared.max_len), str(include_end),
    ])
    prepared.splits["train"] = _encode_split(train_log, prepared, include_end, on_missing)
    if len(test_trace_indices):
        test_log = eventlog.remap_log(log, test_trace_indices, prepared.activity_vocab,
                                      prepared.attr_vocabs)
        prepared.splits["test"] = _encode_split(test_log, prepared, include_end, on_missing)
    return prepared


# ---------------------------------------------------------------------------
# persistence

def save_dataset(prepared: PreparedDataset, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "vocabs.json").write_text(prepared.vocabs_json())
    (path / "buckets.json").write_text(prepared.buckets_json())
    (path / "net.pnml").write_bytes(prepared.pnml)
    np.save(path / "adjacency.npy", prepared.adjacency)
    np.save(path / "adjacency_norm.npy", prepared.adjacency_norm)
    splits_meta = {}
    for name, split in prepared.splits.items():
        for arr_name in SPLIT_ARRAYS:
            np.save(path / f"{name}_{arr_name}.npy", getattr(split, arr_name))
        splits_meta[name] = {
            "count": len(split),
            "shapes": {a: list(getattr(split, a).shape) for a in SPLIT_ARRAYS},
        }
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "max_len": prepared.max_len,
        "slot_cols": prepared.slot_cols,
        "n_places": prepared.net.n_places,
        "attr_names": list(prepared.attr_names),
        "n_buckets": prepared.dprev_buckets.n_buckets,
        "seed": prepared.seed,
        "sig": prepared.sig,
        "vocab_sha": prepared.vocab_sha(),
        "buckets_sha": prepared.buckets_sha(),
        "n_fit_traces": prepared.n_fit_traces,
        "splits": splits_meta,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(path: str | Path) -> PreparedDataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest["format_version"] != DATASET_FORMAT_VERSION:
        raise CompatibilityError(f"unsupported dataset version {manifest['format_version']}")
    activity_vocab, attr_names, attr_vocabs = eventlog.vocabs_from_json(
        (path / "vocabs.json").read_text())
    buckets = json.loads((path / "buckets.json").read_text())
    pnml = (path / "net.pnml").read_bytes()
    prepared = PreparedDataset(
        net=petrinet.parse_pnml(pnml),
        pnml=pnml,
        activity_vocab=activity_vocab,
        attr_names=attr_names,
        attr_vocabs=attr_vocabs,
        dprev_buckets=TimeBuckets.from_json(buckets["since_previous"]),
        dstart_buckets=TimeBuckets.from_json(buckets["since_start"]),
        adjacency=np.load(path / "adjacency.npy"),
        adjacency_norm=np.load(path / "adjacency_norm.npy"),
        max_len=manifest["max_len"],
        sig=manifest["sig"],
        seed=manifest["seed"],
        n_fit_traces=manifest["n_fit_traces"],
    )
    if manifest["vocab_sha"] != prepared.vocab_sha():
        raise CompatibilityError("vocabs.json does not match the manifest hash")
    if manifest["buckets_sha"] != prepared.buckets_sha():
        raise CompatibilityError("buckets.json does not match the manifest hash")
    for name in manifest["splits"]:
        arrays = {a: np.load(path / f"{name}_{a}.npy") for a in SPLIT_ARRAYS}
        prepared.splits[name] = Split(**arrays)
    return prepared
