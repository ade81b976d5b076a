"""Place-graph reduction and the feature encodings consumed by the model.

Two encodings are produced per prefix:

* a sequence of node feature matrices, one ``(n_places, C+1)`` integer snapshot
  per replayed event, where C is the largest input-transition count over all
  places. Slots 1..C of a place's row are statically assigned to its input
  transitions (ascending index); a slot is 0 until its transition first
  deposits a token and then permanently holds the firing source index: the
  transition's activity, the reserved silent index, or the reserved repair
  index for injected tokens. Column C+1 holds place_id+1 while the place is
  marked, else 0. The encoding is cumulative: earlier firings are never erased,
  so consecutive loop iterations yield identical snapshots and only the
  sequence distinguishes them.
* an attribute feature matrix with one row per event: activity index, the two
  quantized time features (stored +1 so 0 stays the pad value) and the
  configured categorical attributes, padded to the log's longest-trace length.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CompatibilityError
from .eventlog import UNK, Prefix, TimeBuckets, Vocab, bucketize, time_deltas
from .petrinet import PetriNet, ReplayStep

INDEX_DTYPE = np.int16


@dataclass(frozen=True)
class PlaceGraph:
    """Place-only digraph of a net: edge (p1, p2) iff some transition consumes
    from p1 and produces into p2. Nodes use the net's place indices."""

    n: int
    adjacency: np.ndarray  # (n, n) uint8
    place_names: tuple[str, ...]


def to_place_graph(net: PetriNet) -> PlaceGraph:
    n = net.n_places
    a = np.zeros((n, n), dtype=np.uint8)
    for t in range(net.n_transitions):
        for p1 in net.pre_t[t]:
            for p2 in net.post_t[t]:
                a[p1, p2] = 1
    return PlaceGraph(n, a, net.place_names)


def normalize(adjacency: np.ndarray) -> np.ndarray:
    """Random-walk renormalized adjacency: D~^-1 (A + I); rows sum to 1."""
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    a_tilde = a + np.eye(a.shape[0])
    return a_tilde / a_tilde.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# firing-source vocabulary: activity indices, then silent, then repair

def silent_index(activity_vocab: Vocab) -> int:
    return len(activity_vocab)


def repair_index(activity_vocab: Vocab) -> int:
    return len(activity_vocab) + 1


def source_vocab_size(activity_vocab: Vocab) -> int:
    return len(activity_vocab) + 2


def transition_sources(net: PetriNet, activity_vocab: Vocab) -> np.ndarray:
    """Per-transition firing source index (activity index, UNK, or silent)."""
    out = np.empty(net.n_transitions, dtype=np.int64)
    sil = silent_index(activity_vocab)
    for i, t in enumerate(net.transitions):
        out[i] = sil if t.label is None else activity_vocab.index(t.label)
    return out


def slot_count(net: PetriNet) -> int:
    """C: the largest number of input transitions over all places (at least 1)."""
    return max((len(p) for p in net.pre_p), default=0) or 1


def place_slot_map(net: PetriNet) -> list[dict[int, int]]:
    """Per place: input transition index -> slot column (ascending assignment)."""
    return [{t: j for j, t in enumerate(pre)} for pre in net.pre_p]


@dataclass(frozen=True)
class NodeFeatureSeq:
    """Per-event replay snapshots, shape (k, n_places, C+1), unpadded."""

    steps: np.ndarray

    @property
    def k(self) -> int:
        return self.steps.shape[0]

    def padded(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Zero-pad the time axis to ``length``; returns (array, step mask)."""
        k, n, s = self.steps.shape
        if k > length:
            raise ValueError(f"sequence of length {k} exceeds padded length {length}")
        out = np.zeros((length, n, s), dtype=self.steps.dtype)
        out[:k] = self.steps
        mask = np.zeros(length, dtype=np.uint8)
        mask[:k] = 1
        return out, mask


@dataclass(frozen=True)
class AttributeFeatureMatrix:
    """Per-event rows [activity, dt_prev+1, dt_start+1, attrs...], unpadded."""

    rows: np.ndarray

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    def padded(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        k, m = self.rows.shape
        if k > length:
            raise ValueError(f"sequence of length {k} exceeds padded length {length}")
        out = np.zeros((length, m), dtype=self.rows.dtype)
        out[:k] = self.rows
        mask = np.zeros(length, dtype=np.uint8)
        mask[:k] = 1
        return out, mask


def encode_nodes(net: PetriNet, steps: Sequence[ReplayStep], activity_vocab: Vocab) -> NodeFeatureSeq:
    """Encode a replay into the cumulative node-feature snapshot sequence."""
    n = net.n_places
    c = slot_count(net)
    slots = place_slot_map(net)
    sources = transition_sources(net, activity_vocab)
    sil = silent_index(activity_vocab)
    rep = repair_index(activity_vocab)

    state = np.zeros((n, c), dtype=INDEX_DTYPE)
    out = np.zeros((len(steps), n, c + 1), dtype=INDEX_DTYPE)

    def deposit(t: int, value: int) -> None:
        for p in net.post_t[t]:
            j = slots[p][t]
            if state[p, j] == 0:
                state[p, j] = value

    for i, step in enumerate(steps):
        for s in step.silents:
            deposit(s, sil)
        for p in step.repairs:
            row = state[p]
            empty = np.flatnonzero(row == 0)
            if empty.size:
                row[empty[0]] = rep
        if step.fired is not None:
            deposit(step.fired, int(sources[step.fired]))
        out[i, :, :c] = state
        marked = np.flatnonzero(np.asarray(step.marking) > 0)
        out[i, marked, c] = marked.astype(INDEX_DTYPE) + 1
    return NodeFeatureSeq(out)


def encode_attributes(prefix: Prefix, dprev_buckets: TimeBuckets,
                      dstart_buckets: TimeBuckets) -> AttributeFeatureMatrix:
    """Encode a prefix's event information (activity, quantized times, attributes)."""
    dprev, dstart = time_deltas(prefix)
    k = prefix.k
    n_attrs = len(prefix.events[0].attrs) if k else 0
    rows = np.zeros((k, 3 + n_attrs), dtype=INDEX_DTYPE)
    for i, ev in enumerate(prefix.events):
        rows[i, 0] = ev.activity
        rows[i, 1] = bucketize(dprev[i], dprev_buckets) + 1
        rows[i, 2] = bucketize(dstart[i], dstart_buckets) + 1
        for j, a in enumerate(ev.attrs):
            rows[i, 3 + j] = a
    return AttributeFeatureMatrix(rows)


# ---------------------------------------------------------------------------
# batching

@dataclass(frozen=True)
class EncodedPrefix:
    """One training/evaluation item: both encodings plus the prediction target."""

    nodes: NodeFeatureSeq
    attrs: AttributeFeatureMatrix
    target: int
    trace_index: int = 0
    sig: str = ""


@dataclass(frozen=True)
class Batch:
    """Uniformly padded arrays: nodes (B, L, n, C+1), attrs (B, L, m), mask (B, L)."""

    nodes: np.ndarray
    attrs: np.ndarray
    mask: np.ndarray
    targets: np.ndarray
    sig: str = ""

    def __len__(self) -> int:
        return self.nodes.shape[0]


def batch(items: Sequence[EncodedPrefix], length: int) -> Batch:
    """Pad a set of encoded prefixes (from one prepared dataset) to one batch."""
    if not items:
        raise ValueError("cannot batch zero items")
    sigs = {it.sig for it in items}
    if len(sigs) > 1:
        raise CompatibilityError(f"batch mixes items from different vocabularies: {sorted(sigs)}")
    b = len(items)
    n, s = items[0].nodes.steps.shape[1:]
    m = items[0].attrs.rows.shape[1]
    nodes = np.zeros((b, length, n, s), dtype=INDEX_DTYPE)
    attrs = np.zeros((b, length, m), dtype=INDEX_DTYPE)
    mask = np.zeros((b, length), dtype=np.uint8)
    targets = np.zeros(b, dtype=np.int64)
    for i, it in enumerate(items):
        nodes[i], mask_i = it.nodes.padded(length)
        attrs[i], mask_a = it.attrs.padded(length)
        if not np.array_equal(mask_i, mask_a):
            raise CompatibilityError("node and attribute sequences disagree on length")
        mask[i] = mask_i
        targets[i] = it.target
    return Batch(nodes, attrs, mask, targets, sig=items[0].sig)


def unbatch(b: Batch) -> list[EncodedPrefix]:
    """Inverse of :func:`batch` (padding removed)."""
    out = []
    for i in range(len(b)):
        k = int(b.mask[i].sum())
        out.append(EncodedPrefix(
            NodeFeatureSeq(b.nodes[i, :k].copy()),
            AttributeFeatureMatrix(b.attrs[i, :k].copy()),
            int(b.targets[i]),
            sig=b.sig,
        ))
    return out


def config_signature(parts: Sequence[str]) -> str:
    """Stable hash naming a (vocabularies, buckets, net) combination."""
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()[:16]
