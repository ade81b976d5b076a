"""Petri-net structure, firing semantics and token replay of activity prefixes.

A net is immutable after construction. Markings are plain tuples of token
counts (hashable, cheap to copy), so every operation here is a pure function
and replay is deterministic: the silent-transition search is a breadth-first
search expanded in ascending transition index, and misalignment repairs inject
one token into each empty input place of the target transition.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ReplayError

log = logging.getLogger(__name__)

Marking = tuple[int, ...]

SILENT_LABEL_CONVENTIONS = {"tau", "invisible", "$invisible$", "silent", "none"}

START_SYNTH = "__start__"
END_SYNTH = "__end__"


@dataclass(frozen=True)
class Transition:
    """Net transition; ``label`` is the activity string, None for silent transitions."""

    name: str
    label: str | None = None

    @property
    def silent(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class ReplayStep:
    """State snapshot after replaying one event.

    ``fired`` is the observable transition index (None when the event was
    skipped under the ``skip`` policy), ``silents`` the silent firings executed
    before it, ``repairs`` the places that received an injected token, and
    ``marking`` the token counts after the step.
    """

    label: str
    fired: int | None
    silents: tuple[int, ...]
    repairs: tuple[int, ...]
    marking: Marking


class PetriNet:
    """Places, transitions and arcs with unique structural start/end places."""

    def __init__(
        self,
        place_names: Sequence[str],
        transitions: Sequence[Transition],
        arcs_typed: Sequence[tuple[str, int, int]],
    ):
        # internal constructor; use from_spec / parse_pnml
        self.place_names: tuple[str, ...] = tuple(place_names)
        self.transitions: tuple[Transition, ...] = tuple(transitions)
        n_p, n_t = len(self.place_names), len(self.transitions)
        pre_t: list[list[int]] = [[] for _ in range(n_t)]   # places feeding each transition
        post_t: list[list[int]] = [[] for _ in range(n_t)]  # places fed by each transition
        pre_p: list[list[int]] = [[] for _ in range(n_p)]   # transitions feeding each place
        post_p: list[list[int]] = [[] for _ in range(n_p)]  # transitions fed by each place
        for kind, a, b in arcs_typed:
            if kind == "pt":
                post_p[a].append(b)
                pre_t[b].append(a)
            else:
                post_t[a].append(b)
                pre_p[b].append(a)
        self.pre_t = tuple(tuple(sorted(x)) for x in pre_t)
        self.post_t = tuple(tuple(sorted(x)) for x in post_t)
        self.pre_p = tuple(tuple(sorted(x)) for x in pre_p)
        self.post_p = tuple(tuple(sorted(x)) for x in post_p)
        self.silent_indices = tuple(i for i, t in enumerate(self.transitions) if t.silent)
        by_label: dict[str, list[int]] = {}
        for i, t in enumerate(self.transitions):
            if t.label is not None:
                by_label.setdefault(t.label, []).append(i)
        self.transitions_by_label = {k: tuple(v) for k, v in by_label.items()}

        sources = [i for i in range(n_p) if not self.pre_p[i]]
        sinks = [i for i in range(n_p) if not self.post_p[i]]
        if len(sources) != 1 or len(sinks) != 1:
            raise ParseError("net must have exactly one source and one sink place "
                             "(use _with_unique_endpoints before constructing)")
        self.start_place: int = sources[0]
        self.end_place: int = sinks[0]

    @property
    def n_places(self) -> int:
        return len(self.place_names)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def __repr__(self) -> str:
        return (f"PetriNet(places={self.n_places}, transitions={self.n_transitions}, "
                f"silent={len(self.silent_indices)})")

    @classmethod
    def from_spec(
        cls,
        places: Sequence[str],
        transitions: Sequence[tuple[str, str | None]],
        arcs: Sequence[tuple[str, str]],
    ) -> "PetriNet":
        """Build a net from names: transitions as (name, label-or-None), arcs as name pairs."""
        p_idx = {p: i for i, p in enumerate(places)}
        t_idx = {t[0]: i for i, t in enumerate(transitions)}
        if len(p_idx) != len(places) or len(t_idx) != len(transitions):
            raise ParseError("duplicate place or transition name")
        if set(p_idx) & set(t_idx):
            raise ParseError("place and transition names must be disjoint")
        typed = []
        for src, dst in arcs:
            if src in p_idx and dst in t_idx:
                typed.append(("pt", p_idx[src], t_idx[dst]))
            elif src in t_idx and dst in p_idx:
                typed.append(("tp", t_idx[src], p_idx[dst]))
            else:
                raise ParseError(f"arc ({src!r}, {dst!r}) must connect a place and a transition")
        return _with_unique_endpoints(list(places), [Transition(*t) for t in transitions], typed)


def _with_unique_endpoints(
    place_names: list[str],
    transitions: list[Transition],
    typed_arcs: list[tuple[str, int, int]],
) -> PetriNet:
    """Synthesize a unique start/end place when the parsed net lacks one."""
    n_p = len(place_names)
    has_pre_p = {b for kind, _, b in typed_arcs if kind == "tp"}
    has_post_p = {a for kind, a, _ in typed_arcs if kind == "pt"}
    has_pre_t = {b for kind, _, b in typed_arcs if kind == "pt"}
    has_post_t = {a for kind, a, _ in typed_arcs if kind == "tp"}
    sources = [i for i in range(n_p) if i not in has_pre_p]
    sinks = [i for i in range(n_p) if i not in has_post_p]

    if len(sources) != 1:
        start = len(place_names)
        place_names.append(START_SYNTH)
        if sources:
            init = len(transitions)
            transitions.append(Transition("__init__", None))
            typed_arcs.append(("pt", start, init))
            typed_arcs.extend(("tp", init, p) for p in sources)
            log.warning("no unique source place; synthesized %s feeding %d places", START_SYNTH, len(sources))
        else:
            source_ts = [i for i in range(len(transitions)) if i not in has_pre_t]
            if not source_ts:
                raise ParseError("cannot determine a start place (no source place or transition)")
            typed_arcs.extend(("pt", start, t) for t in source_ts)
            log.warning("no source place; synthesized %s feeding %d transitions", START_SYNTH, len(source_ts))

    if len(sinks) != 1:
        end = len(place_names)
        place_names.append(END_SYNTH)
        if sinks:
            fin = len(transitions)
            transitions.append(Transition("__final__", None))
            typed_arcs.append(("tp", fin, end))
            typed_arcs.extend(("pt", p, fin) for p in sinks)
            log.warning("no unique sink place; synthesized %s collecting %d places", END_SYNTH, len(sinks))
        else:
            sink_ts = [i for i in range(len(transitions)) if i not in has_post_t]
            if not sink_ts:
                raise ParseError("cannot determine an end place (no sink place or transition)")
            typed_arcs.extend(("tp", t, end) for t in sink_ts)
            log.warning("no sink place; synthesized %s collecting %d transitions", END_SYNTH, len(sink_ts))

    return PetriNet(place_names, transitions, typed_arcs)


# ---------------------------------------------------------------------------
# PNML

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _pnml_text(el: ET.Element, child: str) -> str | None:
    for sub in el:
        if _local(sub.tag) == child:
            for t in sub:
                if _local(t.tag) == "text":
                    return t.text
    return None


def parse_pnml(data: bytes) -> PetriNet:
    """Parse a PNML net (place/transition/arc subset, pages flattened).

    A transition is silent when its name is empty/missing, matches a known
    convention ("tau", "invisible", "$invisible$", "silent", "none"), or the
    pnml toolspecific activity tag marks it invisible.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ParseError(f"malformed PNML document: {exc}") from exc

    place_names: list[str] = []
    p_by_id: dict[str, int] = {}
    transitions: list[Transition] = []
    t_by_id: dict[str, int] = {}

    for el in root.iter():
        tag = _local(el.tag)
        if tag == "place":
            pid = el.get("id")
            if pid is None or pid in p_by_id:
                raise ParseError(f"place with missing or duplicate id {pid!r}")
            p_by_id[pid] = len(place_names)
            place_names.append(pid)
        elif tag == "transition":
            tid = el.get("id")
            if tid is None or tid in t_by_id:
                raise ParseError(f"transition with missing or duplicate id {tid!r}")
            label: str | None = _pnml_text(el, "name")
            if label is not None:
                label = label.strip()
            if not label or label.lower() in SILENT_LABEL_CONVENTIONS:
                label = None
            for sub in el.iter():
                if _local(sub.tag) == "toolspecific" and sub.get("activity", "").lower() == "$invisible$":
                    label = None
            t_by_id[tid] = len(transitions)
            transitions.append(Transition(tid, label))

    typed_arcs: list[tuple[str, int, int]] = []
    for el in root.iter():
        if _local(el.tag) != "arc":
            continue
        src, dst = el.get("source"), el.get("target")
        if src in p_by_id and dst in t_by_id:
            typed_arcs.append(("pt", p_by_id[src], t_by_id[dst]))
        elif src in t_by_id and dst in p_by_id:
            typed_arcs.append(("tp", t_by_id[src], p_by_id[dst]))
        else:
            raise ParseError(f"arc references unknown endpoint(s): {src!r} -> {dst!r}")
        weight = _pnml_text(el, "inscription")
        if weight is not None and weight.strip() not in ("", "1"):
            raise ParseError(f"weighted arc {src!r} -> {dst!r} is not supported")

    if not place_names:
        raise ParseError("PNML contains no places")
    return _with_unique_endpoints(place_names, transitions, typed_arcs)


def to_pnml(net: PetriNet) -> bytes:
    """Serialize a net back to minimal PNML (ids double as names)."""
    root = ET.Element("pnml")
    net_el = ET.SubElement(root, "net", id="net1", type="http://www.pnml.org/version-2009/grammar/ptnet")
    page = ET.SubElement(net_el, "page", id="page1")
    for i, name in enumerate(net.place_names):
        ET.SubElement(page, "place", id=f"p{i}").append(_name_el(name))
    for i, t in enumerate(net.transitions):
        el = ET.SubElement(page, "transition", id=f"t{i}")
        if t.label is not None:
            el.append(_name_el(t.label))
    k = 0
    for t_i in range(net.n_transitions):
        for p in net.pre_t[t_i]:
            ET.SubElement(page, "arc", id=f"a{k}", source=f"p{p}", target=f"t{t_i}")
            k += 1
        for p in net.post_t[t_i]:
            ET.SubElement(page, "arc", id=f"a{k}", source=f"t{t_i}", target=f"p{p}")
            k += 1
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def _name_el(text: str) -> ET.Element:
    name = ET.Element("name")
    t = ET.SubElement(name, "text")
    t.text = text
    return name


# ---------------------------------------------------------------------------
# execution semantics

def initial_marking(net: PetriNet) -> Marking:
    """One token in the structural start place, zero everywhere else."""
    m = [0] * net.n_places
    m[net.start_place] = 1
    return tuple(m)


def enabled(net: PetriNet, marking: Marking) -> tuple[int, ...]:
    """Indices of transitions whose every input place holds a token (ascending)."""
    return tuple(
        t for t in range(net.n_transitions)
        if all(marking[p] > 0 for p in net.pre_t[t])
    )


def is_enabled(net: PetriNet, marking: Marking, t: int) -> bool:
    return all(marking[p] > 0 for p in net.pre_t[t])


def fire(net: PetriNet, marking: Marking, t: int) -> Marking:
    """Consume one token per input place of ``t`` and produce one per output place."""
    if not is_enabled(net, marking, t):
        raise ReplayError(f"transition {net.transitions[t].name!r} is not enabled")
    m = list(marking)
    for p in net.pre_t[t]:
        m[p] -= 1
    for p in net.post_t[t]:
        m[p] += 1
    return tuple(m)


def silent_closure(net: PetriNet, marking: Marking, target: int,
                   max_depth: int | None = None) -> tuple[int, ...] | None:
    """Shortest silent firing sequence after which ``target`` is enabled.

    Breadth-first over markings reachable via silent transitions only,
    expanding in ascending transition index, so the first hit is the
    lexicographically-least among the shortest sequences. Returns None when no
    such sequence exists within the depth bound (default 2 * |T|).
    """
    if max_depth is None:
        max_depth = 2 * net.n_transitions
    if is_enabled(net, marking, target):
        return ()
    frontier: list[tuple[Marking, tuple[int, ...]]] = [(marking, ())]
    seen = {marking}
    depth = 0
    while frontier and depth < max_depth:
        depth += 1
        nxt: list[tuple[Marking, tuple[int, ...]]] = []
        for m, path in frontier:
            for s in net.silent_indices:
                if not is_enabled(net, m, s):
                    continue
                m2 = fire(net, m, s)
                if m2 in seen:
                    continue
                path2 = path + (s,)
                if is_enabled(net, m2, target):
                    return path2
                seen.add(m2)
                nxt.append((m2, path2))
        frontier = nxt
    return None


def repair_and_fire(net: PetriNet, marking: Marking, target: int, label: str) -> ReplayStep:
    """Fire ``target`` after the silent closure, injecting tokens if still disabled.

    When no silent sequence enables the target, exactly one token is injected
    into each empty input place (recorded in ``repairs``) and the transition
    fires from the repaired marking.
    """
    silents = silent_closure(net, marking, target)
    repairs: tuple[int, ...] = ()
    m = marking
    if silents is None:
        silents = ()
        repairs = tuple(p for p in net.pre_t[target] if m[p] == 0)
        patched = list(m)
        for p in repairs:
            patched[p] += 1
        m = tuple(patched)
    else:
        for s in silents:
            m = fire(net, m, s)
    m = fire(net, m, target)
    return ReplayStep(label, target, silents, repairs, m)


def _choose_transition(net: PetriNet, marking: Marking, candidates: Sequence[int]) -> int:
    """Among transitions sharing a label: shortest silent closure, ties by index."""
    if len(candidates) == 1:
        return candidates[0]
    best, best_len = candidates[0], None
    for t in candidates:
        seq = silent_closure(net, marking, t)
        cost = len(seq) if seq is not None else None
        if best_len is None and cost is not None:
            best, best_len = t, cost
        elif cost is not None and best_len is not None and cost < best_len:
            best, best_len = t, cost
    return best


def replay_prefix(net: PetriNet, labels: Sequence[str], on_missing: str = "error") -> list[ReplayStep]:
    """Replay a prefix of activity labels from the initial marking.

    One ReplayStep per event. ``on_missing`` controls events whose label has no
    transition in the net: ``"error"`` raises, ``"skip"`` records a step with
    ``fired=None`` that leaves the marking unchanged.
    """
    if on_missing not in ("error", "skip"):
        raise ValueError("on_missing must be 'error' or 'skip'")
    steps: list[ReplayStep] = []
    m = initial_marking(net)
    for label in labels:
        candidates = net.transitions_by_label.get(label)
        if not candidates:
            if on_missing == "error":
                raise ReplayError(f"no transition matches activity {label!r}")
            steps.append(ReplayStep(label, None, (), (), m))
            continue
        t = _choose_transition(net, m, candidates)
        step = repair_and_fire(net, m, t, label)
        steps.append(step)
        m = step.marking
    return steps


def total_repairs(steps: Iterable[ReplayStep]) -> int:
    return sum(len(s.repairs) for s in steps)


# ---------------------------------------------------------------------------
# simulation (used to build synthetic fixtures and fitness checks)

def simulate_trace(net: PetriNet, rng: np.random.Generator, max_steps: int = 1000) -> list[str]:
    """Random walk from the initial marking; returns the observable label sequence.

    Stops when the end place holds a token or nothing is enabled.
    """
    m = initial_marking(net)
    out: list[str] = []
    for _ in range(max_steps):
        if m[net.end_place] > 0:
            break
        en = enabled(net, m)
        if not en:
            break
        t = int(en[rng.integers(len(en))])
        m = fire(net, m, t)
        label = net.transitions[t].label
        if label is not None:
            out.append(label)
    return out
