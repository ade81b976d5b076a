"""Shared fixtures: deterministic nets, random net generators and the
independent brute-force oracles the derived expectations are computed with.

Oracles work from the raw arc lists the generators return, never from the
PetriNet adjacency caches, so they stay independent of the implementation
they check.
"""

from __future__ import annotations

import itertools

import numpy as np

from procnext import eventlog as el
from procnext.petrinet import PetriNet, Transition, simulate_trace

Arc = tuple[str, int, int]  # ("pt", place, transition) or ("tp", transition, place)


# ---------------------------------------------------------------------------
# fixed nets

def chain_net(labels=("submit", "screen", "assess", "approve", "finalize")) -> PetriNet:
    """Strictly sequential net: p0 -t0-> p1 -t1-> ... with one label per step."""
    places = [f"p{i}" for i in range(len(labels) + 1)]
    transitions = [(f"t{i}", lab) for i, lab in enumerate(labels)]
    arcs = []
    for i in range(len(labels)):
        arcs.append((f"p{i}", f"t{i}"))
        arcs.append((f"t{i}", f"p{i+1}"))
    return PetriNet.from_spec(places, transitions, arcs)


def loop_net() -> PetriNet:
    """Single-activity loop: register, then 'rework' self-looping on one place,
    then close. Replaying k and k+1 rework events yields identical snapshots."""
    places = ["p0", "p1", "p2"]
    transitions = [("t_reg", "register"), ("t_rework", "rework"), ("t_close", "close")]
    arcs = [
        ("p0", "t_reg"), ("t_reg", "p1"),
        ("p1", "t_rework"), ("t_rework", "p1"),
        ("p1", "t_close"), ("t_close", "p2"),
    ]
    return PetriNet.from_spec(places, transitions, arcs)


def branch_net() -> PetriNet:
    """Deterministic prefix, an exclusive choice (two equiprobable branches
    under uniform simulation), then a shared tail; 8 places total. The XOR is
    joined by two transitions sharing the 'resolve' label, keeping it 1-safe.
    """
    places = [f"p{i}" for i in range(8)]
    transitions = [
        ("t0", "receive"), ("t1", "triage"),
        ("t2", "fast_track"), ("t3", "full_review"),
        ("t4a", "resolve"), ("t4b", "resolve"),
        ("t5", "notify"), ("t6", "archive"),
    ]
    arcs = [
        ("p0", "t0"), ("t0", "p1"),
        ("p1", "t1"), ("t1", "p2"),
        ("p2", "t2"), ("t2", "p3"),
        ("p2", "t3"), ("t3", "p4"),
        ("p3", "t4a"), ("t4a", "p5"),
        ("p4", "t4b"), ("t4b", "p5"),
        ("p5", "t5"), ("t5", "p6"),
        ("p6", "t6"), ("t6", "p7"),
    ]
    return PetriNet.from_spec(places, transitions, arcs)


def deterministic_net() -> PetriNet:
    """8-place, 7-activity straight-line process."""
    return chain_net(("receive", "triage", "review", "resolve", "verify", "notify", "archive"))


def flower_net(labels) -> PetriNet:
    """One central place with a self-loop transition per activity; fits any log."""
    places = ["p_in", "p_mid", "p_out"]
    transitions = [("t_open", None), ("t_done", None)]
    arcs = [("p_in", "t_open"), ("t_open", "p_mid"), ("p_mid", "t_done"), ("t_done", "p_out")]
    for i, lab in enumerate(sorted(set(labels))):
        transitions.append((f"t_{i}", lab))
        arcs.append(("p_mid", f"t_{i}"))
        arcs.append((f"t_{i}", "p_mid"))
    return PetriNet.from_spec(places, transitions, arcs)


# ---------------------------------------------------------------------------
# random nets

def random_messy_net(rng: np.random.Generator, max_places: int = 15):
    """Arbitrary random net (single source/sink place), plus its raw arc list."""
    n_p = int(rng.integers(3, max_places + 1))
    n_t = int(rng.integers(2, max(3, 2 * n_p)))
    fan = min(3, n_p - 1)
    arcs: set[Arc] = set()
    labels: list[str | None] = []
    for t in range(n_t):
        labels.append(None if rng.random() < 0.3 else f"A{int(rng.integers(0, n_t))}")
        for p in rng.choice(n_p - 1, size=int(rng.integers(1, fan + 1)), replace=False):
            arcs.add(("pt", int(p), t))                      # sink never feeds a transition
        for p in rng.choice(np.arange(1, n_p), size=int(rng.integers(1, fan + 1)), replace=False):
            arcs.add(("tp", t, int(p)))                      # source is never fed
    for p in range(1, n_p):  # make the source/sink places unique
        if not any(k == "tp" and b == p for k, _, b in arcs):
            arcs.add(("tp", int(rng.integers(0, n_t)), p))
    for p in range(0, n_p - 1):
        if not any(k == "pt" and a == p for k, a, _ in arcs):
            arcs.add(("pt", p, int(rng.integers(0, n_t))))
    arc_list = sorted(arcs)
    net = PetriNet(
        [f"p{i}" for i in range(n_p)],
        [Transition(f"t{i}", lab) for i, lab in enumerate(labels)],
        arc_list,
    )
    return net, arc_list


def random_workflow_net(rng: np.random.Generator, max_units: int = 5):
    """Random composition of sequence/XOR/AND/loop/skip blocks with unique labels.

    Silent transitions are single-input single-output (loop-backs and skips),
    so any simulated trace replays without repairs.
    """
    places = ["p0"]
    transitions: list[tuple[str, str | None]] = []
    arcs: list[tuple[str, str]] = []
    cur = "p0"
    counter = itertools.count()

    def new_place() -> str:
        places.append(f"p{len(places)}")
        return places[-1]

    def add_t(label, src, dst):
        name = f"t{next(counter)}"
        transitions.append((name, label))
        arcs.append((src, name))
        arcs.append((name, dst))
        return name

    n_units = int(rng.integers(2, max_units + 1))
    for u in range(n_units):
        kind = ["seq", "xor", "and", "loop", "skip"][int(rng.integers(0, 5))]
        nxt = new_place()
        if kind == "seq":
            add_t(f"A{u}", cur, nxt)
        elif kind == "xor":
            add_t(f"A{u}x", cur, nxt)
            add_t(f"A{u}y", cur, nxt)
        elif kind == "and":
            b1, b2 = new_place(), new_place()
            c1, c2 = new_place(), new_place()
            split = f"t{next(counter)}"
            transitions.append((split, f"A{u}s"))
            arcs += [(cur, split), (split, b1), (split, b2)]
            add_t(f"A{u}p", b1, c1)
            add_t(f"A{u}q", b2, c2)
            join = f"t{next(counter)}"
            transitions.append((join, f"A{u}j"))
            arcs += [(c1, join), (c2, join), (join, nxt)]
        elif kind == "loop":
            add_t(f"A{u}", cur, nxt)
            name = f"t{next(counter)}"
            transitions.append((name, None))
            arcs += [(nxt, name), (name, cur)]
        else:  # skip
            add_t(f"A{u}", cur, nxt)
            name = f"t{next(counter)}"
            transitions.append((name, None))
            arcs += [(cur, name), (name, nxt)]
        cur = nxt
    return PetriNet.from_spec(places, transitions, arcs)


# ---------------------------------------------------------------------------
# oracles (independent brute force)

def preset_of(arcs, t: int) -> set[int]:
    return {a for k, a, b in arcs if k == "pt" and b == t}


def postset_of(arcs, t: int) -> set[int]:
    return {b for k, a, b in arcs if k == "tp" and a == t}


def enabled_oracle(arcs, n_transitions: int, marking) -> set[int]:
    return {t for t in range(n_transitions)
            if all(marking[p] > 0 for p in preset_of(arcs, t))}


def fire_oracle(arcs, marking, t: int):
    m = list(marking)
    for p in preset_of(arcs, t):
        m[p] -= 1
    for p in postset_of(arcs, t):
        m[p] += 1
    return tuple(m)


def silent_closure_oracle(arcs, silent_indices, n_transitions, marking, target, max_depth):
    """Lexicographically-least shortest silent sequence enabling the target,
    by exhaustive enumeration of all silent sequences up to max_depth."""
    if target in enabled_oracle(arcs, n_transitions, marking):
        return ()
    for depth in range(1, max_depth + 1):
        for seq in itertools.product(sorted(silent_indices), repeat=depth):
            m = tuple(marking)
            ok = True
            for s in seq:
                if s not in enabled_oracle(arcs, n_transitions, m):
                    ok = False
                    break
                m = fire_oracle(arcs, m, s)
            if ok and target in enabled_oracle(arcs, n_transitions, m):
                return seq  # product yields ascending sequences: first hit is lex-least
    return None


def place_graph_edges_oracle(arcs, n_places) -> set[tuple[int, int]]:
    edges = set()
    for k1, a1, b1 in arcs:
        if k1 != "pt":
            continue
        for k2, a2, b2 in arcs:
            if k2 == "tp" and a2 == b1:
                edges.add((a1, b2))
    return edges


def arcs_of_net(net: PetriNet) -> list[Arc]:
    """Raw arc list recovered from a net built by from_spec (for fixed fixtures)."""
    out: list[Arc] = []
    for t in range(net.n_transitions):
        out += [("pt", p, t) for p in net.pre_t[t]]
        out += [("tp", t, p) for p in net.post_t[t]]
    return sorted(out)


# ---------------------------------------------------------------------------
# synthetic logs

BASE_TS = 1_330_560_000  # 2012-03-01T00:00:00Z


def build_log(seqs, attr_values=None, start=BASE_TS, step=3600) -> el.EventLog:
    """EventLog from activity label sequences; optional parallel attr sequences."""
    vocab = el.Vocab()
    attr_names = ("resource",) if attr_values is not None else ()
    attr_vocabs = tuple(el.Vocab() for _ in attr_names)
    traces = []
    for t_i, seq in enumerate(seqs):
        events = []
        for i, lab in enumerate(seq):
            attrs = ()
            if attr_values is not None:
                attrs = (attr_vocabs[0].add(attr_values[t_i][i]),)
            events.append(el.Event(vocab.add(lab), f"case{t_i}", start + t_i * 86400 + i * step, attrs))
        traces.append(el.Trace(tuple(events)))
    return el.EventLog(traces, vocab, attr_names, attr_vocabs)


def simulate_log(net: PetriNet, n_traces: int, seed: int, max_steps: int = 200) -> el.EventLog:
    """Log of random walks over the net (retrying empty walks)."""
    rng = np.random.default_rng(seed)
    seqs = []
    while len(seqs) < n_traces:
        seq = simulate_trace(net, rng, max_steps=max_steps)
        if seq:
            seqs.append(seq)
    return build_log(seqs)
