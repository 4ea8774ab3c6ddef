"""Drop, replay, and reorder fault gadgets as ProcessDef constructors.

Each gadget targets a victim channel c = (M, k) with a fault limit l >= 1
and is finite by construction: control locations x a bounded counter x a
memory buffer drawn from the sequences over M of length at most l.

skip(c) keeps the gadget from starving the real recipient: it is enabled
only when the channel length changed since the gadget last skipped (the
length tracker lives in the composite state, kernel-side), so a gadget can
never spin on skips alone.  End is the unique done-labeled state; its only
transition is a silent self-loop, and composition treats End as process
termination so an exhausted gadget cannot keep an otherwise-stalled system
artificially live.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Tuple

from .kernel import (
    ActionLabel, ChannelDef, ProcessDef, TAU, Transition,
    peek, recv, send, skip,
)

DONE = "done"


class InvalidLimit(ValueError):
    pass


@dataclass(frozen=True)
class GadgetConfig:
    kind: str  # drop | replay | reorder
    victim: str
    limit: int

    def __post_init__(self) -> None:
        if self.kind not in ("drop", "replay", "reorder"):
            raise ValueError(f"unknown gadget kind {self.kind!r}")
        if self.limit < 1:
            raise InvalidLimit(f"fault limit must be >= 1, got {self.limit}")


def channel_interface(channel: ChannelDef) -> Tuple[frozenset, frozenset, frozenset]:
    """The Send / Recv / Peek action sets a channel induces."""
    sends = frozenset(send(channel.cid, m) for m in channel.domain)
    recvs = frozenset(recv(channel.cid, m) for m in channel.domain)
    peeks = frozenset(peek(channel.cid, m) for m in channel.domain)
    return sends, recvs, peeks


def buffer_space(domain: Tuple, limit: int) -> list:
    """All sequences over the domain of length <= limit, shortest first."""
    out = [()]
    layer = [()]
    for _ in range(limit):
        layer = [b + (m,) for b in layer for m in domain]
        out.extend(layer)
    return out


def _without_first(b: tuple, m) -> tuple:
    i = b.index(m)
    return b[:i] + b[i + 1:]


def _require_limit(limit: int) -> None:
    if limit < 1:
        raise InvalidLimit(f"fault limit must be >= 1, got {limit}")


def build_drop(channel: ChannelDef, limit: int, pid: str = "drop") -> ProcessDef:
    """Silently consumes up to ``limit`` messages from the victim channel.

    States (Main, n) for n in 0..limit plus End; from (Main, n) the gadget
    nondeterministically drops a message (n > 0), skips, or terminates.
    """
    _require_limit(limit)
    c = channel.cid
    _, recvs, _ = channel_interface(channel)
    states = [("Main", n) for n in range(limit, -1, -1)] + ["End"]
    transitions = []
    for n in range(limit, -1, -1):
        if n > 0:
            for m in channel.domain:
                transitions.append(Transition(("Main", n), recv(c, m), ("Main", n - 1)))
        transitions.append(Transition(("Main", n), skip(c), ("Main", n)))
        transitions.append(Transition(("Main", n), TAU, "End"))
    transitions.append(Transition("End", TAU, "End"))
    return ProcessDef(
        pid=pid,
        atomic_props=frozenset([DONE]),
        inputs=recvs | frozenset([skip(c)]),
        outputs=frozenset(),
        states=frozenset(states),
        initial=("Main", limit),
        transitions=tuple(transitions),
        labeling={s: frozenset([DONE]) if s == "End" else frozenset() for s in states},
    )


def build_replay(channel: ChannelDef, limit: int, pid: str = "replay") -> ProcessDef:
    """Observes messages via non-destructive peeks, then replays copies.

    Consume phase: observe up to the budget into memory (peeking leaves the
    channel untouched); at budget 1 the observe is fused with the phase
    change.  Replay phase: nondeterministically re-send a stored message
    (with or without deleting it), silently discard one, terminate, or
    finish when memory is empty or the send budget is spent.
    """
    _require_limit(limit)
    c = channel.cid
    sends, _, peeks = channel_interface(channel)
    bufs = buffer_space(channel.domain, limit)
    states = ([("Consume", n, b) for n in range(limit, -1, -1) for b in bufs]
              + [("Replay", n, b) for n in range(limit, -1, -1) for b in bufs]
              + ["End"])
    transitions = []
    for n in range(limit, -1, -1):
        for b in bufs:
            src = ("Consume", n, b)
            if len(b) < limit:
                for m in channel.domain:
                    if n > 1:
                        transitions.append(Transition(src, peek(c, m), ("Consume", n - 1, b + (m,))))
                    if n >= 1:
                        transitions.append(Transition(src, peek(c, m), ("Replay", limit, b + (m,))))
                if n == 0:
                    transitions.append(Transition(src, TAU, ("Replay", limit, b)))
            transitions.append(Transition(src, skip(c), src))
    for n in range(limit, -1, -1):
        for b in bufs:
            src = ("Replay", n, b)
            for m in dict.fromkeys(b):  # one successor per distinct stored value
                if n >= 1:
                    transitions.append(Transition(src, send(c, m), ("Replay", n - 1, _without_first(b, m))))
                transitions.append(Transition(src, send(c, m), src))
                transitions.append(Transition(src, TAU, ("Replay", n, _without_first(b, m))))
            transitions.append(Transition(src, skip(c), src))
            # Terminate, Empty-empty, and Empty-budget coincide as tuples when
            # several apply; T is a set, so duplicates collapse below.
            transitions.append(Transition(src, TAU, "End"))
            if not b:
                transitions.append(Transition(src, TAU, "End"))
            if n == 0:
                transitions.append(Transition(src, TAU, "End"))
    transitions.append(Transition("End", TAU, "End"))
    transitions = list(dict.fromkeys(transitions))
    return ProcessDef(
        pid=pid,
        atomic_props=frozenset([DONE]),
        inputs=peeks | frozenset([skip(c)]),
        outputs=sends,
        states=frozenset(states),
        initial=("Consume", limit, ()),
        transitions=tuple(transitions),
        labeling={s: frozenset([DONE]) if s == "End" else frozenset() for s in states},
    )


def build_reorder(channel: ChannelDef, limit: int, pid: str = "reorder") -> ProcessDef:
    """Destructively intercepts exactly ``limit`` messages, then re-sends
    them in an arbitrary order until memory is empty.

    The Init phase skips an arbitrary prefix of traffic before committing;
    consumption is strictly sequential (budget counts down to the fused
    last intercept); the replay phase explores every ordering of the stored
    messages.  Callers register the gadget for recv preemption so it wins
    races against the legitimate receiver.
    """
    _require_limit(limit)
    c = channel.cid
    sends, recvs, _ = channel_interface(channel)
    bufs = buffer_space(channel.domain, limit)
    states = (["Init"]
              + [("Consume", n, b) for n in range(limit, -1, -1) for b in bufs]
              + [("Replay", b) for b in bufs]
              + ["End"])
    transitions = [
        Transition("Init", skip(c), "Init"),
        Transition("Init", TAU, ("Consume", limit, ())),
    ]
    for n in range(limit, -1, -1):
        for b in bufs:
            src = ("Consume", n, b)
            if len(b) < limit:
                for m in channel.domain:
                    if n > 1:
                        transitions.append(Transition(src, recv(c, m), ("Consume", n - 1, b + (m,))))
                    elif n == 1:
                        transitions.append(Transition(src, recv(c, m), ("Replay", b + (m,))))
    for b in bufs:
        src = ("Replay", b)
        for m in dict.fromkeys(b):
            transitions.append(Transition(src, send(c, m), ("Replay", _without_first(b, m))))
        if not b:
            transitions.append(Transition(src, TAU, "End"))
    transitions.append(Transition("End", TAU, "End"))
    return ProcessDef(
        pid=pid,
        atomic_props=frozenset([DONE]),
        inputs=recvs | frozenset([skip(c)]),
        outputs=sends,
        states=frozenset(states),
        initial="Init",
        transitions=tuple(transitions),
        labeling={s: frozenset([DONE]) if s == "End" else frozenset() for s in states},
    )


_BUILDERS = {"drop": build_drop, "replay": build_replay, "reorder": build_reorder}


def build_gadget(config: GadgetConfig, channel: ChannelDef, pid: str = None) -> ProcessDef:
    if channel.cid != config.victim:
        raise ValueError(f"gadget targets {config.victim} but channel is {channel.cid}")
    if pid is None:
        pid = f"{config.kind}@{config.victim}"
    return _BUILDERS[config.kind](channel, config.limit, pid=pid)


def expected_state_count(kind: str, domain_size: int, limit: int) -> int:
    """Closed-form control-state counts used by the structural checks."""
    buf = sum(domain_size ** i for i in range(limit + 1))
    if kind == "drop":
        return limit + 2
    if kind == "replay":
        return 2 * (limit + 1) * buf + 1
    if kind == "reorder":
        return 2 + (limit + 1) * buf + buf
    raise ValueError(kind)
