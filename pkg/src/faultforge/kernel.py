"""Executable semantics for processes, channels, and asynchronous composition.

Processes are labeled transition systems whose actions either touch a FIFO
channel (send / receive / non-destructive peek / skip) or are purely local
(internal, timeout).  Channels are stored as buffer contents inside the
composite state rather than as separate processes; send/receive/peek become
guarded local moves of the acting process, which is observationally
equivalent and keeps the state vector small.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, NamedTuple, Optional, Sequence


class KernelError(Exception):
    """Base class for kernel-level errors."""


class BufferFull(KernelError):
    pass


class UnknownMessage(KernelError):
    pass


class ChannelDisabled(KernelError):
    """Receive or peek attempted with empty buffer or mismatched head."""


class IllegalChoice(KernelError):
    pass


class CompositionError(KernelError):
    pass


# Action kinds.  ``internal`` is the silent tau step; ``timeout`` is a
# tau-like local step that is enabled only when no ordinary transition is
# enabled anywhere in the composite (the scheduling rule Promela gives its
# ``timeout`` keyword).  ``skip`` yields on a channel and is enabled only
# when the channel length changed since the process last skipped.
SEND = "send"
RECV = "recv"
PEEK = "peek"
INTERNAL = "internal"
SKIP = "skip"
TIMEOUT = "timeout"

_CHANNEL_KINDS = (SEND, RECV, PEEK)
_LOCAL_KINDS = (INTERNAL, TIMEOUT)


@dataclass(frozen=True)
class ActionLabel:
    kind: str
    channel: Optional[str] = None
    message: Hashable = None

    def __post_init__(self) -> None:
        if self.kind in _CHANNEL_KINDS:
            if self.channel is None or self.message is None:
                raise ValueError(f"{self.kind} action needs a channel and a message")
        elif self.kind == SKIP:
            if self.channel is None or self.message is not None:
                raise ValueError("skip action carries a channel id only")
        elif self.kind in _LOCAL_KINDS:
            if self.channel is not None or self.message is not None:
                raise ValueError(f"{self.kind} action carries no channel or message")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == SEND:
            return f"{self.channel}!{self.message}"
        if self.kind == RECV:
            return f"{self.channel}?{self.message}"
        if self.kind == PEEK:
            return f"{self.channel}?<{self.message}>"
        if self.kind == SKIP:
            return f"skip({self.channel})"
        if self.kind == TIMEOUT:
            return "timeout"
        return "tau"


def send(channel: str, message: Hashable) -> ActionLabel:
    return ActionLabel(SEND, channel, message)


def recv(channel: str, message: Hashable) -> ActionLabel:
    return ActionLabel(RECV, channel, message)


def peek(channel: str, message: Hashable) -> ActionLabel:
    return ActionLabel(PEEK, channel, message)


def skip(channel: str) -> ActionLabel:
    return ActionLabel(SKIP, channel)


TAU = ActionLabel(INTERNAL)
TIMEOUT_ACTION = ActionLabel(TIMEOUT)


@dataclass(frozen=True)
class Transition:
    source: Hashable
    action: Hashable
    target: Hashable

    def __str__(self) -> str:
        return f"{self.source} --{self.action}--> {self.target}"


@dataclass
class ProcessDef:
    """A process: finite LTS with input/output action sets and state labels.

    ``inputs`` and ``outputs`` must be disjoint.  Transition actions must lie
    in ``inputs | outputs`` or be local (internal/timeout).  ``labeling`` must
    be total over ``states``.  Actions may be arbitrary hashables; only
    composition requires them to be ActionLabels.
    """

    pid: str
    atomic_props: frozenset
    inputs: frozenset
    outputs: frozenset
    states: frozenset
    initial: Hashable
    transitions: tuple
    labeling: Mapping

    def __post_init__(self) -> None:
        self.atomic_props = frozenset(self.atomic_props)
        self.inputs = frozenset(self.inputs)
        self.outputs = frozenset(self.outputs)
        self.states = frozenset(self.states)
        self.transitions = tuple(self.transitions)
        if self.inputs & self.outputs:
            raise ValueError(f"process {self.pid}: inputs and outputs overlap")
        if self.initial not in self.states:
            raise ValueError(f"process {self.pid}: initial state not in state set")
        allowed = self.inputs | self.outputs
        for t in self.transitions:
            if t.source not in self.states or t.target not in self.states:
                raise ValueError(f"process {self.pid}: transition endpoint outside state set: {t}")
            if isinstance(t.action, ActionLabel) and t.action.kind in _LOCAL_KINDS:
                continue
            if t.action not in allowed:
                raise ValueError(f"process {self.pid}: action {t.action} not declared as input or output")
        for s in self.states:
            if s not in self.labeling:
                raise ValueError(f"process {self.pid}: labeling not total (missing {s!r})")
        for s, props in self.labeling.items():
            extra = frozenset(props) - self.atomic_props
            if extra:
                raise ValueError(f"process {self.pid}: labels {extra} not in atomic_props")

    def outgoing(self, state: Hashable) -> tuple:
        return tuple(t for t in self.transitions if t.source == state)

    def relabel(self, pid: str, rename: Mapping) -> "ProcessDef":
        """Copy with atomic propositions renamed (used to namespace gadgets)."""
        props = frozenset(rename.get(p, p) for p in self.atomic_props)
        labeling = {s: frozenset(rename.get(p, p) for p in ls) for s, ls in self.labeling.items()}
        return ProcessDef(pid, props, self.inputs, self.outputs, self.states,
                          self.initial, self.transitions, labeling)


@dataclass(frozen=True)
class ChannelDef:
    cid: str
    domain: tuple
    capacity: int

    def __post_init__(self) -> None:
        if not self.domain:
            raise ValueError(f"channel {self.cid}: empty message domain")
        if self.capacity < 1:
            raise ValueError(f"channel {self.cid}: capacity must be >= 1")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"channel {self.cid}: duplicate messages in domain")


class CompositeState(NamedTuple):
    """One local state per process, one buffer per channel, one length
    tracker per skip-capable (process, channel) slot."""

    locals: tuple
    buffers: tuple
    trackers: tuple


class System:
    """Immutable asynchronous composition of processes over shared channels."""

    def __init__(
        self,
        processes: Sequence[ProcessDef],
        channels: Sequence[ChannelDef],
        preempt: Iterable[tuple] = (),
        terminal: Iterable[tuple] = (),
        gadget_indices: Iterable[int] = (),
    ) -> None:
        self.processes = tuple(processes)
        self.channels = tuple(channels)
        self.channel_index = {c.cid: i for i, c in enumerate(self.channels)}
        if len(self.channel_index) != len(self.channels):
            raise CompositionError("duplicate channel ids")
        self.preempt = tuple(preempt)  # (process index, channel id) of reorder gadgets
        self.terminal = frozenset(terminal)  # (process index, local state) with no moves
        self.gadget_indices = frozenset(gadget_indices)
        self._validate()

        # skip slots: (process index, channel id) pairs that own a tracker
        slots = []
        for i, p in enumerate(self.processes):
            for a in sorted((a for a in p.inputs if isinstance(a, ActionLabel) and a.kind == SKIP),
                            key=lambda a: a.channel):
                slots.append((i, a.channel))
        self.skip_slots = tuple(slots)
        self._slot_index = {pair: k for k, pair in enumerate(self.skip_slots)}

        self._outgoing = {}
        for i, p in enumerate(self.processes):
            for s in p.states:
                self._outgoing[(i, s)] = p.outgoing(s)

    def _validate(self) -> None:
        ids = [p.pid for p in self.processes]
        if len(set(ids)) != len(ids):
            raise CompositionError("duplicate process ids")
        for i, p in enumerate(self.processes):
            for j in range(i + 1, len(self.processes)):
                q = self.processes[j]
                overlap = p.atomic_props & q.atomic_props
                if overlap:
                    raise CompositionError(
                        f"processes {p.pid} and {q.pid} share atomic propositions {sorted(overlap)}")
                # Output disjointness per composition rules.  A gadget stands in
                # for the faulty channel itself, so its re-emissions may share
                # send actions with the original sender; everyone else must not.
                i_gadget = i in self.gadget_indices
                j_gadget = j in self.gadget_indices
                if i_gadget != j_gadget:
                    continue
                overlap = p.outputs & q.outputs
                if overlap:
                    raise CompositionError(
                        f"processes {p.pid} and {q.pid} share output actions "
                        f"{sorted(str(a) for a in overlap)}")
                if i_gadget and j_gadget:
                    overlap = (p.inputs | p.outputs) & (q.inputs | q.outputs)
                    overlap = {a for a in overlap if not (isinstance(a, ActionLabel) and a.kind in _LOCAL_KINDS)}
                    if overlap:
                        raise CompositionError(
                            f"gadgets {p.pid} and {q.pid} share actions "
                            f"{sorted(str(a) for a in overlap)}")
        for p in self.processes:
            for t in p.transitions:
                a = t.action
                if not isinstance(a, ActionLabel):
                    raise CompositionError(
                        f"process {p.pid}: action {a!r} is not a channel/local action")
                if a.channel is not None:
                    if a.channel not in self.channel_index:
                        raise CompositionError(f"process {p.pid}: unknown channel {a.channel}")
                    if a.kind in _CHANNEL_KINDS:
                        chan = self.channels[self.channel_index[a.channel]]
                        if a.message not in chan.domain:
                            raise CompositionError(
                                f"process {p.pid}: message {a.message!r} not in domain of {a.channel}")

    def initial_state(self) -> CompositeState:
        return CompositeState(
            locals=tuple(p.initial for p in self.processes),
            buffers=tuple(() for _ in self.channels),
            trackers=tuple(0 for _ in self.skip_slots),
        )

    def capacity(self, cid: str) -> int:
        return self.channels[self.channel_index[cid]].capacity

    # -- channel primitives -------------------------------------------------

    def channel_send(self, state: CompositeState, cid: str, message: Hashable) -> CompositeState:
        ci = self.channel_index[cid]
        chan = self.channels[ci]
        if message not in chan.domain:
            raise UnknownMessage(f"{message!r} not in domain of {cid}")
        buf = state.buffers[ci]
        if len(buf) >= chan.capacity:
            raise BufferFull(f"channel {cid} at capacity {chan.capacity}")
        buffers = state.buffers[:ci] + (buf + (message,),) + state.buffers[ci + 1:]
        return state._replace(buffers=buffers)

    def channel_recv(self, state: CompositeState, cid: str, message: Hashable) -> CompositeState:
        ci = self.channel_index[cid]
        buf = state.buffers[ci]
        if not buf or buf[0] != message:
            raise ChannelDisabled(f"receive of {message!r} on {cid} disabled (head mismatch or empty)")
        buffers = state.buffers[:ci] + (buf[1:],) + state.buffers[ci + 1:]
        return state._replace(buffers=buffers)

    def channel_peek(self, state: CompositeState, cid: str, message: Hashable) -> CompositeState:
        ci = self.channel_index[cid]
        buf = state.buffers[ci]
        if not buf or buf[0] != message:
            raise ChannelDisabled(f"peek of {message!r} on {cid} disabled (head mismatch or empty)")
        return state

    # -- composition semantics ----------------------------------------------

    def _action_enabled(self, state: CompositeState, pi: int, action: ActionLabel) -> bool:
        kind = action.kind
        if kind == INTERNAL:
            return True
        if kind == TIMEOUT:
            return False  # only via the standstill rule below
        ci = self.channel_index[action.channel]
        buf = state.buffers[ci]
        if kind == SEND:
            return len(buf) < self.channels[ci].capacity
        if kind in (RECV, PEEK):
            return bool(buf) and buf[0] == action.message
        if kind == SKIP:
            slot = self._slot_index[(pi, action.channel)]
            return len(buf) != state.trackers[slot]
        raise AssertionError(kind)

    def enabled_transitions(self, state: CompositeState) -> list:
        """All (process index, transition) choices enabled at ``state``.

        Ordinary transitions first; ``timeout`` transitions become enabled
        only when no ordinary transition is enabled anywhere.  An empty
        result is a deadlock (callers extend it with a stutter self-loop).
        """
        regular = []
        timeouts = []
        for pi in range(len(self.processes)):
            local = state.locals[pi]
            if (pi, local) in self.terminal:
                continue
            for t in self._outgoing[(pi, local)]:
                if t.action.kind == TIMEOUT:
                    timeouts.append((pi, t))
                elif self._action_enabled(state, pi, t.action):
                    regular.append((pi, t))
        if regular and self.preempt:
            for gi, cid in self.preempt:
                consuming = any(
                    pi == gi and t.action.kind == RECV and t.action.channel == cid
                    for pi, t in regular)
                if consuming:
                    regular = [
                        (pi, t) for pi, t in regular
                        if pi == gi or not (t.action.kind == RECV and t.action.channel == cid)]
        if regular:
            return regular
        return timeouts

    def step(self, state: CompositeState, choice: tuple) -> CompositeState:
        if choice not in self.enabled_transitions(state):
            raise IllegalChoice(f"choice {choice[1]} by process {choice[0]} not enabled")
        return self.apply(state, choice)

    def apply(self, state: CompositeState, choice: tuple) -> CompositeState:
        """Apply an enabled choice without re-checking enabledness."""
        pi, t = choice
        action = t.action
        kind = action.kind
        if kind == SEND:
            state = self.channel_send(state, action.channel, action.message)
        elif kind == RECV:
            state = self.channel_recv(state, action.channel, action.message)
        elif kind == SKIP:
            ci = self.channel_index[action.channel]
            slot = self._slot_index[(pi, action.channel)]
            trackers = list(state.trackers)
            trackers[slot] = len(state.buffers[ci])
            state = state._replace(trackers=tuple(trackers))
        # peek, internal, timeout: no shared-state effect
        new_locals = state.locals[:pi] + (t.target,) + state.locals[pi + 1:]
        return state._replace(locals=new_locals)

    def composite_labels(self, state: CompositeState) -> frozenset:
        """Union of per-process labels plus derived channel propositions."""
        labels = set()
        for pi, p in enumerate(self.processes):
            labels.update(p.labeling[state.locals[pi]])
        for ci, c in enumerate(self.channels):
            n = len(state.buffers[ci])
            if n == 0:
                labels.add(f"empty({c.cid})")
            labels.add(f"len({c.cid})=={n}")
        return frozenset(labels)

    def assert_capacity(self, state: CompositeState) -> None:
        for ci, c in enumerate(self.channels):
            if len(state.buffers[ci]) > c.capacity:
                raise AssertionError(f"channel {c.cid} over capacity in {state}")


def compose(
    processes: Sequence[ProcessDef],
    channels: Sequence[ChannelDef],
    preempt: Iterable[tuple] = (),
    terminal: Iterable[tuple] = (),
    gadget_indices: Iterable[int] = (),
) -> System:
    return System(processes, channels, preempt=preempt, terminal=terminal,
                  gadget_indices=gadget_indices)
