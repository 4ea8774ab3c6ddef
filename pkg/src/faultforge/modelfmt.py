"""Parser and validator for the .fproto protocol-description format.

A model file declares FIFO channels, processes as explicit state/transition
listings, and named LTL properties:

    title "demo"
    channel AtoB capacity 2 messages {SYN, FIN, ACK}

    process A {
      var hs : {0, 1} = 0
      init Closed
      labels Est {Established}
      Closed --AtoB!SYN--> SynSent
      SynSent --BtoA?ACK {hs:=1}--> Est
      SynSent --timeout--> Closed
    }

    property phi := G (A.Established -> A.hs == 1)

Process-local variables with finite domains are expanded into the state set
at parse time: each transition may carry a guard ``[v==x && w==y]`` and
assignments ``{v:=x}``.  Every expanded state is labeled with its control
name, its declared extra labels, and one ``var=value`` label per variable,
all namespaced by the process id, so properties can refer to ``A.Closed``
and ``A.hs == 1`` directly.  ``tau`` is a free internal step; ``timeout``
fires only when nothing else can move anywhere in the composite.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import ltl
from .kernel import (
    ActionLabel, ChannelDef, ProcessDef, TAU, TIMEOUT_ACTION, Transition,
    peek, recv, send, skip,
)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int
    col: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class ModelError(Exception):
    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class BaselineViolation(Exception):
    def __init__(self, property_name: str, verdict):
        self.property_name = property_name
        self.verdict = verdict
        super().__init__(f"gadget-free model violates {property_name}")


class TrivialModel(Exception):
    pass


@dataclass
class ProcessMeta:
    pid: str
    controls: tuple
    declared_labels: dict  # control -> frozenset of extra labels
    variables: dict  # name -> tuple of values


@dataclass
class ModelDocument:
    title: Optional[str]
    channels: tuple
    processes: tuple  # kernel-ready, variable-expanded ProcessDefs
    properties: dict  # name -> resolved ltl.Formula
    property_texts: dict  # name -> source text
    meta: dict  # pid -> ProcessMeta

    def channel(self, cid: str) -> ChannelDef:
        for c in self.channels:
            if c.cid == cid:
                return c
        raise KeyError(cid)


def list_channels(doc: ModelDocument) -> list:
    """(id, capacity, domain) per channel, in declaration order."""
    return [(c.cid, c.capacity, c.domain) for c in doc.channels]


_CHANNEL_RE = re.compile(r"channel\s+(\w+)\s+capacity\s+(\d+)\s+messages\s*\{([^}]*)\}\s*$")
_PROCESS_RE = re.compile(r"process\s+(\w+)\s*\{\s*$")
_VAR_RE = re.compile(r"var\s+(\w+)\s*:\s*\{([^}]*)\}\s*=\s*(\w+)\s*$")
_INIT_RE = re.compile(r"init\s+(\w+)\s*$")
_LABELS_RE = re.compile(r"labels\s+(\w+)\s*\{([^}]*)\}\s*$")
_TRANS_RE = re.compile(r"(\w+)\s*--(.*?)-->\s*(\w+)\s*$")
_PROPERTY_RE = re.compile(r"property\s+(\w+)\s*:=\s*(.+)$")
_TITLE_RE = re.compile(r'title\s+"([^"]*)"\s*$')
_ACTION_RES = (
    ("peek", re.compile(r"(\w+)\?<(\w+)>$")),
    ("send", re.compile(r"(\w+)!(\w+)$")),
    ("recv", re.compile(r"(\w+)\?(\w+)$")),
    ("skip", re.compile(r"skip\((\w+)\)$")),
)
_GUARD_RE = re.compile(r"\[([^\]]*)\]")
_ASSIGN_RE = re.compile(r"\{([^}]*)\}")


def _value(token: str):
    return int(token) if token.isdigit() else token


@dataclass
class _RawTransition:
    source: str
    action_text: str
    target: str
    line: int


@dataclass
class _RawProcess:
    pid: str
    line: int
    init: Optional[str] = None
    variables: dict = field(default_factory=dict)  # name -> (values, initial)
    declared_labels: dict = field(default_factory=dict)
    transitions: list = field(default_factory=list)


def parse_model(text: str) -> ModelDocument:
    """Parse and fully resolve a model, or raise ModelError carrying every
    diagnostic found, each with a source line."""
    diags: list = []
    title = None
    channels: list = []
    raw_procs: list = []
    raw_props: list = []  # (name, text, line)
    current: Optional[_RawProcess] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if current is None:
            if m := _TITLE_RE.fullmatch(line):
                title = m.group(1)
            elif m := _CHANNEL_RE.fullmatch(line):
                cid, cap, msgs = m.group(1), int(m.group(2)), m.group(3)
                domain = tuple(_value(s.strip()) for s in msgs.split(",") if s.strip())
                if not domain:
                    diags.append(Diagnostic(f"channel {cid} has an empty message domain", lineno))
                elif cap < 1:
                    diags.append(Diagnostic(f"channel {cid} capacity must be >= 1", lineno))
                else:
                    if any(c.cid == cid for c in channels):
                        diags.append(Diagnostic(f"duplicate channel id {cid}", lineno))
                    else:
                        channels.append(ChannelDef(cid, domain, cap))
            elif m := _PROCESS_RE.fullmatch(line):
                current = _RawProcess(pid=m.group(1), line=lineno)
                if any(p.pid == current.pid for p in raw_procs):
                    diags.append(Diagnostic(f"duplicate process id {current.pid}", lineno))
            elif m := _PROPERTY_RE.fullmatch(line):
                name, body = m.group(1), m.group(2).strip()
                if any(n == name for n, _, _ in raw_props):
                    diags.append(Diagnostic(f"duplicate property name {name}", lineno))
                raw_props.append((name, body, lineno))
            else:
                diags.append(Diagnostic(f"unrecognized declaration: {line!r}", lineno))
        else:
            if line == "}":
                raw_procs.append(current)
                current = None
            elif m := _VAR_RE.fullmatch(line):
                name, values, init = m.group(1), m.group(2), m.group(3)
                domain = tuple(_value(s.strip()) for s in values.split(",") if s.strip())
                if name in current.variables:
                    diags.append(Diagnostic(f"duplicate variable {name}", lineno))
                elif _value(init) not in domain:
                    diags.append(Diagnostic(f"initial value {init} outside domain of {name}", lineno))
                else:
                    current.variables[name] = (domain, _value(init))
            elif m := _INIT_RE.fullmatch(line):
                if current.init is not None:
                    diags.append(Diagnostic("init declared twice", lineno))
                current.init = m.group(1)
            elif m := _LABELS_RE.fullmatch(line):
                state, labels = m.group(1), m.group(2)
                extra = frozenset(s.strip() for s in labels.split(",") if s.strip())
                current.declared_labels[state] = current.declared_labels.get(state, frozenset()) | extra
            elif m := _TRANS_RE.fullmatch(line):
                current.transitions.append(
                    _RawTransition(m.group(1), m.group(2).strip(), m.group(3), lineno))
            else:
                diags.append(Diagnostic(f"unrecognized line in process {current.pid}: {line!r}", lineno))

    if current is not None:
        diags.append(Diagnostic(f"process {current.pid} is missing its closing brace", current.line))
    if diags:
        raise ModelError(diags)

    channel_by_id = {c.cid: c for c in channels}
    processes = []
    meta = {}
    for rp in raw_procs:
        p, m, perrs = _elaborate_process(rp, channel_by_id)
        diags.extend(perrs)
        if p is not None:
            processes.append(p)
            meta[rp.pid] = m
    if diags:
        raise ModelError(diags)

    label_universe = frozenset().union(*(p.atomic_props for p in processes)) if processes else frozenset()
    properties = {}
    property_texts = {}
    for name, body, lineno in raw_props:
        try:
            f = ltl.parse_formula(body)
        except ltl.LtlSyntaxError as err:
            diags.append(Diagnostic(f"property {name}: {err}", lineno, err.position + 1))
            continue
        try:
            properties[name] = resolve_formula(f, channel_by_id, label_universe, meta)
        except ModelError as err:
            diags.extend(Diagnostic(d.message, lineno) for d in err.diagnostics)
            continue
        property_texts[name] = body
    if diags:
        raise ModelError(diags)

    return ModelDocument(title, tuple(channels), tuple(processes),
                         properties, property_texts, meta)


def _parse_action(text: str, line: int):
    """Split '<action> [guard] {assigns}' and build the ActionLabel."""
    errs = []
    guard = {}
    assigns = {}
    if m := _ASSIGN_RE.search(text):
        for part in m.group(1).split(","):
            part = part.strip()
            if not part:
                continue
            if am := re.fullmatch(r"(\w+)\s*:=\s*(\w+)", part):
                assigns[am.group(1)] = _value(am.group(2))
            else:
                errs.append(Diagnostic(f"bad assignment {part!r}", line))
        text = text[:m.start()].strip()
    if m := _GUARD_RE.search(text):
        for part in m.group(1).split("&&"):
            part = part.strip()
            if not part:
                continue
            if gm := re.fullmatch(r"(\w+)\s*==\s*(\w+)", part):
                guard[gm.group(1)] = _value(gm.group(2))
            else:
                errs.append(Diagnostic(f"bad guard {part!r}", line))
        text = text[:m.start()].strip()
    if text == "tau":
        return TAU, guard, assigns, errs
    if text == "timeout":
        return TIMEOUT_ACTION, guard, assigns, errs
    for kind, rx in _ACTION_RES:
        if m := rx.fullmatch(text):
            if kind == "skip":
                return skip(m.group(1)), guard, assigns, errs
            c, msg = m.group(1), _value(m.group(2))
            maker = {"send": send, "recv": recv, "peek": peek}[kind]
            return maker(c, msg), guard, assigns, errs
    errs.append(Diagnostic(f"unrecognized action {text!r}", line))
    return None, guard, assigns, errs


def _elaborate_process(rp: _RawProcess, channels: dict):
    errs = []
    if rp.init is None:
        errs.append(Diagnostic(f"process {rp.pid} has no init declaration", rp.line))
        return None, None, errs

    controls = {rp.init}
    parsed = []  # (source, action, guard, assigns, target, line)
    for t in rp.transitions:
        action, guard, assigns, aerrs = _parse_action(t.action_text, t.line)
        errs.extend(aerrs)
        if action is None:
            continue
        if action.channel is not None and action.channel not in channels:
            errs.append(Diagnostic(f"unknown channel {action.channel}", t.line))
            continue
        if action.kind in ("send", "recv", "peek"):
            domain = channels[action.channel].domain
            if action.message not in domain:
                errs.append(Diagnostic(
                    f"message {action.message} not in domain of {action.channel}", t.line))
                continue
        for var, val in list(guard.items()) + list(assigns.items()):
            if var not in rp.variables:
                errs.append(Diagnostic(f"unknown variable {var}", t.line))
            elif val not in rp.variables[var][0]:
                errs.append(Diagnostic(f"value {val} outside domain of {var}", t.line))
        controls.add(t.source)
        controls.add(t.target)
        parsed.append((t.source, action, guard, assigns, t.target, t.line))
    for state in rp.declared_labels:
        if state not in controls:
            errs.append(Diagnostic(f"labels declared for unknown state {state}", rp.line))
    if errs:
        return None, None, errs

    var_names = list(rp.variables)
    var_domains = [rp.variables[v][0] for v in var_names]
    var_init = tuple(rp.variables[v][1] for v in var_names)

    def state_name(ctrl: str, vals: tuple) -> str:
        if not var_names:
            return ctrl
        inner = ",".join(f"{v}={x}" for v, x in zip(var_names, vals))
        return f"{ctrl}[{inner}]"

    pid = rp.pid
    states = []
    labeling = {}
    for ctrl in sorted(controls):
        for vals in itertools.product(*var_domains) if var_names else [()]:
            s = state_name(ctrl, vals)
            states.append(s)
            labels = {f"{pid}.{ctrl}"}
            labels.update(f"{pid}.{lab}" for lab in rp.declared_labels.get(ctrl, ()))
            labels.update(f"{pid}.{v}={x}" for v, x in zip(var_names, vals))
            labeling[s] = frozenset(labels)

    transitions = []
    for source, action, guard, assigns, target, _line in parsed:
        for vals in itertools.product(*var_domains) if var_names else [()]:
            env = dict(zip(var_names, vals))
            if any(env[v] != x for v, x in guard.items()):
                continue
            env.update(assigns)
            new_vals = tuple(env[v] for v in var_names)
            transitions.append(Transition(state_name(source, vals), action,
                                          state_name(target, new_vals)))

    inputs = set()
    outputs = set()
    for t in transitions:
        a = t.action
        if a.kind == "send":
            outputs.update(send(a.channel, m) for m in channels[a.channel].domain)
        elif a.kind == "recv":
            inputs.update(recv(a.channel, m) for m in channels[a.channel].domain)
        elif a.kind == "peek":
            inputs.update(peek(a.channel, m) for m in channels[a.channel].domain)
        elif a.kind == "skip":
            inputs.add(a)

    proc = ProcessDef(
        pid=pid,
        atomic_props=frozenset().union(*labeling.values()),
        inputs=frozenset(inputs),
        outputs=frozenset(outputs),
        states=frozenset(states),
        initial=state_name(rp.init, var_init),
        transitions=tuple(transitions),
        labeling=labeling,
    )
    pm = ProcessMeta(pid, tuple(sorted(controls)),
                     dict(rp.declared_labels),
                     {v: rp.variables[v][0] for v in var_names})
    return proc, pm, []


def resolve_formula(f: ltl.Formula, channels: dict, labels: frozenset, meta: dict) -> ltl.Formula:
    """Rewrite property atoms onto the label alphabet the kernel emits."""
    errs = []

    def resolve(name: str) -> ltl.Formula:
        if m := re.fullmatch(r"empty\((\w+)\)", name):
            if m.group(1) not in channels:
                errs.append(Diagnostic(f"unknown channel {m.group(1)} in property", 0))
            return ltl.Prop(name)
        if m := re.fullmatch(r"len\((\w+)\)==(\d+)", name):
            cid, n = m.group(1), int(m.group(2))
            if cid not in channels:
                errs.append(Diagnostic(f"unknown channel {cid} in property", 0))
            elif n > channels[cid].capacity:
                errs.append(Diagnostic(
                    f"len({cid})=={n} can never hold: capacity is {channels[cid].capacity}", 0))
            return ltl.Prop(name)
        if m := re.fullmatch(r"(\w+)\.(\w+)==(\w+)\.(\w+)", name):
            p1, v1, p2, v2 = m.groups()
            d1 = meta.get(p1) and meta[p1].variables.get(v1)
            d2 = meta.get(p2) and meta[p2].variables.get(v2)
            if d1 is None or d2 is None:
                errs.append(Diagnostic(f"unresolved variable comparison {name!r}", 0))
                return ltl.Prop(name)
            common = [x for x in d1 if x in d2]
            if not common:
                errs.append(Diagnostic(f"variables in {name!r} share no values", 0))
                return ltl.Prop(name)
            disjuncts = [ltl.And(ltl.Prop(f"{p1}.{v1}={x}"), ltl.Prop(f"{p2}.{v2}={x}"))
                         for x in common]
            out = disjuncts[0]
            for d in disjuncts[1:]:
                out = ltl.Or(out, d)
            return out
        if m := re.fullmatch(r"(\w+)\.(\w+)==(\w+)", name):
            pid, var, val = m.groups()
            atom = f"{pid}.{var}={_value(val)}"
            if atom not in labels:
                errs.append(Diagnostic(f"unresolved atom {name!r}", 0))
            return ltl.Prop(atom)
        if re.fullmatch(r"\w+\.\w+", name):
            if name not in labels:
                errs.append(Diagnostic(f"unresolved atom {name!r}", 0))
            return ltl.Prop(name)
        errs.append(Diagnostic(f"unresolved atom {name!r}", 0))
        return ltl.Prop(name)

    out = ltl.map_atoms(f, resolve)
    if errs:
        raise ModelError(errs)
    return out


def validate_baseline(doc: ModelDocument, fairness: bool = False) -> dict:
    """Check the gadget-free model satisfies every declared property and has
    at least one infinite run.  Returns per-property verdicts; raises
    BaselineViolation or TrivialModel otherwise."""
    from . import synthesis  # late import: synthesis builds on this module

    # one emptiness query with the (unnegated) automaton for true: an
    # accepting run is just an infinite run of the model
    if not synthesis.has_infinite_run(doc):
        raise TrivialModel("model has no infinite run")

    results = {}
    for name in doc.properties:
        verdict = synthesis.synthesize(
            synthesis.ThreatModel(doc, victims=(), gadgets={}, property_name=name),
            fairness=fairness)
        results[name] = verdict
        if verdict.outcome != "Safe":
            raise BaselineViolation(name, verdict)
    return results
