"""Immutable gate-level circuit graph with levelization and trojan splicing.

A :class:`Circuit` is a flat single-output-per-gate netlist over named nets.
Net ids are dense integers assigned in declaration order: primary inputs
first (in port order), then one id per gate output (in gate order).  All
structural invariants (single driver per net, no dangling inputs, acyclic)
are checked at construction time, never assumed.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CombinationalLoop,
    CyclicResult,
    LengthMismatch,
    MultipleDrivers,
    RuleViolation,
    UndeclaredNet,
    UnknownNet,
)

GATE_KINDS = ("and", "nand", "or", "nor", "xor", "xnor", "not", "buf")
INVERTING_KINDS = frozenset({"nand", "nor", "xnor", "not"})
SINGLE_INPUT_KINDS = frozenset({"not", "buf"})


@dataclass(frozen=True)
class Gate:
    """One primitive gate: ``kind`` drives net ``out`` from nets ``ins``."""

    kind: str
    out: int
    ins: tuple[int, ...]


@dataclass(frozen=True)
class TrojanInstance:
    """A trigger/payload pair to be spliced into a host circuit.

    ``trigger_nets`` are sampled host nets, ``polarities[i]`` the value of
    trigger i that arms the conjunction (0-polarity triggers pass through an
    inverter first).  ``target_net`` is the payload site: the spliced XOR
    inverts it whenever the conjunction holds.  ``payload_out`` is filled in
    by :func:`splice_trojan` and equals ``target_net`` because the XOR output
    takes over the target's name and id.
    """

    trigger_nets: tuple[int, ...]
    polarities: tuple[int, ...]
    target_net: int
    payload_out: int | None = None

    def key(self) -> tuple:
        """Identity for dedup/memoization: sorted trigger/polarity pairs + target."""
        return (tuple(sorted(zip(self.trigger_nets, self.polarities))), self.target_net)

    @property
    def trigger_count(self) -> int:
        return len(self.trigger_nets)


class Circuit:
    """Combinational circuit over dense net ids.

    Attributes:
        name: module name.
        net_names: tuple of net names indexed by id.
        inputs: tuple of PI net ids in port order.
        outputs: tuple of PO net ids in port order.
        gates: tuple of :class:`Gate` in declaration order.
        levels: int32 array, ``levels[pi] == 0`` and
            ``levels[gate.out] == max(levels[gate.ins]) + 1``.
    """

    def __init__(self, name, net_names, inputs, outputs, gates):
        self.name = name
        self.net_names = tuple(net_names)
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.gates = tuple(gates)
        self.name_to_id = {n: i for i, n in enumerate(self.net_names)}
        if len(self.name_to_id) != len(self.net_names):
            seen = set()
            dup = next(n for n in self.net_names if n in seen or seen.add(n))
            raise MultipleDrivers(f"duplicate net name {dup!r}")
        self._check_structure()
        self.driver_gate = {g.out: idx for idx, g in enumerate(self.gates)}
        # fanout_gates[net] lists indices of gates reading the net
        self.fanout_gates = [[] for _ in self.net_names]
        for idx, g in enumerate(self.gates):
            for i in g.ins:
                self.fanout_gates[i].append(idx)
        self.topo_order = self._topo_sort()
        self.levels = self._levelize()
        self.max_level = int(self.levels.max()) if len(self.levels) else 0
        self._levels_index = None
        self.spliced_count = 0

    # -- construction helpers --------------------------------------------------

    @classmethod
    def build(cls, name, input_names, output_names, named_gates):
        """Assemble a circuit from names.

        ``named_gates`` is an iterable of ``(kind, out_name, in_names)``.
        Ids are assigned in declaration order: inputs first, then gate
        outputs.  Raises MultipleDrivers / UndeclaredNet / UnknownNet on
        malformed input.
        """
        net_names = list(input_names)
        driven = set(net_names)
        if len(driven) != len(net_names):
            raise MultipleDrivers("duplicate primary input name")
        for kind, out, _ in named_gates:
            if out in driven:
                raise MultipleDrivers(f"net {out!r} has more than one driver")
            driven.add(out)
            net_names.append(out)
        ids = {n: i for i, n in enumerate(net_names)}
        gates = []
        for kind, out, in_names in named_gates:
            ins = []
            for n in in_names:
                if n not in ids:
                    raise UndeclaredNet(f"gate input {n!r} is driven by no PI or gate")
                ins.append(ids[n])
            gates.append(Gate(kind, ids[out], tuple(ins)))
        outputs = []
        for n in output_names:
            if n not in ids:
                raise UndeclaredNet(f"primary output {n!r} is driven by no PI or gate")
            outputs.append(ids[n])
        return cls(name, net_names, [ids[n] for n in input_names], outputs, gates)

    def _check_structure(self):
        n = len(self.net_names)
        driver_count = [0] * n
        for i in self.inputs:
            driver_count[i] += 1
        for g in self.gates:
            if g.kind not in GATE_KINDS:
                raise UnknownNet(f"unknown gate kind {g.kind!r}")
            if g.kind in SINGLE_INPUT_KINDS and len(g.ins) != 1:
                raise LengthMismatch(f"{g.kind} gate must have exactly one input")
            if g.kind not in SINGLE_INPUT_KINDS and len(g.ins) < 2:
                raise LengthMismatch(f"{g.kind} gate needs at least two inputs")
            driver_count[g.out] += 1
            for i in g.ins:
                if not 0 <= i < n:
                    raise UnknownNet(f"gate input id {i} out of range")
        for net, c in enumerate(driver_count):
            if c == 0:
                raise UndeclaredNet(
                    f"net {self.net_names[net]!r} is driven by no PI or gate"
                )
            if c > 1:
                raise MultipleDrivers(
                    f"net {self.net_names[net]!r} has {c} drivers"
                )
        for o in self.outputs:
            if not 0 <= o < n:
                raise UnknownNet(f"primary output id {o} out of range")

    def _topo_sort(self):
        """Gate indices in dependency order; raises CombinationalLoop."""
        pending = [0] * len(self.gates)
        ready = deque()
        consumers = [[] for _ in self.gates]
        for idx, g in enumerate(self.gates):
            deps = {self.driver_gate[i] for i in g.ins if i in self.driver_gate}
            pending[idx] = len(deps)
            for d in deps:
                consumers[d].append(idx)
            if not deps:
                ready.append(idx)
        order = []
        while ready:
            idx = ready.popleft()
            order.append(idx)
            for c in consumers[idx]:
                pending[c] -= 1
                if pending[c] == 0:
                    ready.append(c)
        if len(order) != len(self.gates):
            cycle = self._find_cycle()
            names = [self.net_names[i] for i in cycle]
            raise CombinationalLoop(
                "combinational loop through nets: " + " -> ".join(names), cycle
            )
        return tuple(order)

    def _find_cycle(self):
        """Locate one cycle (as net ids) for the CombinationalLoop witness."""
        WHITE, GREY, BLACK = 0, 1, 2
        color = {g.out: WHITE for g in self.gates}
        parent = {}

        def neighbours(net):
            g = self.gates[self.driver_gate[net]]
            return [i for i in g.ins if i in self.driver_gate]

        for start in color:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(neighbours(start)))]
            color[start] = GREY
            while stack:
                net, it = stack[-1]
                advanced = False
                for nxt in it:
                    if color[nxt] == GREY:
                        cycle = [nxt, net]
                        cur = net
                        while cur != nxt:
                            cur = parent[cur]
                            cycle.append(cur)
                        cycle.reverse()
                        return cycle
                    if color[nxt] == WHITE:
                        color[nxt] = GREY
                        parent[nxt] = net
                        stack.append((nxt, iter(neighbours(nxt))))
                        advanced = True
                        break
                if not advanced:
                    color[net] = BLACK
                    stack.pop()
        return []

    def _levelize(self):
        levels = np.zeros(len(self.net_names), dtype=np.int32)
        for idx in self.topo_order:
            g = self.gates[idx]
            levels[g.out] = max(levels[i] for i in g.ins) + 1
        return levels

    # -- queries -----------------------------------------------------------------

    @property
    def num_nets(self) -> int:
        return len(self.net_names)

    def id_of(self, name: str) -> int:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise UnknownNet(f"no net named {name!r}") from None

    def nets_at_level(self, level: int) -> list[int]:
        """Net ids at exactly ``level``, ascending; empty beyond max level."""
        if self._levels_index is None:
            index = {}
            for net in range(self.num_nets):
                index.setdefault(int(self.levels[net]), []).append(net)
            self._levels_index = {k: sorted(v) for k, v in index.items()}
        return list(self._levels_index.get(level, ()))

    def __repr__(self):
        return (
            f"Circuit({self.name!r}, nets={self.num_nets}, "
            f"inputs={len(self.inputs)}, outputs={len(self.outputs)}, "
            f"gates={len(self.gates)}, max_level={self.max_level})"
        )


def _fresh_name(base: str, taken: set) -> str:
    name = base
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def _validate_trojan(circuit: Circuit, trojan: TrojanInstance):
    n = circuit.num_nets
    if len(trojan.trigger_nets) != len(trojan.polarities):
        raise LengthMismatch("one polarity bit is required per trigger net")
    if not trojan.trigger_nets:
        raise RuleViolation("a trojan needs at least one trigger net")
    for t in trojan.trigger_nets:
        if not 0 <= t < n:
            raise UnknownNet(f"trigger net id {t} out of range")
    if not 0 <= trojan.target_net < n:
        raise UnknownNet(f"target net id {trojan.target_net} out of range")
    for p in trojan.polarities:
        if p not in (0, 1):
            raise RuleViolation(f"polarity must be 0 or 1, got {p}")
    if len(set(trojan.trigger_nets)) != len(trojan.trigger_nets):
        raise RuleViolation("trigger nets must be pairwise distinct")
    if trojan.target_net in trojan.trigger_nets:
        raise RuleViolation("the target net cannot also be a trigger")
    tgt_level = int(circuit.levels[trojan.target_net])
    for t in trojan.trigger_nets:
        if int(circuit.levels[t]) >= tgt_level:
            raise RuleViolation(
                f"target level {tgt_level} must exceed trigger level "
                f"{int(circuit.levels[t])} (net {circuit.net_names[t]!r})"
            )


def conjunction_nets(circuit: Circuit, literals, tag: str):
    """Extend a gate list with inverters + a balanced AND tree over literals.

    ``literals`` is a sequence of ``(net_id, polarity)``; polarity-0 nets
    pass through a fresh inverter.  Returns ``(new_net_names, new_gates,
    root_name)`` where the gate lists use net *names* so the caller can
    rebuild a Circuit.  For a single literal of polarity 1 the root is the
    net itself and nothing is added.
    """
    taken = set(circuit.net_names)
    names = []
    gates = []
    layer = []
    for i, (net, pol) in enumerate(literals):
        src = circuit.net_names[net]
        if pol == 1:
            layer.append(src)
        else:
            out = _fresh_name(f"{tag}_inv{i}", taken)
            names.append(out)
            gates.append(("not", out, (src,)))
            layer.append(out)
    depth = 0
    while len(layer) > 1:
        nxt = []
        for j in range(0, len(layer) - 1, 2):
            out = _fresh_name(f"{tag}_and{depth}_{j // 2}", taken)
            names.append(out)
            gates.append(("and", out, (layer[j], layer[j + 1])))
            nxt.append(out)
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
        depth += 1
    return names, gates, layer[0]


def splice_trojan(circuit: Circuit, trojan: TrojanInstance) -> Circuit:
    """Return a new circuit with the trojan's trigger and payload inserted.

    The XOR payload output keeps the target's name and id; the displaced
    original driver output gets a fresh suffixed name.  Ids of all original
    nets are unchanged; new nets are appended.  Gate growth is exactly
    (#polarity-0 triggers) inverters + (t - 1) AND gates + 1 XOR.
    """
    _validate_trojan(circuit, trojan)
    target = trojan.target_net
    drv_idx = circuit.driver_gate.get(target)
    if drv_idx is None:
        # unreachable under rule 4 (target level > trigger level >= 0)
        raise RuleViolation("the target net must be gate-driven")

    tag = f"ht{circuit.spliced_count}"
    taken = set(circuit.net_names)
    literals = list(zip(trojan.trigger_nets, trojan.polarities))
    new_names, new_gates, trig_root = conjunction_nets(circuit, literals, tag)
    taken.update(new_names)

    target_name = circuit.net_names[target]
    orig_name = _fresh_name(f"{target_name}_{tag}_orig", taken)
    net_names = list(circuit.net_names) + new_names + [orig_name]
    name_of = circuit.net_names

    named_gates = []
    for idx, g in enumerate(circuit.gates):
        out = orig_name if idx == drv_idx else name_of[g.out]
        named_gates.append((g.kind, out, tuple(name_of[i] for i in g.ins)))
    named_gates.extend(new_gates)
    named_gates.append(("xor", target_name, (orig_name, trig_root)))

    ids = {n: i for i, n in enumerate(net_names)}
    gates = [
        Gate(kind, ids[out], tuple(ids[i] for i in ins))
        for kind, out, ins in named_gates
    ]
    try:
        spliced = Circuit(
            circuit.name,
            net_names,
            circuit.inputs,
            circuit.outputs,
            gates,
        )
    except CombinationalLoop as exc:
        raise CyclicResult(f"splice produced a cycle: {exc}") from exc
    spliced.spliced_count = circuit.spliced_count + 1
    return spliced


def payload_gate_index(spliced: Circuit) -> int:
    """Index of the payload XOR appended by the most recent splice."""
    return len(spliced.gates) - 1
