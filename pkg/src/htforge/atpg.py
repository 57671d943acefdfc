"""PODEM-style test generation for objective justification and trojan activation.

The engine works in the classic five-valued algebra {0, 1, X, D, D'}; a net
value is stored as a (good, faulty) pair of three-valued planes that is
collapsed to X whenever only one plane is known.  Decisions are made on
primary inputs only (objective -> backtrace -> imply), so exhausting both
branches of every decision makes the search complete: on small circuits the
outcome provably matches exhaustive enumeration.

Two entry points:

* :func:`justify` finds an input vector driving a set of (net, value)
  objectives simultaneously.  Internally the objectives become a balanced
  AND tree appended to the circuit and the tree root is justified to 1.
* :func:`activation_vector` finds a vector that makes an inserted trojan
  visibly corrupt a primary output.  The fault model is the payload XOR's
  trigger pin stuck at 0: with the pin forced to 0 the infected circuit
  computes exactly the host function, so detecting the pin fault is the
  same as distinguishing infected from golden.

Returned vectors are never trusted: justification results are re-checked
with the scalar simulator and activation results with a golden/infected
dual simulation before they are handed to the caller.
"""

import heapq
from dataclasses import dataclass

from .circuit import (
    Circuit,
    Gate,
    TrojanInstance,
    conjunction_nets,
    payload_gate_index,
    splice_trojan,
)
from .errors import DomainError, UnknownNet
from .logic_sim import compare_outputs, scalar_simulate
from .testability import compute_scoap

VECTOR = "vector"
UNTESTABLE = "untestable"
ABORTED = "aborted"

DEFAULT_BACKTRACK_LIMIT = 100_000

_X = 2

_AND, _NAND, _OR, _NOR, _XOR, _XNOR, _NOT, _BUF = range(8)
_KIND_CODE = {
    "and": _AND, "nand": _NAND, "or": _OR, "nor": _NOR,
    "xor": _XOR, "xnor": _XNOR, "not": _NOT, "buf": _BUF,
}


@dataclass(frozen=True)
class AtpgResult:
    """Outcome of one ATPG run.

    ``vector`` is a bit string over the circuit's primary inputs
    (unassigned inputs filled with 0) when outcome == "vector", else None.
    ``backtracks`` counts decision reversals consumed by the search.
    """

    outcome: str
    vector: str | None
    backtracks: int


class _Abort(Exception):
    pass


def _scoap_for(circuit: Circuit):
    table = getattr(circuit, "_scoap_cache", None)
    if table is None:
        table = compute_scoap(circuit)
        circuit._scoap_cache = table
    return table


def _compiled_graph(circuit: Circuit):
    """Int-coded gate arrays for the search inner loop, cached per circuit."""
    comp = getattr(circuit, "_atpg_graph", None)
    if comp is None:
        gk = [_KIND_CODE[g.kind] for g in circuit.gates]
        gout = [g.out for g in circuit.gates]
        gins = [g.ins for g in circuit.gates]
        pos = [0] * len(circuit.gates)
        for p, gi in enumerate(circuit.topo_order):
            pos[gi] = p
        fanout = [tuple(fo) for fo in circuit.fanout_gates]
        comp = (gk, gout, gins, pos, fanout)
        circuit._atpg_graph = comp
    return comp


class _Podem:
    """One search instance over a fixed circuit.

    ``goal``: net id that must reach good-value 1 (justification mode).
    ``fault``: (gate index, pin position) for the pin-stuck-at-0 model
    (activation mode).  Exactly one of the two is set.
    """

    def __init__(self, circuit: Circuit, goal=None, fault=None,
                 limit=DEFAULT_BACKTRACK_LIMIT):
        self.c = circuit
        self.goal = goal
        self.fault = fault
        self.limit = limit
        self.backtracks = 0
        n = circuit.num_nets
        self.gval = [_X] * n
        self.fval = [_X] * n
        self.trail = []
        self.pi_set = set(circuit.inputs)
        self.po_list = list(dict.fromkeys(circuit.outputs))
        self.gk, self.gout, self.gins, self.topo_pos, self.fanout = \
            _compiled_graph(circuit)
        self._queued = bytearray(len(circuit.gates))
        table = _scoap_for(circuit)
        self.cc0 = table.cc0
        self.cc1 = table.cc1
        if fault is not None:
            self.fault_gate = fault[0]
            self.fault_pin_pos = fault[1]
            self.fault_pin_net = circuit.gates[fault[0]].ins[fault[1]]
        else:
            self.fault_gate = -1
            self.fault_pin_pos = -1
            self.fault_pin_net = -1

    # -- value propagation -------------------------------------------------------

    def _eval_gate(self, gi):
        """Both planes of gate gi under current values; returns (good, faulty)."""
        kind = self.gk[gi]
        ins = self.gins[gi]
        gval = self.gval
        fval = self.fval
        if gi == self.fault_gate:
            # slow path: the faulty plane sees the fault pin forced to 0
            fvals = [fval[i] for i in ins]
            fpin = self.fault_pin_pos
            fvals[fpin] = 0 if gval[ins[fpin]] != _X else _X
            og = self._plane(kind, [gval[i] for i in ins])
            of = self._plane(kind, fvals)
            return og, of
        if kind <= _NOR:
            if kind <= _NAND:  # and/nand: 0 dominates, then X
                og = of = 1
                for i in ins:
                    v = gval[i]
                    if v == 0:
                        og = 0
                    elif og == 1 and v == _X:
                        og = _X
                    v = fval[i]
                    if v == 0:
                        of = 0
                    elif of == 1 and v == _X:
                        of = _X
                if kind == _NAND:
                    if og != _X:
                        og ^= 1
                    if of != _X:
                        of ^= 1
            else:  # or/nor: 1 dominates, then X
                og = of = 0
                for i in ins:
                    v = gval[i]
                    if v == 1:
                        og = 1
                    elif og == 0 and v == _X:
                        og = _X
                    v = fval[i]
                    if v == 1:
                        of = 1
                    elif of == 0 and v == _X:
                        of = _X
                if kind == _NOR:
                    if og != _X:
                        og ^= 1
                    if of != _X:
                        of ^= 1
            return og, of
        if kind <= _XNOR:  # xor/xnor: any X poisons the parity
            og = of = 0
            for i in ins:
                v = gval[i]
                if v == _X:
                    og = _X
                elif og != _X:
                    og ^= v
                v = fval[i]
                if v == _X:
                    of = _X
                elif of != _X:
                    of ^= v
            if kind == _XNOR:
                if og != _X:
                    og ^= 1
                if of != _X:
                    of ^= 1
            return og, of
        i = ins[0]
        if kind == _NOT:
            v = gval[i]
            og = _X if v == _X else v ^ 1
            v = fval[i]
            of = _X if v == _X else v ^ 1
            return og, of
        return gval[i], fval[i]  # buf

    @staticmethod
    def _plane(kind, vals):
        """Reference three-valued evaluation of one plane (fault gate path)."""
        if kind <= _NAND:
            out = 1
            for v in vals:
                if v == 0:
                    out = 0
                    break
                if v == _X:
                    out = _X
            if kind == _NAND and out != _X:
                out ^= 1
        elif kind <= _NOR:
            out = 0
            for v in vals:
                if v == 1:
                    out = 1
                    break
                if v == _X:
                    out = _X
            if kind == _NOR and out != _X:
                out ^= 1
        elif kind <= _XNOR:
            out = 0
            for v in vals:
                if v == _X:
                    return _X
                out ^= v
            if kind == _XNOR:
                out ^= 1
        elif kind == _NOT:
            v = vals[0]
            out = _X if v == _X else v ^ 1
        else:
            out = vals[0]
        return out

    def _imply_from(self, net):
        gval = self.gval
        fval = self.fval
        gout = self.gout
        fanout = self.fanout
        pos = self.topo_pos
        queued = self._queued
        trail = self.trail
        push = heapq.heappush
        pop = heapq.heappop
        heap = []
        for gi in fanout[net]:
            push(heap, (pos[gi], gi))
            queued[gi] = 1
        while heap:
            gi = pop(heap)[1]
            queued[gi] = 0
            out = gout[gi]
            og, of = self._eval_gate(gi)
            if og == _X or of == _X:
                continue
            cg = gval[out]
            if cg != _X:
                if cg != og or fval[out] != of:
                    raise RuntimeError("implication retracted a determined value")
                continue
            gval[out] = og
            fval[out] = of
            trail.append(out)
            for fgi in fanout[out]:
                if not queued[fgi]:
                    push(heap, (pos[fgi], fgi))
                    queued[fgi] = 1

    def _assign(self, pi, val):
        self.gval[pi] = val
        self.fval[pi] = val
        self.trail.append(pi)
        self._imply_from(pi)

    def _undo(self, mark):
        trail = self.trail
        gval = self.gval
        fval = self.fval
        while len(trail) > mark:
            net = trail.pop()
            gval[net] = _X
            fval[net] = _X

    # -- search guidance ------------------------------------------------------------

    def _effective_pin(self, gi, pin_pos, net):
        """Net value as seen by gate gi at input position pin_pos."""
        g, f = self.gval[net], self.fval[net]
        if gi == self.fault_gate and pin_pos == self.fault_pin_pos and g != _X:
            f = 0
        return g, f

    def _frontier(self):
        """Gates with an undetermined output and a D/D' input, sorted."""
        gval = self.gval
        out_level = self.c.levels
        found = []
        for gi, ins in enumerate(self.gins):
            out = self.gout[gi]
            if gval[out] != _X:
                continue
            for pin_pos, net in enumerate(ins):
                pg, pf = self._effective_pin(gi, pin_pos, net)
                if pg != _X and pf != _X and pg != pf:
                    found.append((int(out_level[out]), out, gi))
                    break
        found.sort()
        return [gi for _, _, gi in found]

    def _x_path_exists(self, frontier):
        po_set = set(self.po_list)
        seen = set()
        stack = []
        for gi in frontier:
            out = self.gout[gi]
            if out not in seen:
                seen.add(out)
                stack.append(out)
        while stack:
            net = stack.pop()
            if net in po_set:
                return True
            for fg in self.fanout[net]:
                out = self.gout[fg]
                if out not in seen and self.gval[out] == _X:
                    seen.add(out)
                    stack.append(out)
        return False

    def _propagation_objective(self, frontier):
        gi = frontier[0]
        kind = self.gk[gi]
        if kind <= _NAND:
            want = 1
        else:  # or/nor need 0; xor/xnor take 0 by convention
            want = 0
        best = None
        cc = self.cc1 if want == 1 else self.cc0
        for net in self.gins[gi]:
            if self.gval[net] != _X:
                continue
            entry = (-cc[net], net)
            if best is None or entry < best:
                best = entry
        if best is None:
            raise RuntimeError("frontier gate with no X input")
        return best[1], want

    def _status(self):
        """True on success, False on a provably dead branch, else an objective."""
        if self.goal is not None:
            gv = self.gval[self.goal]
            if gv == 1:
                return True
            if gv == 0:
                return False
            return self.goal, 1
        pg = self.gval[self.fault_pin_net]
        if pg == 0:
            return False
        gval = self.gval
        fval = self.fval
        for po in self.po_list:
            v = gval[po]
            if v != _X and v != fval[po]:
                return True
        if pg == _X:
            return self.fault_pin_net, 1
        frontier = self._frontier()
        if not frontier:
            return False
        if not self._x_path_exists(frontier):
            return False
        return self._propagation_objective(frontier)

    def _backtrace(self, net, val):
        """Map an objective to an unassigned PI assignment along X nets."""
        gval = self.gval
        while net not in self.pi_set:
            gi = self.c.driver_gate[net]
            kind = self.gk[gi]
            ins = self.gins[gi]
            if kind == _NOT:
                val ^= 1
                net = ins[0]
                continue
            if kind == _BUF:
                net = ins[0]
                continue
            if kind <= _NAND:
                u = val ^ (kind == _NAND)
                if u == 1:  # all inputs must be 1: take the hardest
                    pick = self._pick_x_input(ins, side=1, hardest=True)
                    val = 1
                else:       # any input 0 suffices: take the easiest
                    pick = self._pick_x_input(ins, side=0, hardest=False)
                    val = 0
            elif kind <= _NOR:
                u = val ^ (kind == _NOR)
                if u == 0:
                    pick = self._pick_x_input(ins, side=0, hardest=True)
                    val = 0
                else:
                    pick = self._pick_x_input(ins, side=1, hardest=False)
                    val = 1
            else:  # xor/xnor: fix parity assuming other X inputs go to 0
                u = val ^ (kind == _XNOR)
                parity = 0
                for i in ins:
                    v = gval[i]
                    if v != _X:
                        parity ^= v
                desired = u ^ parity
                pick = self._pick_x_input(ins, side=desired, hardest=True)
                val = desired
            net = pick
        return net, val

    def _pick_x_input(self, ins, side, hardest):
        gval = self.gval
        cc = self.cc1 if side == 1 else self.cc0
        best = None
        for net in ins:
            if gval[net] != _X:
                continue
            cost = -cc[net] if hardest else cc[net]
            entry = (cost, net)
            if best is None or entry < best:
                best = entry
        if best is None:
            raise RuntimeError("backtrace through a gate with no X input")
        return best[1]

    # -- top level ----------------------------------------------------------------------

    def _search(self):
        status = self._status()
        if status is True:
            return True
        if status is False:
            return False
        pi, v = self._backtrace(*status)
        mark = len(self.trail)
        for attempt, val in enumerate((v, 1 - v)):
            if attempt == 1:
                self.backtracks += 1
                if self.backtracks > self.limit:
                    raise _Abort()
            self._assign(pi, val)
            if self._search():
                return True
            self._undo(mark)
        return False

    def run(self) -> AtpgResult:
        try:
            found = self._search()
        except _Abort:
            return AtpgResult(ABORTED, None, self.backtracks)
        if not found:
            return AtpgResult(UNTESTABLE, None, self.backtracks)
        bits = "".join(
            "0" if self.gval[pi] == _X else str(self.gval[pi])
            for pi in self.c.inputs
        )
        return AtpgResult(VECTOR, bits, self.backtracks)


# --- public operations ------------------------------------------------------------------


def _norm_objectives(circuit: Circuit, objectives):
    out = []
    for net, val in objectives:
        nid = circuit.id_of(net) if isinstance(net, str) else int(net)
        if not 0 <= nid < circuit.num_nets:
            raise UnknownNet(f"objective net id {nid} out of range")
        if val not in (0, 1):
            raise DomainError(f"objective value must be 0 or 1, got {val!r}")
        out.append((nid, int(val)))
    return out


def _augment_with_conjunction(circuit: Circuit, literals):
    """Circuit extended with an AND tree asserting all literals.

    Original net ids are preserved exactly (new nets are appended), so
    objectives stated against the input circuit stay valid in the result.
    """
    new_names, new_gates, root = conjunction_nets(circuit, literals, tag="obj")
    if not new_gates:
        return circuit, literals[0][0]
    net_names = list(circuit.net_names) + new_names
    ids = {n: i for i, n in enumerate(net_names)}
    gates = list(circuit.gates)
    for kind, out, ins in new_gates:
        gates.append(Gate(kind, ids[out], tuple(ids[i] for i in ins)))
    aug = Circuit(circuit.name, net_names, circuit.inputs, circuit.outputs, gates)
    return aug, ids[root]


def justify(circuit: Circuit, objectives, limit: int = DEFAULT_BACKTRACK_LIMIT) -> AtpgResult:
    """Find an input vector satisfying every (net, value) objective.

    Objectives may use net ids or names.  Outcomes: "vector" with a
    0-filled bit string, "untestable" when no assignment exists, or
    "aborted" when the backtrack budget is exhausted.
    """
    objs = _norm_objectives(circuit, objectives)
    if not objs:
        return AtpgResult(VECTOR, "0" * len(circuit.inputs), 0)
    # deduplicate; contradictions stay and are proven untestable structurally
    objs = list(dict.fromkeys(objs))
    aug, root = _augment_with_conjunction(circuit, objs)
    result = _Podem(aug, goal=root, limit=limit).run()
    if result.outcome == VECTOR:
        vals = scalar_simulate(circuit, result.vector)
        if any(vals[n] != v for n, v in objs):
            raise RuntimeError("justification vector failed re-simulation")
    return result


def activation_vector(golden: Circuit, trojan: TrojanInstance,
                      limit: int = DEFAULT_BACKTRACK_LIMIT,
                      spliced: Circuit | None = None) -> AtpgResult:
    """Find a vector on which the infected circuit differs from the golden one.

    ``spliced`` can carry a pre-built infected circuit to avoid re-splicing.
    A returned vector is certified: golden/infected dual simulation must
    show an output difference, otherwise an internal error is raised.
    """
    infected = spliced if spliced is not None else splice_trojan(golden, trojan)
    xor_idx = payload_gate_index(infected)
    result = _Podem(infected, fault=(xor_idx, 1), limit=limit).run()
    if result.outcome == VECTOR:
        if not compare_outputs(golden, infected, [result.vector]):
            raise RuntimeError("activation vector failed dual-simulation check")
    return result
