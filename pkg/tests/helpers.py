"""Shared test utilities: random circuit generation and exhaustive oracles.

The oracles here deliberately avoid the code paths they are used to judge:
satisfiability and activation checks run on full 2^n input enumeration via
the packed simulator (whose own correctness is established against the
scalar reference in the simulator tests).
"""

import itertools

import numpy as np

from htforge.circuit import Circuit
from htforge.logic_sim import simulate

KINDS = ("and", "nand", "or", "nor", "xor", "xnor", "not", "buf")


def random_circuit(rng: np.random.Generator, n_pi: int, n_gates: int,
                   max_arity: int = 3, name: str = "rnd") -> Circuit:
    """Random connected DAG over the full gate alphabet.

    Gate inputs are drawn uniformly from all earlier nets, so deep and
    reconvergent structures both occur.  Outputs are a random sample of
    gate outputs (every circuit has at least one PO).
    """
    names = [f"i{k}" for k in range(n_pi)]
    gates = []
    for k in range(n_gates):
        kind = KINDS[rng.integers(len(KINDS))]
        arity = 1 if kind in ("not", "buf") else int(rng.integers(2, max_arity + 1))
        ins = tuple(names[rng.integers(len(names))] for _ in range(arity))
        out = f"g{k}"
        gates.append((kind, out, ins))
        names.append(out)
    pool = names[n_pi:] if n_gates else names
    n_po = int(rng.integers(1, min(4, len(pool)) + 1))
    outs = [pool[i] for i in rng.choice(len(pool), size=n_po, replace=False)]
    return Circuit.build(name, names[:n_pi], outs, gates)


def all_input_rows(n_pi: int) -> list[str]:
    return ["".join(bits) for bits in itertools.product("01", repeat=n_pi)]


def exhaustive_justify(circuit: Circuit, objectives) -> str | None:
    """First input vector meeting every (net_id, value) objective, if any."""
    rows = all_input_rows(len(circuit.inputs))
    vals = simulate(circuit, rows)
    mask = np.ones(len(rows), dtype=bool)
    for net, want in objectives:
        bits = vals.bits(net)
        mask &= bits if want == 1 else ~bits
    hits = np.flatnonzero(mask)
    return rows[int(hits[0])] if hits.size else None


def exhaustive_difference(golden: Circuit, suspect: Circuit) -> str | None:
    """First vector (in enumeration order) where any PO differs, if any."""
    rows = all_input_rows(len(golden.inputs))
    g = simulate(golden, rows)
    s = simulate(suspect, rows)
    diff = np.zeros(len(rows), dtype=bool)
    for g_net, s_net in zip(golden.outputs, suspect.outputs):
        diff |= g.bits(g_net) ^ s.bits(s_net)
    hits = np.flatnonzero(diff)
    return rows[int(hits[0])] if hits.size else None
