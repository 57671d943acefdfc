"""Bit-parallel logic simulation, switching profiles and output comparison.

The packed simulator evaluates 64 vectors per machine word using numpy
bitwise ops; the scalar simulator is an independent one-vector reference
implementation kept deliberately separate so the two can cross-check each
other.  Random vector streams come from a seeded counter-based generator
(numpy Philox) drawn in fixed-size chunks, so a (seed, n) pair always
denotes the same corpus.
"""

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, INVERTING_KINDS
from .errors import InterfaceMismatch, ShapeMismatch, WidthMismatch
from .netlist_io import TestVectorFile

_CHUNK_VECTORS = 16384  # fixed; part of the corpus definition
_WORD = 64
_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def _compiled_ops(circuit: Circuit):
    """Gates as (kind, out, ins) in topological order, cached on the circuit."""
    ops = getattr(circuit, "_sim_ops", None)
    if ops is None:
        ops = tuple(
            (g.kind, g.out, g.ins)
            for g in (circuit.gates[i] for i in circuit.topo_order)
        )
        circuit._sim_ops = ops
    return ops


def _tail_mask(n_vectors: int, n_words: int) -> np.uint64 | None:
    tail = n_vectors % _WORD
    if n_words == 0 or tail == 0:
        return None
    return np.uint64((1 << tail) - 1)


def pack_rows(rows, width: int) -> np.ndarray:
    """Pack bit-string rows into a (width, n_words) uint64 matrix.

    Vector v lands in word ``v // 64`` bit ``v % 64`` of each net row.
    """
    n = len(rows)
    n_words = (n + _WORD - 1) // _WORD
    if n == 0:
        return np.zeros((width, 0), dtype=np.uint64)
    flat = np.frombuffer("".join(rows).encode("ascii"), dtype=np.uint8) - ord("0")
    bits = flat.reshape(n, width).T  # (width, n)
    padded = np.zeros((width, n_words * _WORD), dtype=np.uint8)
    padded[:, :n] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").reshape(width, n_words)


def unpack_row(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pack_rows for one net row; returns a bool array of length n."""
    if n == 0:
        return np.zeros(0, dtype=bool)
    as_bytes = words.astype("<u8").view(np.uint8)
    return np.unpackbits(as_bytes, bitorder="little")[:n].astype(bool)


@dataclass
class PackedValues:
    """Per-net packed simulation values for a batch of vectors."""

    words: np.ndarray  # (num_nets, n_words) uint64
    n: int

    def ones(self, net: int) -> int:
        return int(np.bitwise_count(self.words[net]).sum())

    def bits(self, net: int) -> np.ndarray:
        return unpack_row(self.words[net], self.n)

    def bit(self, net: int, k: int) -> int:
        if not 0 <= k < self.n:
            raise ShapeMismatch(f"vector index {k} out of range [0, {self.n})")
        return int((self.words[net, k // _WORD] >> np.uint64(k % _WORD)) & np.uint64(1))


def _simulate_words(circuit: Circuit, pi_words: np.ndarray, n: int) -> np.ndarray:
    """Core packed evaluation: returns the (num_nets, n_words) value matrix."""
    n_words = pi_words.shape[1]
    values = np.zeros((circuit.num_nets, n_words), dtype=np.uint64)
    for row, pi in enumerate(circuit.inputs):
        values[pi] = pi_words[row]
    mask = _tail_mask(n, n_words)
    for kind, out, ins in _compiled_ops(circuit):
        acc = values[ins[0]].copy()
        if kind in ("and", "nand"):
            for i in ins[1:]:
                np.bitwise_and(acc, values[i], out=acc)
        elif kind in ("or", "nor"):
            for i in ins[1:]:
                np.bitwise_or(acc, values[i], out=acc)
        elif kind in ("xor", "xnor"):
            for i in ins[1:]:
                np.bitwise_xor(acc, values[i], out=acc)
        # not/buf take the single input as-is
        if kind in INVERTING_KINDS:
            np.bitwise_xor(acc, _ALL_ONES, out=acc)
            if mask is not None:
                acc[-1] &= mask
        values[out] = acc
    return values


def simulate(circuit: Circuit, vectors) -> PackedValues:
    """Simulate a vector batch (TestVectorFile or list of bit strings)."""
    rows = list(vectors.rows if isinstance(vectors, TestVectorFile) else vectors)
    width = len(circuit.inputs)
    for r in rows:
        if len(r) != width:
            raise WidthMismatch(
                f"vector of width {len(r)} fed to circuit with {width} inputs"
            )
    pi_words = pack_rows(rows, width)
    return PackedValues(_simulate_words(circuit, pi_words, len(rows)), len(rows))


# --- scalar reference ------------------------------------------------------------

def scalar_simulate(circuit: Circuit, row) -> list[int]:
    """Independent single-vector reference evaluation; returns per-net values."""
    width = len(circuit.inputs)
    bits = [1 if b in (1, "1") else 0 if b in (0, "0") else None for b in row]
    if len(bits) != width:
        raise WidthMismatch(
            f"vector of width {len(bits)} fed to circuit with {width} inputs"
        )
    if None in bits:
        raise ShapeMismatch("scalar vector bits must be 0 or 1")
    vals = [0] * circuit.num_nets
    for i, pi in enumerate(circuit.inputs):
        vals[pi] = bits[i]
    for idx in circuit.topo_order:
        g = circuit.gates[idx]
        kind = g.kind
        if kind == "and":
            v = 1
            for i in g.ins:
                v = v and vals[i]
        elif kind == "nand":
            v = 1
            for i in g.ins:
                v = v and vals[i]
            v = 1 - v
        elif kind == "or":
            v = 0
            for i in g.ins:
                v = v or vals[i]
        elif kind == "nor":
            v = 0
            for i in g.ins:
                v = v or vals[i]
            v = 1 - v
        elif kind == "xor":
            v = 0
            for i in g.ins:
                v ^= vals[i]
        elif kind == "xnor":
            v = 0
            for i in g.ins:
                v ^= vals[i]
            v = 1 - v
        elif kind == "not":
            v = 1 - vals[g.ins[0]]
        else:  # buf
            v = vals[g.ins[0]]
        vals[g.out] = v
    return vals


# --- random corpora and switching profiles -----------------------------------------

def _chunk_plan(n: int):
    """Deterministic chunking of n vectors; yields (n_vectors, n_words)."""
    done = 0
    while done < n:
        size = min(_CHUNK_VECTORS, n - done)
        yield size, (size + _WORD - 1) // _WORD
        done += size


def _random_pi_words(rng, n_pi: int, size: int, n_words: int) -> np.ndarray:
    words = rng.integers(
        0, _ALL_ONES, size=(n_pi, n_words), dtype=np.uint64, endpoint=True
    )
    mask = _tail_mask(size, n_words)
    if mask is not None:
        words[:, -1] &= mask
    return words


@dataclass
class SwitchingProfile:
    """Per-net statistics over a seeded uniform random vector corpus.

    ``activity`` is min(prob_one, 1 - prob_one) in [0, 0.5];
    ``rare_value[net]`` is 1 iff prob_one < 0.5 (ties resolve to 0).
    """

    circuit_name: str
    num_nets: int
    n: int
    seed: int
    ones: np.ndarray
    prob_one: np.ndarray
    activity: np.ndarray
    rare_value: np.ndarray


def switching_profile(circuit: Circuit, n: int = 100_000, seed: int = 0) -> SwitchingProfile:
    """Simulate n uniform random vectors and collect per-net statistics."""
    if n <= 0:
        raise ShapeMismatch("profile needs at least one vector")
    rng = np.random.Generator(np.random.Philox(seed))
    n_pi = len(circuit.inputs)
    ones = np.zeros(circuit.num_nets, dtype=np.int64)
    for size, n_words in _chunk_plan(n):
        pi_words = _random_pi_words(rng, n_pi, size, n_words)
        values = _simulate_words(circuit, pi_words, size)
        ones += np.bitwise_count(values).sum(axis=1, dtype=np.int64)
    prob_one = ones / float(n)
    activity = np.minimum(prob_one, 1.0 - prob_one)
    rare_value = (prob_one < 0.5).astype(np.int8)
    return SwitchingProfile(
        circuit.name, circuit.num_nets, n, seed, ones, prob_one, activity, rare_value
    )


def corpus_rows(circuit: Circuit, net_ids, n: int, seed: int) -> np.ndarray:
    """Packed values of selected nets over the (seed, n) corpus.

    Regenerates the exact vector stream used by switching_profile for the
    same (seed, n), so row statistics agree with the profile.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    net_ids = list(net_ids)
    n_pi = len(circuit.inputs)
    parts = []
    for size, n_words in _chunk_plan(n):
        pi_words = _random_pi_words(rng, n_pi, size, n_words)
        values = _simulate_words(circuit, pi_words, size)
        parts.append(values[net_ids])
    return np.concatenate(parts, axis=1) if parts else np.zeros((len(net_ids), 0), np.uint64)


def random_vectors(n_pi: int, n: int, seed: int) -> TestVectorFile:
    """n uniform random vectors over n_pi inputs from the Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    for size, n_words in _chunk_plan(n):
        words = _random_pi_words(rng, n_pi, size, n_words)
        bit_rows = [unpack_row(words[i], size) for i in range(n_pi)]
        stacked = np.stack(bit_rows, axis=1).astype(np.uint8) + ord("0")
        rows.extend(bytes(r).decode("ascii") for r in stacked)
    return TestVectorFile(n_pi, rows)


# --- comparison -----------------------------------------------------------------

def _check_interface(golden: Circuit, suspect: Circuit):
    g_pi = [golden.net_names[i] for i in golden.inputs]
    s_pi = [suspect.net_names[i] for i in suspect.inputs]
    g_po = [golden.net_names[i] for i in golden.outputs]
    s_po = [suspect.net_names[i] for i in suspect.outputs]
    if g_pi != s_pi or g_po != s_po:
        raise InterfaceMismatch(
            f"{golden.name!r} and {suspect.name!r} differ in PI/PO interface"
        )


def compare_outputs(golden: Circuit, suspect: Circuit, vectors):
    """Vectors on which any primary output differs.

    Returns a list of (vector_index, differing_po_names) sorted by index.
    """
    _check_interface(golden, suspect)
    rows = list(vectors.rows if isinstance(vectors, TestVectorFile) else vectors)
    g_vals = simulate(golden, rows)
    s_vals = simulate(suspect, rows)
    found = {}
    for g_net, s_net in zip(golden.outputs, suspect.outputs):
        diff = g_vals.words[g_net] ^ s_vals.words[s_net]
        if not diff.any():
            continue
        po = golden.net_names[g_net]
        for idx in np.flatnonzero(unpack_row(diff, g_vals.n)):
            found.setdefault(int(idx), []).append(po)
    return [(idx, tuple(found[idx])) for idx in sorted(found)]
