import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import all_input_rows, random_circuit
from htforge.circuit import Circuit, TrojanInstance, splice_trojan
from htforge.errors import InterfaceMismatch, ShapeMismatch, WidthMismatch
from htforge.logic_sim import (
    PackedValues,
    compare_outputs,
    corpus_rows,
    pack_rows,
    random_vectors,
    scalar_simulate,
    simulate,
    switching_profile,
    unpack_row,
)


def _random_rows(rng, width, n):
    bits = rng.integers(0, 2, size=(n, width))
    return ["".join(str(b) for b in row) for row in bits]


def test_packed_matches_scalar_randomized():
    rng = np.random.default_rng(7)
    for _ in range(25):
        c = random_circuit(rng, int(rng.integers(2, 8)), int(rng.integers(1, 40)))
        rows = _random_rows(rng, len(c.inputs), int(rng.integers(1, 130)))
        packed = simulate(c, rows)
        for k, row in enumerate(rows):
            ref = scalar_simulate(c, row)
            for net in range(c.num_nets):
                assert packed.bit(net, k) == ref[net]


@given(st.lists(st.text(alphabet="01", min_size=5, max_size=5),
                min_size=0, max_size=200))
@settings(max_examples=40, deadline=None)
def test_pack_unpack_round_trip(rows):
    words = pack_rows(rows, 5)
    assert words.shape == (5, (len(rows) + 63) // 64)
    for i in range(5):
        bits = unpack_row(words[i], len(rows))
        assert [int(b) for b in bits] == [int(r[i]) for r in rows]


def test_no_bits_beyond_tail():
    # inverting gates must not leak ones into the padding region
    c = Circuit.build("inv", ["a"], ["y"], [("not", "y", ("a",))])
    rows = ["0"] * 65
    packed = simulate(c, rows)
    y = c.outputs[0]
    assert packed.ones(y) == 65
    spill = unpack_row(packed.words[y], 128)[65:]
    assert not spill.any()


def test_packed_values_accessors(tiny):
    rows = all_input_rows(3)
    vals = simulate(tiny, rows)
    assert vals.n == 8
    y = tiny.id_of("y")
    assert vals.ones(y) == int(vals.bits(y).sum())
    assert vals.bit(y, 3) == int(vals.bits(y)[3])
    with pytest.raises(ShapeMismatch):
        vals.bit(y, 8)


def test_simulate_width_checks(tiny):
    with pytest.raises(WidthMismatch):
        simulate(tiny, ["01"])
    with pytest.raises(WidthMismatch):
        scalar_simulate(tiny, "01")
    with pytest.raises(ShapeMismatch):
        scalar_simulate(tiny, "01x")


def test_switching_profile_statistics(tiny):
    prof = switching_profile(tiny, n=4096, seed=3)
    assert prof.n == 4096 and prof.num_nets == tiny.num_nets
    assert (prof.prob_one >= 0).all() and (prof.prob_one <= 1).all()
    assert (prof.activity <= 0.5 + 1e-12).all()
    np.testing.assert_allclose(
        prof.activity, np.minimum(prof.prob_one, 1 - prof.prob_one))
    np.testing.assert_array_equal(prof.rare_value, (prof.prob_one < 0.5))
    # PIs are uniform; loose binomial bound
    for pi in tiny.inputs:
        assert abs(prof.prob_one[pi] - 0.5) < 0.05
    with pytest.raises(ShapeMismatch):
        switching_profile(tiny, n=0)


def test_profile_deterministic_in_seed(tiny):
    # 20000 vectors spans two corpus chunks
    a = switching_profile(tiny, n=20000, seed=9)
    b = switching_profile(tiny, n=20000, seed=9)
    np.testing.assert_array_equal(a.ones, b.ones)
    c = switching_profile(tiny, n=20000, seed=10)
    assert (a.ones != c.ones).any()


def test_corpus_rows_matches_profile(tiny):
    n, seed = 70000, 4  # spans multiple chunks with a ragged tail
    prof = switching_profile(tiny, n=n, seed=seed)
    nets = [tiny.id_of("y"), tiny.id_of("p")]
    words = corpus_rows(tiny, nets, n, seed)
    for row, net in zip(words, nets):
        assert int(np.bitwise_count(row).sum()) == prof.ones[net]


def test_random_vectors_regenerate_corpus(tiny):
    n, seed = 5000, 8
    vf = random_vectors(len(tiny.inputs), n, seed)
    assert len(vf) == n and vf.width == len(tiny.inputs)
    assert random_vectors(len(tiny.inputs), n, seed).rows == vf.rows
    prof = switching_profile(tiny, n=n, seed=seed)
    vals = simulate(tiny, vf)
    for net in range(tiny.num_nets):
        assert vals.ones(net) == prof.ones[net]


def test_compare_outputs(tiny):
    assert compare_outputs(tiny, tiny, all_input_rows(3)) == []
    tr = TrojanInstance((tiny.id_of("a"), tiny.id_of("b")), (1, 1), tiny.id_of("z"))
    sp = splice_trojan(tiny, tr)
    rows = all_input_rows(3)
    found = compare_outputs(tiny, sp, rows)
    expected = [k for k, r in enumerate(rows) if r[0] == "1" and r[1] == "1"]
    assert [idx for idx, _ in found] == expected
    assert all(pos == ("z",) for _, pos in found)


def test_compare_outputs_interface_check(tiny, chain):
    with pytest.raises(InterfaceMismatch):
        compare_outputs(tiny, chain, ["000"])
