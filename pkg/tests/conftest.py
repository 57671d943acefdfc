import numpy as np
import pytest

from htforge.benchmarks import load
from htforge.circuit import Circuit
from htforge.testability import (
    calibrate_thresholds,
    compute_scoap,
    extract_rare_static,
)


@pytest.fixture(scope="session")
def c17():
    return load("c17")


@pytest.fixture(scope="session")
def c432():
    return load("c432")


@pytest.fixture(scope="session")
def c432_scoap(c432):
    return compute_scoap(c432)


@pytest.fixture(scope="session")
def c432_rare_static(c432_scoap):
    cal = calibrate_thresholds(c432_scoap, 0.05)
    return extract_rare_static(c432_scoap, cal.config)


@pytest.fixture
def tiny():
    """and/not/or ladder with one reconvergent fanout; 3 PIs, 4 gates."""
    return Circuit.build(
        "tiny",
        ["a", "b", "c"],
        ["y", "z"],
        [
            ("and", "p", ("a", "b")),
            ("not", "q", ("c",)),
            ("or", "y", ("p", "q")),
            ("xor", "z", ("p", "c")),
        ],
    )


@pytest.fixture
def chain():
    """buf/not chain: a -> n1 -> n2 -> n3, useful for level arithmetic."""
    return Circuit.build(
        "chain",
        ["a", "b"],
        ["n3"],
        [
            ("buf", "n1", ("a",)),
            ("not", "n2", ("n1",)),
            ("and", "n3", ("n2", "b")),
        ],
    )
