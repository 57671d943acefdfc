"""Bundled combinational benchmark netlists (ISCAS-85 family).

These are the classic gate-level circuits in structural Verilog, sorted
here by size.  ``load`` parses a copy into a fresh :class:`Circuit`.
"""

from importlib import resources

from ..errors import UnknownNet
from ..netlist_io import parse_netlist

# ascending net count; c17 is a toy circuit kept for examples and tests
BENCHMARKS = (
    "c17",
    "c432",
    "c880",
    "c1908",
    "c1355",
    "c2670",
    "c3540",
    "c5315",
    "c6288",
    "c7552",
)


def available() -> tuple:
    """Names accepted by :func:`load` and :func:`source`."""
    return BENCHMARKS


def source(name: str) -> str:
    """Raw Verilog text of a bundled benchmark."""
    if name not in BENCHMARKS:
        raise UnknownNet(
            f"no bundled benchmark named {name!r}; "
            f"choose one of {', '.join(BENCHMARKS)}")
    return (resources.files(__package__) / f"{name}.v").read_text()


def load(name: str):
    """Parse a bundled benchmark into a Circuit."""
    return parse_netlist(source(name), fmt="verilog").to_circuit()
