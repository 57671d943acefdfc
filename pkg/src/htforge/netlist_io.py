"""Readers and writers for structural netlists, vector files and manifests.

Two netlist formats are supported:

* a structural Verilog subset: one ``module``, scalar ``input``/``output``/
  ``wire`` declarations and primitive gate instantiations
  (``and/nand/or/nor/xor/xnor/not/buf``) with output-first port lists;
* the bench format: ``INPUT(x)``, ``OUTPUT(y)`` and ``y = KIND(a, b)`` lines.

Anything else (assign, always, vectors, submodules, flip-flops) raises
UnsupportedConstruct.  Escaped Verilog identifiers (``\\name ``) are
understood and emitted when a net name is not a plain identifier, so
bench-derived numeric names round-trip exactly.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .circuit import GATE_KINDS, Circuit, TrojanInstance, splice_trojan
from .errors import (
    EmptyModule,
    IllegalCharacter,
    LengthMismatch,
    ManifestMismatch,
    MultipleDrivers,
    UnsupportedConstruct,
    WidthMismatch,
)

_VERILOG_KEYWORDS = {"module", "endmodule", "input", "output", "wire"}
_BENCH_KINDS = {
    "and": "and", "nand": "nand", "or": "or", "nor": "nor",
    "xor": "xor", "xnor": "xnor", "not": "not", "inv": "not",
    "buf": "buf", "buff": "buf",
}
_PLAIN_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*\Z")


@dataclass
class RawNetlist:
    """Parsed netlist before graph construction.

    Order is significant everywhere: ``inputs``/``outputs`` keep port order,
    ``gates`` keep declaration order.  ``gates`` entries are
    ``(kind, out_name, in_names)``.
    """

    name: str
    inputs: list[str]
    outputs: list[str]
    gates: list[tuple[str, str, tuple[str, ...]]]
    declared: set[str] = field(default_factory=set)

    def to_circuit(self) -> Circuit:
        return Circuit.build(self.name, self.inputs, self.outputs, self.gates)


def _strip_comments(text: str) -> str:
    text = re.sub(r"/\*.*?\*/", " ", text, flags=re.S)
    return re.sub(r"//[^\n]*", " ", text)


def _tokenize_verilog(text: str):
    """Token stream; escaped identifiers become plain name tokens."""
    pos, n = 0, len(text)
    while pos < n:
        c = text[pos]
        if c.isspace():
            pos += 1
            continue
        if c == "\\":
            end = pos + 1
            while end < n and not text[end].isspace():
                end += 1
            yield text[pos + 1:end]
            pos = end
            continue
        if c in "(),;":
            yield c
            pos += 1
            continue
        m = re.match(r"[A-Za-z0-9_$\[\]:.]+", text[pos:])
        if not m:
            raise UnsupportedConstruct(f"unexpected character {c!r} in netlist")
        yield m.group(0)
        pos += len(m.group(0))


def parse_verilog(text: str) -> RawNetlist:
    """Parse the structural Verilog subset into a RawNetlist."""
    tokens = list(_tokenize_verilog(_strip_comments(text)))
    i = 0

    def expect(tok):
        nonlocal i
        if i >= len(tokens) or tokens[i] != tok:
            got = tokens[i] if i < len(tokens) else "<eof>"
            raise UnsupportedConstruct(f"expected {tok!r}, found {got!r}")
        i += 1

    def statement():
        """Collect tokens until the next ';'."""
        nonlocal i
        start = i
        while i < len(tokens) and tokens[i] != ";":
            i += 1
        if i >= len(tokens):
            raise UnsupportedConstruct("unterminated statement (missing ';')")
        stmt = tokens[start:i]
        i += 1
        return stmt

    expect("module")
    if i >= len(tokens):
        raise UnsupportedConstruct("missing module name")
    name = tokens[i]
    i += 1
    header = statement()  # port list, ignored beyond syntax
    if header and (header[0] != "(" or header[-1] != ")"):
        raise UnsupportedConstruct("malformed module port list")

    raw = RawNetlist(name, [], [], [])
    seen_drivers = set()
    while True:
        if i >= len(tokens):
            raise UnsupportedConstruct("missing 'endmodule'")
        tok = tokens[i]
        if tok == "endmodule":
            i += 1
            break
        i += 1
        if tok in ("input", "output", "wire"):
            stmt = statement()
            names = [t for t in stmt if t != ","]
            for t in names:
                if ":" in t or "[" in t:
                    raise UnsupportedConstruct(
                        f"vector declarations are not supported: {t!r}"
                    )
            if tok == "input":
                raw.inputs.extend(names)
            elif tok == "output":
                raw.outputs.extend(names)
            raw.declared.update(names)
        elif tok in GATE_KINDS:
            stmt = statement()
            j = 0
            if stmt and stmt[j] != "(":  # optional instance name
                j += 1
            if j >= len(stmt) or stmt[j] != "(" or stmt[-1] != ")":
                raise UnsupportedConstruct(f"malformed {tok} instantiation")
            ports = [t for t in stmt[j + 1:-1] if t != ","]
            if len(ports) < 2:
                raise UnsupportedConstruct(f"{tok} gate needs output and inputs")
            out, ins = ports[0], tuple(ports[1:])
            if out in seen_drivers:
                raise MultipleDrivers(f"net {out!r} has more than one driver")
            seen_drivers.add(out)
            raw.gates.append((tok, out, ins))
        else:
            raise UnsupportedConstruct(
                f"construct {tok!r} is outside the supported structural subset"
            )
    if i < len(tokens):
        raise UnsupportedConstruct("content after 'endmodule'")
    if not raw.gates:
        raise EmptyModule(f"module {name!r} contains no gates")
    for pi in raw.inputs:
        if pi in seen_drivers:
            raise MultipleDrivers(f"primary input {pi!r} is driven by a gate")
    return raw


def parse_bench(text: str, name: str = "bench") -> RawNetlist:
    """Parse a .bench netlist into a RawNetlist."""
    raw = RawNetlist(name, [], [], [])
    seen_drivers = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"(INPUT|OUTPUT)\s*\(\s*([^()\s]+)\s*\)\Z", line, re.I)
        if m:
            (raw.inputs if m.group(1).upper() == "INPUT" else raw.outputs).append(
                m.group(2)
            )
            raw.declared.add(m.group(2))
            continue
        m = re.match(r"([^=\s]+)\s*=\s*([A-Za-z]+)\s*\(\s*(.*?)\s*\)\Z", line)
        if not m:
            raise UnsupportedConstruct(f"line {lineno}: cannot parse {line!r}")
        out, kind_raw, args = m.groups()
        kind = _BENCH_KINDS.get(kind_raw.lower())
        if kind is None:
            raise UnsupportedConstruct(
                f"line {lineno}: unsupported bench primitive {kind_raw!r}"
            )
        ins = tuple(a.strip() for a in args.split(",") if a.strip())
        if out in seen_drivers:
            raise MultipleDrivers(f"net {out!r} has more than one driver")
        seen_drivers.add(out)
        raw.gates.append((kind, out, ins))
    if not raw.gates:
        raise EmptyModule("bench source contains no gates")
    for pi in raw.inputs:
        if pi in seen_drivers:
            raise MultipleDrivers(f"primary input {pi!r} is driven by a gate")
    return raw


def parse_netlist(source: str, fmt: str | None = None, name: str | None = None) -> RawNetlist:
    """Parse netlist text; ``fmt`` is 'verilog', 'bench' or None (sniff)."""
    if fmt is None:
        fmt = "verilog" if re.search(r"\bmodule\b", _strip_comments(source)) else "bench"
    if fmt == "verilog":
        raw = parse_verilog(source)
    elif fmt == "bench":
        raw = parse_bench(source, name or "bench")
    else:
        raise UnsupportedConstruct(f"unknown netlist format {fmt!r}")
    if name:
        raw.name = name
    return raw


def load_circuit(path) -> Circuit:
    """Read a netlist file (.v or .bench by extension) into a Circuit."""
    p = Path(path)
    fmt = "bench" if p.suffix.lower() == ".bench" else "verilog"
    raw = parse_netlist(p.read_text(), fmt=fmt, name=None if fmt == "verilog" else p.stem)
    return raw.to_circuit()


# --- emission -----------------------------------------------------------------

def _emit_id(name: str) -> str:
    if _PLAIN_ID.match(name) and name not in _VERILOG_KEYWORDS:
        return name
    return "\\" + name + " "


def emit_netlist(circuit: Circuit, trojans=()) -> str:
    """Render a circuit (plus optional trojans spliced in order) as Verilog.

    The emitted text reparses to an identical circuit: same net names, same
    port order, same gate order.
    """
    for trojan in trojans:
        circuit = splice_trojan(circuit, trojan)
    pi_names = [circuit.net_names[i] for i in circuit.inputs]
    po_names = [circuit.net_names[i] for i in circuit.outputs]
    port_set = set(circuit.inputs) | set(circuit.outputs)
    wires = [circuit.net_names[n] for n in range(circuit.num_nets) if n not in port_set]

    def decl(kw, names):
        return f"  {kw} " + ", ".join(_emit_id(n) for n in names) + ";"

    lines = [
        f"module {_emit_id(circuit.name)} ("
        + ", ".join(_emit_id(n) for n in pi_names + po_names)
        + ");"
    ]
    lines.append(decl("input", pi_names))
    lines.append(decl("output", po_names))
    if wires:
        lines.append(decl("wire", wires))
    for idx, g in enumerate(circuit.gates):
        ports = ", ".join(
            _emit_id(circuit.net_names[n]) for n in (g.out, *g.ins)
        )
        lines.append(f"  {g.kind} g{idx} ({ports});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# --- vector files ---------------------------------------------------------------

@dataclass
class TestVectorFile:
    """An ordered set of input vectors, one bit string per row.

    Bit k of a row is the value of the k-th declared primary input.
    """

    width: int
    rows: list[str]

    def __post_init__(self):
        for r in self.rows:
            if len(r) != self.width:
                raise LengthMismatch(
                    f"vector {r!r} has length {len(r)}, expected {self.width}"
                )
            if r.strip("01"):
                bad = next(c for c in r if c not in "01")
                raise IllegalCharacter(f"illegal character {bad!r} in vector")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def require_width(self, width: int):
        if self.rows and self.width != width:
            raise WidthMismatch(
                f"vectors are {self.width} bits wide, circuit has {width} inputs"
            )

    def deduplicated(self) -> "TestVectorFile":
        return TestVectorFile(self.width, list(dict.fromkeys(self.rows)))

    def extended(self, other: "TestVectorFile") -> "TestVectorFile":
        if self.rows and other.rows and self.width != other.width:
            raise WidthMismatch("cannot merge vector files of different widths")
        width = self.width if self.rows else other.width
        return TestVectorFile(width, list(dict.fromkeys(self.rows + other.rows)))


def read_vectors(text_or_path, expected_width: int | None = None) -> TestVectorFile:
    """Parse a vector file; accepts a path or raw text."""
    p = Path(str(text_or_path))
    text = p.read_text() if p.is_file() else str(text_or_path)
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    for r in rows:
        if r.strip("01"):
            bad = next(c for c in r if c not in "01")
            raise IllegalCharacter(f"illegal character {bad!r} in vector file")
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise LengthMismatch(f"vector rows have mixed lengths {sorted(widths)}")
    width = widths.pop() if rows else (expected_width or 0)
    vf = TestVectorFile(width, rows)
    if expected_width is not None:
        vf.require_width(expected_width)
    return vf


def write_vectors(path, vectors: TestVectorFile):
    Path(path).write_text("".join(r + "\n" for r in vectors.rows))


# --- trojan manifests --------------------------------------------------------------

MANIFEST_VERSION = 1


def manifest_records(circuit: Circuit, records) -> list[dict]:
    """Convert harvested trojan records into JSON-friendly manifest entries."""
    out = []
    for k, rec in enumerate(records):
        out.append({
            "id": f"ht{k:05d}",
            "trigger_nets": [circuit.net_names[t] for t in rec.trojan.trigger_nets],
            "polarities": list(rec.trojan.polarities),
            "target_net": circuit.net_names[rec.trojan.target_net],
            "rare_trigger_count": rec.rare_trigger_count,
            "activation_vector": rec.activation_vector,
            "payload_mode": rec.payload_mode,
        })
    return out


def write_manifest(path, entries: list[dict]):
    payload = {"version": MANIFEST_VERSION, "trojans": entries}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict) or "trojans" not in payload:
        raise ManifestMismatch("manifest lacks a 'trojans' array")
    return payload["trojans"]


def manifest_to_instance(circuit: Circuit, entry: dict) -> TrojanInstance:
    """Resolve a manifest entry against a circuit, validating all names."""
    try:
        triggers = tuple(circuit.id_of(n) for n in entry["trigger_nets"])
        target = circuit.id_of(entry["target_net"])
    except Exception as exc:
        raise ManifestMismatch(
            f"manifest entry {entry.get('id', '?')}: {exc}"
        ) from None
    pols = tuple(int(p) for p in entry["polarities"])
    if len(pols) != len(triggers):
        raise ManifestMismatch(
            f"manifest entry {entry.get('id', '?')}: polarity/trigger count differ"
        )
    return TrojanInstance(triggers, pols, target)
