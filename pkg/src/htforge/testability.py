"""SCOAP testability analysis and rare-net extraction.

Controllability CCv(net) estimates how hard it is to set the net to v
(primary inputs cost 1, every gate adds 1); observability CO(net) how hard
it is to propagate the net to a primary output (primary outputs cost 0).
Two derived figures drive rare-net selection:

* ``hts = |CC1 - CC0| / max(CC1, CC0)`` in [0, 1): controllability skew;
* ``ocr = CO / (CC1 + CC0)`` in [0, inf): observability relative to
  controllability.

A net is statically rare when hts > t_hts and ocr < t_ocr; its rare value
is the harder-to-set side (larger CCv, ties resolve to 0).  Dynamically
rare nets are those whose simulated switching activity falls below a
threshold theta.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .errors import DomainError, EmptySelection
from .logic_sim import SwitchingProfile

_INF = float("inf")


@dataclass
class ScoapTable:
    """Per-net SCOAP values; unobservable nets carry CO = inf."""

    cc0: np.ndarray
    cc1: np.ndarray
    co: np.ndarray


def _parity_costs(cc0, cc1, ins):
    """Cheapest ways to set the parity of ``ins`` to 0 and to 1."""
    p0, p1 = cc0[ins[0]], cc1[ins[0]]
    for i in ins[1:]:
        a0, a1 = cc0[i], cc1[i]
        p0, p1 = min(p0 + a0, p1 + a1), min(p0 + a1, p1 + a0)
    return p0, p1


def compute_scoap(circuit: Circuit) -> ScoapTable:
    cc0 = np.zeros(circuit.num_nets, dtype=np.float64)
    cc1 = np.zeros(circuit.num_nets, dtype=np.float64)
    for pi in circuit.inputs:
        cc0[pi] = cc1[pi] = 1.0
    for idx in circuit.topo_order:
        g = circuit.gates[idx]
        ins = g.ins
        if g.kind == "and":
            c1 = sum(cc1[i] for i in ins) + 1
            c0 = min(cc0[i] for i in ins) + 1
        elif g.kind == "nand":
            c0 = sum(cc1[i] for i in ins) + 1
            c1 = min(cc0[i] for i in ins) + 1
        elif g.kind == "or":
            c0 = sum(cc0[i] for i in ins) + 1
            c1 = min(cc1[i] for i in ins) + 1
        elif g.kind == "nor":
            c1 = sum(cc0[i] for i in ins) + 1
            c0 = min(cc1[i] for i in ins) + 1
        elif g.kind == "xor":
            p0, p1 = _parity_costs(cc0, cc1, ins)
            c0, c1 = p0 + 1, p1 + 1
        elif g.kind == "xnor":
            p0, p1 = _parity_costs(cc0, cc1, ins)
            c0, c1 = p1 + 1, p0 + 1
        elif g.kind == "not":
            c0, c1 = cc1[ins[0]] + 1, cc0[ins[0]] + 1
        else:  # buf
            c0, c1 = cc0[ins[0]] + 1, cc1[ins[0]] + 1
        cc0[g.out], cc1[g.out] = c0, c1

    co = np.full(circuit.num_nets, _INF, dtype=np.float64)
    for po in circuit.outputs:
        co[po] = 0.0
    # reverse topological: a gate's output CO is final before its inputs are visited
    for idx in reversed(circuit.topo_order):
        g = circuit.gates[idx]
        out_co = co[g.out]
        ins = g.ins
        if g.kind in ("not", "buf"):
            pin = out_co + 1
            if pin < co[ins[0]]:
                co[ins[0]] = pin
            continue
        if g.kind in ("and", "nand"):
            side = [cc1[i] for i in ins]
        elif g.kind in ("or", "nor"):
            side = [cc0[i] for i in ins]
        else:  # xor / xnor: the other pins need any determinate value
            side = [min(cc0[i], cc1[i]) for i in ins]
        total = sum(side)
        for pos, i in enumerate(ins):
            pin = out_co + (total - side[pos]) + 1
            if pin < co[i]:
                co[i] = pin
    return ScoapTable(cc0, cc1, co)


# --- derived figures ---------------------------------------------------------------

def hts(cc0: float, cc1: float) -> float:
    """Controllability skew in [0, 1)."""
    if cc0 < 1 or cc1 < 1:
        raise DomainError("controllability values are at least 1")
    return abs(cc1 - cc0) / max(cc1, cc0)


def ocr(cc0: float, cc1: float, co: float) -> float:
    """Observability-to-controllability ratio in [0, inf)."""
    if cc0 < 1 or cc1 < 1:
        raise DomainError("controllability values are at least 1")
    if co < 0:
        raise DomainError("observability is non-negative")
    return co / (cc0 + cc1)


def hts_values(table: ScoapTable) -> np.ndarray:
    return np.abs(table.cc1 - table.cc0) / np.maximum(table.cc1, table.cc0)


def ocr_values(table: ScoapTable) -> np.ndarray:
    return table.co / (table.cc0 + table.cc1)


def rare_values_from_scoap(table: ScoapTable) -> np.ndarray:
    """Harder-to-set value per net: 1 where CC1 > CC0, else 0 (ties -> 0)."""
    return (table.cc1 > table.cc0).astype(np.int8)


# --- rare-net sets -----------------------------------------------------------------

@dataclass(frozen=True)
class StaticRareConfig:
    t_hts: float
    t_ocr: float

    def __post_init__(self):
        if not 0.0 <= self.t_hts < 1.0:
            raise DomainError(f"t_hts must be in [0, 1), got {self.t_hts}")
        if self.t_ocr < 0.0:
            raise DomainError(f"t_ocr must be non-negative, got {self.t_ocr}")


@dataclass(frozen=True)
class DynamicRareConfig:
    theta: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.theta <= 0.5:
            raise DomainError(f"theta must be in [0, 0.5], got {self.theta}")


@dataclass(frozen=True)
class RareNetSet:
    """Selected rare nets with per-net rare value and selection score.

    Members are parallel tuples sorted by ascending net id.  ``source`` is
    "static" (SCOAP thresholds, score = hts) or "dynamic" (activity
    threshold, score = activity).
    """

    net_ids: tuple
    rare_values: tuple
    scores: tuple
    source: str

    def __len__(self):
        return len(self.net_ids)

    def rare_value_of(self, net: int) -> int:
        return self.rare_values[self.net_ids.index(net)]


def extract_rare_static(table: ScoapTable, cfg: StaticRareConfig) -> RareNetSet:
    h = hts_values(table)
    o = ocr_values(table)
    sel = np.flatnonzero((h > cfg.t_hts) & (o < cfg.t_ocr))
    if len(sel) == 0:
        warnings.warn("static rare extraction selected zero nets", EmptySelection)
    rare = rare_values_from_scoap(table)
    return RareNetSet(
        tuple(int(i) for i in sel),
        tuple(int(rare[i]) for i in sel),
        tuple(float(h[i]) for i in sel),
        "static",
    )


def extract_rare_dynamic(profile: SwitchingProfile, cfg: DynamicRareConfig) -> RareNetSet:
    sel = np.flatnonzero(profile.activity < cfg.theta)
    if len(sel) == 0:
        warnings.warn("dynamic rare extraction selected zero nets", EmptySelection)
    return RareNetSet(
        tuple(int(i) for i in sel),
        tuple(int(profile.rare_value[i]) for i in sel),
        tuple(float(profile.activity[i]) for i in sel),
        "dynamic",
    )


# --- threshold calibration ------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationResult:
    config: StaticRareConfig
    count: int
    fraction: float
    target_fraction: float


def calibrate_thresholds(table: ScoapTable, target_fraction: float) -> CalibrationResult:
    """Search (t_hts, t_ocr) so the selected fraction is closest to target.

    Sweep candidate t_hts over observed hts values (plus 0); per candidate
    take the smallest t_ocr admitting the count closest to the target;
    globally minimize |fraction - target|, breaking ties toward the higher
    t_hts, then the smaller selection.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise DomainError(f"target_fraction must be in (0, 1], got {target_fraction}")
    h = hts_values(table)
    o = ocr_values(table)
    n = len(h)
    finite = np.isfinite(o)
    candidates = np.unique(np.concatenate([h, [0.0]]))
    best = None  # (|frac-target|, -t_hts, count, t_ocr)
    for t_hts in candidates:
        mask = (h > t_hts) & finite
        ocr_sel = np.sort(o[mask])
        # counts achievable with a strict ocr < t_ocr cut: 0 plus each
        # distinct-value group boundary
        distinct, first_pos = np.unique(ocr_sel, return_index=True)
        if len(distinct):
            group_end = np.append(first_pos[1:], len(ocr_sel))
            counts = np.concatenate([[0], group_end])
            # smallest threshold admitting each count: next distinct value, or max+1
            cuts = np.concatenate([[0.0], distinct[1:], [distinct[-1] + 1.0]])
        else:
            counts = np.array([0])
            cuts = np.array([0.0])
        errs = np.abs(counts / n - target_fraction)
        j = int(np.argmin(errs))  # argmin takes the first (= smallest count/cut) on ties
        entry = (float(errs[j]), -float(t_hts), int(counts[j]), float(cuts[j]))
        if best is None or entry < best:
            best = entry
    err, neg_t, count, t_ocr = best
    cfg = StaticRareConfig(t_hts=-neg_t, t_ocr=t_ocr)
    return CalibrationResult(cfg, count, count / n, target_fraction)
