"""Scoring a vector set against a trojan population.

A trojan counts as detected when at least one vector makes the infected
circuit disagree with the golden circuit on a primary output.  Because
judgement is by direct output comparison, a clean circuit can never be
flagged: the false-positive rate of this test procedure is structurally
zero, and the reported confidence only varies with coverage.

The confidence figure combines both error rates against a tolerance
parameter alpha:

    confidence = (1 - FP) / (1/alpha + FN)

so a perfect detector scores alpha and the largest false-negative rate a
confidence target c can tolerate is bounded by 1/alpha.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, TrojanInstance, splice_trojan
from .errors import DomainError, PopulationMismatch
from .logic_sim import TestVectorFile, pack_rows, _simulate_words
from .netlist_io import manifest_to_instance

_EVAL_CHUNK = 2048


def confidence_value(false_positive: float, false_negative: float,
                     alpha: float) -> float:
    """Detector confidence given error rates and the tolerance alpha."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not 0.0 <= false_positive <= 1.0:
        raise DomainError(f"false positive rate {false_positive} outside [0, 1]")
    if not 0.0 <= false_negative <= 1.0:
        raise DomainError(f"false negative rate {false_negative} outside [0, 1]")
    return (1.0 - false_positive) / (1.0 / alpha + false_negative)


def max_tolerable_fn(alpha: float) -> float:
    """Upper bound on 1/confidence - 1/alpha; the FN budget at FP = 0."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return 1.0 / alpha


@dataclass(frozen=True)
class EvalEntry:
    """One population member: a stable id, the trojan, and its rare count."""

    ident: str
    trojan: TrojanInstance
    rare_trigger_count: int


def entries_from_records(records) -> list:
    """EvalEntries for harvested TrojanRecords; ids follow manifest order."""
    return [
        EvalEntry(f"ht{k:05d}", rec.trojan, int(rec.rare_trigger_count))
        for k, rec in enumerate(records)
    ]


def entries_from_manifest(circuit: Circuit, manifest_entries) -> list:
    return [
        EvalEntry(e["id"], manifest_to_instance(circuit, e),
                  int(e["rare_trigger_count"]))
        for e in manifest_entries
    ]


@dataclass(frozen=True)
class BucketStats:
    total: int
    detected: int
    accuracy: float
    confidence: float


@dataclass
class DetectionReport:
    alpha: float
    num_vectors: int
    num_trojans: int
    detected_ids: tuple
    undetected_ids: tuple
    accuracy: float
    false_positive_rate: float
    false_negative_rate: float
    confidence: float
    buckets: dict
    first_detection: dict
    curve: tuple | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "alpha": self.alpha,
            "num_vectors": self.num_vectors,
            "num_trojans": self.num_trojans,
            "accuracy": self.accuracy,
            "false_positive_rate": self.false_positive_rate,
            "false_negative_rate": self.false_negative_rate,
            "confidence": self.confidence,
            "detected_ids": list(self.detected_ids),
            "undetected_ids": list(self.undetected_ids),
            "buckets": {
                str(k): {
                    "total": b.total,
                    "detected": b.detected,
                    "accuracy": b.accuracy,
                    "confidence": b.confidence,
                }
                for k, b in self.buckets.items()
            },
            "first_detection": dict(self.first_detection),
            "curve": [list(p) for p in self.curve] if self.curve else None,
            "extras": self.extras,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def worker_count(explicit=None) -> int:
    """Thread pool width: explicit argument, else the TP_THREADS variable."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("TP_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"TP_THREADS must be an integer, got {env!r}")
    return 1


def _chunked_inputs(golden: Circuit, vectors: TestVectorFile):
    """Pre-packed PI words and golden PO words per evaluation chunk."""
    width = len(golden.inputs)
    chunks = []
    for start in range(0, len(vectors.rows), _EVAL_CHUNK):
        rows = vectors.rows[start:start + _EVAL_CHUNK]
        pi_words = pack_rows(rows, width)
        g_vals = _simulate_words(golden, pi_words, len(rows))
        chunks.append((start, len(rows), pi_words,
                       g_vals[list(golden.outputs)]))
    return chunks


def _first_detection(golden, spliced, chunks):
    """Index of the first vector separating spliced from golden, or None."""
    po_ids = list(spliced.outputs)
    for start, n, pi_words, g_po in chunks:
        s_vals = _simulate_words(spliced, pi_words, n)
        diff = (s_vals[po_ids] ^ g_po)
        if not diff.any():
            continue
        col = np.bitwise_or.reduce(diff, axis=0)
        word = int(np.flatnonzero(col)[0])
        bit = int(col[word]) & -int(col[word])
        return start + word * 64 + bit.bit_length() - 1
    return None


def evaluate_detection(golden: Circuit, entries, vectors: TestVectorFile,
                       alpha: float, full_sweep: bool = False,
                       workers=None, curve_step: int = 2000) -> DetectionReport:
    """Score a vector set against a trojan population.

    Each trojan is spliced and simulated chunk by chunk, stopping at the
    first detecting vector.  Statistics are reported overall and bucketed
    by rare trigger count; with ``full_sweep`` the report also carries an
    accuracy-versus-vector-budget curve sampled every ``curve_step``
    vectors.  ``workers=None`` honours the TP_THREADS environment
    variable (default: one thread).
    """
    entries = list(entries)
    if not entries:
        raise DomainError("cannot evaluate an empty trojan population")
    ids = [e.ident for e in entries]
    if len(set(ids)) != len(ids):
        raise PopulationMismatch("trojan ids in the population must be unique")
    vectors.require_width(len(golden.inputs))
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")

    chunks = _chunked_inputs(golden, vectors)

    def probe(entry: EvalEntry):
        spliced = splice_trojan(golden, entry.trojan)
        return entry.ident, _first_detection(golden, spliced, chunks)

    n_workers = worker_count(workers)
    if n_workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(probe, entries))
    else:
        results = [probe(e) for e in entries]

    first = {ident: idx for ident, idx in results}
    detected = tuple(e.ident for e in entries if first[e.ident] is not None)
    undetected = tuple(e.ident for e in entries if first[e.ident] is None)
    total = len(entries)
    acc = len(detected) / total
    fn = 1.0 - acc
    report_first = {i: int(v) for i, v in first.items() if v is not None}

    buckets = {}
    for count in sorted({e.rare_trigger_count for e in entries}):
        members = [e for e in entries if e.rare_trigger_count == count]
        hit = sum(first[e.ident] is not None for e in members)
        b_acc = hit / len(members)
        buckets[count] = BucketStats(
            len(members), hit, b_acc, confidence_value(0.0, 1.0 - b_acc, alpha))

    curve = None
    if full_sweep:
        points = []
        budgets = list(range(curve_step, len(vectors.rows), curve_step))
        budgets.append(len(vectors.rows))
        for k in budgets:
            within = sum(1 for v in report_first.values() if v < k)
            points.append((k, within / total))
        curve = tuple(points)

    return DetectionReport(
        alpha=float(alpha),
        num_vectors=len(vectors.rows),
        num_trojans=total,
        detected_ids=detected,
        undetected_ids=undetected,
        accuracy=acc,
        false_positive_rate=0.0,
        false_negative_rate=fn,
        confidence=confidence_value(0.0, fn, alpha),
        buckets=buckets,
        first_detection=report_first,
        curve=curve,
    )


def unique_contribution(report_a: DetectionReport, report_b: DetectionReport) -> dict:
    """Detections exclusive to each of two reports over the same population.

    Raises PopulationMismatch unless both reports cover exactly the same
    trojan ids.
    """
    all_a = set(report_a.detected_ids) | set(report_a.undetected_ids)
    all_b = set(report_b.detected_ids) | set(report_b.undetected_ids)
    if all_a != all_b:
        raise PopulationMismatch(
            "reports cover different trojan populations; "
            f"{len(all_a ^ all_b)} ids differ")
    det_a = set(report_a.detected_ids)
    det_b = set(report_b.detected_ids)
    return {
        "only_a": tuple(sorted(det_a - det_b)),
        "only_b": tuple(sorted(det_b - det_a)),
        "both": tuple(sorted(det_a & det_b)),
        "neither": tuple(sorted(all_a - det_a - det_b)),
    }
