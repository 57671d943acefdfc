"""htforge: RL-driven hardware trojan insertion, detection and scoring.

The package turns a structural gate-level netlist into a playground for
two adversarial agents: an insertion agent that learns where stealthy
trigger/payload pairs survive, and detection agents that learn input
vectors exposing them.  Everything in between (SCOAP testability, rare
net extraction, packed logic simulation, PODEM test generation, PPO) is
implemented here with numpy as the only runtime dependency.
"""

__version__ = "0.1.0"

from .circuit import Circuit, Gate, TrojanInstance, splice_trojan
from .errors import HtforgeError
from .evaluation import (
    DetectionReport,
    confidence_value,
    evaluate_detection,
    max_tolerable_fn,
    unique_contribution,
)
from .logic_sim import (
    SwitchingProfile,
    compare_outputs,
    random_vectors,
    scalar_simulate,
    simulate,
    switching_profile,
)
from .netlist_io import (
    TestVectorFile,
    emit_netlist,
    load_circuit,
    parse_netlist,
    read_manifest,
    read_vectors,
    write_manifest,
    write_vectors,
)
from .testability import (
    CalibrationResult,
    DynamicRareConfig,
    RareNetSet,
    ScoapTable,
    StaticRareConfig,
    calibrate_thresholds,
    compute_scoap,
    extract_rare_dynamic,
    extract_rare_static,
    hts,
    ocr,
)
from .atpg import AtpgResult, activation_vector, justify

__all__ = [
    "AtpgResult",
    "CalibrationResult",
    "Circuit",
    "DetectionReport",
    "DynamicRareConfig",
    "Gate",
    "HtforgeError",
    "RareNetSet",
    "ScoapTable",
    "StaticRareConfig",
    "SwitchingProfile",
    "TestVectorFile",
    "TrojanInstance",
    "activation_vector",
    "calibrate_thresholds",
    "compare_outputs",
    "compute_scoap",
    "confidence_value",
    "emit_netlist",
    "evaluate_detection",
    "extract_rare_dynamic",
    "extract_rare_static",
    "hts",
    "justify",
    "load_circuit",
    "max_tolerable_fn",
    "ocr",
    "parse_netlist",
    "random_vectors",
    "read_manifest",
    "read_vectors",
    "scalar_simulate",
    "simulate",
    "splice_trojan",
    "switching_profile",
    "unique_contribution",
    "write_manifest",
    "write_vectors",
    "__version__",
]
