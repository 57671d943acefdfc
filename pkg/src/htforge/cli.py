"""Command line front end.

Subcommands cover the full flow: static analysis (``analyze``,
``calibrate``, ``profile``), the two agents (``insert``, ``detect``),
vector scoring (``evaluate``, ``confidence``) and one-off ATPG queries
(``atpg``).  Machine-readable results go to stdout as JSON; training
progress goes to stderr.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Commands that
write into an output directory also drop a ``run_config.json`` with the
exact arguments (no timestamps), so identical invocations produce
byte-identical artifacts; partially written outputs are removed when a
command fails.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, benchmarks
from .atpg import DEFAULT_BACKTRACK_LIMIT, justify
from .envs.detection import DetectionEnv, harvest_vectors, prune_states
from .envs.insertion import InsertionEnv, harvest_trojans
from .errors import HtforgeError
from .evaluation import (
    confidence_value,
    entries_from_manifest,
    evaluate_detection,
    max_tolerable_fn,
)
from .logic_sim import random_vectors, switching_profile
from .netlist_io import (
    load_circuit,
    manifest_records,
    read_manifest,
    read_vectors,
    write_manifest,
    write_vectors,
)
from .rl.ppo import PpoConfig, save_checkpoint, train
from .schedules import (
    DETECTION_BASE_TIMESTEPS,
    DETECTION_EPISODE_LENGTH,
    INSERTION_BASE_EPISODE_LENGTH,
    INSERTION_BASE_TIMESTEPS,
    detection_schedule,
    insertion_schedule,
)
from .testability import (
    calibrate_thresholds,
    compute_scoap,
    extract_rare_dynamic,
    extract_rare_static,
    DynamicRareConfig,
    hts_values,
    ocr_values,
    rare_values_from_scoap,
)

OK_EXIT = 0
USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _circuit(spec: str):
    if spec in benchmarks.available():
        return benchmarks.load(spec)
    return load_circuit(spec)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


class _Outputs:
    """Tracks files written by a command so failures leave no debris."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def path(self, name) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def discard(self):
        for p in reversed(self.written):
            p.unlink(missing_ok=True)


def _write_run_config(out: _Outputs, command: str, args: argparse.Namespace):
    record = {
        "command": command,
        "arguments": {
            k: v for k, v in sorted(vars(args).items()) if k != "func"
        },
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    out.path("run_config.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n")


def _progress(label):
    def cb(update, row, params):
        step, mean_rew = row[0], row[1]
        print(f"[{label}] step {step}: mean episode reward {mean_rew:.2f}",
              file=sys.stderr)
    return cb


# --- static analysis commands ---------------------------------------------------


def _cmd_analyze(args):
    circuit = _circuit(args.circuit)
    table = compute_scoap(circuit)
    h = hts_values(table)
    o = ocr_values(table)
    rare = rare_values_from_scoap(table)
    finite_o = o[np.isfinite(o)]
    _emit({
        "circuit": circuit.name,
        "nets": circuit.num_nets,
        "inputs": len(circuit.inputs),
        "outputs": len(circuit.outputs),
        "gates": len(circuit.gates),
        "max_level": circuit.max_level,
        "hts_max": float(h.max()),
        "hts_mean": float(h.mean()),
        "ocr_min": float(finite_o.min()) if len(finite_o) else None,
        "ocr_median": float(np.median(finite_o)) if len(finite_o) else None,
    })
    if args.out:
        lines = ["net,cc0,cc1,co,hts,ocr,rare_value"]
        for n in range(circuit.num_nets):
            lines.append(
                f"{circuit.net_names[n]},{table.cc0[n]!r},{table.cc1[n]!r},"
                f"{table.co[n]!r},{h[n]!r},{o[n]!r},{int(rare[n])}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    return OK_EXIT


def _cmd_calibrate(args):
    circuit = _circuit(args.circuit)
    result = calibrate_thresholds(compute_scoap(circuit), args.fraction)
    payload = {
        "circuit": circuit.name,
        "t_hts": result.config.t_hts,
        "t_ocr": result.config.t_ocr,
        "count": result.count,
        "fraction": result.fraction,
        "target_fraction": result.target_fraction,
    }
    _emit(payload)
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return OK_EXIT


def _cmd_profile(args):
    circuit = _circuit(args.circuit)
    prof = switching_profile(circuit, n=args.vectors, seed=args.seed)
    order = np.argsort(prof.activity, kind="stable")
    rarest = [
        {
            "net": circuit.net_names[int(n)],
            "activity": float(prof.activity[n]),
            "rare_value": int(prof.rare_value[n]),
        }
        for n in order[:10]
    ]
    _emit({
        "circuit": circuit.name,
        "vectors": prof.n,
        "seed": prof.seed,
        "min_activity": float(prof.activity.min()),
        "rarest": rarest,
    })
    if args.out:
        lines = ["net,prob_one,activity,rare_value"]
        for n in range(circuit.num_nets):
            lines.append(
                f"{circuit.net_names[n]},{prof.prob_one[n]!r},"
                f"{prof.activity[n]!r},{int(prof.rare_value[n])}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    return OK_EXIT


# --- agent commands ----------------------------------------------------------------


def _rare_set(circuit, args, default_dynamic: bool):
    """Static (calibrated) or dynamic (activity) rare nets per the flags."""
    use_dynamic = args.theta is not None or (default_dynamic and args.fraction is None)
    if use_dynamic:
        theta = args.theta if args.theta is not None else 0.01
        prof = switching_profile(circuit, n=args.profile_vectors,
                                 seed=args.corpus_seed)
        return extract_rare_dynamic(prof, DynamicRareConfig(theta)), prof
    fraction = args.fraction if args.fraction is not None else 0.05
    table = compute_scoap(circuit)
    result = calibrate_thresholds(table, fraction)
    return extract_rare_static(table, result.config), None


def _cmd_insert(args):
    circuit = _circuit(args.circuit)
    schedule = insertion_schedule().get(args.circuit, {})
    timesteps = args.timesteps or schedule.get(
        "timesteps", INSERTION_BASE_TIMESTEPS)
    episode_length = args.episode_length or schedule.get(
        "episode_length", INSERTION_BASE_EPISODE_LENGTH)
    rare, _ = _rare_set(circuit, args, default_dynamic=False)

    env = InsertionEnv(circuit, rare, trigger_count=args.triggers,
                       episode_length=episode_length,
                       payload_mode=args.payload_mode, seed=args.seed)
    cfg = PpoConfig(total_timesteps=timesteps, seed=args.seed)
    out = _Outputs(args.out)
    try:
        summary = train(env, cfg, progress=_progress("insert"))
        records = harvest_trojans(env, summary.params,
                                  episodes=args.harvest_episodes,
                                  seed=args.seed)
        write_manifest(out.path("manifest.json"),
                       manifest_records(circuit, records))
        save_checkpoint(out.path("policy.npz"), summary.params, cfg)
        summary.curve.save(out.path("curve.csv"))
        _write_run_config(out, "insert", args)
    except BaseException:
        out.discard()
        raise
    _emit({
        "circuit": circuit.name,
        "timesteps": summary.total_timesteps,
        "episodes": len(summary.episode_rewards),
        "population": len(records),
        "rare_nets": len(rare.net_ids),
        "out": str(out.dir),
    })
    return OK_EXIT


def _detector_run(circuit, detector, args, out: _Outputs):
    dynamic = detector in ("ssd", "sad")
    rare, prof = _rare_set(circuit, args, default_dynamic=dynamic)
    if prof is None:
        prof = switching_profile(circuit, n=args.profile_vectors,
                                 seed=args.corpus_seed)
    basis = prune_states(circuit, rare, prof)
    schedule = detection_schedule().get(args.circuit, {})
    timesteps = args.timesteps or schedule.get(
        "timesteps", DETECTION_BASE_TIMESTEPS)
    episode_length = args.episode_length or DETECTION_EPISODE_LENGTH
    env = DetectionEnv(circuit, basis, mode=detector,
                       episode_length=episode_length, seed=args.seed)
    cfg = PpoConfig(total_timesteps=timesteps, seed=args.seed)
    summary = train(env, cfg, progress=_progress(detector))
    vectors = harvest_vectors(
        summary.params, env, episodes=args.harvest_episodes,
        cutoff=args.cutoff,
        final_episode_reward=summary.final_episode_reward,
        seed=args.seed)
    save_checkpoint(out.path(f"{detector}_policy.npz"), summary.params, cfg)
    summary.curve.save(out.path(f"{detector}_curve.csv"))
    write_vectors(out.path(f"{detector}_vectors.txt"), vectors)
    return vectors, basis


def _cmd_detect(args):
    circuit = _circuit(args.circuit)
    detectors = ("ssd", "sad", "cod") if args.detector == "combined" \
        else (args.detector,)
    out = _Outputs(args.out)
    stats = {}
    try:
        merged = None
        for det in detectors:
            vectors, basis = _detector_run(circuit, det, args, out)
            stats[det] = {"vectors": len(vectors), "basis": basis.size}
            merged = vectors if merged is None else merged.extended(vectors)
        if len(detectors) > 1:
            write_vectors(out.path("combined_vectors.txt"), merged)
        _write_run_config(out, "detect", args)
    except BaseException:
        out.discard()
        raise
    _emit({
        "circuit": circuit.name,
        "detectors": stats,
        "total_vectors": len(merged),
        "out": str(out.dir),
    })
    return OK_EXIT


# --- scoring commands ----------------------------------------------------------------


def _cmd_evaluate(args):
    circuit = _circuit(args.circuit)
    entries = entries_from_manifest(circuit, read_manifest(args.manifest))
    if args.vectors == "random":
        vectors = random_vectors(len(circuit.inputs), args.random_vectors,
                                 args.seed)
    else:
        vectors = read_vectors(args.vectors, expected_width=len(circuit.inputs))
    report = evaluate_detection(circuit, entries, vectors, alpha=args.alpha,
                                full_sweep=args.full_sweep,
                                workers=args.workers)
    text = report.to_json()
    print(text, end="")
    if args.out:
        out = _Outputs(args.out)
        try:
            out.path("report.json").write_text(text)
            _write_run_config(out, "evaluate", args)
        except BaseException:
            out.discard()
            raise
    return OK_EXIT


def _cmd_confidence(args):
    _emit({
        "confidence": confidence_value(args.fp, args.fn, args.alpha),
        "max_tolerable_fn": max_tolerable_fn(args.alpha),
    })
    return OK_EXIT


def _cmd_atpg(args):
    circuit = _circuit(args.circuit)
    objectives = []
    for spec in args.objective:
        net, _, val = spec.rpartition("=")
        if not net or val not in ("0", "1"):
            raise HtforgeError(
                f"objective {spec!r} must look like NET=0 or NET=1")
        objectives.append((net, int(val)))
    result = justify(circuit, objectives, limit=args.limit)
    _emit({
        "outcome": result.outcome,
        "vector": result.vector,
        "backtracks": result.backtracks,
    })
    if args.out and result.vector is not None:
        Path(args.out).write_text(result.vector + "\n")
    return OK_EXIT


# --- wiring ------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="htforge",
                     description="RL-driven trojan insertion and detection "
                                 "for gate-level netlists")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--circuit", required=name not in ("confidence",),
                       help="bundled benchmark name or netlist path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file or directory")
        return p

    p = add("analyze", _cmd_analyze, "SCOAP testability table and summary")

    p = add("calibrate", _cmd_calibrate, "search rare-net thresholds")
    p.add_argument("--fraction", type=float, default=0.05,
                   help="target rare fraction of all nets")

    p = add("profile", _cmd_profile, "switching activity over random vectors")
    p.add_argument("--vectors", type=int, default=100_000)

    def add_agent_flags(p, harvest_default):
        p.add_argument("--timesteps", type=int, default=None,
                       help="PPO step budget (default: per-benchmark schedule)")
        p.add_argument("--episode-length", type=int, default=None)
        p.add_argument("--theta", type=float, default=None,
                       help="dynamic rare threshold on activity")
        p.add_argument("--fraction", type=float, default=None,
                       help="static rare target fraction")
        p.add_argument("--profile-vectors", type=int, default=100_000)
        p.add_argument("--corpus-seed", type=int, default=0)
        p.add_argument("--harvest-episodes", type=int, default=harvest_default)

    p = add("insert", _cmd_insert, "train the insertion agent, emit a manifest")
    add_agent_flags(p, harvest_default=100)
    p.add_argument("--payload-mode", choices=("rand", "high"), default="rand")
    p.add_argument("--triggers", type=int, default=5)
    p.set_defaults(out="insert_out")

    p = add("detect", _cmd_detect, "train detection agents, emit vector files")
    add_agent_flags(p, harvest_default=20_000)
    p.add_argument("--detector", choices=("ssd", "sad", "cod", "combined"),
                   default="ssd")
    p.add_argument("--cutoff", default="tenth",
                   help="'tenth', 'positive', or a numeric episode threshold")
    p.set_defaults(out="detect_out")

    p = add("evaluate", _cmd_evaluate, "score a vector set against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vectors", required=True,
                   help="vector file path, or 'random'")
    p.add_argument("--random-vectors", type=int, default=20_000,
                   help="count used when --vectors random")
    p.add_argument("--alpha", type=float, default=10.0)
    p.add_argument("--full-sweep", action="store_true",
                   help="include the accuracy-versus-budget curve")
    p.add_argument("--workers", type=int, default=None,
                   help="simulation threads (default: TP_THREADS or 1)")

    p = add("atpg", _cmd_atpg, "justify net objectives with PODEM")
    p.add_argument("--objective", action="append", required=True,
                   metavar="NET=VAL")
    p.add_argument("--limit", type=int, default=DEFAULT_BACKTRACK_LIMIT)

    p = add("confidence", _cmd_confidence, "confidence metric arithmetic")
    p.add_argument("--fp", type=float, required=True)
    p.add_argument("--fn", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        return args.func(args)
    except HtforgeError as exc:
        print(f"htforge: error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except (OSError, ValueError, KeyError) as exc:
        print(f"htforge: error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except Exception:
        traceback.print_exc()
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
