"""Command-line entry point: ``posskl <command> ...``.

Exit codes: 0 success, 1 validation failure, 2 I/O error. Diagnostics go to
stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from posskl.antipignistic import poss_to_prob, prob_to_poss
from posskl.bench import run_benchmark, to_csv
from posskl.dykstra import kl_project
from posskl.feasible import DEFAULT_EPS_CAP, build_feasible_set, build_feasible_set_custom
from posskl.oracle import verify_instance
from posskl.simplex import embed, restrict_to_support
from posskl.synth import BETA_FOR_DIM, SynthConfig, generate, read_jsonl, write_jsonl
from posskl.trainer import (
    TrainConfig,
    TrainingDiverged,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _default_seed() -> int:
    return int(os.environ.get("POSSKL_SEED", "0"))


def _read_json(path: str) -> dict:
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return obj


def _read_values(path: str) -> np.ndarray:
    obj = _read_json(path)
    if "values" not in obj:
        raise ValueError(f"{path}: missing 'values' array")
    v = np.asarray(obj["values"], dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{path}: 'values' must be a non-empty flat array")
    return v


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _config_from(cls, obj: dict, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
    return cls(**merged)


def cmd_transform(args) -> int:
    v = _read_values(args.input)
    out = prob_to_poss(v) if args.direction == "p2pi" else poss_to_prob(v)
    _emit({"values": out.tolist()}, args.out)
    return EXIT_OK


def project_vectors(q_full: np.ndarray, pi_full: np.ndarray, tol: float = 1e-8,
                    max_cycles: int = 2000, eps_cap: float = DEFAULT_EPS_CAP,
                    custom_gaps: dict | None = None,
                    stationary_tol: float | None = None) -> dict:
    """Project on the support of ``pi`` and re-embed over all classes."""
    pi, q, support = restrict_to_support(pi_full, q_full)
    if custom_gaps is not None:
        fs = build_feasible_set_custom(pi, custom_gaps["delta_lower"], custom_gaps["delta_upper"])
    else:
        fs = build_feasible_set(pi, eps_cap=eps_cap)
    rep = kl_project(q, fs, tol=tol, max_cycles=max_cycles, stationary_tol=stationary_tol)
    p_full = embed(rep.p_star, support, pi_full.size)
    return {
        "p_star": p_full.tolist(),
        "kl": rep.kl_to_input,
        "cycles": rep.cycles_used,
        "final_violation": rep.final_violation,
        "converged": rep.converged,
        "eps": fs.eps,
        "wall_time_s": rep.wall_time,
    }


def cmd_project(args) -> int:
    q = _read_values(args.q)
    pi = _read_values(args.pi)
    gaps = _read_json(args.custom_gaps) if args.custom_gaps else None
    _emit(project_vectors(q, pi, args.tol, args.max_cycles, args.eps_cap, gaps,
                          args.stationary_tol), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = run_benchmark(n=args.n, tolerances=args.tolerances, max_cycles=args.max_cycles,
                         runs=args.runs, seed=args.seed)
    meta = {"n": args.n, "runs": args.runs, "max_cycles": args.max_cycles, "seed": args.seed}
    text = to_csv(rows, meta)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    obj = _read_json(args.config) if args.config else {}
    if "beta" not in obj and obj.get("d") in BETA_FOR_DIM:
        obj["beta"] = BETA_FOR_DIM[obj["d"]]
    cfg = _config_from(SynthConfig, obj, seed=args.seed)
    train_set, test_set, prototypes = generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "train.jsonl", train_set, cfg, "train")
    write_jsonl(out / "test.jsonl", test_set, cfg, "test")
    (out / "prototypes.json").write_text(json.dumps({"prototypes": prototypes.tolist()}))
    _emit({"train": str(out / "train.jsonl"), "test": str(out / "test.jsonl"),
           "n_train": len(train_set), "n_test": len(test_set)}, None)
    return EXIT_OK


def cmd_train(args) -> int:
    data, _ = read_jsonl(args.dataset)
    obj = _read_json(args.config) if args.config else {}
    cfg = _config_from(TrainConfig, obj, objective=args.objective,
                       learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    model, history = train(data, cfg)
    save_checkpoint(args.checkpoint, model, cfg)
    if args.history:
        history.write_csv(args.history)
    last = history.rows[-1] if history.rows else {}
    _emit({"checkpoint": args.checkpoint, "config": asdict(cfg), "last_epoch": last,
           "ordering_violations": history.ordering_violations,
           "unconverged_projections": history.unconverged_projections}, None)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    data, _ = read_jsonl(args.dataset)
    _emit({"accuracy": evaluate(model, data), "records": len(data)}, None)
    return EXIT_OK


def cmd_verify(args) -> int:
    obj = _read_json(args.instance)
    for key in ("q", "pi"):
        if key not in obj:
            raise ValueError(f"{args.instance}: missing '{key}'")
    fs = build_feasible_set(obj["pi"], eps_cap=float(obj.get("eps_cap", DEFAULT_EPS_CAP)))
    report = verify_instance(obj["q"], fs, seed=args.seed)
    _emit(report.to_dict(), args.out)
    return EXIT_OK if report.passed else EXIT_INVALID


def _tolerance_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posskl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    seed_kw = dict(type=int, default=None, help="default: $POSSKL_SEED or 0")

    p = sub.add_parser("transform", help="probability <-> possibility bijection")
    p.add_argument("direction", choices=("p2pi", "pi2p"))
    p.add_argument("input", help='JSON file with a "values" array')
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("project", help="KL projection of q onto the box set of pi")
    p.add_argument("q")
    p.add_argument("pi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-cycles", type=int, default=2000)
    p.add_argument("--eps-cap", type=float, default=DEFAULT_EPS_CAP)
    p.add_argument("--custom-gaps", help='JSON with "delta_lower"/"delta_upper" by rank')
    p.add_argument("--stationary-tol", type=float,
                   help="also stop only once the iterate moves less than this per cycle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("bench", help="Dykstra convergence benchmark (CSV)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--tolerances", type=_tolerance_list, default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--max-cycles", type=int, default=1000)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", **seed_kw)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic train/test pair")
    p.add_argument("--config", help="JSON with SynthConfig fields")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", **seed_kw)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a linear model on a JSONL dataset")
    p.add_argument("dataset")
    p.add_argument("--config", help="JSON with TrainConfig fields")
    p.add_argument("--objective", choices=("projection", "fixed"))
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", **seed_kw)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the brute-force oracles on one instance")
    p.add_argument("instance", help='JSON with "q", "pi" and optional "eps_cap"')
    p.add_argument("--seed", **seed_kw)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def _diagnose(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": str(exc)}) + "\n")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) is None:
        try:
            args.seed = _default_seed()
        except ValueError as exc:
            _diagnose("invalid POSSKL_SEED", exc)
            return EXIT_INVALID
    try:
        return args.func(args)
    except OSError as exc:
        _diagnose("io", exc)
        return EXIT_IO
    except (ValueError, TypeError, KeyError, TrainingDiverged) as exc:
        _diagnose("validation", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
