"""Command-line entry point: ``ulight generate|train|sample|evaluate|oracle``.

Exit codes: 0 success, 1 numerical failure, 2 I/O or argument failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, formats, scenarios
from .divergence import DivergenceSpec
from .errors import ConvergenceError, UlightError
from .metrics import evaluate
from .plan import sample_conditional, sample_marginal
from .solver import SolverConfig, objective, train

log = logging.getLogger("ulight")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2

TRAIN_DEFAULTS = {
    "epsilon": 0.05,
    "div": "kl",
    "tau1": 1.0,
    "tau2": 1.0,
    "components_k": 5,
    "components_l": 5,
    "lr": 3e-4,
    "steps": 20000,
    "batch_size": 128,
    "seed": 0,
    "log_weight_lr_scale": None,
}


class UsageError(Exception):
    """Bad arguments or unreadable/unwritable files (exit code 2)."""


def _read_csv(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    try:
        return formats.read_dataset(p)
    except (OSError, ValueError) as err:
        raise UsageError(str(err)) from None


def _write_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=1) + "\n")
    except OSError as err:
        raise UsageError(f"cannot write {path}: {err}") from None


def _load_checkpoint(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    try:
        return formats.load_checkpoint(p)
    except (OSError, ValueError, KeyError) as err:
        raise UsageError(f"{p}: invalid checkpoint ({err})") from None


def _merged_config(args) -> dict:
    """Built-in defaults < optional JSON config file < explicit flags."""
    cfg = dict(TRAIN_DEFAULTS)
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise UsageError(f"no such file: {p}")
        try:
            loaded = json.loads(p.read_text())
        except ValueError as err:
            raise UsageError(f"{p}: {err}") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"{p}: unknown config keys {sorted(unknown)}")
        cfg.update(loaded)
    for key in TRAIN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _solver_config(cfg: dict) -> SolverConfig:
    kind = cfg["div"]
    try:
        extra = {}
        if cfg["log_weight_lr_scale"] is not None:
            extra["log_weight_lr_scale"] = float(cfg["log_weight_lr_scale"])
        return SolverConfig(
            epsilon=float(cfg["epsilon"]),
            div1=DivergenceSpec(kind, cfg["tau1"]),
            div2=DivergenceSpec(kind, cfg["tau2"]),
            K=int(cfg["components_k"]),
            L=int(cfg["components_l"]),
            learning_rate=float(cfg["lr"]),
            steps=int(cfg["steps"]),
            batch_size=int(cfg["batch_size"]),
            seed=int(cfg["seed"]),
            **extra,
        )
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from None


def cmd_generate(args) -> int:
    try:
        scen = scenarios.get(args.scenario)
    except ValueError as err:
        raise UsageError(str(err)) from None
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    out = Path(args.out)
    rng = np.random.default_rng(args.seed)
    xs, ys = scen.sample(args.n, rng)
    try:
        out.mkdir(parents=True, exist_ok=True)
        formats.write_dataset(out / "source.csv", xs)
        formats.write_dataset(out / "target.csv", ys)
    except OSError as err:
        raise UsageError(f"cannot write to {out}: {err}") from None
    print(json.dumps({"scenario": scen.name, "n": args.n, "seed": args.seed, "out": str(out)}))
    return EXIT_OK


def cmd_train(args) -> int:
    config = _solver_config(_merged_config(args))
    xs = _read_csv(args.source)
    ys = _read_csv(args.target)
    if xs.shape[1] != ys.shape[1]:
        raise UsageError(f"source has dimension {xs.shape[1]}, target {ys.shape[1]}")
    out = Path(args.out)
    progress_path = Path(args.progress) if args.progress else out.with_suffix(".progress.csv")
    start = time.perf_counter()
    try:
        with progress_path.open("w") as sink:
            plan = train(config, xs, ys, progress=sink)
    except OSError as err:
        raise UsageError(f"cannot write {progress_path}: {err}") from None
    try:
        formats.save_checkpoint(out, plan, config.seed, config.steps)
    except OSError as err:
        raise UsageError(f"cannot write {out}: {err}") from None
    rng = np.random.default_rng(config.seed)
    bx = xs[rng.integers(len(xs), size=min(len(xs), 4096))]
    by = ys[rng.integers(len(ys), size=min(len(ys), 4096))]
    final = objective(plan, bx, by)
    print(json.dumps({
        "final_objective": final,
        "checkpoint": str(out),
        "progress": str(progress_path),
        "seed": config.seed,
        "elapsed_seconds": round(time.perf_counter() - start, 3),
    }))
    return EXIT_OK


def cmd_sample(args) -> int:
    plan, _ = _load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    if args.marginal:
        if not args.n or args.n < 1:
            raise UsageError("--marginal needs --n >= 1")
        draws = sample_marginal(plan, rng, args.n)
        header = ",".join(f"x{i}" for i in range(plan.dim))
        cols = draws
    else:
        if not args.source:
            raise UsageError("give --source or --marginal")
        xs = _read_csv(args.source)
        if xs.shape[1] != plan.dim:
            raise UsageError(f"checkpoint dimension {plan.dim} != data dimension {xs.shape[1]}")
        if args.n:
            xs = xs[: args.n]
        ys = sample_conditional(plan, xs, rng)
        cols = np.hstack([xs, ys])
        header = ",".join([f"x{i}" for i in range(plan.dim)] + [f"y{i}" for i in range(plan.dim)])
    try:
        np.savetxt(args.out, cols, fmt="%.17g", delimiter=",", header=header, comments="")
    except OSError as err:
        raise UsageError(f"cannot write {args.out}: {err}") from None
    info = {"out": args.out, "rows": len(cols), "seed": args.seed}
    if args.marginal:
        info["total_mass"] = float(np.exp(plan.u.log_weights).sum())
    print(json.dumps(info))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    plan, raw = _load_checkpoint(args.checkpoint)
    xs = _read_csv(args.source)
    ys = _read_csv(args.target)
    for arr in (xs, ys):
        if arr.shape[1] != plan.dim:
            raise UsageError(f"checkpoint dimension {plan.dim} != data dimension {arr.shape[1]}")
    centers_src = centers_tgt = None
    if args.scenario:
        try:
            scen = scenarios.get(args.scenario)
        except ValueError as err:
            raise UsageError(str(err)) from None
        centers_src, centers_tgt = scen.source_centers, scen.target_centers
    start = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    if args.w2_repeats < 1:
        raise UsageError("--w2-repeats must be >= 1")
    report = evaluate(plan, xs, ys, rng, centers_src, centers_tgt, w2_size=args.w2_size,
                      w2_repeats=args.w2_repeats)
    out = report.to_dict()
    out["seed"] = args.seed
    out["steps_trained"] = raw.get("steps_trained", 0)
    out["elapsed_seconds"] = round(time.perf_counter() - start, 3)
    _write_json(args.out, out)
    print(json.dumps(out))
    return EXIT_OK


def cmd_oracle(args) -> int:
    grid = checks.default_grid(args.grid_points, args.grid_lower, args.grid_upper)
    kind = args.div
    div1 = DivergenceSpec(kind, args.tau1)
    div2 = DivergenceSpec(kind, args.tau2)
    start = time.perf_counter()
    if args.check == "sinkhorn":
        p, q = checks.reference_densities(grid)
        from .oracle import sinkhorn_ueot

        plan = sinkhorn_ueot(p, q, grid, grid, args.epsilon, div1, div2, args.max_iter, args.tol)
        marg = max(np.max(np.abs(plan.marginal_x() - p)), np.max(np.abs(plan.marginal_y() - q)))
        report = {
            "iterations": len(plan.residuals),
            "residual": plan.residuals[-1],
            "mass": plan.mass,
            "marginal_error": float(marg),
        }
        report["pass"] = bool(report["residual"] <= args.tol)
        if div1.kind == "balanced" and div2.kind == "balanced":
            report["pass"] = report["pass"] and bool(marg * grid.steps[0] <= max(args.tol, 1e-8))
    elif args.check == "duality-gap":
        report = checks.duality_gap(grid, args.epsilon, div1, div2, args.tol, args.max_iter)
        report["tolerance"] = 1e-4
        report["pass"] = bool(report["gap"] <= 1e-4)
    else:
        report = checks.bound_check(grid, args.epsilon, div1, div2, args.draws, args.seed)
        report["tolerance"] = 1e-6
    report["check"] = args.check
    report["elapsed_seconds"] = round(time.perf_counter() - start, 3)
    text = json.dumps(report)
    if args.out:
        _write_json(args.out, report)
    print(text)
    return EXIT_OK if report["pass"] else EXIT_NUMERIC


def _add_train_flags(p):
    p.add_argument("--config", help="JSON file with default overrides (flags win)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--div", choices=["kl", "chi2", "balanced"])
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--components-k", dest="components_k", type=int)
    p.add_argument("--components-l", dest="components_l", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log-weight-lr-scale", dest="log_weight_lr_scale", type=float,
                   help="learning-rate multiplier for log-weight coordinates")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ulight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic source/target pair")
    g.add_argument("--scenario", default="gauss_mix", choices=sorted(scenarios.SCENARIOS))
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a plan and write a checkpoint")
    t.add_argument("--source", required=True)
    t.add_argument("--target", required=True)
    t.add_argument("--out", required=True, help="checkpoint path (.json)")
    t.add_argument("--progress", help="step,objective CSV (default: <out>.progress.csv)")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw from a checkpoint's conditionals or marginal")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--source")
    s.add_argument("--marginal", action="store_true")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evaluate", help="transport cost, W2 and mode matrix as JSON")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--source", required=True)
    e.add_argument("--target", required=True)
    e.add_argument("--scenario", choices=sorted(scenarios.SCENARIOS),
                   help="use this scenario's mode centers for the mode matrix")
    e.add_argument("--w2-size", dest="w2_size", type=int, default=1024)
    e.add_argument("--w2-repeats", dest="w2_repeats", type=int, default=10,
                   help="subsample pairs averaged into w2")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="grid checks on the 1-D reference problem")
    o.add_argument("check", choices=["sinkhorn", "duality-gap", "bound-check"])
    o.add_argument("--grid-lower", type=float, default=-6.0)
    o.add_argument("--grid-upper", type=float, default=6.0)
    o.add_argument("--grid-points", type=int, default=256)
    o.add_argument("--epsilon", type=float, default=0.1)
    o.add_argument("--div", choices=["kl", "balanced"], default="kl")
    o.add_argument("--tau1", type=float, default=1.0)
    o.add_argument("--tau2", type=float, default=1.0)
    o.add_argument("--draws", type=int, default=50)
    o.add_argument("--tol", type=float, default=1e-12)
    o.add_argument("--max-iter", dest="max_iter", type=int, default=20000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"ulight: error: {err}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as err:
        print(json.dumps({"error": str(err), "residual": err.residual, "pass": False}))
        return EXIT_NUMERIC
    except UlightError as err:
        print(f"ulight: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
