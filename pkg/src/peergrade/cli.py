"""Command-line entry points.

Every run writes plain files into its output directory together with a
``manifest.json`` that lists them. Exit codes: 0 success, 2 invalid input,
1 anything else.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import dump_class_spec, dump_config, load_class_spec, load_config_full
from .evaluation import cross_validate, run_experiment
from .gibbs.chains import config_hash, resolve_seed, write_traces
from .gibbs.state import GradeIndex
from .mip import MipConstants, explain_all, write_explanations
from .model import (ClampSet, Hyperparameters, ModelConfig, ValidationError, read_dataset,
                    sidecar_path_for, write_dataset)
from .posterior import infer, read_summary, write_summary
from .synth import ClassSpec, generate_class, write_ground_truth

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    outputs: list[str] = field(default_factory=list)  # relative to the run directory
    timings: dict[str, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        payload = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "timings": self.timings,
            **self.extra,
        }
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return path


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _thread_count(args) -> int:
    if args.threads:
        return args.threads
    return int(os.environ.get("PEERGRADE_THREADS", "1"))


def _load_model(args) -> tuple[Hyperparameters, ModelConfig, dict]:
    if args.config:
        hp, config, clamps = load_config_full(args.config)
    else:
        hp, config, clamps = Hyperparameters(), ModelConfig(), {}
    changes = {}
    for flag in ("effort", "censoring", "correlation"):
        value = getattr(args, flag, None)
        if value is not None:
            changes[f"{flag}_enabled"] = value
    seed = args.seed if args.seed is not None else config.seed
    changes["seed"] = resolve_seed(seed)
    return hp, config.replace(**changes), clamps


def _inputs(*paths) -> dict[str, str]:
    out = {}
    for p in paths:
        if p is not None and Path(p).exists():
            out[Path(p).name] = digest(p)
    return out


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    spec = load_class_spec(args.spec) if args.spec else ClassSpec()
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    truth = generate_class(spec)
    write_dataset(truth.dataset, out / "data.csv", sidecar_path_for(out / "data.csv"))
    write_ground_truth(truth, out / "truth.json")
    (out / "spec.toml").write_text(dump_class_spec(spec))
    manifest = RunManifest("simulate", hashlib.sha256(dump_class_spec(spec).encode()).hexdigest()[:16],
                           spec.seed, _inputs(args.spec),
                           ["data.csv", "data.meta.json", "truth.json", "spec.toml"],
                           {"generate_seconds": round(time.perf_counter() - t0, 3)})
    manifest.write(out)
    return EXIT_OK


def cmd_infer(args) -> int:
    hp, config, clamp_overrides = _load_model(args)
    dataset = read_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    clamps = ClampSet.from_roles(dataset.roles, **clamp_overrides)
    fit = infer(dataset, hp, config, clamps, workers=_thread_count(args))
    elapsed = time.perf_counter() - t0
    write_summary(fit.summary, out / "summary.csv")
    (out / "config.toml").write_text(dump_config(hp, config, clamp_overrides))
    outputs = ["summary.csv", "config.toml"]
    if not args.no_traces:
        write_traces(fit.traces, fit.data, hp, config, out / "traces")
        outputs.append("traces/")
    manifest = RunManifest("infer", config_hash(hp, config), config.seed,
                           _inputs(args.data, sidecar_path_for(args.data), args.config),
                           outputs, {"inference_seconds": round(elapsed, 3)},
                           {"chain_seeds": [t.seed for t in fit.traces]})
    manifest.write(out)
    return EXIT_OK


def cmd_explain(args) -> int:
    hp = load_config_full(args.config)[0] if args.config else Hyperparameters()
    dataset = read_dataset(args.data)
    summary = read_summary(args.summary, hp)
    data = GradeIndex.build(dataset, hp)
    if summary.submissions != data.submissions or summary.graders != data.graders:
        raise ValidationError("summary does not cover the dataset's submissions and graders")
    constants = MipConstants(S=args.S, T=args.T, P=args.P)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    batch = explain_all(summary, data, constants)
    write_explanations(batch, out / "explanations.json")
    manifest = RunManifest("explain", hashlib.sha256(repr(constants).encode()).hexdigest()[:16],
                           None, _inputs(args.summary, args.data, args.config),
                           ["explanations.json"],
                           {"explain_seconds": round(time.perf_counter() - t0, 3)},
                           {"constants": {"S": args.S, "T": args.T, "P": args.P},
                            "disagreement": batch.disagreement})
    manifest.write(out)
    print(f"explained {len(batch.explanations)} submissions; "
          f"{100 * batch.disagreement:.1f}% of components differ from the MAP grade")
    return EXIT_OK


def cmd_xval(args) -> int:
    hp, config, _ = _load_model(args)
    dataset = read_dataset(args.data)
    t0 = time.perf_counter()
    plan, folds = cross_validate(dataset, hp, config, k=args.k, seed=config.seed)
    for f, ll in enumerate(folds):
        print(f"fold {f}: {ll:.6f}")
    print(f"total: {folds.sum():.6f}")
    if plan.violations:
        print(f"warning: {plan.violations} pairs share a fold with another grader of the "
              "same submission", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["fold,heldout_loglik,groups"] + [
            f"{f},{float(ll)!r},{int(n)}" for f, (ll, n) in enumerate(zip(folds, plan.sizes))]
        (out / "xval.csv").write_text("\n".join(lines) + "\n")
        RunManifest("xval", config_hash(hp, config), config.seed,
                    _inputs(args.data, sidecar_path_for(args.data), args.config), ["xval.csv"],
                    {"xval_seconds": round(time.perf_counter() - t0, 3)},
                    {"k": args.k, "violations": plan.violations}).write(out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    base = load_class_spec(args.spec) if args.spec else ClassSpec()
    _, config, _ = _load_model(args)
    settings = None
    if args.settings:
        settings = [float(x) if args.kind == "misspec" else
                    (x if args.kind == "ablation" else int(x)) for x in args.settings.split(",")]
    t0 = time.perf_counter()
    result = run_experiment(args.kind, args.replicates, base, config, settings,
                            seed=config.seed, knob=args.knob, direction=args.direction, k=args.k)
    for row in result.rows():
        print(f"{row['setting']:>14} {row['metric']:<22} {row['mean']:.4f} ± {row['ci95']:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.write(out / "results.csv")
        extra = {"kind": args.kind, "replicates": args.replicates,
                 "spec": dump_class_spec(base)}
        if "t_tests" in result.extra:
            extra["t_tests"] = {k: list(v) for k, v in result.extra["t_tests"].items()}
        RunManifest("experiment", config_hash(base.hp, config), config.seed, _inputs(args.spec),
                    ["results.csv"], {"experiment_seconds": round(time.perf_counter() - t0, 3)},
                    extra).write(out)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--effort", dest="effort", action=argparse.BooleanOptionalAction, default=None,
                   help="model grader effort (default from config)")
    p.add_argument("--censoring", dest="censoring", action=argparse.BooleanOptionalAction,
                   default=None, help="treat reports as censored observations")
    p.add_argument("--correlation", dest="correlation", action="store_const", const=True,
                   default=None, help="link grading reliability to own submission quality")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (drawn and recorded when omitted)")
    common.add_argument("--threads", type=int, default=None,
                        help="chains run concurrently on up to this many threads "
                        "(env PEERGRADE_THREADS)")

    parser = argparse.ArgumentParser(prog="peergrade", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic class")
    p.add_argument("--spec", help="class spec TOML (defaults to the built-in class)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", parents=[common], help="run the Gibbs sampler on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--no-traces", action="store_true", help="skip writing raw traces")
    _model_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("explain", parents=[common], help="explain MAP grades with weights")
    p.add_argument("--summary", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--S", type=float, default=0.09, help="max weight change")
    p.add_argument("--T", type=float, default=0.1, help="min non-zero weight")
    p.add_argument("--P", type=float, default=0.01, help="weight deviation penalty")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("xval", parents=[common], help="k-fold held-out log-likelihood")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    _model_flags(p)
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("experiment", parents=[common], help="run a synthetic experiment")
    p.add_argument("--kind", required=True,
                   choices=["vary_weeks", "vary_graders_per_submission", "misspec",
                            "mip_stability", "ablation"])
    p.add_argument("--replicates", type=int, default=15)
    p.add_argument("--spec")
    p.add_argument("--config")
    p.add_argument("--settings", help="comma-separated setting values")
    p.add_argument("--knob", help="hyperparameter altered by misspec experiments")
    p.add_argument("--direction", choices=["infer", "generate"], default="infer")
    p.add_argument("--k", type=int, default=10, help="folds for ablation experiments")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
