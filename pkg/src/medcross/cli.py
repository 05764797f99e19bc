"""``medcross`` command line: simulate, estimate, benchmark, replay.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
``medcross replay MANIFEST --out DIR`` reruns a command from its manifest.

Exit codes: 0 success, 2 user error, 3 I/O failure, 4 learner failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .domain import MediatorKind, ValidationError, read_csv, validate_table, write_csv
from .estimator import DEFAULT_V, crossfit, estimate
from .harness import BenchmarkConfig, ReplicateFailed, make_learner, run_benchmark
from .neurnet import DivergedLoss
from .nuisance import (
    DnnLearner,
    FitPlan,
    InsufficientData,
    LinearLearner,
    OracleLearner,
    PredictionNonFinite,
    grid_from_json,
)
from .synth import Case, OracleNuisance, ScenarioSpec, TRUE_EFFECTS, generate

EXIT_USER, EXIT_IO, EXIT_LEARNER = 2, 3, 4
LEARNER_ERRORS = (InsufficientData, PredictionNonFinite, DivergedLoss, ReplicateFailed)


class UserError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _default_parallelism() -> int:
    raw = os.environ.get("MEDCROSS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _scenario(args) -> ScenarioSpec:
    try:
        return ScenarioSpec(Case(args.case), args.n, args.p, args.alpha, args.seed)
    except ValueError as exc:
        raise UserError(str(exc)) from None


def _load_grid(path):
    if path is None:
        return None
    try:
        return grid_from_json(Path(path).read_text())
    except (ValueError, TypeError) as exc:
        raise UserError(f"bad grid document {path}: {exc}") from None


def _manifest(command: str, args) -> dict:
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "out", "command")}
    for key in ("input", "grid", "tune_sample", "sidecar"):
        if resolved.get(key) is not None:
            resolved[key] = str(Path(resolved[key]).resolve())
    return {"tool": "medcross", "version": __version__, "command": command, "args": resolved}


def cmd_simulate(args, out: Path) -> None:
    spec = _scenario(args)
    table, oracle = generate(spec)
    write_csv(table, out / "data.csv")
    sidecar = {"scenario": spec.to_dict(),
               "truth": {e.value: v for e, v in oracle.truth.items()}}
    _write(out, "data.json", _dump(sidecar))


def _oracle_from_sidecar(path: Path) -> OracleNuisance:
    try:
        meta = json.loads(path.read_text())["scenario"]
    except FileNotFoundError:
        raise UserError(f"oracle learner needs a scenario sidecar; {path} not found") from None
    spec = ScenarioSpec(Case(meta["case"]), meta["n"], meta["p"], meta["alpha"], meta["seed"])
    return OracleNuisance(spec.case_id, spec.p, spec.alpha)


def _learner(args, table, plan):
    if args.learner == "oracle":
        sidecar = Path(args.sidecar) if args.sidecar else Path(args.input).with_suffix(".json")
        return OracleLearner(_oracle_from_sidecar(sidecar))
    if args.learner == "linear":
        return LinearLearner()
    grid = _load_grid(args.grid)
    learner = DnnLearner(grid) if grid else DnnLearner()
    if args.tune_sample:
        tune = validate_table(read_csv(args.tune_sample, plan.mediator_kind))
        learner = learner.tuned_on(tune, plan, args.seed)
    return learner


def cmd_estimate(args, out: Path) -> None:
    kind = MediatorKind(args.mediator)
    table = validate_table(read_csv(args.input, kind), folds=args.v_folds)
    plan = FitPlan(kind)
    learner = _learner(args, table, plan)
    scores = crossfit(table, args.v_folds, learner, plan, args.seed)
    reports = estimate(scores)
    effects = {}
    for rep in reports:
        entry = rep.to_dict()
        entry.update(V=args.v_folds, learner=learner.name)
        effects[rep.effect.value] = entry
    report = {
        "effects": effects,
        "learner": learner.name,
        "mediator": kind.value,
        "V": args.v_folds,
        "n": table.n,
        "nuisance_validation_loss": dict(sorted(scores.nuisance_loss.items())),
    }
    if isinstance(learner, DnnLearner):
        report["selected_specs"] = {k: v.to_dict() for k, v in sorted(learner.chosen.items())}
    _write(out, "report.json", _dump(report))
    lines = [f"{'effect':<8}{'estimate':>11}{'se':>9}{'ci95':>22}"]
    for rep in reports:
        ci = f"[{rep.ci_low:.3f}, {rep.ci_high:.3f}]"
        lines.append(f"{rep.effect.value:<8}{rep.estimate:>11.4f}{rep.se:>9.4f}{ci:>22}")
    _write(out, "report.txt", "\n".join(lines) + "\n")


def cmd_benchmark(args, out: Path) -> None:
    spec = _scenario(args)
    grid = _load_grid(args.grid)
    names = [s.strip() for s in args.learner.split(",") if s.strip()]
    try:
        learners = tuple(make_learner(name, spec, grid) for name in names)
        config = BenchmarkConfig(spec, args.replicates, learners, args.v_folds, args.parallelism)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    table = run_benchmark(config)
    doc = table.to_dict()
    doc["scenario"] = spec.to_dict()
    doc["truth"] = {e.value: v for e, v in TRUE_EFFECTS.items()}
    doc["V"] = args.v_folds
    _write(out, "benchmark.json", _dump(doc))
    _write(out, "benchmark.txt", table.to_text())


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medcross", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--case", type=int, choices=[1, 2, 3, 4, 5], required=True)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--p", type=int, default=5)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    scenario_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate effects from a CSV file")
    est.add_argument("--input", required=True)
    est.add_argument("--mediator", choices=[k.value for k in MediatorKind], required=True)
    est.add_argument("--v-folds", type=int, default=DEFAULT_V, choices=range(2, 11), metavar="V")
    est.add_argument("--learner", choices=["dnn", "linear", "oracle"], default="dnn")
    est.add_argument("--grid", default=None)
    est.add_argument("--tune-sample", default=None)
    est.add_argument("--sidecar", default=None)
    est.add_argument("--seed", type=int, default=0)
    est.set_defaults(func=cmd_estimate)

    bench = sub.add_parser("benchmark", help="Monte Carlo benchmark on a synthetic case")
    scenario_flags(bench)
    bench.add_argument("--replicates", type=int, default=200)
    bench.add_argument("--learner", default="oracle", help="comma-separated: oracle,linear,dnn")
    bench.add_argument("--grid", default=None)
    bench.add_argument("--v-folds", type=int, default=DEFAULT_V, choices=range(2, 11), metavar="V")
    bench.add_argument("--parallelism", type=_positive_int, default=_default_parallelism())
    bench.set_defaults(func=cmd_benchmark)

    rep = sub.add_parser("replay", help="rerun a command from its manifest.json")
    rep.add_argument("manifest")

    for p in (sim, est, bench, rep):
        p.add_argument("--out", required=True, help="output directory")
    return parser


def _argv_from_manifest(path: str) -> list[str]:
    doc = json.loads(Path(path).read_text())
    argv = [doc["command"]]
    for key, value in doc["args"].items():
        if value is None:
            continue
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            try:
                inner = _argv_from_manifest(args.manifest)
            except (OSError, KeyError, json.JSONDecodeError) as exc:
                raise UserError(f"cannot read manifest {args.manifest}: {exc}") from None
            return main(inner + ["--out", args.out])
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        args.func(args, out)
        _write(out, "manifest.json", _dump(_manifest(args.command, args)))
    except (UserError, ValidationError) as exc:
        print(f"medcross: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except LEARNER_ERRORS as exc:
        print(f"medcross: learner failure: {exc}", file=sys.stderr)
        return EXIT_LEARNER
    except OSError as exc:
        print(f"medcross: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
