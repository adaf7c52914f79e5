"""Command-line entry point: ``decon {simulate,adjust,decompose,experiment,report}``.

Exit codes: 0 success, 1 other failure, 2 model validation, 3 adjustment
misuse, 4 I/O or schema problems.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .counterfactual import PathTarget, fit_anticausal, generate_cf_features, population_cf_covariance
from .errors import (
    CycleError,
    DeconError,
    InputError,
    MissingColumnError,
    PsdError,
    RankError,
    RoleError,
    SampleSizeError,
    SchemaError,
    ShapeError,
)
from .experiments import ExperimentConfig, run_experiment, write_results
from .io import read_dataset, read_scm, write_dataset
from .report import write_report
from .scm import Role, Task, covariance_decomposition, simulate, validate

EXIT_OK, EXIT_OTHER, EXIT_MODEL, EXIT_ADJUST, EXIT_IO = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, command: str, config_path, base_seed, output, config: dict) -> None:
    """Run manifest; its ``config`` entry can be fed back through ``--config``."""
    doc = {
        "command": command,
        "version": __version__,
        "config_path": None if config_path is None else str(config_path),
        "base_seed": base_seed,
        "output": str(output),
        "created": _now(),
        "config": config,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise CliError(EXIT_IO, f"config {path} must hold a JSON object")
    return doc


def merged(args, defaults: dict, flag_keys: dict) -> dict:
    """Flags override config-file values, which override defaults."""
    out = dict(defaults)
    out.update(load_config(getattr(args, "config", None)))
    for flag, key in flag_keys.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def _model_error(exc: DeconError) -> CliError:
    return CliError(EXIT_MODEL, f"invalid model: {exc}")


def cmd_simulate(args) -> int:
    cfg = merged(args, {"n": 1000, "seed": 0, "tag": "simulate"},
                 {"scm": "scm", "n": "n", "seed": "seed", "out": "out"})
    for key in ("scm", "out"):
        if key not in cfg:
            raise CliError(EXIT_OTHER, f"missing required setting {key!r}")
    scm = read_scm(cfg["scm"])
    try:
        validate(scm)
    except (CycleError, RoleError, PsdError, InputError) as exc:
        raise _model_error(exc) from exc
    write_manifest(f"{cfg['out']}.manifest.json", "simulate", args.config, cfg["seed"],
                   cfg["out"], cfg)
    data = simulate(scm, int(cfg["n"]), int(cfg["seed"]), tag=cfg["tag"])
    write_dataset(data, cfg["out"])
    print(f"wrote {data.n} rows x {len(data.names)} columns to {cfg['out']}")
    return EXIT_OK


ADJUST_MISUSE = (MissingColumnError, ShapeError, RoleError, InputError)


def cmd_adjust(args) -> int:
    cfg = merged(args, {"target": "direct"},
                 {"train": "train", "test": "test", "target": "target", "out": "out"})
    for key in ("train", "out"):
        if key not in cfg:
            raise CliError(EXIT_OTHER, f"missing required setting {key!r}")
    target = PathTarget.parse(cfg["target"])
    train = read_dataset(cfg["train"])
    test = read_dataset(cfg["test"]) if cfg.get("test") else None
    if test is not None and target is not PathTarget.DIRECT and not test.has(Role.RESPONSE):
        raise CliError(EXIT_ADJUST, f"target {target.value!r} needs labeled data; "
                                    "only the direct target can adjust an unlabeled test set")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", "adjust", args.config, None, out, cfg)
    try:
        fit = fit_anticausal(train)
        train_star = generate_cf_features(fit, None, target)
        test_star = None if test is None else generate_cf_features(fit, test, target)
    except ADJUST_MISUSE as exc:
        raise CliError(EXIT_ADJUST, f"adjustment failed: {exc}") from exc
    write_dataset(train_star, out / "train_adjusted.csv")
    if test_star is not None:
        write_dataset(test_star, out / "test_adjusted.csv")
    (out / "coefficients.json").write_text(json.dumps(fit.coefficients(), indent=2) + "\n")
    print(f"wrote adjusted data ({target.value}) to {out}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    scm = read_scm(args.scm)
    try:
        validate(scm)
        doc = {"task": scm.task.value}
        if scm.task is Task.ANTICAUSAL:
            doc["features"] = scm.names_of(Role.FEATURE)
            dec = covariance_decomposition(scm)
            doc["decomposition"] = {k: getattr(dec, k).tolist() for k in
                                    ("direct", "indirect", "confounding_direct", "confounding_via_m")}
            doc["decomposition"]["total"] = dec.total.tolist()
        else:
            doc["features"] = scm.names_of(Role.FEATURE)
        cf = {}
        for t in PathTarget:
            try:
                cf[t.value] = population_cf_covariance(scm, t).tolist()
            except InputError:
                cf[t.value] = None
        doc["counterfactual_covariance"] = cf
    except (CycleError, RoleError, PsdError, InputError) as exc:
        raise _model_error(exc) from exc
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


EXPERIMENT_FLAGS = {
    "variant": "variant", "reps": "n_reps", "seed": "base_seed", "n_train": "n_train",
    "n_test": "n_test", "n_features": "n_features", "score": "score", "phi_form": "phi_form",
    "baseline2": "baseline2", "recenter": "recenter",
}


def cmd_experiment(args) -> int:
    cfg = merged(args, {}, EXPERIMENT_FLAGS)
    out_dir = args.out if args.out is not None else cfg.pop("out", None)
    cfg.pop("out", None)
    if out_dir is None:
        raise CliError(EXIT_OTHER, "missing required setting 'out'")
    try:
        config = ExperimentConfig.from_dict(cfg)
    except (TypeError, InputError) as exc:
        raise CliError(EXIT_IO, f"bad experiment config: {exc}") from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", "experiment", args.config, config.base_seed, out,
                   config.to_dict())
    table = run_experiment(config, threads=args.threads)
    write_results(table, config, out, __version__)
    if table.records.empty:
        sys.stderr.write(f"all {config.n_reps} replications failed\n")
        return EXIT_OTHER
    summary = table.summary_text()
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    if table.failed:
        sys.stderr.write(f"{len(table.failed)} replications failed; see metadata.json\n")
    return EXIT_OK


def cmd_report(args) -> int:
    svg = csv_path = None
    for target in args.out:
        if str(target).endswith(".svg"):
            svg = target
        elif str(target).endswith(".csv"):
            csv_path = target
        else:
            raise CliError(EXIT_OTHER, f"--out must name a .svg or .csv file, got {target}")
    write_report(args.results, svg, csv_path)
    print("wrote " + ", ".join(str(p) for p in (svg, csv_path) if p))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decon", description="Causality-aware counterfactual "
                                "features for linear structural causal models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a dataset from an SCM file")
    s.add_argument("scm", nargs="?", help="SCM JSON path or builtin:<name>")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("adjust", help="counterfactual features for an anticausal task")
    a.add_argument("--train")
    a.add_argument("--test")
    a.add_argument("--target", choices=[t.value for t in PathTarget] + ["deconfounding"])
    a.add_argument("--out")
    a.add_argument("--config")
    a.set_defaults(func=cmd_adjust)

    d = sub.add_parser("decompose", help="population covariance decomposition of an SCM")
    d.add_argument("scm")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decompose)

    e = sub.add_parser("experiment", help="dataset-shift stability experiment")
    e.add_argument("--variant", choices=["fixed-vary", "increasing-vary"])
    e.add_argument("--reps", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--n-train", type=int)
    e.add_argument("--n-test", type=int)
    e.add_argument("--n-features", type=int)
    e.add_argument("--score", choices=["empirical", "analytic"])
    e.add_argument("--phi-form", choices=["exact", "printed"])
    e.add_argument("--baseline2", choices=["independent", "literal"])
    e.add_argument("--recenter", action="store_const", const=True)
    e.add_argument("--threads", type=int, help="worker threads (default: $DECON_THREADS or CPU count)")
    e.add_argument("--out")
    e.add_argument("--config")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="quantile table and SVG from experiment results")
    r.add_argument("--results", required=True)
    r.add_argument("--out", nargs="+", required=True, help="report.svg and/or report.csv")
    r.set_defaults(func=cmd_report)
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, (SchemaError, OSError)):
        return EXIT_IO
    if isinstance(exc, (CycleError, RoleError, PsdError)):
        return EXIT_MODEL
    if isinstance(exc, (MissingColumnError, ShapeError, RankError, SampleSizeError)):
        return EXIT_ADJUST
    return EXIT_OTHER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DeconError, OSError, CliError) as exc:
        sys.stderr.write(f"decon {args.command}: {exc}\n")
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
