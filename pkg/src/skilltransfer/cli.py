"""Command-line front end: ``fit``, ``features``, ``run`` and ``matrix``.

Exit codes: 0 success, 1 I/O or configuration, 2 fit failure, 3 no tool part
fits the task, 4 runtime failure (bind/eval error, timeout, or the task's
success predicate is false).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .cloud import load_cloud
from .config import ConfigError, FitSettings, load_matrix_spec, load_run_config, read_json, run_config_from_dict
from .errors import (
    BindError,
    CloudParseError,
    CloudSizeError,
    DegeneracyError,
    DSLError,
    FitFailure,
    NoAffordanceError,
    SkillTransferError,
)
from .fitting import fit_superparaboloid, fit_superquadric
from .percept import TaskKind
from .sqmodel import model_to_dict, refine_rim

EXIT_OK, EXIT_IO, EXIT_FIT, EXIT_AFFORDANCE, EXIT_RUNTIME = 0, 1, 2, 3, 4


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _fit_settings(args, base: FitSettings) -> FitSettings:
    fit = base
    if args.seed is not None:
        fit = replace(fit, seed=args.seed)
    if args.restarts is not None:
        fit = replace(fit, restarts=args.restarts)
    return fit


def _optional_run_config(path: str | None) -> dict:
    return read_json(Path(path)) if path else {}


def cmd_fit(args) -> int:
    doc = _optional_run_config(args.config)
    fit = _fit_settings(args, run_config_from_dict_partial(doc).fit)
    cloud = load_cloud(args.cloud)
    if args.kind == "superquadric":
        res = fit_superquadric(cloud, fit.restarts, fit.seed, fit.lm)
        model = res.model
    else:
        res = fit_superparaboloid(cloud, fit.restarts, fit.seed, fit.lm)
        model = refine_rim(res.model, cloud)
    _emit(_dumps(model_to_dict(model, res.rms_residual)), args.out)
    return EXIT_OK


def run_config_from_dict_partial(doc: dict):
    """Settings blocks of a run config without requiring its file paths."""
    stub = {"tool_cloud": "", "container_cloud": "", "task_file": "", "task": "scrape"}
    stub.update({k: v for k, v in doc.items() if k in ("fit", "segment", "percept", "controller", "sim")})
    return run_config_from_dict(stub, Path("."))


def cmd_features(args) -> int:
    from .pipeline import perceive

    doc = _optional_run_config(args.config)
    cfg = run_config_from_dict_partial(doc)
    fit = _fit_settings(args, cfg.fit)
    p = perceive(
        load_cloud(args.tool),
        load_cloud(args.container),
        TaskKind(args.task),
        cfg.sim.initial_pose,
        fit.seed,
        fit.restarts,
        fit.lm,
        cfg.segment,
        cfg.percept,
    )
    _emit(_dumps(p.report()), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    from .pipeline import run_pipeline, write_run

    cfg = load_run_config(args.config)
    cfg = replace(cfg, fit=_fit_settings(args, cfg.fit))
    if args.out is not None:
        cfg = replace(cfg, out_dir=Path(args.out))
    missing = [str(p) for p in cfg.required_files() if not p.is_file()]
    if missing:
        raise ConfigError(f"missing input file(s): {', '.join(missing)}")
    result = run_pipeline(cfg)
    paths = write_run(result, cfg.out_dir)
    rep = result.report
    reasons = ", ".join(f"{p.name}={p.reason}" for p in rep.phases)
    print(f"{rep.task.value}: {'success' if rep.success else 'FAILED'} ({reasons})")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    if rep.error:
        print(f"error [{rep.error_stage}]: {rep.error}", file=sys.stderr)
    return EXIT_OK if rep.success else EXIT_RUNTIME


def cmd_matrix(args) -> int:
    from .pipeline import format_table, run_matrix

    spec = load_matrix_spec(args.config)
    fit = dict(spec.template.get("fit", {}))
    if args.seed is not None:
        fit["seed"] = args.seed
    if args.restarts is not None:
        fit["restarts"] = args.restarts
    spec = replace(spec, template={**spec.template, "fit": fit})
    out = Path(args.out) if args.out is not None else Path(args.config).parent / "matrix_out"
    agg = run_matrix(spec, out)
    out.mkdir(parents=True, exist_ok=True)
    table = format_table(agg)
    (out / "matrix.json").write_text(_dumps(agg), encoding="utf-8")
    (out / "matrix.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


_STAGES = (
    (ConfigError, "config"),
    (CloudParseError, "load"),
    (DSLError, "parse"),
    ((FitFailure, DegeneracyError, CloudSizeError), "fit"),
    (NoAffordanceError, "percept"),
    (BindError, "bind"),
)


def _stage(exc: Exception) -> str:
    for cls, name in _STAGES:
        if isinstance(exc, cls):
            return name
    return "run"


class _Parser(argparse.ArgumentParser):
    # argparse's own exit status 2 would collide with the fit-failure code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="fit seed (overrides config)")
    common.add_argument("--restarts", type=int, default=None, help="fit restarts (overrides config)")
    common.add_argument("--config", default=None, help="JSON configuration file")
    common.add_argument("--out", default=None, help="output file (fit, features) or directory (run, matrix)")

    ap = _Parser(prog="skilltransfer", description="Tool-use skill transfer on point clouds.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a shape model to a cloud, print model JSON")
    p.add_argument("cloud")
    p.add_argument("--kind", choices=("superquadric", "superparaboloid"), default="superquadric")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("features", parents=[common], help="tool and container features as JSON")
    p.add_argument("tool")
    p.add_argument("container")
    p.add_argument("--task", choices=[t.value for t in TaskKind], required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("run", parents=[common], help="full pipeline for one run config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", parents=[common], help="evaluate tools x containers x tasks")
    p.set_defaults(func=cmd_matrix)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command in ("run", "matrix") and not args.config:
        ap.error(f"{args.command} requires --config")
    if args.restarts is not None and args.restarts < 1:
        ap.error("--restarts must be >= 1")
    try:
        return args.func(args)
    except SkillTransferError as exc:
        print(f"error [{args.command}/{_stage(exc)}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
