"""Command-line entry point: ``sppinn <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 missing file, 4 schema violation,
5 problem-id mismatch, 6 training failure, 7 reference-solver failure,
1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from ._io import paired_paths
from .config import ConfigSchemaError, RunConfig, load_config, preset
from .evaluation import ErrorReport, ProblemMismatch, RunRecord, evaluate, format_table, plot_data
from .model import ConfigError, load_checkpoint, save_checkpoint
from .problems import PdeProblem, catalog, get_problem, with_horizon, with_params
from .refsolver import (
    GridSolution,
    SelfConvergenceError,
    SolverBlowup,
    SpectralConfig,
    default_config,
    etdrk4_solve,
    self_converge,
)
from .training import NonFiniteGradient, TrainingDiverged, train

log = logging.getLogger("sppinn")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_MISMATCH = 5
EXIT_TRAINING = 6
EXIT_SOLVER = 7

OUT_ENV = "SPPINN_OUT"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


class _Missing(Exception):
    pass


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise _Missing(f"file not found: {p}")
    return p


def _load_reference(path) -> GridSolution:
    p = Path(path)
    jpath, bpath = paired_paths(p)
    _need(jpath)
    try:
        meta = json.loads(jpath.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigSchemaError(f"{p}: not valid JSON") from exc
    if not isinstance(meta, dict):
        raise ConfigSchemaError(f"{p}: header must be a JSON object")
    _need(jpath.parent / meta.get("values_file", bpath.name))
    try:
        return GridSolution.load(jpath)
    except (KeyError, ValueError) as exc:
        raise ConfigSchemaError(f"{p}: {exc}") from exc


def _load_model(path):
    jpath, bpath = paired_paths(path)
    _need(jpath)
    _need(bpath)
    try:
        return load_checkpoint(jpath)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigSchemaError(f"{jpath}: {exc}") from exc


def _apply_problem(problem: PdeProblem, section: dict, T=None) -> PdeProblem:
    if section.get("params"):
        problem = with_params(problem, **section["params"])
    T = T if T is not None else section.get("T")
    if T is not None:
        problem = with_horizon(problem, T)
    return problem


def _reference(problem: PdeProblem, N=None, dt=None, converge=True, n_snapshots=101):
    base = default_config(problem)
    base = replace(base, N=N or base.N, dt=dt or base.dt, n_snapshots=n_snapshots)
    if converge:
        sol, diff = self_converge(problem, base)
        sol.config["self_convergence_diff"] = diff
        return sol
    return etdrk4_solve(problem, base)


def _progress(every):
    def cb(row):
        if row["step"] % every == 0:
            log.info("%s %6d  loss %.4e  |g| %.3e", row["phase"], row["step"], row["loss"], row["grad_norm"])

    return cb


def _train_one(problem, rc: RunConfig, out: Path, baseline: bool, ref: GridSolution | None, tag=None):
    tcfg = replace(rc.training, loss_mode="baseline" if baseline else rc.training.loss_mode)
    name = tag or (problem.id + ("-baseline" if tcfg.loss_mode == "baseline" else ""))
    res = train(problem, rc.model, tcfg, progress=_progress(1000))
    out.mkdir(parents=True, exist_ok=True)
    ckpt_json, ckpt_bin = save_checkpoint(res.model, out / name, extra={"timings": res.timings})
    log_path = res.write_log(out / f"{name}.log.csv")
    cfg_path = RunConfig(rc.model, tcfg, rc.problem, rc.reference).save(out / f"{name}.config.json")
    artifacts = {
        "checkpoint": str(ckpt_json),
        "parameters": str(ckpt_bin),
        "training_log": str(log_path),
        "config": str(cfg_path),
    }
    report = None
    if ref is not None:
        rep = evaluate(res.model, ref, {"seed": rc.model.seed, "timings": res.timings})
        rep_path = rep.save(out / f"{name}.errors.json")
        artifacts["error_report"] = str(rep_path)
        report = rep.to_dict()
    notes = []
    if not problem.published_values:
        notes.append("parameters and initial data are not given in the source publication")
    if res.lbfgs is not None:
        notes.append(f"L-BFGS status: {res.lbfgs.status} after {res.lbfgs.n_iter} iterations")
    rec = RunRecord(
        problem.id,
        problem.to_dict(),
        {"model": asdict(rc.model), "training": asdict(tcfg), "reference": dict(rc.reference)},
        report,
        artifacts,
        res.timings,
        notes,
    )
    rec.save(out / f"{name}.run.json")
    return res, report


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_reference(args) -> int:
    problem = _apply_problem(get_problem(args.problem), {}, args.T)
    sol = _reference(problem, args.n, args.dt, converge=not args.no_converge)
    out = Path(args.out) if args.out else default_out() / f"{problem.id}.reference"
    j, b = sol.save(out)
    print(f"wrote {j} and {b}")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = load_config(_need(args.config)) if args.config else preset(args.preset)
    problem = _apply_problem(get_problem(args.problem), rc.problem, args.T)
    if args.seed is not None:
        rc = replace(rc, model=replace(rc.model, seed=args.seed))
    ref = _load_reference(args.reference) if args.reference else None
    if ref is not None and ref.problem_id != problem.id:
        raise ProblemMismatch(f"reference is for {ref.problem_id!r}, training {problem.id!r}")
    out = Path(args.out) if args.out else default_out()
    _, report = _train_one(problem, rc, out, args.baseline, ref)
    if report is not None:
        print(format_table({"model": report}, problem.id))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    ref = _load_reference(args.reference)
    rep = evaluate(model, ref)  # raises ProblemMismatch before anything is written
    out = Path(args.out) if args.out else default_out()
    stem = paired_paths(args.model)[0].name[: -len(".json")]
    rep.save(out / f"{stem}.errors.json")
    table = format_table({stem: rep}, model.problem.id)
    (out / f"{stem}.errors.txt").write_text(table)
    print(table)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    model = _load_model(args.model)
    ref = _load_reference(args.reference)
    if model.problem.id != ref.problem_id:
        raise ProblemMismatch(f"model is for {model.problem.id!r}, reference for {ref.problem_id!r}")
    for p in plot_data(model, ref, args.out):
        print(p)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    ids = [get_problem(p).id for p in args.problems] if args.problems else [p.id for p in catalog()]
    rc = load_config(_need(args.config)) if args.config else preset("smoke" if args.smoke else "full")
    if args.steps is not None:
        rc = replace(rc, training=replace(rc.training, adam_steps=args.steps))
    out = Path(args.out) if args.out else default_out() / "benchmark"
    columns, lines = {}, []
    for pid in ids:
        problem = _apply_problem(get_problem(pid), rc.problem, None)
        ref = _reference(problem, converge=not args.smoke)
        ref.save(out / f"{pid}.reference")
        _, rep = _train_one(problem, rc, out, False, ref)
        columns[pid] = rep
        row = {"sp": rep}
        if args.baseline:
            _, brep = _train_one(problem, rc, out, True, ref)
            row["baseline"] = brep
        lines.append(format_table({k: v for k, v in row.items()}, pid))
    summary = format_table(columns, "structure-preserving PINN, all problems") + "\n" + "\n".join(lines)
    (out / "benchmark.txt").write_text(summary)
    print(summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sppinn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reference", help="self-converged spectral reference solution")
    p.add_argument("problem")
    p.add_argument("--n", type=int, default=None, help="initial grid size")
    p.add_argument("--dt", type=float, default=None, help="initial time step")
    p.add_argument("--T", type=float, default=None, help="override the time horizon")
    p.add_argument("--no-converge", action="store_true", help="single solve, no refinement")
    p.add_argument("--out", default=None, help="output stem (writes .json and .f64)")
    p.set_defaults(fn=cmd_reference)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("problem")
    p.add_argument("--config", default=None, help="JSON run configuration")
    p.add_argument("--preset", default="full", choices=("full", "smoke"))
    p.add_argument("--baseline", action="store_true", help="unconstrained three-term loss")
    p.add_argument("--reference", default=None, help="evaluate against this reference")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="error report of a checkpoint against a reference")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("benchmark", help="reference + training + evaluation for several problems")
    p.add_argument("--problems", nargs="*", default=None)
    p.add_argument("--smoke", action="store_true")
    p.add_argument("--baseline", action="store_true", help="also train the baseline PINN")
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=None, help="override Adam steps")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("plot-data", help="CSV fields and time slices for plotting")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except _Missing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigSchemaError, ConfigError) as exc:  # before ValueError subclasses below
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ProblemMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, NonFiniteGradient) as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (SolverBlowup, SelfConvergenceError) as exc:
        print(f"error: reference solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001 - last resort, still a distinct code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
