"""Command-line interface.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 bad input
data, 4 numerical failure. Errors are printed to stderr as one JSON object.

Environment overrides: ``VWSGIBBS_OUTDIR`` is prepended to relative output
paths and ``VWSGIBBS_THREADS`` sets the default for ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import ingest, sim, vws
from .chain import ChainOutput, read_header
from .dist import DegenerateIntervalError
from .sae import ModelError, SamplerConfig, Step6, default_init, run_sampler

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, kind, message, **detail):
        super().__init__(message)
        self.code, self.kind, self.detail = code, kind, detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def code_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _manifest(args, command):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": command,
        "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        "seed": flags.get("seed"),
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _run_record(manifest, started, elapsed, **extra):
    return {"manifest": manifest, "started": started, "wall_clock_seconds": elapsed, **extra}


def _out_path(p):
    p = Path(p)
    base = os.environ.get("VWSGIBBS_OUTDIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_USAGE, "config", f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".toml":
            return ingest.tomllib.loads(text)
        return json.loads(text)
    except (ValueError, ingest.tomllib.TOMLDecodeError) as exc:
        raise CliError(EXIT_USAGE, "config", f"cannot parse {path}: {exc}") from exc


def _now():
    return datetime.now(timezone.utc).isoformat()


# Commands --------------------------------------------------------------------


def cmd_ingest(args):
    try:
        schema = ingest.Schema.from_file(args.schema)
    except (ingest.IngestError, OSError, ValueError) as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from exc
    t0 = time.perf_counter()
    started = _now()
    try:
        data, report = ingest.load_dataset(args.csv, schema)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from exc
    except (ingest.IngestError, ModelError) as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from exc
    out = _out_path(args.out)
    man = _manifest(args, "ingest")
    ingest.save_bundle(out, data, report=report, manifest=man)
    rep_path = out.with_name(out.stem + ".report.json") if out.suffix == ".npz" else out.with_name(out.name + ".report.json")
    diag.to_json(_run_record(man, started, time.perf_counter() - t0, report=report), rep_path)
    print(json.dumps({"m": data.m, "excluded": len(report["excluded"]), "out": str(out)}))


def cmd_simulate(args):
    t0, started = time.perf_counter(), _now()
    if args.m < 3:
        raise CliError(EXIT_USAGE, "validation", "--m must be at least 3")
    rng = np.random.default_rng(args.seed)
    data, truth = ingest.simulate_dataset(ingest.SimulationSettings(m=args.m), rng)
    out = _out_path(args.out)
    man = _manifest(args, "simulate-data")
    ingest.save_bundle(out, data, report={"truth": truth}, manifest=man)
    print(json.dumps({"m": data.m, "out": str(out), "wall_clock_seconds": time.perf_counter() - t0, "started": started}))


def _load_data(path):
    try:
        return ingest.load_bundle(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, "data", f"no such bundle: {path}") from exc
    except (KeyError, ValueError, OSError, ModelError) as exc:
        raise CliError(EXIT_DATA, "data", f"cannot read bundle {path}: {exc}") from exc


def cmd_fit(args):
    data = _load_data(args.bundle)
    defaults = {"mwg": (30_000, 28_000)}.get(args.sampler, (3000, 1000))
    iters = args.iters if args.iters is not None else defaults[0]
    burn = args.burn if args.burn is not None else defaults[1]
    try:
        cfg = SamplerConfig(sampler=args.sampler, iterations=iters, burn=burn, eps1=args.eps1, eps2=args.eps2,
                            seed=args.seed, thin=args.thin, max_rejections=args.max_rejections,
                            max_regions=args.max_regions)
    except ModelError as exc:
        raise CliError(EXIT_USAGE, "validation", str(exc)) from exc
    init = default_init(data)
    if args.sigma2_init == "data":
        init.sigma2 = data.s2.copy()
    step6 = Step6(cfg, data.m)
    if args.load_proposals:
        if cfg.sampler != "vwg":
            raise CliError(EXIT_USAGE, "validation", "--load-proposals needs --sampler vwg")
        obj = _load_config(args.load_proposals)
        bank = vws.ProposalBank.from_json_obj(obj)
        if bank.m != data.m:
            raise CliError(EXIT_DATA, "data", f"proposal file has {bank.m} areas, data has {data.m}")
        step6.bank = bank
        step6.stamp = int(obj.get("stamp", 0))
    started = _now()
    t0 = time.perf_counter()
    try:
        out = run_sampler(data, cfg, init=init, rng=np.random.default_rng(args.seed), step6=step6)
    except vws.IterationCapError as exc:
        raise CliError(EXIT_NUMERIC, "iteration_cap", str(exc), area=exc.area) from exc
    except (ModelError, np.linalg.LinAlgError, DegenerateIntervalError, FloatingPointError) as exc:
        raise CliError(EXIT_NUMERIC, "numerical", str(exc)) from exc
    man = _manifest(args, "fit")
    man["resolved"] = {"iterations": iters, "burn": burn}
    out.manifest = man
    path = _out_path(args.out)
    out.save(path, timings=False)
    record = _run_record(man, started, time.perf_counter() - t0, sampler_elapsed=out.elapsed, counters=out.counters)
    diag.to_json(record, path.with_name(path.name + ".run.json"))
    if args.save_proposals and step6.bank is not None and cfg.sampler == "vwg":
        diag.to_json(step6.bank.to_json_obj(stamp=step6.stamp, manifest=man), _out_path(args.save_proposals))
    print(json.dumps({"out": str(path), "elapsed": out.elapsed, "rejections": out.counters["rejections"]}))


def cmd_study_conditional(args):
    cfg = _load_config(args.grid) if args.grid else {}
    if args.reps is not None:
        cfg["reps"] = args.reps
    try:
        grid = sim.ConditionalGrid.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from exc
    t0, started = time.perf_counter(), _now()
    try:
        res = sim.run_conditional_study(grid, seed=args.seed, imh=not args.no_imh)
    except vws.IterationCapError as exc:
        raise CliError(EXIT_NUMERIC, "iteration_cap", str(exc)) from exc
    outdir = _out_path(Path(args.out) / "x").parent
    res.write(outdir)
    diag.to_json(_run_record(_manifest(args, "study-conditional"), started, time.perf_counter() - t0), outdir / "run.json")
    print(json.dumps({"out": str(outdir), "cells": len(res.cells)}))


def cmd_study_posterior(args):
    cfg = _load_config(args.levels) if args.levels else {}
    if args.reps is not None:
        cfg["reps"] = args.reps
    try:
        levels = sim.PosteriorLevels.full_scale(**cfg) if args.full_scale else sim.PosteriorLevels.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_USAGE, "config", str(exc)) from exc
    t0, started = time.perf_counter(), _now()
    try:
        res = sim.run_posterior_study(levels, seed=args.seed, workers=args.threads)
    except vws.IterationCapError as exc:
        raise CliError(EXIT_NUMERIC, "iteration_cap", str(exc)) from exc
    outdir = _out_path(Path(args.out) / "x").parent
    res.write(outdir)
    diag.to_json(_run_record(_manifest(args, "study-posterior"), started, time.perf_counter() - t0), outdir / "run.json")
    print(json.dumps({"out": str(outdir), "runs": len(res.rows)}))


def cmd_analyze(args):
    data = _load_data(args.bundle)
    samplers = tuple(args.samplers.split(","))
    t0, started = time.perf_counter(), _now()
    try:
        res = sim.run_data_analysis(data, seed=args.seed, samplers=samplers, eps1=args.eps1, eps2=args.eps2,
                                    max_regions=args.max_regions, sigma2_init=args.sigma2_init)
    except KeyError as exc:
        raise CliError(EXIT_USAGE, "validation", f"unknown sampler {exc}") from exc
    except vws.IterationCapError as exc:
        raise CliError(EXIT_NUMERIC, "iteration_cap", str(exc)) from exc
    outdir = _out_path(Path(args.out) / "x").parent
    res.write(outdir)
    diag.to_json(_run_record(_manifest(args, "analyze"), started, time.perf_counter() - t0), outdir / "run.json")
    print(json.dumps({"out": str(outdir)}))


def cmd_report(args):
    src = Path(args.source)
    out = _out_path(args.out)
    if src.is_dir():
        tables = {}
        for f in sorted(src.glob("*.csv")):
            with open(f, encoding="utf-8") as fh:
                tables[f.stem] = list(csv.DictReader(fh))
        if not tables:
            raise CliError(EXIT_DATA, "data", f"no result tables in {src}")
        diag.to_json({"source": str(src), "tables": tables, "manifest": _manifest(args, "report")}, out)
        print(json.dumps({"out": str(out), "tables": sorted(tables)}))
        return
    try:
        read_header(src)
        chain = ChainOutput.load(src)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, "data", f"no such file: {src}") from exc
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from exc
    run = src.with_name(src.name + ".run.json")
    if run.exists():
        chain.elapsed = json.loads(run.read_text(encoding="utf-8")).get("sampler_elapsed", chain.elapsed)
    if out.suffix == ".json":
        metrics = diag.chain_metrics(chain, batch_size=args.batch_size)
        metrics["manifest"] = _manifest(args, "report")
        metrics["chain_manifest"] = chain.manifest
        diag.to_json(metrics, out)
    else:
        if chain.n_saved == 0:
            raise CliError(EXIT_DATA, "data", "chain has no saved draws")
        rows = diag.summarize(chain.theta_matrix(), chain.theta_names(), batch_size=args.batch_size)
        diag.rows_to_csv(rows, out)
    print(json.dumps({"out": str(out)}))


# Parser ------------------------------------------------------------------------


def build_parser():
    env_threads = int(os.environ.get("VWSGIBBS_THREADS", "1") or 1)
    p = _Parser(prog="vwsgibbs", description="Self-tuned strip rejection sampling inside Gibbs for a joint area-level model.")
    p.add_argument("--version", action="version", version=code_version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="CSV + schema -> model data bundle")
    s.add_argument("csv")
    s.add_argument("--schema", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("simulate-data", help="draw a synthetic dataset from the model")
    s.add_argument("--m", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="run a sampler on a data bundle")
    s.add_argument("bundle")
    s.add_argument("--sampler", choices=("mwg", "vwg", "vwg-basic"), default="vwg")
    s.add_argument("--iters", type=int, default=None, help="total scans (default 30000 for mwg, 3000 otherwise)")
    s.add_argument("--burn", type=int, default=None, help="discarded scans (default 28000 for mwg, 1000 otherwise)")
    s.add_argument("--eps1", type=float, default=0.85)
    s.add_argument("--eps2", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--max-rejections", type=int, default=1_000_000)
    s.add_argument("--max-regions", type=int, default=50)
    s.add_argument("--sigma2-init", choices=("ones", "data"), default="ones")
    s.add_argument("--save-proposals", default=None)
    s.add_argument("--load-proposals", default=None)
    s.add_argument("--threads", type=int, default=env_threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("study-conditional", help="single-conditional IMH and self-tuned study")
    s.add_argument("--grid", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-imh", action="store_true")
    s.add_argument("--threads", type=int, default=env_threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_study_conditional)

    s = sub.add_parser("study-posterior", help="posterior simulation study")
    s.add_argument("--levels", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--full-scale", action="store_true")
    s.add_argument("--threads", type=int, default=env_threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_study_posterior)

    s = sub.add_parser("analyze", help="compare samplers on one data bundle")
    s.add_argument("bundle")
    s.add_argument("--samplers", default="mwg,vwg-basic,vwg")
    s.add_argument("--eps1", type=float, default=0.85)
    s.add_argument("--eps2", type=float, default=1e-4)
    s.add_argument("--max-regions", type=int, default=50)
    s.add_argument("--sigma2-init", choices=("ones", "data"), default="data")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=env_threads)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", help="summaries from a chain file or a study directory")
    s.add_argument("source")
    s.add_argument("--out", required=True)
    s.add_argument("--batch-size", default="auto")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise CliError(EXIT_USAGE, "validation", "--threads must be positive")
        args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": exc.code, **exc.detail}), file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
