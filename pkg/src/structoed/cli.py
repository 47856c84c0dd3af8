"""Command-line interface: ``structoed {generate,select,compare,reconstruct}``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 budget refusal.
Every command writes ``manifest.json`` next to its outputs; wall-clock
quantities live only under the manifest's ``timing`` key (and in the other
outputs only when ``--timings`` is given), so reruns give identical files.
"""
from __future__ import annotations

import argparse
import sys
import time
import warnings
import zlib
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    MethodSpec,
    compare_methods,
    write_comparison_csv,
    write_histogram_csv,
)
from .cssp import CsspMethod
from .io import dump_json, load_problem, load_selection, read_matrix_csv, save_problem
from .kernels import BACKEND
from .linalg import NumericalError, psi
from .problems import (
    DesignProblem,
    HeatConfig,
    TomoConfig,
    heat_problem,
    lowrank_problem,
    posterior_mean,
    tomo_problem,
)
from .select import TEMPLATES, TemplateConfig, run_template, sketch_first
from .tensor import SelectionOperator

EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

# random streams used by each command, recorded in the manifest
_STREAMS = {
    "generate": ("noise", "lowrank"),
    "select": ("iter-init", "sketch"),
    "compare": ("iter-init", "sketch", "random-designs"),
    "reconstruct": (),
}


class UsageError(ValueError):
    pass


def _int_list(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _add_template_args(p):
    p.add_argument("--k", type=_int_list, required=True, help="indices per mode, e.g. 5,10")
    p.add_argument("--order", type=_int_list, help="mode processing order (0-based), e.g. 1,0")
    p.add_argument("--tol", type=float, default=1e-10, help="IterSelect relative tolerance")
    p.add_argument("--max-sweeps", type=_positive_int, default=20, help="IterSelect sweep cap")
    p.add_argument("--oversample", type=_nonneg_int, default=10, help="sketch oversampling p")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--timings", action="store_true",
                   help="also write wall times into the report/CSV (breaks byte-identical reruns)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structoed",
        description="Structured sensor selection for linear Bayesian inverse problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a problem instance")
    kinds = gen.add_subparsers(dest="kind", required=True)

    heat = kinds.add_parser("heat", help="1-D heat equation sensor placement")
    d = HeatConfig()
    heat.add_argument("--dof", type=int, default=d.dof)
    heat.add_argument("--kappa", type=float, default=d.kappa)
    heat.add_argument("--dt", type=float, default=d.dt)
    heat.add_argument("--snapshots", type=int, default=d.snapshots)
    heat.add_argument("--sensors", type=int, default=d.sensors)
    heat.add_argument("--gamma", type=float, default=d.gamma)
    heat.add_argument("--noise", type=float, default=d.noise)

    tomo = kinds.add_parser("tomo", help="straight-ray tomography source/receiver selection")
    t = TomoConfig()
    tomo.add_argument("--grid", type=int, default=t.grid)
    tomo.add_argument("--sources", type=int, default=t.sources)
    tomo.add_argument("--receivers", type=int, default=t.receivers)
    tomo.add_argument("--length-scale", type=float, default=t.length_scale)
    tomo.add_argument("--variance", type=float, default=t.variance)
    tomo.add_argument("--noise", type=float, default=t.noise)

    low = kinds.add_parser("lowrank", help="synthetic design matrix with a known spectrum")
    low.add_argument("--n", type=int, default=100, help="ambient dimension")
    low.add_argument("--modes", type=_int_list, default=(6, 8), help="mode sizes, e.g. 6,8")
    low.add_argument("--rank", type=int, default=10)
    low.add_argument("--decay", type=float, default=0.8)
    low.add_argument("--scale", type=float, default=1.0)

    csvp = kinds.add_parser("csv", help="wrap a design matrix A read from CSV")
    csvp.add_argument("--csv", required=True, help="N x M matrix, comma separated")
    csvp.add_argument("--modes", type=_int_list, required=True, help="mode sizes with product M")

    for p in (heat, tomo, low, csvp):
        p.add_argument("--seed", type=_nonneg_int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    sel = sub.add_parser("select", help="run one selection template")
    sel.add_argument("--problem", required=True, help="problem directory or problem.json")
    sel.add_argument("--method", choices=TEMPLATES, default="ind")
    sel.add_argument("--engine", choices=("gks", "deim", "greedy"), default="gks")
    sel.add_argument("--candidate-cap", type=_positive_int, help="greedy: keep only the best candidates")
    sel.add_argument("--sketch", action="store_true", help="select on Y = Omega A (Sketch-First)")
    _add_template_args(sel)
    sel.add_argument("--out", required=True, help="output directory")

    cmp_ = sub.add_parser("compare", help="rank several methods against a design baseline")
    cmp_.add_argument("--problem", required=True)
    cmp_.add_argument("--methods", default="ind:gks,seq:gks,iter:gks",
                      help="comma list of template:engine[:sketch]")
    cmp_.add_argument("--random", type=_nonneg_int, default=0, help="number of random designs")
    cmp_.add_argument("--exhaustive", action="store_true", help="enumerate every design")
    cmp_.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET,
                      help="largest design count allowed for --exhaustive")
    cmp_.add_argument("--workers", type=_positive_int, default=1)
    _add_template_args(cmp_)
    cmp_.add_argument("--out", required=True)

    rec = sub.add_parser("reconstruct", help="posterior mean under a selected design")
    rec.add_argument("--problem", required=True)
    rec.add_argument("--selection", required=True, help="report JSON holding the selection")
    rec.add_argument("--out", required=True)
    return parser


def _generate(args) -> tuple[DesignProblem, dict]:
    if args.kind == "heat":
        cfg = HeatConfig(args.dof, args.kappa, args.dt, args.snapshots, args.sensors,
                         args.gamma, args.noise)
        return heat_problem(cfg, args.seed), {}
    if args.kind == "tomo":
        cfg = TomoConfig(args.grid, args.sources, args.receivers, args.length_scale,
                         args.variance, args.noise)
        return tomo_problem(cfg, args.seed), {}
    if args.kind == "lowrank":
        if args.rank < 1:
            raise UsageError("--rank must be at least 1")
        return lowrank_problem(args.n, args.modes, args.rank, args.decay, args.seed, args.scale), {}
    a = read_matrix_csv(args.csv)
    p = DesignProblem(np.ascontiguousarray(a.T), np.eye(a.shape[0]), 1.0, args.modes,
                      kind="csv", config={"source": Path(args.csv).name}, seed=args.seed)
    return p, {"csv": args.csv}


def cmd_generate(args, out: Path) -> dict:
    p, inputs = _generate(args)
    save_problem(p, out)
    dims = list(p.mode_sizes) + [p.n_params]
    print(f"{p.kind} problem: tensor dims {'x'.join(map(str, dims))}")
    if p.materializable:
        print(f"psi(A) = {psi(p.matrix()):.10g}")
    return {"inputs": inputs, "outputs": ["problem.json", "problem.bin"]}


def _config(args) -> TemplateConfig:
    engine = getattr(args, "engine", "gks")
    cssp = CsspMethod(engine, getattr(args, "candidate_cap", None))
    return TemplateConfig(args.k, args.order, cssp, args.tol, args.max_sweeps, args.seed,
                          args.oversample)


def cmd_select(args, out: Path) -> dict:
    p = load_problem(args.problem)
    cfg = _config(args)
    if args.sketch:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = sketch_first(p, cfg, args.method)
    else:
        rep = run_template(p.tensor(), cfg, args.method)
    report = rep.to_dict(timings=args.timings)
    report["method"] = MethodSpec(args.method, args.engine, args.sketch).key
    report["problem_kind"] = p.kind
    dump_json(report, out / "report.json")
    print(f"{report['method']}: eig = {rep.eig:.10g}, sweeps = {rep.sweeps}")
    for j, s in enumerate(rep.selection.per_mode):
        print(f"  mode {j}: {list(s)}")
    return {"inputs": {"problem": str(args.problem)}, "outputs": ["report.json"],
            "timing": {"selection_s": rep.wall_time}}


def _method_file(key: str) -> str:
    return "report_" + key.replace(":", "_") + ".json"


def cmd_compare(args, out: Path) -> dict:
    p = load_problem(args.problem)
    specs = [MethodSpec.parse(m) for m in args.methods.split(",") if m.strip()]
    if not specs:
        raise UsageError("--methods is empty")
    kw = dict(order=args.order, tol=args.tol, max_sweeps=args.max_sweeps, oversample=args.oversample)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = compare_methods(p.matrix(), p.mode_sizes, args.k, specs, random=args.random,
                              exhaustive=args.exhaustive, seed=args.seed, budget=args.budget,
                              workers=args.workers, **kw)
    outputs = ["comparison.csv"]
    write_comparison_csv(res.rows, out / "comparison.csv", timings=args.timings)
    if res.reference is not None:
        write_histogram_csv(res.reference, out / "histogram.csv")
        outputs.append("histogram.csv")
    if res.exhaustive is not None and res.random is not None:
        write_histogram_csv(res.random, out / "histogram_random.csv")
        outputs.append("histogram_random.csv")
    for row in res.rows:
        if row.report is None:
            continue
        report = row.report.to_dict(timings=args.timings)
        report["method"] = row.method
        report["percentile"] = row.percentile
        name = _method_file(row.method)
        dump_json(report, out / name)
        outputs.append(name)
    if res.exhaustive is not None:
        best, value = res.exhaustive.best()
        dump_json({"method": "exhaustive", "selection": best.to_dict(), "eig": value,
                   "designs": len(res.exhaustive)}, out / "exhaustive_best.json")
        outputs.append("exhaustive_best.json")

    ref = "exhaustive" if res.exhaustive is not None else ("random" if res.random is not None else None)
    print(f"{'method':24s} {'eig':>16s} {'percentile':>11s} {'sweeps':>6s}")
    for row in res.rows:
        if row.error is not None:
            print(f"{row.method:24s} FAILED: {row.error}")
            continue
        pct = "n/a" if row.percentile is None else f"{row.percentile:.2f}"
        print(f"{row.method:24s} {row.eig:16.8f} {pct:>11s} {row.sweeps:6d}")
    if ref is not None:
        print(f"percentiles against {len(res.reference)} {ref} designs")
    timing = dict(res.timings)
    timing.update({row.method: row.wall_time for row in res.rows})
    return {"inputs": {"problem": str(args.problem)}, "outputs": outputs, "timing": timing}


def cmd_reconstruct(args, out: Path) -> dict:
    p = load_problem(args.problem)
    if p.u_true is None or p.data is None:
        raise UsageError("problem carries no u_true/data to reconstruct")
    sel = load_selection(args.selection)
    if sel.mode_sizes != p.mode_sizes:
        raise UsageError(f"selection modes {sel.mode_sizes} do not match problem {p.mode_sizes}")
    u_sel = posterior_mean(p, sel)
    u_full = posterior_mean(p, SelectionOperator.identity(p.mode_sizes))
    nrm = float(np.linalg.norm(p.u_true))
    if nrm == 0.0:
        raise UsageError("u_true is zero; relative error undefined")
    err_sel = float(np.linalg.norm(u_sel - p.u_true)) / nrm
    err_full = float(np.linalg.norm(u_full - p.u_true)) / nrm
    with open(out / "reconstruction.csv", "w", newline="") as fh:
        fh.write("index,u_true,u_selected,u_full\n")
        for i, (a, b, c) in enumerate(zip(p.u_true, u_sel, u_full)):
            fh.write(f"{i},{float(a)!r},{float(b)!r},{float(c)!r}\n")
    with open(out / "errors.csv", "w", newline="") as fh:
        fh.write("design,observations,relative_error\n")
        fh.write(f"selected,{sel.size},{err_sel!r}\n")
        fh.write(f"full,{p.n_obs},{err_full!r}\n")
    print(f"relative error: selected {err_sel:.6g} ({sel.size} obs), full {err_full:.6g} ({p.n_obs} obs)")
    return {"inputs": {"problem": str(args.problem), "selection": str(args.selection)},
            "outputs": ["reconstruction.csv", "errors.csv"]}


_COMMANDS = {
    "generate": cmd_generate,
    "select": cmd_select,
    "compare": cmd_compare,
    "reconstruct": cmd_reconstruct,
}


def _echo(args) -> dict:
    cfg = {}
    for key, val in sorted(vars(args).items()):
        if key in ("out",):
            continue
        cfg[key] = list(val) if isinstance(val, tuple) else val
    return cfg


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    started = _stamp()
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        info = _COMMANDS[args.command](args, out)
    except BudgetExceeded as exc:
        print(f"refused: {exc}; raise --budget or drop --exhaustive", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = getattr(args, "seed", None)
    streams = {tag: {"spawn_key": zlib.crc32(tag.encode())} for tag in _STREAMS[args.command]}
    timing = info.pop("timing", {})
    timing.update({"started_at": started, "finished_at": _stamp(),
                   "wall_time_s": time.perf_counter() - t0})
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": _echo(args),
        "seeds": {"seed": seed, "generator": "PCG64", "streams": streams},
        "version": __version__,
        "kernel_backend": BACKEND,
        "inputs": info.get("inputs", {}),
        "outputs": info.get("outputs", []),
        "timing": timing,
    }
    dump_json(manifest, out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
