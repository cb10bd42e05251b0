"""Command-line harness: gen | fit | eval | bench | complete.

Every flag can also be supplied through an environment variable named
``CPWOPT_<FLAG>`` (uppercased, dashes to underscores), e.g.
``CPWOPT_SEED=7``.  Explicit flags win over the environment.

Exit codes: 0 success, 1 usage or policy refusal, 2 I/O or parse error,
3 numerical failure (all starts failed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import fileio
from .baselines import EmAlsConfig, em_als_fit
from .core import KruskalModel, SparseSamples, center_ignore_missing, ktensor_values_at
from .datagen import gen_large_sparse, make_instance
from .evaluation import fms, rho, tcs
from .objective import FitConfig, fit_cpwopt, make_starts
from .optimize import OptConfig

ENV_PREFIX = "CPWOPT_"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _add_opt_flags(p: _Parser) -> None:
    p.add_argument("--max-iters", type=int, default=_env("max-iters") or 500)
    p.add_argument("--ftol", type=float, default=_env("ftol") or 1e-8)
    p.add_argument("--gtol", type=float, default=_env("gtol") or 1e-8)


def _opt_config(args) -> OptConfig:
    return OptConfig(
        rel_f_tol=float(args.ftol),
        grad_tol=float(args.gtol),
        max_iters=int(args.max_iters),
    )


def _parse_size(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad size {text!r}; expected e.g. 50x40x30")
    if any(d < 1 for d in dims):
        raise UsageError(f"bad size {text!r}; extents must be positive")
    return dims


def build_parser() -> _Parser:
    parser = _Parser(prog="cpwopt", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic problem instances")
    g.add_argument("--size", action="append", required=True, help="e.g. 50x40x30")
    g.add_argument("--missing", action="append", type=float, required=True)
    g.add_argument("--rank", type=int, default=_env("rank") or 5)
    g.add_argument("--pattern", choices=("entries", "fibers"), default="entries")
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--instances", type=int, default=30)
    g.add_argument("--seed", type=int, default=_env("seed") or 0)
    g.add_argument("--sparse", action="store_true", help="large-scale sparse generation")
    g.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("fit", help="fit a CP model to a tensor file")
    f.add_argument("input")
    f.add_argument(
        "--method",
        choices=bench_mod.METHODS,
        default=_env("method") or "cpwopt-dense",
    )
    f.add_argument("--rank", type=int, default=_env("rank") or 5)
    f.add_argument("--starts", type=int, default=_env("starts") or 1)
    f.add_argument("--seed", type=int, default=_env("seed") or 0)
    f.add_argument("--log1p", action="store_true", default=bool(_env("log1p")))
    f.add_argument("--center-mode", type=int, default=_env("center-mode"))
    f.add_argument(
        "--memory-budget",
        type=int,
        default=_env("memory-budget") or 2**31,
        help="max bytes allowed for densification (em-als / cpwopt-dense)",
    )
    f.add_argument("--out", required=True, help="output prefix")
    _add_opt_flags(f)

    e = sub.add_parser("eval", help="score a model against truth or held-out data")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", help="truth model file (FMS)")
    e.add_argument("--full", help="fully-known tensor file (TCS numerator source)")
    e.add_argument("--observed", help="observed tensor file defining the known mask")
    e.add_argument("--missing", type=float, help="missing fraction for the rho ratio")
    e.add_argument("--out", help="write the JSON report here instead of stdout")

    b = sub.add_parser("bench", help="run a sweep and aggregate the scores")
    b.add_argument("--size", action="append", required=True)
    b.add_argument("--missing", action="append", type=float, required=True)
    b.add_argument("--rank", type=int, default=_env("rank") or 5)
    b.add_argument("--pattern", choices=("entries", "fibers"), default="entries")
    b.add_argument("--noise", type=float, default=0.1)
    b.add_argument("--instances", type=int, default=30)
    b.add_argument("--starts", type=int, default=_env("starts") or 5)
    b.add_argument(
        "--method",
        action="append",
        choices=bench_mod.METHODS,
        help="repeatable; default cpwopt-dense and em-als",
    )
    b.add_argument("--sparse", action="store_true")
    b.add_argument("--seed", type=int, default=_env("seed") or 0)
    b.add_argument("--out", required=True, help="output directory")
    _add_opt_flags(b)

    c = sub.add_parser("complete", help="reconstruct values at requested indices")
    c.add_argument("--model", required=True)
    c.add_argument("--indices", help="file with one 1-based index tuple per line")
    c.add_argument(
        "--missing-of",
        help="observed tensor file; reconstruct at its missing indices",
    )
    c.add_argument("--out", help="write index/value lines here instead of stdout")

    return parser


def _load_model(path) -> KruskalModel:
    return fileio.read_model(path)


def _as_samples(data) -> SparseSamples:
    if isinstance(data, SparseSamples):
        return data
    x = data
    lin = np.arange(x.size)
    indices = np.stack(np.unravel_index(lin, x.shape, order="F"), axis=1)
    return SparseSamples(x.shape, indices, x.reshape(-1, order="F"))


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = [_parse_size(s) for s in args.size]
    manifest = {
        "sizes": [list(s) for s in sizes],
        "missing": args.missing,
        "rank": args.rank,
        "pattern": args.pattern,
        "noise": args.noise,
        "instances": args.instances,
        "seed": args.seed,
        "sparse": args.sparse,
        "files": [],
    }
    for size_idx, shape in enumerate(sizes):
        for m_idx, missing in enumerate(args.missing):
            for inst_idx in range(args.instances):
                seed = bench_mod.instance_seed(args.seed, size_idx, m_idx, inst_idx)
                if args.sparse:
                    inst = gen_large_sparse(shape, missing, args.rank, args.noise, seed)
                    samples = inst.observed
                else:
                    inst = make_instance(
                        shape, args.rank, missing, args.noise, args.pattern, seed
                    )
                    samples = bench_mod._sparse_view(inst)
                stem = (
                    "inst_"
                    + "x".join(str(s) for s in shape)
                    + f"_m{int(round(missing * 100)):02d}_{inst_idx:03d}"
                )
                tns = out / f"{stem}.tns"
                truth = out / f"{stem}.truth.json"
                fileio.write_sparse_tensor(tns, samples)
                fileio.write_model(truth, inst.truth)
                manifest["files"].append(
                    {"tensor": tns.name, "truth": truth.name, "seed": seed,
                     "shape": list(shape), "missing": missing}
                )
    fileio.write_json(out / "manifest.json", manifest)
    print(f"wrote {len(manifest['files'])} instances to {out}")
    return 0


def _prepare_fit_data(args, data):
    """Apply preprocessing flags and densify if the method needs it."""
    samples = _as_samples(data) if not isinstance(data, SparseSamples) else data
    if args.log1p:
        samples = samples.with_values(np.log1p(samples.values))
    means = None
    if args.center_mode is not None:
        mode = int(args.center_mode) - 1
        samples, means = center_ignore_missing(samples, mode)
    if args.method == "cpwopt-sparse":
        return samples, samples, means
    total_bytes = 2 * 8 * int(np.prod(samples.shape))
    if total_bytes > args.memory_budget:
        raise UsageError(
            f"method {args.method} needs a dense tensor of {total_bytes} bytes, "
            f"over the memory budget of {args.memory_budget}; "
            "use cpwopt-sparse or raise --memory-budget"
        )
    x, w = samples.densify()
    return (x, w), samples, means


def cmd_fit(args) -> int:
    data = fileio.read_tensor(args.input)
    fit_data, samples, means = _prepare_fit_data(args, data)
    opt = _opt_config(args)
    inits = make_starts(fit_data, args.rank, args.starts, args.seed)
    if args.method == "em-als":
        x, w = fit_data
        cfg = EmAlsConfig(args.rank, rel_f_tol=opt.rel_f_tol, seed=args.seed)
        start_results = []
        best = None
        for idx, (kind, init) in enumerate(inits):
            model, result = em_als_fit(x, w, cfg, init)
            start_results.append((idx, kind, result, model))
            if best is None or result.f < best[2].f:
                best = (idx, kind, result, model)
        best_model = best[3]
        records = [
            {
                "start": idx,
                "init": kind,
                "f": res.f,
                "stop_reason": res.stop_reason,
                "iterations": res.iterations,
                "fevals": res.fevals,
                "seconds": res.seconds,
            }
            for idx, kind, res, _ in start_results
        ]
        best_index = best[0]
    else:
        cfg = FitConfig(args.rank, args.starts, args.seed, opt)
        best_model, start_recs = fit_cpwopt(fit_data, cfg, inits=inits)
        records = []
        best_index = None
        best_f = None
        for rec in start_recs:
            row = {"start": rec.index, "init": rec.init_kind, "error": rec.error}
            if rec.result is not None:
                row.update(
                    f=rec.result.f,
                    stop_reason=rec.result.stop_reason,
                    iterations=rec.result.iterations,
                    fevals=rec.result.fevals,
                    seconds=rec.result.seconds,
                )
                if rec.usable and (best_f is None or rec.result.f < best_f):
                    best_f = rec.result.f
                    best_index = rec.index
            records.append(row)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fileio.write_model(f"{out}.model.json", best_model)
    payload = {
        "input": str(args.input),
        "method": args.method,
        "rank": args.rank,
        "starts": args.starts,
        "seed": args.seed,
        "log1p": bool(args.log1p),
        "center_mode": args.center_mode,
        "best_start": best_index,
        "starts_detail": records,
    }
    if means is not None:
        payload["center_means"] = [float(v) for v in means]
    fileio.write_json(f"{out}.result.json", payload)
    print(f"best start {best_index}: f = {min(r['f'] for r in records if 'f' in r):.6e}")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    report = {}
    if args.truth:
        truth = _load_model(args.truth)
        score = fms(truth, model)
        report["fms"] = score.fms
        report["permutation"] = score.permutation
        report["congruences"] = score.congruences
    if args.full:
        if not args.observed:
            raise UsageError("--full requires --observed to define the known mask")
        full = fileio.read_tensor(args.full)
        if isinstance(full, SparseSamples):
            full, _ = full.densify()
        observed = fileio.read_tensor(args.observed)
        observed = _as_samples(observed) if not isinstance(observed, SparseSamples) else observed
        _, w = observed.densify()
        report["tcs"] = tcs(full, w, model)
    if args.missing is not None:
        report["rho"] = rho(model.shape, model.rank, args.missing)
    if not report:
        raise UsageError("nothing to evaluate: pass --truth and/or --full/--observed")
    row = " ".join(f"{k}={v:.6f}" for k, v in report.items() if isinstance(v, float))
    if args.out:
        fileio.write_json(args.out, report)
        print(row)
    else:
        print(json.dumps(report, indent=2))
        print(row, file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = bench_mod.ExperimentSpec(
        sizes=[_parse_size(s) for s in args.size],
        rank=args.rank,
        missing=args.missing,
        pattern=args.pattern,
        noise=args.noise,
        instances=args.instances,
        starts=args.starts,
        methods=tuple(args.method) if args.method else ("cpwopt-dense", "em-als"),
        seed=args.seed,
        sparse=args.sparse,
        opt=_opt_config(args),
    )
    report = bench_mod.run_bench(spec)
    fileio.write_json(out / "records.json", report)
    table = bench_mod.format_report(report)
    (out / "report.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_complete(args) -> int:
    model = _load_model(args.model)
    if args.indices:
        rows = []
        with open(args.indices) as fh:
            for ln in fh:
                ln = ln.strip()
                if not ln:
                    continue
                rows.append([int(t) - 1 for t in ln.split()])
        indices = (
            np.array(rows, dtype=np.int64)
            if rows
            else np.zeros((0, model.ndim), dtype=np.int64)
        )
    elif args.missing_of:
        observed = fileio.read_tensor(args.missing_of)
        if not isinstance(observed, SparseSamples):
            raise UsageError("--missing-of expects a coordinate (sparse) tensor file")
        total = int(np.prod(observed.shape))
        known = np.zeros(total, dtype=bool)
        known[observed.linear_indices()] = True
        lin = np.nonzero(~known)[0]
        indices = np.stack(np.unravel_index(lin, observed.shape, order="F"), axis=1)
    else:
        raise UsageError("pass --indices or --missing-of")
    values = ktensor_values_at(model, indices)
    lines = [
        " ".join(str(i + 1) for i in idx) + f" {float(val)!r}"
        for idx, val in zip(indices, values)
    ]
    text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + ("\n" if lines else ""))
    else:
        if text:
            print(text)
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "complete": cmd_complete,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, fileio.FileFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
