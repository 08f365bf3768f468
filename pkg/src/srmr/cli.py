"""Command-line interface: ``srmr simulate | fit | eval | bench | test-significance | plotdata``.

Exit codes: 0 ok, 2 configuration or input error, 3 infeasible model,
4 input mismatch, 5 fit failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
import xml.etree.ElementTree as ET
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import (
    FitFailedError,
    InfeasibleKError,
    SRMRError,
    UnknownPresetError,
)
from .fit import FitOptions, _threads, select_k, srmr_fit
from .inference import region_significance
from .io import (
    fit_to_report,
    load_scenario,
    read_dataset,
    read_report,
    read_truth,
    report_to_fit,
    write_dataset,
    write_report,
    write_scenario,
    write_truth,
)
from .metrics import evaluate, evaluate_arrays
from .simgen import generate, preset, preset_names, with_seed

log = logging.getLogger("srmr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_MISMATCH = 4
EXIT_FIT_FAILED = 5

DEFAULT_REPLICATES = 100
METRIC_COLUMNS = ("RI", "ARI", "ACC", "PCE")


class MismatchError(SRMRError, ValueError):
    """Two inputs that must describe the same rows do not."""


# ---------------------------------------------------------------- helpers

def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower() or "scenario"


def replicate_seed(seed: int, setting: int, replicate: int) -> int:
    """Seed of one replicate, derived independently of how many replicates run."""
    return int(np.random.SeedSequence([seed, setting, replicate]).generate_state(1)[0])


def _scenarios(args) -> list:
    cfgs = []
    for name in args.preset or ():
        cfgs.extend(preset(name))
    for path in args.config or ():
        cfgs.append(load_scenario(path))
    if not cfgs:
        raise argparse.ArgumentTypeError("give at least one --preset or --config")
    return cfgs


def _parse_k_range(text: str) -> list:
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.|-|:)\s*(\d+)\s*", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo < 1 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad K range {text!r}")
        return list(range(lo, hi + 1))
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K range {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"bad K range {text!r}")
    return ks


def _options(args) -> FitOptions:
    return FitOptions(lam=args.lam, alpha=args.alpha, cutoff=args.cutoff, J=args.J,
                      L0=args.L0, n0=args.n0, tau2=args.tau2)


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "NA" if v is None else repr(float(v))


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    cfgs = _scenarios(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_files = 0
    for i, cfg in enumerate(cfgs):
        stem = f"{i:02d}-{_slug(cfg.name)}"
        for r in range(args.replicates):
            rcfg = with_seed(cfg, replicate_seed(args.seed, i, r))
            lds = generate(rcfg)
            base = out / f"{stem}_r{r:03d}"
            write_dataset(base.with_name(base.name + ".csv"), lds.data)
            write_truth(base.with_name(base.name + ".truth.csv"), lds)
            write_scenario(base.with_name(base.name + ".scenario.json"), rcfg)
            n_files += 1
    print(f"wrote {n_files} datasets to {out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    ds = read_dataset(args.data)
    opts = _options(args)
    if args.k_range is not None:
        fit = select_k(ds, args.k_range, seed=args.seed, options=opts, criterion=args.criterion)
    else:
        fit = srmr_fit(ds, args.K, seed=args.seed, options=opts)
    rep = fit_to_report(fit, ds, options={
        "lambda": opts.lam, "alpha": opts.alpha, "cutoff": opts.cutoff, "J": opts.J,
        "L0": opts.L0, "n0": opts.n0, "criterion": args.criterion,
    })
    if args.out is None or args.out == "-":
        sys.stdout.write(_json(rep))
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_report(args.out, rep)
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _scenario_for(truth_path, explicit):
    if explicit:
        return load_scenario(explicit)
    guess = Path(str(truth_path).replace(".truth.csv", ".scenario.json"))
    if guess != Path(truth_path) and guess.exists():
        return load_scenario(guess)
    return None


def cmd_eval(args) -> int:
    rep = read_report(args.report)
    truth = read_truth(args.truth)
    fit = report_to_fit(rep)
    n_fit = fit.assignment.labels.shape[0]
    if n_fit != truth["labels"].shape[0]:
        raise MismatchError(f"fit report has {n_fit} rows but truth has {truth['labels'].shape[0]}")
    cfg = _scenario_for(args.truth, args.scenario)
    true_betas = cfg.betas if cfg is not None else None
    res = evaluate_arrays(
        pred_labels=fit.assignment.labels,
        pred_type1=fit.assignment.type1,
        pred_type2=fit.assignment.type2,
        fitted_betas=fit.model.betas,
        true_labels=truth["labels"],
        true_type1=truth["type1"],
        true_type2=truth["type2"],
        true_betas=true_betas if true_betas is not None else fit.model.betas,
    ).to_dict()
    if true_betas is None:
        log.warning("no scenario file found; PCE reported as null")
        res["PCE"] = None
    _emit(_json(res), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- bench

def _bench_one(job):
    setting, replicate, cfg, seed, opts = job
    try:
        lds = generate(with_seed(cfg, seed))
        fit = srmr_fit(lds.data, cfg.K, seed=seed, options=opts, n_jobs=1)
        return setting, replicate, evaluate(fit, lds).to_dict(), None
    except SRMRError as exc:
        return setting, replicate, None, f"{type(exc).__name__}: {exc}"


def _mean(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


def bench_table(cfgs, replicates: int, seed: int, opts: FitOptions, threads: int = 1) -> str:
    """Run generate -> fit -> evaluate over every setting and replicate; return the CSV table."""
    jobs = [(i, r, cfg, replicate_seed(seed, i, r), opts)
            for i, cfg in enumerate(cfgs) for r in range(replicates)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    results.sort(key=lambda t: (t[0], t[1]))

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "name", "K", "N", "replicates", "failed", *METRIC_COLUMNS])
    for i, cfg in enumerate(cfgs):
        rows = [t for t in results if t[0] == i]
        ok = [t[2] for t in rows if t[2] is not None]
        for t in rows:
            if t[3] is not None:
                log.warning("setting %d replicate %d failed: %s", i, t[1], t[3])
        means = [_mean(d[c] for d in ok) for c in METRIC_COLUMNS]
        w.writerow([i, cfg.name, cfg.K, cfg.N, len(rows), len(rows) - len(ok),
                    *(_fmt(m) for m in means)])
    return buf.getvalue()


def cmd_bench(args) -> int:
    cfgs = _scenarios(args)
    threads = args.threads if args.threads is not None else _threads(None)
    table = bench_table(cfgs, args.replicates, args.seed, _options(args), threads=threads)
    _emit(table, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- test-significance

def cmd_test_significance(args) -> int:
    ds = read_dataset(args.data)
    rep = read_report(args.report)
    fit = report_to_fit(rep)
    if fit.assignment.labels.shape[0] != ds.n:
        raise MismatchError(f"fit report has {fit.assignment.labels.shape[0]} rows but data has {ds.n}")
    out = []
    for k in range(1, fit.model.K + 1):
        try:
            out.append(region_significance(fit, ds, k, B=args.B, seed=args.seed).to_dict())
        except SRMRError as exc:
            out.append({"component": k, "error": str(exc)})
    _emit(_json({"B": args.B, "seed": args.seed, "regions": out}), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- plotdata

PALETTE = ("#444444", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
LINE_SAMPLES = 50


def _scatter_panel(parent, x0, pts, labels, lines, title, size=360, pad=30):
    g = ET.SubElement(parent, "g", transform=f"translate({x0},0)")
    ET.SubElement(g, "rect", x="0", y="0", width=str(size), height=str(size),
                  fill="white", stroke="black")
    ET.SubElement(g, "text", x=str(size / 2), y="18", attrib={"text-anchor": "middle"}).text = title
    allx = np.concatenate([pts[:, 0]] + [ln[:, 0] for ln in lines]) if lines else pts[:, 0]
    ally = np.concatenate([pts[:, 1]] + [ln[:, 1] for ln in lines]) if lines else pts[:, 1]
    lo = np.array([allx.min(), ally.min()])
    hi = np.array([allx.max(), ally.max()])
    span = np.where(hi > lo, hi - lo, 1.0)

    def tx(p):
        u = (p - lo) / span
        return pad + u[..., 0] * (size - 2 * pad), size - pad - u[..., 1] * (size - 2 * pad)

    for k, ln in enumerate(lines, start=1):
        xs, ys = tx(ln)
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        ET.SubElement(g, "polyline", points=d, fill="none",
                      stroke=PALETTE[k % len(PALETTE)], attrib={"stroke-width": "1.5"})
    xs, ys = tx(pts)
    for a, b, lab in zip(xs, ys, labels):
        ET.SubElement(g, "circle", cx=f"{a:.2f}", cy=f"{b:.2f}", r="2.5",
                      fill=PALETTE[int(lab) % len(PALETTE)],
                      attrib={"fill-opacity": "0.8"})


def render_svg(ds, labels, lines) -> str:
    size = 360
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(2 * size + 20), height=str(size))
    _scatter_panel(svg, 0, np.column_stack([ds.X[:, 1], ds.y]), labels, lines,
                   "response vs predictor")
    _scatter_panel(svg, size + 20, ds.S, labels, [], "coordinates")
    return ET.tostring(svg, encoding="unicode") + "\n"


def cmd_plotdata(args) -> int:
    ds = read_dataset(args.data)
    rep = read_report(args.report)
    fit = report_to_fit(rep)
    if fit.assignment.labels.shape[0] != ds.n:
        raise MismatchError(f"fit report has {fit.assignment.labels.shape[0]} rows but data has {ds.n}")
    labels = fit.assignment.labels
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write(name, header, rows):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        (out / name).write_text(buf.getvalue(), encoding="utf-8")

    write("regression.csv", ["x", "y", "label"],
          ([_fmt(ds.X[i, 1]), _fmt(ds.y[i]), int(labels[i])] for i in range(ds.n)))
    write("coords.csv", ["sx", "sy", "label"],
          ([_fmt(ds.S[i, 0]), _fmt(ds.S[i, 1]), int(labels[i])] for i in range(ds.n)))
    lines = []
    if ds.p == 1:
        grid = np.linspace(ds.X[:, 1].min(), ds.X[:, 1].max(), LINE_SAMPLES)
        rows = []
        for k, b in enumerate(fit.model.betas, start=1):
            yk = b[0] + b[1] * grid
            lines.append(np.column_stack([grid, yk]))
            rows.extend([k, _fmt(x), _fmt(y)] for x, y in zip(grid, yk))
        write("lines.csv", ["component", "x", "y"], rows)
    else:
        log.warning("fitted lines are only emitted for a single predictor")
    if not args.no_svg:
        (out / "scatter.svg").write_text(render_svg(ds, labels, lines), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_fit_options(p):
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="weight of the spatial posterior (default 0.5)")
    p.add_argument("--alpha", type=float, default=0.45, help="LTS trim fraction inside clusters")
    p.add_argument("--cutoff", type=float, default=3.0, help="outlier cutoff in robust scales")
    p.add_argument("--J", type=int, default=10, help="number of random starts")
    p.add_argument("--L0", type=int, default=20, help="outer iteration cap")
    p.add_argument("--n0", type=int, default=None, help="size of the initial random subsets")
    p.add_argument("--tau2", type=float, default=None, help="spatial kernel variance")


def _add_scenarios(p):
    p.add_argument("--preset", action="append", metavar="NAME",
                   help=f"named scenario ({', '.join(preset_names())}); repeatable")
    p.add_argument("--config", action="append", metavar="PATH",
                   help="scenario JSON file; repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srmr", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic datasets with truth sidecars")
    _add_scenarios(p)
    p.add_argument("--replicates", type=int, default=DEFAULT_REPLICATES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model and write a JSON report")
    p.add_argument("data")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--K", "-K", type=int)
    g.add_argument("--k-range", type=_parse_k_range, help="e.g. 1..4 or 1,2,3")
    p.add_argument("--criterion", choices=("noise", "trimmed"), default="noise",
                   help="information criterion used with --k-range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a fit report against a truth sidecar")
    p.add_argument("report")
    p.add_argument("truth")
    p.add_argument("--scenario", default=None,
                   help="scenario JSON with the true coefficients (default: next to the truth file)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="mean metrics over replicates per setting")
    _add_scenarios(p)
    p.add_argument("--replicates", type=int, default=DEFAULT_REPLICATES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default SRMR_THREADS)")
    p.add_argument("--out", default=None)
    _add_fit_options(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("test-significance", help="bootstrap significance per fitted region")
    p.add_argument("data")
    p.add_argument("report")
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_test_significance)

    p = sub.add_parser("plotdata", help="scatter and fitted-line files for plotting")
    p.add_argument("report")
    p.add_argument("data")
    p.add_argument("--out", default="plot")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="srmr: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UnknownPresetError as exc:
        print(f"srmr: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleKError as exc:
        print(f"srmr: infeasible model: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MismatchError as exc:
        print(f"srmr: input mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FitFailedError as exc:
        print(f"srmr: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT_FAILED
    except (SRMRError, argparse.ArgumentTypeError, OSError, KeyError, ValueError) as exc:
        print(f"srmr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
