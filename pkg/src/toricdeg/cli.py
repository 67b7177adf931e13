"""Command line front end.

Usage::

    toricdeg SUBCOMMAND --spec PATH [--out DIR] [--seed N] [--panels N]
             [--mode exact|glued] [--format csv|json]

Exit status: 0 success, 2 validation failure, 1 I/O or parse error,
64 unknown subcommand or bad usage. Reports carry a format version and no
timestamps; timing goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import degeneration as dg
from . import model_metrics as mt
from . import wp_asymptotics as wp
from .fan_pl import FanError, convexify
from .specfile import SpecFile, SpecFileError, dumps, load

REPORT_VERSION = 1
SUBCOMMANDS = ("check", "reduce", "strata", "lambda", "metric-sample", "volume",
               "wp-decay", "atlas-validate")
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="toricdeg", description="Toric degeneration analyses.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--spec", required=True, help="spec file (JSON)")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--panels", type=int, default=8, help="Gauss-Legendre order per panel")
    p.add_argument("--samples", type=int, default=20, help="points per chart and tau (metric-sample)")
    p.add_argument("--mode", choices=("exact", "glued"), default="exact")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    return p


def _q(x: Fraction) -> str:
    return str(Fraction(x))


def _fmt(x) -> str:
    """Stable float text (17 significant digits)."""
    return repr(float(x))


def _ray(r) -> str:
    return "(" + ",".join(map(str, r)) + ")"


# -- analyses ----------------------------------------------------------------


def run_check(sf, args):
    spec = dg.DegenerationSpec(sf.rays, sf.weights, sf.eta, sf.tau_grid, sf.rho, convexify=False)
    red = spec.reduced()
    rows = [{"cone": mt.Chart(red, c).id if c.is_simplicial else _ray(c.rays),
             "multiplicity": dg.divisor_multiplicity(red, c)} for c in red.fan.maximal]
    rec = {
        "convex": spec.convex,
        "dropped_rays": [list(r) for r in spec.dropped],
        "simple": dg.is_simple(red),
        "d": dg.minimal_base_extension(red),
        "simplicial": red.fan.is_simplicial(),
        "complete": red.fan.is_complete(),
        "census": {str(k): v for k, v in red.fan.census().items()},
        "multiplicities": rows,
    }
    return rec, rows


def run_lambda(sf, args):
    l1, l2 = dg.lambda_constants(sf.to_spec())
    rec = {"lambda1": _q(l1), "lambda2": _q(l2), "lambda1_float": float(l1), "lambda2_float": float(l2)}
    return rec, [rec]


def run_metric_sample(sf, args):
    spec = sf.to_spec()
    rng = np.random.default_rng(args.seed)
    rows = []
    for ch in mt.charts(spec):
        bound = mt.metric_bound(spec, ch)
        for tau in spec.tau_grid:
            for pt in mt.sample_chart(spec, ch, tau, args.samples, rng):
                flags = []
                try:
                    ms = mt.metric_matrix(spec, pt, mode=args.mode)
                except mt.PositivityError:
                    rows.append({"chart": ch.id, "tau": _fmt(tau),
                                 **{f"a{j + 1}": _fmt(x) for j, x in enumerate(pt.a)},
                                 "min_eig": "nan", "max_eig": "nan", "phi": "nan",
                                 "flags": "positivity"})
                    continue
                if ms.min_eig < 1 - 1e-12 and args.mode == "exact":
                    flags.append("min_eig")
                if ms.max_eig > bound:
                    flags.append("max_eig")
                rows.append({"chart": ch.id, "tau": _fmt(tau),
                             **{f"a{j + 1}": _fmt(x) for j, x in enumerate(pt.a)},
                             "min_eig": _fmt(ms.min_eig), "max_eig": _fmt(ms.max_eig),
                             "phi": _fmt(ms.phi), "flags": ";".join(flags)})
    rec = {"mode": args.mode, "seed": args.seed, "samples": rows,
           "violations": sum(1 for r in rows if r["flags"])}
    return rec, rows


def run_volume(sf, args):
    spec = sf.to_spec()
    rows = []
    for ch in mt.charts(spec):
        n = ch.n
        target = math.factorial(n) * 2**n
        for tau in spec.tau_grid:
            vol, err = wp.chart_volume(spec, ch, tau, order=args.panels)
            rows.append({"chart": ch.id, "tau": _fmt(tau), "volume": _fmt(vol),
                         "volume_eta_n": _fmt(vol * spec.eta**n), "target": target,
                         "quad_error": _fmt(err)})
    return {"eta": spec.eta, "volumes": rows}, rows


def run_wp_decay(sf, args):
    spec = sf.to_spec()
    rows, fits = [], []
    for ch in mt.charts(spec):
        fit = wp.wp_decay(spec, ch, order=args.panels)
        for t, r, s, e in zip(fit.taus, fit.ratios, fit.scaled, fit.errors):
            rows.append({"spec": spec.name or "spec", "chart": ch.id, "eta": _fmt(spec.eta),
                         "tau": _fmt(t), "wp_ratio": _fmt(r), "ratio_tau3": _fmt(s),
                         "C_fit": _fmt(fit.C), "exponent": _fmt(fit.exponent), "quad_error": _fmt(e)})
        fits.append({"chart": ch.id, "exponent": _fmt(fit.exponent), "C": _fmt(fit.C), "K": _fmt(fit.K),
                     "C_lower": _fmt(fit.lower)})
    return {"fits": fits, "rows": rows}, rows


def run_strata(sf, args):
    poset = dg.strata(sf.to_spec())
    return poset.to_json(), None


def run_reduce(sf, args):
    # only the lower hull is needed, so inputs whose rays do not positively
    # span (no complete fan) can still be reduced
    try:
        rays, weight = convexify(sf.rays, sf.weights)
    except FanError as exc:
        raise dg.SpecError(str(exc)) from exc
    out = SpecFile(sf.rank, [tuple(r) for r in rays], [weight.values[r] for r in rays], sf.eta,
                   list(sf.tau_grid), sf.rho, analyses=list(sf.analyses), name=sf.name)
    return out, None


def run_atlas(sf, args):
    if not sf.charts:
        raise dg.SpecError("spec has no atlas block")
    atlas = sf.to_atlas()
    rep = dg.validate_atlas(atlas)
    rec = rep.to_json()
    rec["min_extension"] = dg.toroidal_min_extension(atlas) if rep.valid else None
    return rec, [{"violation": v} for v in rep.violations]


HANDLERS = {
    "check": run_check, "reduce": run_reduce, "strata": run_strata, "lambda": run_lambda,
    "metric-sample": run_metric_sample, "volume": run_volume, "wp-decay": run_wp_decay,
    "atlas-validate": run_atlas,
}


# -- output -------------------------------------------------------------------


def _csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        keys = list(rows[0])
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})
    return buf.getvalue()


def render(sub, result, rows, fmt) -> tuple[str, str]:
    """Report text and file extension."""
    if sub == "reduce":
        return dumps(result), "json"
    if fmt == "csv" and rows is not None:
        return _csv_text(rows), "csv"
    doc = {"report_version": REPORT_VERSION, "subcommand": sub, "result": result}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n", "json"


_VALUED = {"--spec", "--out", "--seed", "--panels", "--samples", "--mode", "--format"}


def _subcommand_token(argv) -> str | None:
    """First positional token, skipping option values."""
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok.startswith("-"):
            skip = tok in _VALUED
            continue
        return tok
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    sub = _subcommand_token(argv)
    if sub not in SUBCOMMANDS:
        sys.stderr.write(build_parser().format_usage())
        sys.stderr.write(f"unknown subcommand: {sub or '(none)'}\n")
        return EXIT_USAGE
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(build_parser().format_usage() + f"error: {exc}\n")
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        sf = load(args.spec)
    except OSError as exc:
        sys.stderr.write(f"error: cannot read spec: {exc}\n")
        return EXIT_IO
    except SpecFileError as exc:
        sys.stderr.write(f"{args.spec}:{exc}\n")
        return EXIT_IO
    try:
        result, rows = HANDLERS[args.subcommand](sf, args)
    except (dg.SpecError, ValueError) as exc:
        sys.stderr.write(f"validation failure: {exc}\n")
        return EXIT_INVALID
    text, ext = render(args.subcommand, result, rows, args.format)
    status = EXIT_OK
    if args.subcommand == "atlas-validate" and not result["valid"]:
        status = EXIT_INVALID
    if args.subcommand == "metric-sample" and result["violations"]:
        status = EXIT_INVALID
    if args.out:
        try:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, f"{args.subcommand}.{ext}")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            sys.stderr.write(f"error: cannot write report: {exc}\n")
            return EXIT_IO
    else:
        sys.stdout.write(text)
    sys.stderr.write(f"{args.subcommand}: {time.perf_counter() - start:.3f}s\n")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
