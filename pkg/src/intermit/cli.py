"""Command-line interface: ``intermit synth | analyze | check | plots``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import scipy.fft
from pydantic import ValidationError

from . import __version__
from .config import RunConfig, parse_window
from .corpus import CORPUS, corpus_manifest, synthesize
from .formats import dumps_json, write_vf1
from .grid import ConfigurationError
from .pipeline import corpus_check, emit_plots, run_pipeline


def _threads(value: int | None) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("INTERMIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(f"INTERMIT_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"parameters must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intermit", description="Intermittency diagnostics for periodic velocity fields.")
    ap.add_argument("--version", action="version", version=f"intermit {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help="FFT worker threads (default: $INTERMIT_THREADS, else all cores); outputs do not depend on it")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a corpus field as a VF1 file")
    s.add_argument("name", nargs="?", choices=sorted(CORPUS))
    s.add_argument("--out", help="output VF1 path")
    s.add_argument("--n", type=int, default=None, help="grid points per axis")
    s.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter (JSON value)")
    s.add_argument("--manifest", metavar="PATH", help="write the corpus manifest (corpus.json) and exit")

    a = sub.add_parser("analyze", help="run every diagnostic and write the report bundle")
    a.add_argument("input", nargs="?", help="VF1 field file")
    a.add_argument("--synth", choices=sorted(CORPUS), help="analyse a freshly generated corpus field")
    a.add_argument("--n", type=int, default=None)
    a.add_argument("--param", action="append", metavar="KEY=VALUE")
    a.add_argument("--config", metavar="JSON", help="RunConfig as JSON; command-line flags override it")
    a.add_argument("--window", type=parse_window, help="fit window LO:HI")
    a.add_argument("--sigma", choices=["harmonic", "log", "constant"])
    a.add_argument("--sigma-scale", type=float)
    a.add_argument("--M", type=int, choices=[1, 2])
    a.add_argument("--K", type=_int_list, help="truncations, comma separated")
    a.add_argument("--p", type=_float_list, help="multifractal orders (>= 3), comma separated")
    a.add_argument("--ntheta", type=int)
    a.add_argument("--separations", type=int)
    a.add_argument("--theta", type=float, help="singular-cell threshold relative to eps_bar")
    a.add_argument("--cells", type=_int_list, help="regularity cells per axis, e.g. 2,2,8")
    a.add_argument("--index-set", choices=["complete", "paper"])
    a.add_argument("--dealias", action="store_true", default=None)
    a.add_argument("--out", default=None, help="report directory (default: report)")

    c = sub.add_parser("check", help="corpus regression against the manifest expectations")
    c.add_argument("--n", type=int, default=None, help="override every field's grid size")
    c.add_argument("--field", action="append", choices=sorted(CORPUS))
    c.add_argument("--full", action="store_true", help="include atom- and structure-function-based checks")
    c.add_argument("--out", default=None, help="write the check table as JSON")

    p = sub.add_parser("plots", help="write PC1 plot-data CSVs from a report bundle")
    p.add_argument("bundle")
    p.add_argument("--out", default=None)
    return ap


def _analyze_config(args) -> RunConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "input": args.input, "synth": args.synth, "n": args.n, "window": args.window, "sigma": args.sigma,
        "sigma_scale": args.sigma_scale, "M": args.M, "K_list": args.K, "p_list": args.p, "n_theta": args.ntheta,
        "separations": args.separations, "theta": args.theta,
        "cells": tuple(args.cells) if args.cells else None, "index_set": args.index_set,
        "dealias": args.dealias, "out": args.out,
    }
    if args.param:
        overrides["synth_params"] = _params(args.param)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workers = _threads(args.threads)
    try:
        with scipy.fft.set_workers(workers):
            return _dispatch(args)
    except (ConfigurationError, ValidationError, OSError) as exc:
        print(f"intermit: error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "synth":
        if args.manifest:
            Path(args.manifest).write_text(corpus_manifest(), encoding="utf-8")
            return 0
        if not args.name or not args.out:
            raise ConfigurationError("synth needs a field name and --out")
        u = synthesize(args.name, args.n, **_params(args.param))
        write_vf1(args.out, u)
        print(f"wrote {args.out}: {args.name} {u.grid.shape}")
        return 0
    if args.command == "analyze":
        cfg = _analyze_config(args)
        report = run_pipeline(cfg)
        h = report.summary["headline"]
        failed = [k for k, v in report.summary["invariants"].items() if not v["pass"]]
        print(f"d = {h['d']}, h = {h['h']}, eps = {h['eps']}, eps_bar = {h['eps_bar']}")
        print("invariants: " + ("all pass" if not failed else "FAILED " + ", ".join(failed)))
        print(f"reports in {cfg.out}")
        return report.exit_code
    if args.command == "check":
        res = corpus_check(args.field, args.n, args.full)
        for r in res["rows"]:
            verdict = "skip" if r["pass"] is None else ("PASS" if r["pass"] else "FAIL")
            meas = "n/a" if r["measured"] is None else f"{r['measured']:.4g}"
            print(f"{verdict}  {r['field']:<22} {r['quantity']:<14} measured {meas:>10}  "
                  f"expected {r['expected']:.4g} +- {r['tolerance']:.3g}")
        if args.out:
            Path(args.out).write_text(dumps_json(res), encoding="utf-8")
        return 0 if res["all_pass"] else 1
    if args.command == "plots":
        for path in emit_plots(args.bundle, args.out):
            print(path)
        return 0
    raise ConfigurationError(f"unknown command {args.command}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
