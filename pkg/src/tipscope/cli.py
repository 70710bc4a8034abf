"""Command-line front end.

Subcommands: ``run``, ``sweep``, ``reproduce`` and ``critical-rate``.
Exit codes: 0 success, 1 failed rows in ``reproduce``, 2 usage or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import reproduce as repro
from .config import ConfigError, ExperimentConfig, default_out_dir
from .detect import (
    DetectorInapplicableError,
    DetectorInputError,
    DetectorSettings,
    HORIZON_FACTOR,
    Method,
    critical_rate_search,
    run_detectors,
)
from .integrate import IntegrationError
from .spectra import SpectraInputError
from .systems import BUILTIN_NAMES, SingularityError, UnknownSystemError

log = logging.getLogger("tipscope")

EXIT_OK, EXIT_REPORT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = [m.value for m in Method]


class UsageError(Exception):
    pass


def fmt(v) -> str:
    """Full-precision, locale-independent number formatting."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_table(path: Path, header: list[str], rows, fmt_name: str) -> Path:
    if fmt_name == "json":
        path = path.with_suffix(".json")
        data = [[None if (isinstance(v, float) and not math.isfinite(v)) else v for v in map(_plain, r)] for r in rows]
        path.write_text(json.dumps({"columns": header, "data": data}) + "\n")
        return path
    path = path.with_suffix(".csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def trajectory_rows(traj):
    n = traj.dim
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + ["lambda"]
    if traj.has_qr:
        header += [f"q_{i + 1}{j + 1}" for i in range(n) for j in range(n)] + [f"b_{i + 1}" for i in range(n)]
    rows = []
    for k in range(len(traj)):
        row = [traj.times[k], *traj.states[k], traj.lambdas[k]]
        if traj.has_qr:
            row += list(traj.q_factors[k].ravel()) + list(traj.b_diag[k])
        rows.append(row)
    return header, rows


def steklov_rows(series):
    n = series.values.shape[1]
    header = ["t"] + [f"mu_{i + 1}" for i in range(n)] + [f"dmu_{i + 1}" for i in range(n)]
    rows = [[series.times[k], *series.values[k], *series.derivatives[k]] for k in range(len(series))]
    return header, rows


# -- subcommands ------------------------------------------------------------

def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.system:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "system": args.system})
        if args.rate is not None:
            cfg.rate = args.rate
    else:
        if not args.system or args.rate is None:
            raise UsageError("--system and --rate are required without --config")
        cfg = ExperimentConfig(system=args.system, rate=args.rate)
    det = cfg.detector.to_dict()
    for key, attr in (("window", "window"), ("epsilon", "epsilon"), ("h", "h"), ("radius", "radius"),
                      ("transient_skip", "transient_skip")):
        val = getattr(args, attr, None)
        if val is not None:
            det[key] = val
    cfg.detector = DetectorSettings.from_dict(det)
    if getattr(args, "reference_rate", None) is not None:
        cfg.reference_rate = args.reference_rate
    if args.out:
        cfg.out_dir = args.out
    if getattr(args, "format", None):
        cfg.format = args.format
    ExperimentConfig.from_dict(cfg.to_dict())  # re-validate after overrides
    return cfg


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    system = cfg.build_system()
    out = run_detectors(system, cfg.settings(), cfg.integration, x0=cfg.initial_condition,
                        t_span=cfg.t_span)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = [write_table(outdir / "trajectory", *trajectory_rows(out["test"]), cfg.format)]
    if out["steklov"] is not None:
        files.append(write_table(outdir / "steklov", *steklov_rows(out["steklov"]), cfg.format))
    if out["angle"] is not None:
        a = out["angle"]
        files.append(write_table(outdir / "angle", ["t", "angle"], zip(a.times, a.angles), cfg.format))
    test = out["test"]
    report = {
        "system": cfg.system_name,
        "rate": cfg.rate,
        "reference_rate": None if out["reference"] is None else out["reference"].rate,
        "diverged": test.diverged,
        "integration": test.diagnostics,
        "detections": [r.to_dict() for r in out["results"]],
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_plain) + "\n")
    cfg.save(outdir / "config.json")
    for r in out["results"]:
        t = "-" if r.tip_time is None else f"{r.tip_time:g}"
        print(f"{r.method.value:<19} {r.status:<13} {t}")
    print(f"wrote {', '.join(str(f) for f in files)}, {outdir / 'report.json'}")
    return EXIT_OK


def parse_rates(args) -> list[float]:
    rates = []
    if args.rates:
        try:
            rates = [float(v) for v in args.rates.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"cannot parse rates {args.rates!r}") from None
    if args.range:
        start, stop, num = args.range
        if num < 1 or int(num) != num:
            raise UsageError("range count must be a positive integer")
        rates += list(np.linspace(start, stop, int(num)))
    if not rates or not all(math.isfinite(r) for r in rates):
        raise UsageError("sweep needs a nonempty list of finite rates")
    return sorted(set(rates))


def _sweep_row(args):
    cfg_dict, rate = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        out = run_detectors(cfg.build_system(rate), cfg.settings(), cfg.integration,
                            x0=cfg.initial_condition, t_span=cfg.t_span)
        return {r.method.value: r for r in out["results"]}, None
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    rates = parse_rates(args)
    if args.rate is None and args.config is None:
        args.rate = rates[0]  # placeholder; each row sets its own rate
    cfg = config_from_args(args)
    jobs = [(cfg.to_dict(), r) for r in rates]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    header = ["rate"]
    for m in METHODS:
        header += [f"tipped_{m}", f"tip_time_{m}"]
    header.append("error")
    rows = []
    for rate, (found, err) in zip(rates, results):
        row = [rate]
        for m in METHODS:
            r = None if found is None else found.get(m)
            row += ["" if r is None else r.tipped, None if r is None else r.tip_time]
        row.append(err or "")
        rows.append(row)
        print(fmt(rate), " ".join(f"{m}={'-' if found is None or m not in found else found[m].status}" for m in METHODS),
              err or "")
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = write_table(outdir / "sweep", header, rows, cfg.format)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    outcomes = repro.reproduce(jobs=args.jobs)
    print(repro.format_table(outcomes))
    outdir = Path(args.out or default_out_dir())
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "reproduce.json").write_text(repro.report_json(outcomes))
    ok = all(o.passed for o in outcomes)
    print(f"{sum(o.passed for o in outcomes)}/{len(outcomes)} rows pass; wrote {outdir / 'reproduce.json'}")
    return EXIT_OK if ok else EXIT_REPORT


def cmd_critical_rate(args) -> int:
    given = {k: getattr(args, k) for k in ("epsilon", "h", "window", "radius", "reference_rate")}
    settings = DetectorSettings.from_dict({k: v for k, v in given.items() if v is not None})
    lo, hi = args.bracket
    res = critical_rate_search(args.system, lo, hi, args.detector, args.tol, settings, horizon=args.horizon)
    for rate, tipped in res.history:
        print(f"r={fmt(rate)} {'tip' if tipped else 'no tip'}")
    print(f"r_c = {res.rate:.6g} (bracket [{res.bracket[0]:.8g}, {res.bracket[1]:.8g}])")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, rate=True):
    p.add_argument("--system", help=f"built-in system: {', '.join(BUILTIN_NAMES)}")
    if rate:
        p.add_argument("--rate", type=float)
    p.add_argument("--reference-rate", type=float, help="untipped comparison rate (default per system)")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory (default $TIPSCOPE_OUT or ./tipscope-out)")
    p.add_argument("--window", type=float, help="Steklov window H")
    p.add_argument("--epsilon", type=float, help="Steklov derivative threshold")
    p.add_argument("--h", type=float, help="Steklov persistence length")
    p.add_argument("--radius", type=float, help="tracking radius")
    p.add_argument("--transient-skip", type=float, help="Q-angle transient to ignore")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tipscope", description="Rate-induced tipping detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one experiment and apply the detectors")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a list of rates")
    _common(p)
    p.add_argument("--rates", help="comma-separated rates")
    p.add_argument("--range", type=float, nargs=3, metavar=("START", "STOP", "NUM"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="recompute the published detection-time table")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("critical-rate", help="bisect for the critical rate")
    p.add_argument("--system", required=True)
    p.add_argument("--detector", choices=METHODS, default=Method.TRACKING_RADIUS.value)
    p.add_argument("--bracket", type=float, nargs=2, required=True, metavar=("R_LO", "R_HI"))
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--horizon", type=float, default=HORIZON_FACTOR,
                   help="run length as a multiple of the system's interval")
    p.add_argument("--reference-rate", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--radius", type=float)
    p.set_defaults(func=cmd_critical_rate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DetectorInputError, SpectraInputError, UnknownSystemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, SingularityError, DetectorInapplicableError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
