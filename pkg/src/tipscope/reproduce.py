"""Published detection-time table and the runner that recomputes it."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from .detect import DetectionResult, Method, run_detectors
from .systems import builtin_system

INF = math.inf


@dataclass(frozen=True)
class TableRow:
    """One published detection time and the window a recomputation must hit.

    ``published`` is ``None`` for rows reported as inconclusive; those pass
    only when the detector does not fire.
    """

    system: str
    method: Method
    rate: float
    published: float | None
    window: tuple[float, float] | None
    note: str = ""


_TR, _ST, _QA = Method.TRACKING_RADIUS, Method.STEKLOV_DERIVATIVE, Method.Q_ANGLE

TABLE = (
    TableRow("unique_linear", _TR, 0.065, 53.94, (53.44, 54.44)),
    TableRow("unique_linear", _ST, 0.065, 38.14, (35.0, 40.0), "36.29 also reported in prose"),
    TableRow("bistable_linear", _TR, 0.049, 104.9, (103.9, 105.9)),
    TableRow("bistable_linear", _ST, 0.049, 36.06, (-INF, 104.9), "must precede the tracking-radius time"),
    TableRow("unique_logistic", _TR, 0.5001, 37.91, (37.41, 38.41)),
    TableRow("unique_logistic", _ST, 0.5001, 36.19, (35.0, 40.0), "38.53 also reported in prose"),
    TableRow("bistable_logistic", _TR, 0.378, 47.77, (47.27, 48.27)),
    TableRow("bistable_logistic", _ST, 0.378, None, None),
    TableRow("bistable_linear_2d", _TR, 0.049, 104.9, (103.9, 105.9)),
    TableRow("bistable_linear_2d", _ST, 0.049, 92.87, (-INF, 104.9), "must precede the tracking-radius time"),
    TableRow("bistable_linear_2d", _QA, 0.049, 109.8, (106.8, 112.8)),
    TableRow("bistable_logistic_2d", _TR, 0.378, 47.77, (47.27, 48.27)),
    TableRow("bistable_logistic_2d", _ST, 0.378, None, None),
    TableRow("bistable_logistic_2d", _QA, 0.378, 69.0, (66.0, 72.0)),
    TableRow("resource_consumer", _ST, -0.002, None, None),
    TableRow("resource_consumer", _QA, -0.002, 1589.0, (1564.0, 1614.0)),
)


@dataclass
class RowOutcome:
    system: str
    method: str
    rate: float
    published: float | None
    window: tuple[float, float] | None
    computed: float | None
    status: str
    passed: bool
    note: str = ""


def judge(row: TableRow, result: DetectionResult | None) -> RowOutcome:
    if result is None:
        computed, status, ok = None, "missing", False
    else:
        computed, status = result.tip_time, result.status
        if row.window is None:
            ok = not result.tipped
        else:
            lo, hi = row.window
            # one-sided windows mean "strictly before"
            ok = result.tipped and lo <= computed and (computed < hi if lo == -INF else computed <= hi)
    return RowOutcome(row.system, row.method.value, row.rate, row.published, row.window, computed, status, ok, row.note)


def run_system(name: str, rate: float) -> dict[str, DetectionResult]:
    out = run_detectors(builtin_system(name, rate))
    return {r.method.value: r for r in out["results"]}


def _job(args):
    name, rate = args
    try:
        return run_system(name, rate), None
    except Exception as exc:  # a failing system marks its rows, the rest still run
        return None, f"{type(exc).__name__}: {exc}"


def reproduce(jobs: int = 1) -> list[RowOutcome]:
    keys = list(dict.fromkeys((row.system, row.rate) for row in TABLE))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(zip(keys, pool.map(_job, keys)))
    else:
        results = {k: _job(k) for k in keys}
    outcomes = []
    for row in TABLE:
        found, err = results[(row.system, row.rate)]
        res = None if found is None else found.get(row.method.value)
        outcome = judge(row, res)
        if err:
            outcome.status, outcome.note = "error", err
        outcomes.append(outcome)
    return outcomes


def report_json(outcomes: list[RowOutcome]) -> str:
    rows = []
    for o in outcomes:
        d = asdict(o)
        if o.window is not None:
            d["window"] = [None if not math.isfinite(v) else v for v in o.window]
        rows.append(d)
    body = {"passed": all(o.passed for o in outcomes), "rows": rows}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def format_table(outcomes: list[RowOutcome]) -> str:
    def num(v):
        return "-" if v is None else f"{v:g}"

    def win(w):
        if w is None:
            return "no detection"
        lo, hi = w
        return f"< {hi:g}" if lo == -INF else f"[{lo:g}, {hi:g}]"

    lines = [f"{'system':<22}{'method':<19}{'rate':>8}  {'published':>10}  {'computed':>10}  {'window':<16}result"]
    for o in outcomes:
        pub = "inconclusive" if o.published is None else num(o.published)
        lines.append(
            f"{o.system:<22}{o.method:<19}{o.rate:>8g}  {pub:>10}  {num(o.computed):>10}  "
            f"{win(o.window):<16}{'PASS' if o.passed else 'FAIL'}"
        )
    return "\n".join(lines)
