"""Monte-Carlo drop loop, metric aggregation and CSV emission."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, replace
import io
import json
import logging
import math
import os
from pathlib import Path
import time

import numpy as np

from .algorithms import AlgorithmSpec, FD, IGS, PGS, RunResult, run_algorithm
from .channel import draw_scenario
from .model import ScenarioConfig
from .rates import near_zero_count

log = logging.getLogger(__name__)

CONFIG_KEYS = ("M", "K", "Q", "P_dBm", "cell_radius_m", "bs_height_m", "ue_height_m",
               "carrier_GHz", "bandwidth_Hz", "noise_density_dBm_per_Hz", "sigma_sf_dB",
               "sigma_alpha_deg", "sigma_beta_deg", "seed", "tol", "max_iters",
               "near_zero_threshold_bps")
PLAN_KEYS = ("config", "sweep", "algorithms", "num_drops", "out_dir")
SWEEP_AXES = ("P_dBm", "K")
_INT_KEYS = {"M", "K", "Q", "seed", "max_iters"}

RESULT_COLUMNS = ("sweep_axis", "sweep_value", "drop", "seed", "algo", "status", "sr_bps",
                  "mr_bps", "gm_bps", "jain_rate", "jain_power", "min_max_ratio",
                  "num_near_zero", "power_used", "iters", "converged", "fallback_events",
                  "degraded_solves")
RATE_COLUMNS = ("sweep_value", "drop", "algo", "user", "rate_bps")
TRACE_COLUMNS = ("iter", "objective_nats", "mr_bps", "sr_bps")
SUMMARY_METRICS = ("sr_bps", "mr_bps", "gm_bps", "jain_rate", "jain_power",
                   "min_max_ratio", "num_near_zero")
TABLE_METRICS = ("mr_bps", "sr_bps", "gm_bps", "min_max_ratio", "jain_rate", "jain_power",
                 "num_near_zero")


class PlanError(ValueError):
    """Malformed experiment plan."""


@dataclass(frozen=True)
class ExperimentPlan:
    config: ScenarioConfig
    sweep_axis: str
    sweep_values: tuple
    algorithms: tuple
    num_drops: int
    out_dir: str

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise PlanError(f"sweep axis must be one of {SWEEP_AXES}")
        if not self.sweep_values:
            raise PlanError("sweep values must be nonempty")
        if not self.algorithms:
            raise PlanError("algorithm list must be nonempty")
        if self.num_drops < 1:
            raise PlanError("num_drops must be >= 1")
        for lab in self.algorithms:
            AlgorithmSpec.from_label(lab)

    def config_for(self, value) -> ScenarioConfig:
        v = int(value) if self.sweep_axis == "K" else float(value)
        return replace(self.config, **{self.sweep_axis: v})


def _num(x, key):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise PlanError(f"{key} must be a number, got {x!r}")
    if key in _INT_KEYS:
        if float(x) != int(x):
            raise PlanError(f"{key} must be an integer, got {x!r}")
        return int(x)
    return float(x)


def parse_plan(obj: dict) -> ExperimentPlan:
    if not isinstance(obj, dict):
        raise PlanError("plan must be a JSON object")
    keys = set(obj)
    if keys != set(PLAN_KEYS):
        extra = sorted(keys - set(PLAN_KEYS))
        missing = sorted(set(PLAN_KEYS) - keys)
        raise PlanError(f"plan keys mismatch (unknown: {extra}, missing: {missing})")
    cfg_obj = obj["config"]
    if not isinstance(cfg_obj, dict):
        raise PlanError("config must be an object")
    unknown = sorted(set(cfg_obj) - set(CONFIG_KEYS))
    if unknown:
        raise PlanError(f"unknown config keys: {unknown}")
    try:
        cfg = ScenarioConfig(**{k: _num(v, k) for k, v in cfg_obj.items()})
    except (TypeError, ValueError) as exc:
        raise PlanError(f"invalid config: {exc}") from exc
    sweep = obj["sweep"]
    if not isinstance(sweep, dict) or set(sweep) != {"axis", "values"}:
        raise PlanError("sweep must be an object with keys exactly {axis, values}")
    if not isinstance(sweep["values"], list):
        raise PlanError("sweep values must be a list")
    axis = sweep["axis"]
    values = tuple(_num(v, axis if axis == "K" else "P_dBm") for v in sweep["values"])
    algos = obj["algorithms"]
    if not isinstance(algos, list) or not all(isinstance(a, str) for a in algos):
        raise PlanError("algorithms must be a list of labels")
    if len(set(algos)) != len(algos):
        raise PlanError("duplicate algorithm labels")
    nd = obj["num_drops"]
    if isinstance(nd, bool) or not isinstance(nd, int):
        raise PlanError("num_drops must be an integer")
    if not isinstance(obj["out_dir"], str) or not obj["out_dir"]:
        raise PlanError("out_dir must be a nonempty string")
    try:
        plan = ExperimentPlan(cfg, axis, values, tuple(algos), nd, obj["out_dir"])
        for v in values:
            plan.config_for(v)
            for lab in algos:
                spec = AlgorithmSpec.from_label(lab)
                if spec.Q is not None and spec.Q > cfg.M:
                    raise PlanError(f"{lab}: rank exceeds M={cfg.M}")
    except ValueError as exc:
        raise PlanError(str(exc)) from exc
    return plan


def load_plan(path) -> ExperimentPlan:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from exc
    return parse_plan(obj)


def drop_seed_sequence(master_seed: int, sweep_index: int, drop: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(sweep_index), int(drop)])


def drop_seed(master_seed: int, sweep_index: int, drop: int) -> int:
    """64-bit value identifying one drop's random stream (reported in the CSV)."""
    s = drop_seed_sequence(master_seed, sweep_index, drop).generate_state(2, dtype=np.uint32)
    return int(s[0]) << 32 | int(s[1])


_FAMILY_TAG = {PGS: 0, FD: 1, IGS: 2}


def init_rng(master_seed, sweep_index, drop, spec: AlgorithmSpec) -> np.random.Generator:
    """Initialization stream shared by every design of the same beam family and rank,
    so that e.g. GM-Q2, SR-Q2 and MR-Q2 start from the same beams on a drop."""
    tag = [_FAMILY_TAG[spec.family], spec.Q or 0]
    return np.random.default_rng(np.random.SeedSequence(
        [int(master_seed), int(sweep_index), int(drop), 1] + tag))


@dataclass(frozen=True)
class ResultRow:
    sweep_axis: str
    sweep_value: float
    drop: int
    seed: int
    algo: str
    status: str
    sr_bps: float
    mr_bps: float
    gm_bps: float
    jain_rate: float
    jain_power: float
    min_max_ratio: float
    num_near_zero: int
    power_used: float
    iters: int
    converged: bool
    fallback_events: int
    degraded_solves: int
    rates: tuple = ()
    wall_ms: float = 0.0


@dataclass
class RunRecord:
    sweep_index: int
    row: ResultRow
    trace: list  # (iter, objective_nats, mr_bps, sr_bps, wall_ms)


def _failed_row(axis, value, drop, seed, label, err) -> ResultRow:
    nan = float("nan")
    return ResultRow(axis, value, drop, seed, label, f"error: {type(err).__name__}: {err}",
                     nan, nan, nan, nan, nan, nan, 0, nan, 0, False, 0, 0)


def _run_drop(plan: ExperimentPlan, sweep_index: int, drop: int):
    value = plan.sweep_values[sweep_index]
    cfg = plan.config_for(value)
    seed = drop_seed(cfg.seed, sweep_index, drop)
    ch = draw_scenario(cfg, np.random.default_rng(drop_seed_sequence(cfg.seed, sweep_index, drop)))
    out = []
    for label in plan.algorithms:
        spec = AlgorithmSpec.from_label(label)
        t0 = time.perf_counter()
        try:
            res = run_algorithm(spec, ch, cfg, rng=init_rng(cfg.seed, sweep_index, drop, spec))
        except Exception as exc:  # recorded in the row; the plan continues
            log.exception("algorithm %s failed on sweep %s drop %d", label, value, drop)
            out.append(RunRecord(sweep_index, _failed_row(plan.sweep_axis, value, drop, seed,
                                                          label, exc), []))
            continue
        wall = (time.perf_counter() - t0) * 1e3
        out.append(RunRecord(sweep_index, _row_from(plan, value, drop, seed, res, cfg, wall),
                             [(e.iteration, e.objective, e.mr, e.sr, e.wall_ms)
                              for e in res.trace.entries]))
    return out


def _row_from(plan, value, drop, seed, res: RunResult, cfg, wall_ms) -> ResultRow:
    rep = res.report
    return ResultRow(plan.sweep_axis, value, drop, seed, res.spec.label, "ok", rep.sr, rep.mr,
                     rep.gm, rep.jain_rate, rep.jain_power, rep.min_max_ratio,
                     near_zero_count(rep.rates, cfg.near_zero_threshold_bps), rep.power_used,
                     res.iterations, res.converged, res.fallback_events, res.degraded_solves,
                     tuple(float(r) for r in rep.rates), wall_ms)


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("BEAMOPT_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer BEAMOPT_THREADS=%r", env)
    return max(1, min(cap, n_tasks))


def run_plan(plan: ExperimentPlan, workers: int | None = None) -> list:
    """Run every (sweep value, drop, algorithm) cell; returns sorted RunRecords."""
    tasks = [(i, d) for i in range(len(plan.sweep_values)) for d in range(plan.num_drops)]
    n = workers or worker_count(len(tasks))
    records = []
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            for part in ex.map(_run_drop, [plan] * len(tasks), *zip(*tasks)):
                records.extend(part)
    else:
        for i, d in tasks:
            records.extend(_run_drop(plan, i, d))
    order = {lab: j for j, lab in enumerate(plan.algorithms)}
    records.sort(key=lambda r: (r.sweep_index, r.row.drop, order[r.row.algo]))
    for r in records:
        if r.row.status == "ok" and abs(sum(r.row.rates) - r.row.sr_bps) > 1e-9 * max(1.0, r.row.sr_bps):
            raise AssertionError(f"sum-rate mismatch in row {r.row.algo} drop {r.row.drop}")
    return records


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return f"{float(x):.9g}"
    return str(x)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    path.write_text(buf.getvalue())


def trace_name(sweep_index, drop, algo) -> str:
    return f"{algo}_s{sweep_index}_d{drop}.csv"


def summarize(rows) -> list:
    """Mean and median of every metric per (sweep value, algorithm)."""
    cells = {}
    for r in rows:
        if r.status != "ok":
            continue
        cells.setdefault((r.sweep_value, r.algo), []).append(r)
    out = []
    for (value, algo), rs in cells.items():
        rec = {"sweep_value": value, "algo": algo, "n": len(rs)}
        for m in SUMMARY_METRICS:
            vals = np.array([getattr(r, m) for r in rs], dtype=float)
            rec[f"mean_{m}"] = float(np.mean(vals))
            rec[f"median_{m}"] = float(np.median(vals))
        out.append(rec)
    return out


def emit_tables(rows, out_dir) -> list:
    """Wide tables, one per sweep value: metric rows by algorithm columns (means)."""
    out_dir = Path(out_dir)
    summ = summarize(rows)
    algos = []
    for r in rows:
        if r.algo not in algos:
            algos.append(r.algo)
    values = []
    for r in rows:
        if r.sweep_value not in values:
            values.append(r.sweep_value)
    written = []
    for i, v in enumerate(values):
        lookup = {s["algo"]: s for s in summ if s["sweep_value"] == v}
        cols = [a for a in algos if a in lookup]
        body = [[m] + [lookup[a][f"mean_{m}"] for a in cols] for m in TABLE_METRICS]
        path = out_dir / "tables" / f"table_{i}_{fmt(v)}.csv"
        _write_csv(path, ["metric"] + cols, body)
        written.append(path)
    return written


def write_outputs(plan: ExperimentPlan, records, out_dir=None) -> Path:
    """Deterministic CSVs plus a separate ``timing/`` folder for wall-clock data."""
    out = Path(out_dir or plan.out_dir)
    rows = [r.row for r in records]
    _write_csv(out / "results.csv", RESULT_COLUMNS,
               [[getattr(r, c) for c in RESULT_COLUMNS] for r in rows])
    _write_csv(out / "rates.csv", RATE_COLUMNS,
               [[r.sweep_value, r.drop, r.algo, u, x] for r in rows for u, x in enumerate(r.rates)])
    summ = summarize(rows)
    cols = ["sweep_value", "algo", "n"] + [f"{s}_{m}" for m in SUMMARY_METRICS
                                          for s in ("mean", "median")]
    _write_csv(out / "summary.csv", cols, [[s[c] for c in cols] for s in summ])
    emit_tables(rows, out)
    for rec in records:
        name = trace_name(rec.sweep_index, rec.row.drop, rec.row.algo)
        _write_csv(out / "traces" / name, TRACE_COLUMNS, [t[:4] for t in rec.trace])
        _write_csv(out / "timing" / name, ("iter", "wall_ms"), [(t[0], t[4]) for t in rec.trace])
    _write_csv(out / "timing" / "runs.csv", ("sweep_value", "drop", "algo", "wall_ms"),
               [[r.sweep_value, r.drop, r.algo, r.wall_ms] for r in rows])
    return out


def run_single_trace(plan: ExperimentPlan, label: str, sweep_index: int = 0, drop: int = 0):
    """Run one design on one drop of the plan and return its full result."""
    value = plan.sweep_values[sweep_index]
    cfg = plan.config_for(value)
    ch = draw_scenario(cfg, np.random.default_rng(drop_seed_sequence(cfg.seed, sweep_index, drop)))
    spec = AlgorithmSpec.from_label(label)
    res = run_algorithm(spec, ch, cfg, rng=init_rng(cfg.seed, sweep_index, drop, spec))
    return res
