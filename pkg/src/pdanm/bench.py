"""Monte-Carlo benchmark harness and command-line front end.

Experiments are described by a JSON document (one ExperimentSpec): a
scenario name, a method list, a base system configuration plus a grid of
coordinates to sweep, a trial count, and a seed.  Every row of the result
table is reproducible in isolation because its RNG seed is derived by
hashing (spec seed, scenario, method, coordinates, trial).

CSV schema (exact column order, UTF-8, LF endings)::

    scenario,method,n_bs,n_ue,n_ris,l_br,l_ru,snr_db,slots,b0,b_max,
    iteration,trial,nmse,slots_used,wall_time_ms,solver_iterations,status

``iteration`` is -1 for final-estimate rows; the nmse-vs-iteration
scenario additionally emits one row per reweighting iteration (1-based).
Integer fields that do not apply hold -1.  Floats are written in
shortest round-trip decimal form.
"""

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    SystemConfig,
    effective_channel,
    nmse,
    random_phase_matrix,
    sample_channel,
    snr_to_sigma2,
    synthesize_received,
)
from .estimators import (
    EstimatorConfig,
    anm2d_estimate,
    anm3d_estimate,
    pdanm_estimate,
    rpdanm_apc,
    rpdanm_estimate,
)
from .sdp import SizeCapError

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "SimulatedSounder",
    "run_experiment",
    "summarize",
    "emit",
    "parse_rows",
    "load_spec",
    "main",
    "SCENARIOS",
    "METHODS",
    "OUT_DIR_ENV",
]

OUT_DIR_ENV = "PDANM_OUT_DIR"

SCENARIOS = (
    "nmse-vs-iteration",
    "nmse-vs-snr",
    "runtime-vs-nr",
    "nmse-vs-slots",
    "apc-b0-sweep",
    "apc-slots-vs-nr",
)

METHODS = ("anm2d", "anm3d", "pdanm", "rpdanm", "rpdanm-apc")

_OK_STATUSES = ("optimal", "converged", "budget-exhausted")

_DEFAULT_GRIDS = {
    "nmse-vs-iteration": {},
    "nmse-vs-snr": {"snr_db": [0, 5, 10, 15, 20, 25, 30, 35, 40]},
    "runtime-vs-nr": {"n_ris": [8, 12, 16, 20]},
    "nmse-vs-slots": {"slots": [8, 16, 24, 32]},
    "apc-b0-sweep": {"b0": [4, 8, 12, 16]},
    "apc-slots-vs-nr": {"n_ris": [16, 24, 32]},
}

_GRID_X = {
    "nmse-vs-iteration": "iteration",
    "nmse-vs-snr": "snr_db",
    "runtime-vs-nr": "n_ris",
    "nmse-vs-slots": "slots",
    "apc-b0-sweep": "b0",
    "apc-slots-vs-nr": "n_ris",
}

_BASE_DEFAULTS = {
    "n_bs": 4, "n_ue": 4, "n_ris": 16, "l_br": 2, "l_ru": 2,
    "power": 1.0, "snr_db": 30.0, "slots": None, "b0": None, "b_max": None,
}

_COORD_KEYS = ("n_bs", "n_ue", "n_ris", "l_br", "l_ru", "snr_db", "slots", "b0", "b_max")


class SimulatedSounder:
    """Sounding interface backed by one fixed effective channel.

    Each request returns H @ Omega_add plus fresh complex Gaussian noise of
    the configured variance, and advances the slot counter.
    """

    def __init__(self, h_eff, noise_var, rng, max_slots=None):
        self.h = np.asarray(h_eff, dtype=complex)
        self.noise_var = float(noise_var)
        self.rng = rng
        self.max_slots = max_slots
        self.slots_used = 0

    @property
    def n_ris(self):
        return self.h.shape[1]

    def request(self, omega_add):
        omega_add = np.asarray(omega_add, dtype=complex)
        if omega_add.ndim != 2 or omega_add.shape[0] != self.n_ris:
            raise ValueError(f"phase block must have {self.n_ris} rows")
        if np.abs(np.abs(omega_add) - 1.0).max() > 1e-12:
            raise ValueError("phase block entries must have unit modulus")
        k = omega_add.shape[1]
        if self.max_slots is not None and self.slots_used + k > self.max_slots:
            raise RuntimeError(
                f"sounder exhausted: {self.slots_used} + {k} > {self.max_slots} slots"
            )
        self.slots_used += k
        y = self.h @ omega_add
        if self.noise_var > 0:
            scale = math.sqrt(self.noise_var / 2.0)
            y = y + scale * (
                self.rng.standard_normal(y.shape) + 1j * self.rng.standard_normal(y.shape)
            )
        return y


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    methods: tuple = ("anm2d", "pdanm", "rpdanm", "rpdanm-apc")
    base: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    trials: int = 100
    seed: int = 0
    out_dir: str | None = None
    format: str = "csv"
    jobs: int = 1
    record_timing: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.format not in ("csv", "svg-lines"):
            raise ValueError(f"unknown format {self.format!r}")
        object.__setattr__(self, "methods", tuple(self.methods))
        grid = dict(self.grid) if self.grid else dict(_DEFAULT_GRIDS[self.scenario])
        for key, vals in grid.items():
            if key not in _COORD_KEYS:
                raise ValueError(f"unknown grid key {key!r}")
            if not vals:
                raise ValueError(f"grid entry {key!r} is empty")
        object.__setattr__(self, "grid", grid)
        base = dict(_BASE_DEFAULTS)
        base.update(self.base or {})
        object.__setattr__(self, "base", base)


_ROW_FIELDS = (
    ("scenario", str), ("method", str),
    ("n_bs", int), ("n_ue", int), ("n_ris", int), ("l_br", int), ("l_ru", int),
    ("snr_db", float), ("slots", int), ("b0", int), ("b_max", int),
    ("iteration", int), ("trial", int),
    ("nmse", float), ("slots_used", int), ("wall_time_ms", float),
    ("solver_iterations", int), ("status", str),
)


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    method: str
    n_bs: int
    n_ue: int
    n_ris: int
    l_br: int
    l_ru: int
    snr_db: float
    slots: int
    b0: int
    b_max: int
    iteration: int
    trial: int
    nmse: float
    slots_used: int
    wall_time_ms: float
    solver_iterations: int
    status: str

    def ok(self):
        return self.status.split("/")[0] in _OK_STATUSES

    def coords(self):
        return (self.n_bs, self.n_ue, self.n_ris, self.l_br, self.l_ru,
                self.snr_db, self.slots, self.b0, self.b_max, self.iteration)


def row_seed(seed, scenario, method, coords, trial):
    """Stable per-row seed; independent of process and sweep order."""
    key = json.dumps([seed, scenario, method, sorted(coords.items()), trial],
                     separators=(",", ":"), sort_keys=True)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def _resolve_cell(spec, cell):
    cfg = dict(spec.base)
    cfg.update(cell)
    n_ris = int(cfg["n_ris"])
    if cfg.get("slots") is None:
        cfg["slots"] = n_ris
    if cfg.get("b_max") is None:
        cfg["b_max"] = cfg["slots"] if "slots" in cell else n_ris
    if cfg.get("b0") is None:
        cfg["b0"] = max(1, min(n_ris // 2, cfg["b_max"]))
    cfg["b0"] = min(int(cfg["b0"]), int(cfg["b_max"]))
    return cfg


_ESTIMATORS = {
    "pdanm": pdanm_estimate,
    "rpdanm": rpdanm_estimate,
    "anm2d": anm2d_estimate,
    "anm3d": anm3d_estimate,
}


def _run_task(spec, method, cell, trial):
    cfg = _resolve_cell(spec, cell)
    coords = {k: cfg[k] for k in _COORD_KEYS}
    seed = row_seed(spec.seed, spec.scenario, method, coords, trial)
    streams = np.random.SeedSequence(seed).spawn(3)
    rng_chan, rng_phase, rng_noise = (np.random.default_rng(s) for s in streams)

    sigma2 = snr_to_sigma2(cfg["power"], cfg["snr_db"])
    system = SystemConfig(
        n_bs=cfg["n_bs"], n_ue=cfg["n_ue"], n_ris=cfg["n_ris"],
        l_br=cfg["l_br"], l_ru=cfg["l_ru"], power=cfg["power"], sigma2=sigma2,
    )
    est_cfg = EstimatorConfig(
        n_bs=system.n_bs, n_ue=system.n_ue, noise_var=system.noise_var,
        b0=int(cfg["b0"]), b_max=int(cfg["b_max"]),
    )
    real = sample_channel(system, rng_chan)
    eff = effective_channel(system, real)

    def make_row(iteration, err, slots_used, wall_ms, solver_iters, status):
        return ResultRow(
            scenario=spec.scenario, method=method,
            n_bs=system.n_bs, n_ue=system.n_ue, n_ris=system.n_ris,
            l_br=system.l_br, l_ru=system.l_ru, snr_db=float(cfg["snr_db"]),
            slots=int(cfg["slots"]), b0=int(cfg["b0"]), b_max=int(cfg["b_max"]),
            iteration=iteration, trial=trial,
            nmse=err, slots_used=slots_used,
            wall_time_ms=wall_ms if spec.record_timing else 0.0,
            solver_iterations=solver_iters, status=status,
        )

    try:
        if method == "rpdanm-apc":
            sounder = SimulatedSounder(eff.h, system.noise_var, rng_noise,
                                       max_slots=int(cfg["b_max"]))
            result = rpdanm_apc(sounder, est_cfg, rng_phase, h_true=eff.h)
        else:
            omega = random_phase_matrix(system.n_ris, int(cfg["slots"]), rng_phase)
            y = synthesize_received(eff, omega, system, rng_noise).y
            result = _ESTIMATORS[method](y, omega, est_cfg, h_true=eff.h)
    except SizeCapError:
        return [make_row(-1, float("nan"), -1, 0.0, -1, "skipped")]
    except Exception as exc:  # per-row failures never abort the sweep
        return [make_row(-1, float("nan"), -1, 0.0, -1,
                         f"error:{type(exc).__name__}")]

    solver_iters = sum(rec.solver_iterations for rec in result.history)
    rows = [make_row(-1, nmse(result.h_hat, eff.h), result.slots_used,
                     1e3 * result.wall_time, solver_iters, result.status)]
    if spec.scenario == "nmse-vs-iteration":
        for i, rec in enumerate(result.history, start=1):
            err = float("nan") if rec.nmse is None else rec.nmse
            rows.append(make_row(i, err, rec.slots or -1, 0.0,
                                 rec.solver_iterations, rec.solver_status))
    return rows


def run_experiment(spec):
    """Run the sweep; returns canonically ordered ResultRows."""
    keys = sorted(spec.grid)
    cells = [dict(zip(keys, combo))
             for combo in itertools.product(*(spec.grid[k] for k in keys))] or [{}]
    tasks = [(method, cell, trial)
             for cell in cells for method in spec.methods
             for trial in range(spec.trials)]
    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            chunks = list(pool.map(lambda t: _run_task(spec, *t), tasks))
    else:
        chunks = [_run_task(spec, *t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.method, r.coords(), r.trial))
    return rows


def summarize(rows):
    """Aggregate nmse/time per (method, coordinates) cell.

    Rows whose status is not a success are excluded from the statistics;
    their fraction is reported, and fully failed cells are flagged empty.
    """
    if not rows:
        raise ValueError("no rows to summarize")
    cells = {}
    for row in rows:
        cells.setdefault((row.scenario, row.method, row.coords()), []).append(row)
    out = []
    for (scenario, method, coords), group in sorted(cells.items()):
        good = [r for r in group if r.ok() and math.isfinite(r.nmse)]
        entry = {
            "scenario": scenario, "method": method,
            "coords": dict(zip(
                ("n_bs", "n_ue", "n_ris", "l_br", "l_ru",
                 "snr_db", "slots", "b0", "b_max", "iteration"), coords)),
            "n_rows": len(group),
            "fail_fraction": 1.0 - len(good) / len(group),
            "empty": not good,
        }
        if good:
            errs = np.array([r.nmse for r in good])
            times = np.array([r.wall_time_ms for r in good])
            slots = np.array([r.slots_used for r in good])
            q1, q3 = np.percentile(errs, [25, 75])
            entry.update(
                nmse_median=float(np.median(errs)), nmse_mean=float(errs.mean()),
                nmse_iqr=float(q3 - q1), time_ms_median=float(np.median(times)),
                time_ms_mean=float(times.mean()), slots_used_mean=float(slots.mean()),
            )
        else:
            entry.update(nmse_median=float("nan"), nmse_mean=float("nan"),
                         nmse_iqr=float("nan"), time_ms_median=float("nan"),
                         time_ms_mean=float("nan"), slots_used_mean=float("nan"))
        out.append(entry)
    return out


def _fmt(value, typ):
    if typ is float:
        return repr(float(value))
    return str(value)


def emit(rows, fmt="csv", out_dir=None):
    """Write rows.csv (and optionally lines.svg) under out_dir."""
    out_dir = out_dir or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, "rows.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(name for name, _ in _ROW_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(getattr(row, name), typ)
                              for name, typ in _ROW_FIELDS) + "\n")
    paths.append(csv_path)
    if fmt == "svg-lines":
        svg_path = os.path.join(out_dir, "lines.svg")
        _write_svg(rows, svg_path)
        paths.append(svg_path)
    return paths


def parse_rows(path):
    """Inverse of the CSV emitter."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = [name for name, _ in _ROW_FIELDS]
        if header != expected:
            raise ValueError(f"unexpected CSV header {header}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            kwargs = {name: typ(val) for (name, typ), val in zip(_ROW_FIELDS, parts)}
            rows.append(ResultRow(**kwargs))
    return rows


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _write_svg(rows, path, width=640, height=440):
    """Minimal line chart: median nmse per method over the scenario's
    x-coordinate, log-scaled y axis, no external assets."""
    scenario = rows[0].scenario if rows else "nmse-vs-snr"
    x_key = _GRID_X[scenario]
    finals = [r for r in rows
              if r.ok() and math.isfinite(r.nmse)
              and (r.iteration >= 1 if x_key == "iteration" else r.iteration == -1)]
    series = {}
    for row in finals:
        x = getattr(row, x_key) if x_key != "iteration" else row.iteration
        series.setdefault(row.method, {}).setdefault(x, []).append(row.nmse)

    margin = 60
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height),
                  fill="white")
    pts_all = [(x, float(np.median(v)))
               for per in series.values() for x, v in per.items()]
    if pts_all:
        xs = sorted({p[0] for p in pts_all})
        ys = [p[1] for p in pts_all if p[1] > 0]
        lo = math.floor(math.log10(min(ys))) if ys else -6
        hi = math.ceil(math.log10(max(ys))) if ys else 0
        hi = max(hi, lo + 1)

        def sx(x):
            if len(xs) == 1:
                return width / 2
            return margin + (width - 2 * margin) * (x - xs[0]) / (xs[-1] - xs[0])

        def sy(y):
            ly = math.log10(max(y, 10.0 ** lo))
            return height - margin - (height - 2 * margin) * (ly - lo) / (hi - lo)

        ET.SubElement(svg, "line", x1=str(margin), y1=str(height - margin),
                      x2=str(width - margin), y2=str(height - margin),
                      stroke="black")
        ET.SubElement(svg, "line", x1=str(margin), y1=str(margin),
                      x2=str(margin), y2=str(height - margin), stroke="black")
        for exp in range(lo, hi + 1):
            t = ET.SubElement(svg, "text", x="8", y=str(sy(10.0 ** exp) + 4),
                              **{"font-size": "11"})
            t.text = f"1e{exp}"
        for x in xs:
            t = ET.SubElement(svg, "text", x=str(sx(x) - 8),
                              y=str(height - margin + 16), **{"font-size": "11"})
            t.text = f"{x:g}"
        label = ET.SubElement(svg, "text", x=str(width // 2 - 20),
                              y=str(height - 14), **{"font-size": "12"})
        label.text = x_key
        for k, (method, per) in enumerate(sorted(series.items())):
            pts = sorted((x, float(np.median(v))) for x, v in per.items())
            poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            color = _PALETTE[k % len(_PALETTE)]
            ET.SubElement(svg, "polyline", points=poly, fill="none",
                          stroke=color, **{"stroke-width": "1.5"})
            leg = ET.SubElement(svg, "text", x=str(width - margin - 110),
                                y=str(margin + 16 * k), fill=color,
                                **{"font-size": "12"})
            leg.text = method
    ET.ElementTree(svg).write(path, encoding="unicode", xml_declaration=True)


def load_spec(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if "out" in raw:
        raw["out_dir"] = raw.pop("out")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    raw["methods"] = tuple(raw.get("methods", ExperimentSpec.methods))
    return ExperimentSpec(**raw)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def main(argv=None):
    parser = _Parser(prog="pdanm-bench",
                     description="Monte-Carlo benchmarks for the estimators")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep from a JSON spec")
    run_p.add_argument("--spec", required=True, help="path to the JSON spec")
    run_p.add_argument("--scenario", choices=SCENARIOS)
    run_p.add_argument("--trials", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", dest="out_dir")
    run_p.add_argument("--format", choices=("csv", "svg-lines"))
    run_p.add_argument("--jobs", type=int)

    sum_p = sub.add_parser("summarize", help="aggregate a rows.csv")
    sum_p.add_argument("--in", dest="infile", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        try:
            spec = load_spec(args.spec, scenario=args.scenario, trials=args.trials,
                             seed=args.seed, out_dir=args.out_dir,
                             format=args.format, jobs=args.jobs)
        except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
            print(f"pdanm-bench: invalid spec: {exc}", file=sys.stderr)
            return 1
        t0 = time.perf_counter()
        rows = run_experiment(spec)
        paths = emit(rows, fmt=spec.format, out_dir=spec.out_dir)
        stats = summarize(rows)
        n_empty = sum(1 for s in stats if s["empty"])
        print(f"{len(rows)} rows in {time.perf_counter() - t0:.1f}s -> "
              + ", ".join(paths))
        if n_empty:
            print(f"{n_empty} cell(s) fully failed", file=sys.stderr)
            return 2
        return 0

    rows = parse_rows(args.infile)
    for entry in summarize(rows):
        coords = " ".join(f"{k}={v}" for k, v in entry["coords"].items()
                          if v not in (None, -1))
        flag = " EMPTY" if entry["empty"] else ""
        print(f"{entry['scenario']:18s} {entry['method']:10s} {coords:40s} "
              f"median {entry['nmse_median']:.3e}  mean {entry['nmse_mean']:.3e}  "
              f"iqr {entry['nmse_iqr']:.3e}  t_med {entry['time_ms_median']:.1f}ms  "
              f"fail {entry['fail_fraction']:.2f}{flag}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
