"""Run a small Monte-Carlo sweep through the benchmark harness and emit
the CSV table plus the SVG line chart.  The same sweep is available from
the command line:

    pdanm-bench run --spec demos/spec_nmse_vs_snr.json --out results/

Run:  python demos/05_benchmark_sweep.py
"""

import json
import pathlib

from pdanm.bench import ExperimentSpec, emit, run_experiment, summarize

spec = ExperimentSpec(
    scenario="nmse-vs-snr",
    methods=("anm2d", "pdanm", "rpdanm"),
    base={"n_bs": 2, "n_ue": 2, "n_ris": 8, "l_br": 1, "l_ru": 2},
    grid={"snr_db": [10, 20, 30]},
    trials=5,
    seed=2024,
    jobs=2,
)

rows = run_experiment(spec)
out_dir = pathlib.Path("results")
paths = emit(rows, fmt="svg-lines", out_dir=out_dir)
print(f"wrote {', '.join(map(str, paths))}")

print(f"\n{'method':8s} {'snr':>5s} {'median nmse':>12s} {'mean ms':>9s}")
for cell in summarize(rows):
    print(f"{cell['method']:8s} {cell['coords']['snr_db']:5.0f} "
          f"{cell['nmse_median']:12.3e} {cell['time_ms_mean']:9.1f}")

# the matching JSON spec for the CLI
spec_path = out_dir / "spec_nmse_vs_snr.json"
spec_path.write_text(json.dumps({
    "scenario": "nmse-vs-snr",
    "methods": list(spec.methods),
    "base": spec.base,
    "grid": spec.grid,
    "trials": spec.trials,
    "seed": spec.seed,
}, indent=2))
print(f"\nCLI spec written to {spec_path}")
