"""A small Monte Carlo grid: threshold accuracy across factor-count choices.

Runs the all-strong setting at desk scale for a handful of replicates and
prints the table-style metrics: how often the counts are recovered, the
mean absolute threshold error per count variant (underestimating is
catastrophic, overestimating is benign), and loading-space error quartiles.

The shipped configs/desk_grid.json runs the full 100-replicate version of
this via: tmfm mc --grid configs/desk_grid.json --out results/
"""

from tmfm import DgpSpec, ExperimentGrid, run_monte_carlo, summarize_distance_boxes

grid = ExperimentGrid(
    base=DgpSpec(p1=20, p2=20, T=1200),
    sweeps={"all_strong": {}},
    n_reps=10,
    k_variants=("estimated", (3, 3), (4, 4), (2, 2)),
    master_seed=20260809,
)
table = run_monte_carlo(grid, n_jobs=2)

print(f"{'variant':>10} | {'mean |r-r0|':>12} | {'sd':>8} | khat frequencies")
for row in table.rows:
    print(
        f"{row.k_variant:>10} | {row.abs_err_mean:12.4f} | {row.abs_err_sd:8.4f} | {row.khat_freq}"
    )

print("\nloading-space distance five-number summaries (estimated-k variant):")
for rec in summarize_distance_boxes(table):
    if rec["k_variant"] != "estimated":
        continue
    print(
        f"  {rec['space']:>9}: min={rec['min']:.4f} q1={rec['q1']:.4f} "
        f"med={rec['median']:.4f} q3={rec['q3']:.4f} max={rec['max']:.4f}"
    )
