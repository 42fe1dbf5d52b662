"""Monte Carlo experiment runner and table-style metrics.

An :class:`ExperimentGrid` names a list of settings (overrides of a base
:class:`~tmfm.simulate.DgpSpec`) and a list of factor-count variants to feed
the threshold search.  Each replicate simulates a dataset, estimates factor
counts once, then reuses one kernel sweep across all k-variants, so adding
variants is cheap.  Replicate r of every setting draws from the RNG stream
``(master_seed, r)``; adding or reordering settings therefore never perturbs
another setting's draws, and results are independent of the parallelism
degree because aggregation happens in replicate order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import EstimationConfig, quantile
from .errors import EmptySeries, TmfmError
from .estimate import (
    SPACE_KEYS,
    SpaceKey,
    _factor_counts_from_decomps,
    _ghat_curve,
    _threshold_scan,
)
from .simulate import DgpSpec, simulate_dataset, stream_seed
from .spectral import orthonormal_basis, space_distance, sym_eigen

__all__ = [
    "ExperimentGrid",
    "KVariant",
    "MetricsRow",
    "MetricsTable",
    "run_monte_carlo",
    "summarize_distance_boxes",
]

KVariant = Union[str, Tuple[int, int]]

#: signed-error histogram bins shared by all rows
HIST_EDGES = np.linspace(-1.0, 1.0, 41)


def variant_label(variant: KVariant) -> str:
    if isinstance(variant, str):
        if variant != "estimated":
            raise ValueError(f"unknown k-variant {variant!r}")
        return "estimated"
    k1, k2 = variant
    return f"{int(k1)}x{int(k2)}"


@dataclass(frozen=True)
class ExperimentGrid:
    """A named family of DGP settings crossed with factor-count variants."""

    base: DgpSpec
    sweeps: Mapping[str, Mapping[str, object]]
    n_reps: int
    k_variants: Tuple[KVariant, ...] = ("estimated",)
    master_seed: int = 0
    config: EstimationConfig = field(default_factory=EstimationConfig)

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError(f"n_reps must be >= 1, got {self.n_reps}")
        if not self.sweeps:
            raise ValueError("grid needs at least one setting")
        variants = tuple(
            v if isinstance(v, str) else (int(v[0]), int(v[1])) for v in self.k_variants
        )
        if not variants:
            raise ValueError("grid needs at least one k-variant")
        for v in variants:
            variant_label(v)
        object.__setattr__(self, "k_variants", variants)
        object.__setattr__(self, "sweeps", dict(self.sweeps))
        self.settings()  # every combination must yield a valid spec

    def settings(self) -> List[Tuple[str, DgpSpec]]:
        return [(name, replace(self.base, **ov)) for name, ov in self.sweeps.items()]


@dataclass
class _VariantResult:
    r_hat: float
    distances: Dict[SpaceKey, float]


@dataclass
class _ReplicateResult:
    rep: int
    k_hat: Optional[Tuple[int, int]] = None
    variants: Dict[str, _VariantResult] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class MetricsRow:
    """Aggregated metrics for one (setting, k-variant) pair.

    ``khat_freq`` maps "(k1,k2)" labels to the frequency of that estimated
    pair across the setting's successful replicates (shared by all the
    setting's rows).  Distance summaries and samples cover the four loading
    spaces keyed "row_1", "row_2", "column_1", "column_2".
    """

    setting: str
    k_variant: str
    n_reps: int
    n_failures: int
    khat_freq: Dict[str, float]
    abs_err_mean: float
    abs_err_sd: float
    distance_mean: Dict[str, float]
    distance_quartiles: Dict[str, Tuple[float, float, float]]
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    r_err_samples: np.ndarray
    distance_samples: Dict[str, np.ndarray]
    khat_samples: Tuple[Tuple[int, int], ...] = ()


@dataclass
class MetricsTable:
    rows: List[MetricsRow]

    def row(self, setting: str, k_variant: KVariant) -> MetricsRow:
        label = variant_label(k_variant)
        for row in self.rows:
            if row.setting == setting and row.k_variant == label:
                return row
        raise KeyError(f"no row for setting={setting!r}, k_variant={label!r}")


def _space_label(key: SpaceKey) -> str:
    return f"{key[0]}_{key[1]}"


def _run_replicate(args) -> _ReplicateResult:
    spec, rep, variants, config = args
    result = _ReplicateResult(rep=rep)
    try:
        ds = simulate_dataset(spec)
        eta1 = quantile(ds.z, config.eta_quantiles[0])
        eta2 = quantile(ds.z, config.eta_quantiles[1])
        scan = _threshold_scan(ds.X.data, ds.z.z, eta1, eta2, config.h0)
        counts = _factor_counts_from_decomps(scan.decomps_eta, scan.eta)
        result.k_hat = counts.k_hat
        truth_basis = {
            ("row", 1): orthonormal_basis(ds.truth.R1),
            ("row", 2): orthonormal_basis(ds.truth.R2),
            ("column", 1): orthonormal_basis(ds.truth.C1),
            ("column", 2): orthonormal_basis(ds.truth.C2),
        }
        for variant in variants:
            k1, k2 = counts.k_hat if isinstance(variant, str) else variant
            values, idx = _ghat_curve(scan, k1, k2)
            distances: Dict[SpaceKey, float] = {}
            for key in SPACE_KEYS:
                dec = sym_eigen(scan.stacks[key][idx], check=False)
                k = k1 if key[0] == "row" else k2
                distances[key] = space_distance(dec.vectors[:, :k], truth_basis[key])
            result.variants[variant_label(variant)] = _VariantResult(
                r_hat=float(scan.grid[idx]), distances=distances
            )
    except TmfmError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_monte_carlo(
    grid: ExperimentGrid, n_jobs: int = 1, verbose: bool = False
) -> MetricsTable:
    """Run the grid and aggregate one MetricsRow per setting x k-variant.

    Per-replicate failures are recorded in the row's failure count and never
    abort the grid.  With ``n_jobs > 1`` replicates run in worker processes;
    aggregation order is fixed, so results do not depend on n_jobs.
    """
    rows: List[MetricsRow] = []
    for setting_name, spec in grid.settings():
        tasks = [
            (spec.with_seed(stream_seed(grid.master_seed, rep)), rep, grid.k_variants, grid.config)
            for rep in range(grid.n_reps)
        ]
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(_run_replicate, tasks, chunksize=1))
        else:
            results = [_run_replicate(t) for t in tasks]
        if verbose:  # pragma: no cover - logging only
            n_fail = sum(1 for r in results if r.error)
            print(f"[mc] setting {setting_name}: {len(results)} reps, {n_fail} failures")
        rows.extend(_aggregate(setting_name, spec.r0, grid, results))
    return MetricsTable(rows=rows)


def _aggregate(
    setting: str,
    r0: float,
    grid: ExperimentGrid,
    results: Sequence[_ReplicateResult],
) -> List[MetricsRow]:
    ok = [r for r in results if r.error is None]
    n_failures = len(results) - len(ok)
    khat_freq: Dict[str, float] = {}
    if ok:
        labels = [f"({r.k_hat[0]},{r.k_hat[1]})" for r in ok]
        for lab in sorted(set(labels)):
            khat_freq[lab] = labels.count(lab) / len(ok)
    rows = []
    for variant in grid.k_variants:
        label = variant_label(variant)
        errs = np.array([r.variants[label].r_hat - r0 for r in ok]) if ok else np.empty(0)
        abs_errs = np.abs(errs)
        dist_samples = {
            _space_label(key): np.array([r.variants[label].distances[key] for r in ok])
            if ok
            else np.empty(0)
            for key in SPACE_KEYS
        }
        counts, _ = np.histogram(errs, bins=HIST_EDGES)
        rows.append(
            MetricsRow(
                setting=setting,
                k_variant=label,
                n_reps=len(results),
                n_failures=n_failures,
                khat_freq=dict(khat_freq),
                abs_err_mean=float(abs_errs.mean()) if ok else float("nan"),
                abs_err_sd=float(abs_errs.std(ddof=1)) if len(ok) > 1 else float("nan"),
                distance_mean={
                    lab: float(v.mean()) if ok else float("nan")
                    for lab, v in dist_samples.items()
                },
                distance_quartiles={
                    lab: tuple(float(q) for q in np.quantile(v, [0.25, 0.5, 0.75]))
                    if ok
                    else (float("nan"),) * 3
                    for lab, v in dist_samples.items()
                },
                hist_edges=HIST_EDGES.copy(),
                hist_counts=counts,
                r_err_samples=errs,
                distance_samples=dist_samples,
                khat_samples=tuple(r.k_hat for r in ok),
            )
        )
    return rows


def summarize_distance_boxes(table: MetricsTable) -> List[Dict[str, object]]:
    """Five-number summaries of the loading-space distances, plot-ready.

    One record per (setting, k-variant, space) with min / q1 / median / q3 /
    max under the linear-interpolation quantile rule.

    Raises
    ------
    EmptySeries
        If a row has no successful replicates to summarize.
    """
    records: List[Dict[str, object]] = []
    for row in table.rows:
        for space, samples in row.distance_samples.items():
            if samples.size == 0:
                raise EmptySeries(
                    f"no distance samples for setting={row.setting!r}, "
                    f"k_variant={row.k_variant!r}, space={space!r}"
                )
            q = np.quantile(samples, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
            records.append(
                {
                    "setting": row.setting,
                    "k_variant": row.k_variant,
                    "space": space,
                    "min": float(q[0]),
                    "q1": float(q[1]),
                    "median": float(q[2]),
                    "q3": float(q[3]),
                    "max": float(q[4]),
                }
            )
    return records
