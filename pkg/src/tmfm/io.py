"""Readers and writers for every on-disk artifact.

Matrix series travel as long-format CSV with header ``t,row,col,value``
(t, row, col are 1-based and contiguous; every combination appears exactly
once) or as a flat binary format: 8 magic bytes ``TMFMBIN1``, three
little-endian uint64 (T, p1, p2), then T*p1*p2 little-endian float64 in
row-major (t, row, col) order.  Threshold series use CSV with header
``t,value``.  All numeric text output carries 17 significant digits so
read-back is exact.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import EstimationConfig, MatrixSeries, ThresholdSeries
from .errors import DuplicateCell, MissingCell, NonFiniteValue, SchemaError
from .estimate import CandidateScore, FactorCountEstimate, FittedModel
from .harness import ExperimentGrid, MetricsTable
from .simulate import DgpSpec, DgpTruth, SimulatedDataset

__all__ = [
    "read_matrix_series",
    "write_matrix_series",
    "read_threshold_series",
    "write_threshold_series",
    "apply_transform",
    "fitted_model_to_dict",
    "write_fitted_model",
    "write_loadings_csv",
    "write_curve_csv",
    "write_ratio_curves_csv",
    "write_truth",
    "read_truth",
    "read_dgp_spec",
    "read_experiment_grid",
    "metrics_to_records",
    "write_metrics",
    "write_candidate_scores",
]

MAGIC = b"TMFMBIN1"

TRANSFORMS = ("none", "diff", "logdiff", "log2diff")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# matrix series


def write_matrix_series(path, series: MatrixSeries, fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "csv":
        T, p1, p2 = series.data.shape
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "row", "col", "value"])
            for t in range(T):
                for r in range(p1):
                    for c in range(p2):
                        w.writerow([t + 1, r + 1, c + 1, _fmt(series.data[t, r, c])])
    elif fmt == "binary":
        T, p1, p2 = series.data.shape
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQQ", T, p1, p2))
            fh.write(np.ascontiguousarray(series.data, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown format {fmt!r}, expected 'csv' or 'binary'")


def read_matrix_series(path) -> MatrixSeries:
    """Read a matrix series, sniffing the binary magic versus CSV.

    Raises
    ------
    SchemaError
        On malformed headers/rows (with the line number).
    DuplicateCell, MissingCell
        When the (t, row, col) coverage is wrong.
    """
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return _read_matrix_binary(path)
    return _read_matrix_csv(path)


def _read_matrix_binary(path: Path) -> MatrixSeries:
    raw = path.read_bytes()
    header = len(MAGIC) + 24
    if len(raw) < header:
        raise SchemaError(f"binary file {path} truncated before header")
    T, p1, p2 = struct.unpack("<QQQ", raw[len(MAGIC) : header])
    expected = header + T * p1 * p2 * 8
    if len(raw) != expected:
        raise SchemaError(
            f"binary file {path} has {len(raw)} bytes, expected {expected} for dims {(T, p1, p2)}"
        )
    data = np.frombuffer(raw[header:], dtype="<f8").reshape(T, p1, p2)
    return MatrixSeries(data.astype(np.float64))


def _read_matrix_csv(path: Path) -> MatrixSeries:
    entries: Dict[Tuple[int, int, int], float] = {}
    lines_of: Dict[Tuple[int, int, int], int] = {}
    max_t = max_r = max_c = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "row", "col", "value"]:
            raise SchemaError("expected header 't,row,col,value'", line=1)
        for lineno, rowvals in enumerate(reader, start=2):
            if not rowvals:
                continue
            if len(rowvals) != 4:
                raise SchemaError(f"expected 4 fields, got {len(rowvals)}", line=lineno)
            try:
                t, r, c = int(rowvals[0]), int(rowvals[1]), int(rowvals[2])
                v = float(rowvals[3])
            except ValueError as exc:
                raise SchemaError(str(exc), line=lineno) from exc
            if t < 1 or r < 1 or c < 1:
                raise SchemaError(f"indices must be >= 1, got {(t, r, c)}", line=lineno)
            key = (t, r, c)
            if key in entries:
                raise DuplicateCell(
                    f"cell (t={t}, row={r}, col={c}) already defined at line {lines_of[key]}",
                    line=lineno,
                )
            entries[key] = v
            lines_of[key] = lineno
            max_t, max_r, max_c = max(max_t, t), max(max_r, r), max(max_c, c)
    if not entries:
        raise SchemaError("file contains no data rows")
    if len(entries) != max_t * max_r * max_c:
        for t in range(1, max_t + 1):
            for r in range(1, max_r + 1):
                for c in range(1, max_c + 1):
                    if (t, r, c) not in entries:
                        raise MissingCell(f"cell (t={t}, row={r}, col={c}) is missing")
    data = np.empty((max_t, max_r, max_c))
    for (t, r, c), v in entries.items():
        data[t - 1, r - 1, c - 1] = v
    return MatrixSeries(data)


# ---------------------------------------------------------------------------
# threshold series


def write_threshold_series(path, series: ThresholdSeries) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in enumerate(series.z, start=1):
            w.writerow([t, _fmt(v)])


def read_threshold_series(path) -> ThresholdSeries:
    values: List[float] = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["t", "value"]:
            raise SchemaError("expected header 't,value'", line=1)
        for lineno, rowvals in enumerate(reader, start=2):
            if not rowvals:
                continue
            if len(rowvals) != 2:
                raise SchemaError(f"expected 2 fields, got {len(rowvals)}", line=lineno)
            try:
                t, v = int(rowvals[0]), float(rowvals[1])
            except ValueError as exc:
                raise SchemaError(str(exc), line=lineno) from exc
            if t != lineno - 1:
                raise SchemaError(f"t must be contiguous from 1, got {t}", line=lineno)
            values.append(v)
    if not values:
        raise SchemaError("file contains no data rows")
    return ThresholdSeries(np.asarray(values))


# ---------------------------------------------------------------------------
# per-cell transforms (real-data preprocessing convenience)


def apply_transform(series: MatrixSeries, kind: str) -> MatrixSeries:
    """Apply a per-cell series transform: diff, logdiff, or log2diff.

    ``diff`` shortens the series by 1, ``logdiff`` (first difference of the
    log) by 1, ``log2diff`` (second difference of the log) by 2.  Log
    transforms require strictly positive values.
    """
    if kind not in TRANSFORMS:
        raise ValueError(f"unknown transform {kind!r}, expected one of {TRANSFORMS}")
    data = series.data
    if kind == "none":
        return series
    if kind == "diff":
        return MatrixSeries(np.diff(data, axis=0))
    bad = data <= 0.0
    if bad.any():
        t, r, c = (int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteValue(
            f"log transform needs positive values; found {data[t, r, c]} at "
            f"(t={t}, row={r}, col={c})",
            index=(t, r, c),
        )
    logd = np.log(data)
    order = 1 if kind == "logdiff" else 2
    return MatrixSeries(np.diff(logd, n=order, axis=0))


# ---------------------------------------------------------------------------
# JSON artifacts


def _space_map(d: Mapping, extract) -> Dict[str, Dict[str, object]]:
    return {
        orientation: {str(regime): extract(d[(orientation, regime)]) for regime in (1, 2)}
        for orientation in ("row", "column")
    }


def _counts_to_dict(counts: FactorCountEstimate) -> Dict[str, object]:
    return {
        "k_hat": list(counts.k_hat),
        "chosen_regime": list(counts.chosen_regime),
        "k_by_space": _space_map(counts.k_by_space, int),
        "ratio_curves": _space_map(counts.ratio_curves, lambda v: [float(x) for x in v]),
        "kernel_norms": _space_map(counts.kernel_norms, float),
        "eigenvalues": _space_map(counts.eigenvalues, lambda v: [float(x) for x in v]),
        "eta": list(counts.eta),
    }


def fitted_model_to_dict(model: FittedModel) -> Dict[str, object]:
    cfg = asdict(model.config)
    cfg["k_override"] = list(model.config.k_override) if model.config.k_override else None
    cfg["eta_quantiles"] = list(model.config.eta_quantiles)
    return {
        "k_hat": list(model.k_hat),
        "r_tilde": model.r_tilde,
        "eta": list(model.eta),
        "loadings": _space_map(model.loadings, lambda L: [[float(x) for x in row] for row in L.Q]),
        "eigenvalues": _space_map(model.eigenvalues, lambda v: [float(x) for x in v]),
        "ghat_curve": {
            "r": [float(x) for x in model.threshold.grid],
            "value": [float(x) for x in model.threshold.values],
        },
        "factor_counts": _counts_to_dict(model.factor_counts) if model.factor_counts else None,
        "config": cfg,
    }


def write_fitted_model(path, model: FittedModel, extra: Optional[Mapping] = None) -> None:
    doc = fitted_model_to_dict(model)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_loadings_csv(path, model: FittedModel) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["space", "regime", "row", "col", "value"])
        for (orientation, regime), L in model.loadings.items():
            for r in range(L.p):
                for c in range(L.k):
                    w.writerow([orientation, regime, r + 1, c + 1, _fmt(L.Q[r, c])])


def write_curve_csv(path, grid: Sequence[float], values: Sequence[float]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "ghat"])
        for r, v in zip(grid, values):
            w.writerow([_fmt(r), _fmt(v)])


def write_ratio_curves_csv(path, counts: FactorCountEstimate) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["space", "regime", "k", "eigenvalue_k", "ratio_k1_over_k"])
        for (orientation, regime), curve in counts.ratio_curves.items():
            vals = counts.eigenvalues[(orientation, regime)]
            for k, ratio in enumerate(curve, start=1):
                w.writerow([orientation, regime, k, _fmt(vals[k - 1]), _fmt(ratio)])


def write_truth(path, ds: SimulatedDataset) -> None:
    t = ds.truth
    doc = {
        "r0": t.r0,
        "R1": t.R1.tolist(),
        "R2": t.R2.tolist(),
        "C1": t.C1.tolist(),
        "C2": t.C2.tolist(),
        "F": t.F.tolist(),
        "spec": _spec_to_dict(ds.spec),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def read_truth(path) -> DgpTruth:
    doc = json.loads(Path(path).read_text())
    return DgpTruth(
        R1=np.asarray(doc["R1"], dtype=np.float64),
        R2=np.asarray(doc["R2"], dtype=np.float64),
        C1=np.asarray(doc["C1"], dtype=np.float64),
        C2=np.asarray(doc["C2"], dtype=np.float64),
        F=np.asarray(doc["F"], dtype=np.float64),
        r0=float(doc["r0"]),
    )


def _spec_to_dict(spec: DgpSpec) -> Dict[str, object]:
    d = asdict(spec)
    d["ar_diag"] = list(spec.ar_diag)
    d["delta"] = list(spec.delta)
    d["beta"] = list(spec.beta)
    return d


def read_dgp_spec(path_or_doc) -> DgpSpec:
    doc = (
        json.loads(Path(path_or_doc).read_text())
        if not isinstance(path_or_doc, Mapping)
        else dict(path_or_doc)
    )
    known = {f for f in DgpSpec.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"unknown DGP spec fields: {sorted(unknown)}")
    for key in ("ar_diag", "delta", "beta"):
        if key in doc:
            doc[key] = tuple(doc[key])
    try:
        return DgpSpec(**doc)
    except TypeError as exc:
        raise SchemaError(f"invalid DGP spec: {exc}") from exc


def read_experiment_grid(path) -> ExperimentGrid:
    """Parse a Monte Carlo grid description.

    Schema::

        {
          "base": { ... DgpSpec fields ... },
          "settings": [{"name": "s1", ...DgpSpec overrides...}, ...],
          "n_reps": 100,
          "k_variants": ["estimated", [3, 3]],
          "master_seed": 1,
          "estimation": { ... EstimationConfig fields ... }   # optional
        }
    """
    doc = json.loads(Path(path).read_text())
    for key in ("base", "settings", "n_reps", "master_seed"):
        if key not in doc:
            raise SchemaError(f"grid file missing required key {key!r}")
    base = read_dgp_spec(doc["base"])
    sweeps = {}
    for entry in doc["settings"]:
        entry = dict(entry)
        name = entry.pop("name", None)
        if not name:
            raise SchemaError("every settings entry needs a 'name'")
        if name in sweeps:
            raise SchemaError(f"duplicate setting name {name!r}")
        for key in ("ar_diag", "delta", "beta"):
            if key in entry:
                entry[key] = tuple(entry[key])
        sweeps[name] = entry
    variants = tuple(
        v if isinstance(v, str) else (int(v[0]), int(v[1]))
        for v in doc.get("k_variants", ["estimated"])
    )
    est = doc.get("estimation", {})
    if "eta_quantiles" in est:
        est["eta_quantiles"] = tuple(est["eta_quantiles"])
    if "k_override" in est and est["k_override"] is not None:
        est["k_override"] = tuple(est["k_override"])
    try:
        config = EstimationConfig(**est)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid estimation config: {exc}") from exc
    return ExperimentGrid(
        base=base,
        sweeps=sweeps,
        n_reps=int(doc["n_reps"]),
        k_variants=variants,
        master_seed=int(doc["master_seed"]),
        config=config,
    )


def metrics_to_records(table: MetricsTable) -> List[Dict[str, object]]:
    records = []
    for row in table.rows:
        records.append(
            {
                "setting": row.setting,
                "k_variant": row.k_variant,
                "n_reps": row.n_reps,
                "n_failures": row.n_failures,
                "khat_freq": dict(row.khat_freq),
                "abs_err_mean": row.abs_err_mean,
                "abs_err_sd": row.abs_err_sd,
                "distance_mean": dict(row.distance_mean),
                "distance_quartiles": {
                    k: list(v) for k, v in row.distance_quartiles.items()
                },
                "hist_edges": [float(x) for x in row.hist_edges],
                "hist_counts": [int(x) for x in row.hist_counts],
                "r_err_samples": [float(x) for x in row.r_err_samples],
                "distance_samples": {
                    k: [float(x) for x in v] for k, v in row.distance_samples.items()
                },
                "khat_samples": [list(k) for k in row.khat_samples],
            }
        )
    return records


def write_metrics(out_dir, table: MetricsTable) -> None:
    """Emit metrics.json (full) and metrics.csv (one row per setting x variant)."""
    out_dir = Path(out_dir)
    records = metrics_to_records(table)
    (out_dir / "metrics.json").write_text(json.dumps({"rows": records}, indent=2) + "\n")
    spaces = ["row_1", "row_2", "column_1", "column_2"]
    with (out_dir / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        header = ["setting", "k_variant", "n_reps", "n_failures", "abs_err_mean", "abs_err_sd"]
        for s in spaces:
            header += [f"D_{s}_mean", f"D_{s}_q25", f"D_{s}_q50", f"D_{s}_q75"]
        header.append("khat_freq_json")
        w.writerow(header)
        for row in table.rows:
            vals = [
                row.setting,
                row.k_variant,
                row.n_reps,
                row.n_failures,
                _fmt(row.abs_err_mean),
                _fmt(row.abs_err_sd),
            ]
            for s in spaces:
                q = row.distance_quartiles[s]
                vals += [_fmt(row.distance_mean[s]), _fmt(q[0]), _fmt(q[1]), _fmt(q[2])]
            vals.append(json.dumps(row.khat_freq, sort_keys=True))
            w.writerow(vals)


def write_candidate_scores(out_dir, scores: Sequence[CandidateScore]) -> None:
    out_dir = Path(out_dir)
    with (out_dir / "ranking.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "name", "E", "error"])
        for rank, s in enumerate(scores, start=1):
            w.writerow([rank, s.name, _fmt(s.E) if np.isfinite(s.E) else "inf", s.error or ""])
    doc = [
        {"rank": i + 1, "name": s.name, "E": s.E if np.isfinite(s.E) else None, "error": s.error}
        for i, s in enumerate(scores)
    ]
    (out_dir / "ranking.json").write_text(json.dumps(doc, indent=2) + "\n")
