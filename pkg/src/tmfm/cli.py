"""Command-line entry point.

Subcommands: fit, simulate, mc, gr-curve, eigen-ratios, select-threshold.
Every run writes a ``manifest.json`` (resolved config, seed, version, input
digests, wall time) sufficient to reproduce its outputs bit for bit.
Errors exit nonzero with a machine-readable JSON object on stderr:
2 = input error, 3 = numerical failure, 4 = config error.

Environment overrides (the only ones honored): ``TMFM_JOBS`` sets the
default worker count for ``mc``; ``TMFM_VERBOSE=1`` enables progress lines.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional

from . import __version__, errors
from .core import EstimationConfig, build_dataset
from .estimate import (
    EstimationStageError,
    estimate_factor_counts,
    estimate_threshold,
    fit,
    select_threshold_variable,
)
from .harness import run_monte_carlo
from .io import (
    apply_transform,
    read_dgp_spec,
    read_experiment_grid,
    read_matrix_series,
    read_threshold_series,
    read_truth,
    write_candidate_scores,
    write_curve_csv,
    write_fitted_model,
    write_loadings_csv,
    write_matrix_series,
    write_metrics,
    write_ratio_curves_csv,
    write_threshold_series,
    write_truth,
)
from .simulate import simulate_dataset
from .spectral import orthonormal_basis, space_distance

EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

_INPUT_ERRORS = (
    errors.SchemaError,
    errors.DimensionMismatch,
    errors.NonFiniteValue,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)
_CONFIG_ERRORS = (errors.InvalidQuantile, errors.KOutOfRange, ValueError)
_NUMERIC_ERRORS = (
    errors.EmptyRegime,
    errors.EmptyGrid,
    errors.NoConvergence,
    errors.NotSymmetric,
    errors.AmbientDimMismatch,
    errors.ShapeMismatch,
    errors.IndexOutOfRange,
    errors.LagTooLarge,
    errors.NonStationaryAR,
    errors.NotPositiveDefinite,
    errors.EmptySeries,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse problems are config errors, not SystemExit
        raise _UsageError(message)


def _classify(exc: BaseException) -> int:
    if isinstance(exc, EstimationStageError):
        return _classify(exc.cause)
    if isinstance(exc, _INPUT_ERRORS):
        return EXIT_INPUT
    if isinstance(exc, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    if isinstance(exc, (_UsageError,) + _CONFIG_ERRORS):
        return EXIT_CONFIG
    raise exc


@dataclass(frozen=True)
class RunManifest:
    """Provenance record written beside every command's outputs."""

    command: str
    config: Dict[str, object]
    seed: Optional[int]
    version: str
    input_digests: Dict[str, str]
    wall_time_s: float


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: Dict, seed, inputs, t_start):
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        version=__version__,
        input_digests={str(p): _sha256(Path(p)) for p in inputs},
        wall_time_s=time.time() - t_start,
    )
    (out_dir / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_eta(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise _UsageError(f"--eta expects 'QLO,QHI', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_k(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise _UsageError(f"--k expects 'K1xK2', got {text!r}")
    return int(parts[0]), int(parts[1])


def _estimation_config(args) -> EstimationConfig:
    kwargs = {}
    if getattr(args, "h0", None) is not None:
        kwargs["h0"] = args.h0
    if getattr(args, "eta", None) is not None:
        kwargs["eta_quantiles"] = _parse_eta(args.eta)
    if getattr(args, "k", None) is not None:
        kwargs["k_override"] = _parse_k(args.k)
    if getattr(args, "t0_fraction", None) is not None:
        kwargs["t0_fraction"] = args.t0_fraction
    return EstimationConfig(**kwargs)


def _load_dataset(args):
    X = read_matrix_series(args.data)
    if getattr(args, "transform", "none") != "none":
        X = apply_transform(X, args.transform)
    z = read_threshold_series(args.threshold)
    return build_dataset(X.data, z.z)


def _config_dict(config: EstimationConfig) -> Dict[str, object]:
    d = asdict(config)
    d["eta_quantiles"] = list(config.eta_quantiles)
    d["k_override"] = list(config.k_override) if config.k_override else None
    return d


# ---------------------------------------------------------------------------
# subcommands


def _cmd_fit(args) -> int:
    t_start = time.time()
    config = _estimation_config(args)
    X, z = _load_dataset(args)
    model = fit(X, z, config)
    out = _out_dir(args)
    extra = {}
    truth_path = Path(args.truth) if args.truth else Path(args.data).parent / "truth.json"
    if truth_path.exists():
        truth = read_truth(truth_path)
        spans = {
            ("row", 1): truth.R1,
            ("row", 2): truth.R2,
            ("column", 1): truth.C1,
            ("column", 2): truth.C2,
        }
        extra["truth_report"] = {
            "abs_threshold_error": abs(model.r_tilde - truth.r0),
            "space_distance": {
                f"{key[0]}_{key[1]}": space_distance(
                    model.loadings[key], orthonormal_basis(spans[key])
                )
                for key in spans
            },
        }
    write_fitted_model(out / "fitted_model.json", model, extra=extra)
    write_loadings_csv(out / "loadings.csv", model)
    write_curve_csv(out / "ghat_curve.csv", model.threshold.grid, model.threshold.values)
    inputs = [args.data, args.threshold] + ([str(truth_path)] if truth_path.exists() else [])
    _write_manifest(out, "fit", _config_dict(config), config.seed, inputs, t_start)
    print(f"fit: k_hat={model.k_hat} r_tilde={model.r_tilde:.6g} -> {out}")
    return 0


def _cmd_simulate(args) -> int:
    t_start = time.time()
    spec = read_dgp_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    ds = simulate_dataset(spec)
    out = _out_dir(args)
    write_matrix_series(out / ("X.bin" if args.binary else "X.csv"), ds.X,
                        fmt="binary" if args.binary else "csv")
    write_threshold_series(out / "z.csv", ds.z)
    write_truth(out / "truth.json", ds)
    from .io import _spec_to_dict

    _write_manifest(out, "simulate", _spec_to_dict(spec), spec.seed, [args.spec], t_start)
    print(f"simulate: T={spec.T} p1={spec.p1} p2={spec.p2} seed={spec.seed} -> {out}")
    return 0


def _cmd_mc(args) -> int:
    t_start = time.time()
    grid = read_experiment_grid(args.grid)
    n_jobs = args.jobs or int(os.environ.get("TMFM_JOBS", "1"))
    verbose = os.environ.get("TMFM_VERBOSE", "0") == "1"
    table = run_monte_carlo(grid, n_jobs=n_jobs, verbose=verbose)
    out = _out_dir(args)
    write_metrics(out, table)
    _write_manifest(
        out,
        "mc",
        {"grid_file": str(args.grid), "n_jobs": n_jobs},
        grid.master_seed,
        [args.grid],
        t_start,
    )
    print(f"mc: {len(table.rows)} rows -> {out}")
    return 0


def _cmd_gr_curve(args) -> int:
    t_start = time.time()
    config = _estimation_config(args)
    X, z = _load_dataset(args)
    from .core import quantile

    eta1 = quantile(z, config.eta_quantiles[0])
    eta2 = quantile(z, config.eta_quantiles[1])
    if config.k_override is not None:
        k1, k2 = config.k_override
    else:
        k1, k2 = estimate_factor_counts(X, z, eta1, eta2, config.h0).k_hat
    est = estimate_threshold(X, z, eta1, eta2, k1, k2, config.h0)
    out = _out_dir(args)
    write_curve_csv(out / "ghat_curve.csv", est.grid, est.values)
    (out / "summary.json").write_text(
        json.dumps(
            {"r_hat": est.r_hat, "k": [k1, k2], "eta": list(est.eta)}, indent=2
        )
        + "\n"
    )
    _write_manifest(out, "gr-curve", _config_dict(config), config.seed,
                    [args.data, args.threshold], t_start)
    print(f"gr-curve: r_hat={est.r_hat:.6g} over {est.grid.size} candidates -> {out}")
    return 0


def _cmd_eigen_ratios(args) -> int:
    t_start = time.time()
    config = _estimation_config(args)
    X, z = _load_dataset(args)
    from .core import quantile

    eta1 = quantile(z, config.eta_quantiles[0])
    eta2 = quantile(z, config.eta_quantiles[1])
    counts = estimate_factor_counts(X, z, eta1, eta2, config.h0)
    out = _out_dir(args)
    write_ratio_curves_csv(out / "eigen_ratios.csv", counts)
    (out / "summary.json").write_text(
        json.dumps(
            {
                "k_hat": list(counts.k_hat),
                "chosen_regime": list(counts.chosen_regime),
                "kernel_norms": {
                    f"{k[0]}_{k[1]}": v for k, v in counts.kernel_norms.items()
                },
                "eta": list(counts.eta),
            },
            indent=2,
        )
        + "\n"
    )
    _write_manifest(out, "eigen-ratios", _config_dict(config), config.seed,
                    [args.data, args.threshold], t_start)
    print(f"eigen-ratios: k_hat={counts.k_hat} -> {out}")
    return 0


def _cmd_select_threshold(args) -> int:
    t_start = time.time()
    config = _estimation_config(args)
    X = read_matrix_series(args.data)
    if args.transform != "none":
        X = apply_transform(X, args.transform)
    cand_dir = Path(args.candidates)
    files = sorted(cand_dir.glob("*.csv"))
    if not files:
        raise errors.SchemaError(f"no candidate CSVs in {cand_dir}")
    candidates = {f.stem: read_threshold_series(f) for f in files}
    scores = select_threshold_variable(X, candidates, config)
    out = _out_dir(args)
    write_candidate_scores(out, scores)
    _write_manifest(out, "select-threshold", _config_dict(config), config.seed,
                    [args.data] + [str(f) for f in files], t_start)
    best = scores[0]
    print(f"select-threshold: best={best.name} E={best.E:.6g} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tmfm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tmfm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_estimation_flags(p, with_k=True):
        p.add_argument("--h0", type=int, default=None, help="lag horizon (default 2)")
        p.add_argument("--eta", default=None, help="quantile pair QLO,QHI (default 0.25,0.75)")
        if with_k:
            p.add_argument("--k", default=None, help="factor counts K1xK2 (default: estimated)")

    def add_data_flags(p):
        p.add_argument("--data", required=True, help="matrix series (long CSV or binary)")
        p.add_argument("--threshold", required=True, help="threshold series CSV")
        p.add_argument(
            "--transform",
            choices=["none", "diff", "logdiff", "log2diff"],
            default="none",
            help="per-cell preprocessing applied to the matrix series",
        )

    p = sub.add_parser("fit", help="fit the full pipeline on a dataset")
    add_data_flags(p)
    add_estimation_flags(p)
    p.add_argument("--truth", default=None, help="truth.json for a post-hoc accuracy report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="generate a dataset from a DGP spec")
    p.add_argument("--spec", required=True, help="DGP spec JSON")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.add_argument("--binary", action="store_true", help="write X in the binary format")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("mc", help="run a Monte Carlo experiment grid")
    p.add_argument("--grid", required=True, help="experiment grid JSON")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("gr-curve", help="emit the threshold objective curve")
    add_data_flags(p)
    add_estimation_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gr_curve)

    p = sub.add_parser("eigen-ratios", help="emit eigenvalue-ratio curves per space")
    add_data_flags(p)
    add_estimation_flags(p, with_k=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eigen_ratios)

    p = sub.add_parser("select-threshold", help="rank candidate threshold series")
    p.add_argument("--data", required=True)
    p.add_argument("--candidates", required=True, help="directory of candidate z CSVs")
    p.add_argument(
        "--transform",
        choices=["none", "diff", "logdiff", "log2diff"],
        default="none",
    )
    add_estimation_flags(p)
    p.add_argument("--t0-fraction", dest="t0_fraction", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select_threshold)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except BaseException as exc:  # noqa: BLE001 - single choke point for exit codes
        try:
            code = _classify(exc)
        except BaseException:
            raise exc
        payload = {
            "error": {
                "type": type(exc).__name__,
                "message": str(exc),
                "exit_code": code,
            }
        }
        print(json.dumps(payload), file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
