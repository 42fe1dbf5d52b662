"""Shape of the threshold objective G(r) under different factor strengths.

G(r) sums, over both orientations and regimes, the spectral norm of the
lag-covariance kernel at candidate threshold r projected onto the
complement of a pilot loading-space estimate.  It vanishes at the true
threshold in the noiseless limit and dips near it otherwise; weak factors
flatten the dip.  Writes one CSV per setting for plotting.
"""

from pathlib import Path

from tmfm import DgpSpec, estimate_threshold, quantile, simulate_dataset
from tmfm.io import write_curve_csv

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

settings = {
    "all_strong": (0.0, 0.0),
    "weak_regime1": (0.5, 0.0),
    "weak_regime2": (0.0, 0.5),
    "weak_both": (0.5, 0.5),
}

for name, (d11, d12) in settings.items():
    spec = DgpSpec(p1=20, p2=20, T=1200, delta=(d11, d12, 0.0, 0.0), seed=7)
    ds = simulate_dataset(spec)
    e1, e2 = quantile(ds.z, 0.25), quantile(ds.z, 0.75)
    est = estimate_threshold(ds.X, ds.z, e1, e2, k1=3, k2=3)
    path = OUT / f"ghat_{name}.csv"
    write_curve_csv(path, est.grid, est.values)
    rng = est.values.max() / max(est.values.min(), 1e-300)
    print(
        f"{name:>13}: r_hat = {est.r_hat:+.4f}, curve range ratio = {rng:9.1f} -> {path.name}"
    )

print(f"\ncurves written to {OUT}/ (columns r, ghat); the dip sits near r0 = 0")
