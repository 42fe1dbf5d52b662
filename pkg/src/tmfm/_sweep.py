"""Incremental engine behind the threshold-grid kernel sweep.

The kernel for orientation s and regime i at a single threshold r collapses
to the Gram-weighted quadratic form

    T^2 * M1_i(r) = sum_h sum_{t,u} c_t c_u <X_{t+h}, X_{u+h}>_F X_t X_u'
    T^2 * M2_i(r) = sum_h sum_{t,u} c_t c_u <X_{t+h}, X_{u+h}>_F X_t' X_u

with membership weights c_t = I_{t,i}(r) in {0, 1} (at a single threshold
the cross-regime indicator products in the kernel's j-sum vanish, leaving
one weight vector per regime).  Along an ascending grid every indicator
I(z_t < r) turns on exactly once, so each c_t flips exactly once over the
whole sweep.  A single flip of c_tau changes the quadratic form by

    dM = dc * (X_tau H' + H X_tau') + <X_{tau+h}, X_{tau+h}>_F X_tau X_tau',
    H  = sum_u c_u <X_{tau+h}, X_{u+h}>_F X_u   (c taken before the flip),

which costs one Gram-row weighted sum of the series plus two small
rank-style updates; both orientations share H.  Events are processed in a
fixed order (ascending grid step, then ascending time index, then regime,
then lag), so results are bitwise reproducible run to run.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_ENGINE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_ENGINE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]


@njit(cache=True)
def _apply_flip(acc1, acc2, Xt, H, dc, w0, p1, p2):
    """Add dc*(Xt H' + H Xt') + w0*Xt Xt' (and transposed analogue) in place.

    Each symmetric entry is computed once and mirrored so the accumulators
    stay exactly symmetric.
    """
    for a in range(p1):
        for b in range(a + 1):
            s = 0.0
            q = 0.0
            for m in range(p2):
                s += Xt[a, m] * H[b, m] + H[a, m] * Xt[b, m]
                q += Xt[a, m] * Xt[b, m]
            val = dc * s + w0 * q
            acc1[a, b] += val
            if a != b:
                acc1[b, a] += val
    for m in range(p2):
        for l in range(m + 1):
            s = 0.0
            q = 0.0
            for a in range(p1):
                s += Xt[a, m] * H[a, l] + H[a, m] * Xt[a, l]
                q += Xt[a, m] * Xt[a, l]
            val = dc * s + w0 * q
            acc2[m, l] += val
            if m != l:
                acc2[l, m] += val


@njit(cache=True)
def _sweep_events(
    Xd,
    Xflat,
    Gm,
    flip_u,
    flip_g,
    cstate,
    combos,
    acc1,
    acc2,
    out1,
    out2,
):
    T = Xd.shape[0]
    p1 = Xd.shape[1]
    p2 = Xd.shape[2]
    G = out1.shape[0]
    ncombo = combos.shape[0]
    n_events = flip_u.shape[0]
    ev = 0
    w = np.empty(T)
    for g in range(G):
        while ev < n_events and flip_g[ev] == g:
            tau = flip_u[ev]
            ev += 1
            for ci in range(ncombo):
                i = combos[ci, 0]
                h = combos[ci, 1]
                n = T - h
                if tau >= n:
                    continue
                # I(z_tau < r) turns on: regime 1 gains the point, regime 2 loses it
                dc = 1.0 if i == 1 else -1.0
                grow = Gm[tau + h]
                for t in range(n):
                    w[t] = cstate[ci, t] * grow[t + h]
                Hvec = np.dot(w[:n], Xflat[:n])
                H = Hvec.reshape(p1, p2)
                w0 = grow[tau + h]
                _apply_flip(acc1[i - 1], acc2[i - 1], Xd[tau], H, dc, w0, p1, p2)
                cstate[ci, tau] += dc
        out1[g] = acc1
        out2[g] = acc2


def run(Xd, zv, grid, h0, regimes, init_raw):
    """Sweep the kernels over an ascending grid of single thresholds.

    Parameters
    ----------
    Xd : (T, p1, p2) ndarray
    zv : (T,) ndarray
    grid : (G,) ascending ndarray
    h0 : int
    regimes : tuple of {1, 2}
        Regimes whose kernels are maintained.
    init_raw : dict regime -> (M1_raw, M2_raw)
        Unscaled kernels at grid[0] (T^2 times the finished kernels).

    Returns
    -------
    (stacks1, stacks2) : dicts regime -> (G, p, p) unscaled kernel stacks.
    """
    T, p1, p2 = Xd.shape
    G = grid.size
    Xd = np.ascontiguousarray(Xd)
    Xflat = Xd.reshape(T, p1 * p2)
    Gm = Xflat @ Xflat.T

    active0 = (zv < grid[0]).astype(np.float64)
    steps = np.searchsorted(grid, zv, side="right")
    sel = (steps >= 1) & (steps <= G - 1)
    us = np.nonzero(sel)[0]
    order = np.lexsort((us, steps[sel]))
    flip_u = us[order].astype(np.int64)
    flip_g = steps[sel][order].astype(np.int64)

    combos = np.array(
        [(i, h) for i in regimes for h in range(1, h0 + 1)], dtype=np.int64
    )
    cstate = np.zeros((combos.shape[0], T))
    for ci, (i, h) in enumerate(combos):
        n = T - h
        cstate[ci, :n] = active0[:n] if i == 1 else 1.0 - active0[:n]

    acc1 = np.zeros((2, p1, p1))
    acc2 = np.zeros((2, p2, p2))
    for i, (m1, m2) in init_raw.items():
        acc1[i - 1] = m1
        acc2[i - 1] = m2
    out1 = np.empty((G, 2, p1, p1))
    out2 = np.empty((G, 2, p2, p2))
    _sweep_events(
        Xd, Xflat, Gm, flip_u, flip_g, cstate, combos, acc1, acc2, out1, out2
    )
    return (
        {i: out1[:, i - 1] for i in regimes},
        {i: out2[:, i - 1] for i in regimes},
    )
