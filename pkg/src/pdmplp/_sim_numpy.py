"""Vectorized numpy trajectory backend.

Consumes exactly the same counter-based uniform stream as the scalar
kernels in ``_sim_kernels`` (same (trajectory, draw-index) mapping), stepping
all live trajectories of a chunk synchronously.  Per-trajectory outputs
agree with the scalar kernels to the last ulp of the shared arithmetic
(libm scalar vs SIMD log/exp may differ by one ulp).
"""

import numpy as np

from ._sim_kernels import INV_2_53, N_BISECT, U64_GOLD, U64_MIX1, U64_MIX2

DEFAULT_CHUNK = 16384


_MASK64 = (1 << 64) - 1
_GOLD_INT = int(U64_GOLD)


def mix64_vec(z):
    z = (z ^ (z >> np.uint64(30))) * U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * U64_MIX2
    return z ^ (z >> np.uint64(31))


def trajectory_keys(seed, lo, hi):
    idx = np.arange(lo, hi, dtype=np.uint64)
    base = np.uint64((int(seed) + _GOLD_INT) & _MASK64)
    return mix64_vec(base + U64_GOLD * idx)


def draw_unit_vec(keys, didx):
    off = np.uint64((_GOLD_INT * (int(didx) + 1)) & _MASK64)
    z = mix64_vec(keys + off)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * INV_2_53


def _select_padded(cdf_rows, u):
    """First index per row with cdf >= u (rows already padded with 1s)."""
    return (cdf_rows < u[:, None]).sum(axis=1)


def _hermite_cells(t0, t1, y0, y1, m0, m1, t):
    h = t1 - t0
    u = (t - t0) / h
    h00 = (1.0 + 2.0 * u) * (1.0 - u) ** 2
    h10 = u * (1.0 - u) ** 2
    h01 = u * u * (3.0 - 2.0 * u)
    h11 = u * u * (u - 1.0)
    return h00 * y0 + h01 * y1 + h * (h10 * m0 + h11 * m1)


def _locate_ragged(ptr, vals, groups, x):
    """Absolute index of the cell containing x, per sample.

    Sample i searches the slice ``vals[ptr[groups[i]]:ptr[groups[i]+1]]``
    for the last node <= x (duplicated discontinuity nodes resolve to the
    rightmost copy, matching the scalar kernels), clamped into the cells.
    Samples are grouped by sorting so each distinct group costs one
    searchsorted call."""
    n = len(groups)
    out = np.empty(n, dtype=np.int64)
    order = np.argsort(groups, kind="stable")
    gsorted = groups[order]
    xsorted = x[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(gsorted)) + 1, [n]])
    for a, b in zip(starts[:-1], starts[1:]):
        ug = int(gsorted[a])
        lo, hi = int(ptr[ug]), int(ptr[ug + 1])
        pos = np.searchsorted(vals[lo:hi], xsorted[a:b], side="right") - 1
        np.clip(pos, 0, hi - lo - 2, out=pos)
        out[order[a:b]] = lo + pos
    return out


def grid_values_vec(ptr, gt, gc, gs, groups, t):
    """Interpolant values at t on the ragged grids selected by ``groups``."""
    cell = _locate_ragged(ptr, gt, groups, t)
    return _hermite_cells(gt[cell], gt[cell + 1], gc[cell], gc[cell + 1],
                          gs[cell], gs[cell + 1], t)


def invert_grids_vec(ptr, gt, gc, gs, groups, y):
    """First t with cumulative(t) = y per sample, fixed-count bisection."""
    cell = _locate_ragged(ptr, gc, groups, y)
    t0 = gt[cell]
    t1 = gt[cell + 1]
    y0 = gc[cell]
    y1 = gc[cell + 1]
    m0 = gs[cell]
    m1 = gs[cell + 1]
    lo = t0.copy()
    hi = t1.copy()
    for _ in range(N_BISECT):
        mid = 0.5 * (lo + hi)
        below = _hermite_cells(t0, t1, y0, y1, m0, m1, mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _merge_sparse(traj, rows, vals, R, mu_sum, mu_sumsq, out_mass):
    """Reduce per-stage (trajectory, row, weight) triplets into per-(traj,
    row) totals, then into the global first/second-moment accumulators."""
    if len(traj) == 0:
        return
    key = traj.astype(np.int64) * np.int64(R) + rows.astype(np.int64)
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(key)) + 1])
    totals = np.add.reduceat(vals, starts)
    urow = (key[starts] % R).astype(np.int64)
    utraj = (key[starts] // R).astype(np.int64)
    np.add.at(mu_sum, urow, totals)
    np.add.at(mu_sumsq, urow, totals * totals)
    np.add.at(out_mass, utraj, totals)


def simulate_time_numpy(tb, seed, n_traj, eps_disc, max_stages,
                        out, chunk=DEFAULT_CHUNK):
    """Vectorized counterpart of ``simulate_time_kernel``."""
    s = tb.n_states
    R = tb.n_rows
    nc = tb.n_costs
    for base in range(0, n_traj, chunk):
        size = min(chunk, n_traj - base)
        keys = trajectory_keys(seed, base, base + size)
        u0 = draw_unit_vec(keys, 0)
        Z = _select_padded(tb.nu0_cdf[None, :].repeat(size, axis=0), u0)
        w = np.ones(size)
        t_now = np.zeros(size)
        Rbuf = np.zeros((size, s))
        tr_l, row_l, w_l = [], [], []
        act = np.arange(size)
        k = 0
        while len(act) and k < max_stages:
            live = w[act] >= eps_disc
            done = act[~live]
            out.capped[base + done] = 0
            act = act[live]
            if len(act) == 0:
                break
            w_act = w[act]
            u1 = draw_unit_vec(keys[act], 1 + 3 * k)
            Za = Z[act]
            row = tb.pol_rows[Za, _select_padded(tb.pol_cdf[Za], u1)]
            tr_l.append(act.copy())
            row_l.append(row)
            w_l.append(w_act.copy())
            np.add.at(Rbuf, (act, Za), w_act)
            Rbuf[act] -= w_act[:, None] * tb.G[row]
            g = tb.row_group[row]
            u2 = draw_unit_vec(keys[act], 2 + 3 * k)
            y = -np.log(u2)
            tstar = tb.grp_tstar[g]
            bnd = np.isfinite(tstar) & (y >= tb.grp_lam_end[g])
            dur = np.empty(len(act))
            dur[bnd] = tstar[bnd]
            nb = ~bnd
            if nb.any():
                dur[nb] = invert_grids_vec(tb.gptr, tb.gt, tb.gc, tb.gs,
                                           g[nb], y[nb])
            for i in range(nc):
                gi = g * nc + i
                out.J[base + act, i] += w_act * grid_values_vec(
                    tb.cptr, tb.ct, tb.cv, tb.cs, gi, dur)
            w_next = w_act * np.exp(-tb.alpha * dur)
            u3 = draw_unit_vec(keys[act], 3 + 3 * k)
            z_next = np.empty(len(act), dtype=np.int64)
            if bnd.any():
                rb = row[bnd]
                sel = _select_padded(tb.BND_CDF[rb], u3[bnd])
                z_next[bnd] = tb.BND_STATE[rb, sel]
                out.J[base + act[bnd]] += (w_next[bnd, None]
                                           * tb.r_cost[:, rb].T)
                out.hits[base + act[bnd]] += 1
            if nb.any():
                gnb = g[nb]
                pc_local = (tb.PEND[gnb] <= dur[nb][:, None]).sum(axis=1)
                pid = tb.pptr[gnb] + pc_local
                sel = _select_padded(tb.PC_CDF[pid], u3[nb])
                z_next[nb] = tb.PC_STATE[pid, sel]
            t_now[act] += dur
            Z[act] = z_next
            w[act] = w_next
            out.stages[base + act] += 1
            k += 1
        out.capped[base + act] = 1
        _merge_sparse(np.concatenate(tr_l) if tr_l else np.empty(0, np.int64),
                      np.concatenate(row_l) if row_l else np.empty(0,
                                                                   np.int64),
                      np.concatenate(w_l) if w_l else np.empty(0),
                      R, out.mu_sum, out.mu_sumsq,
                      out.mass[base:base + size])
        diffs = Rbuf - tb.nu0[None, :]
        out.sum_r += diffs.sum(axis=0)
        out.sumsq_r += (diffs * diffs).sum(axis=0)


def simulate_chain_numpy(tb, seed, n_traj, max_stages, out,
                         chunk=DEFAULT_CHUNK):
    """Vectorized counterpart of ``simulate_chain_kernel``."""
    s = tb.n_states
    R = tb.n_rows
    nc = tb.n_costs
    for base in range(0, n_traj, chunk):
        size = min(chunk, n_traj - base)
        keys = trajectory_keys(seed, base, base + size)
        u0 = draw_unit_vec(keys, 0)
        Z = _select_padded(tb.nu0_cdf[None, :].repeat(size, axis=0), u0)
        Rbuf = np.zeros((size, s))
        tr_l, row_l, w_l = [], [], []
        act = np.arange(size)
        k = 0
        while len(act) and k < max_stages:
            u1 = draw_unit_vec(keys[act], 1 + 2 * k)
            Za = Z[act]
            row = tb.pol_rows[Za, _select_padded(tb.pol_cdf[Za], u1)]
            tr_l.append(act.copy())
            row_l.append(row)
            w_l.append(np.ones(len(act)))
            np.add.at(Rbuf, (act, Za), 1.0)
            Rbuf[act] -= tb.G[row]
            for i in range(nc):
                out.J[base + act, i] += tb.C[i, row]
            out.stages[base + act] += 1
            u2 = draw_unit_vec(keys[act], 2 + 2 * k)
            tgt = (tb.G_cdf[row] < u2[:, None]).sum(axis=1)
            absorbed = tgt >= s
            out.capped[base + act[absorbed]] = 0
            Z[act[~absorbed]] = tgt[~absorbed]
            act = act[~absorbed]
            k += 1
        out.capped[base + act] = 1
        _merge_sparse(np.concatenate(tr_l) if tr_l else np.empty(0, np.int64),
                      np.concatenate(row_l) if row_l else np.empty(0,
                                                                   np.int64),
                      np.concatenate(w_l) if w_l else np.empty(0),
                      R, out.mu_sum, out.mu_sumsq,
                      out.mass[base:base + size])
        diffs = Rbuf - tb.nu0[None, :]
        out.sum_r += diffs.sum(axis=0)
        out.sumsq_r += (diffs * diffs).sum(axis=0)
