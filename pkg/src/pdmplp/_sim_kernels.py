"""Trajectory-simulation kernels (scalar, numba-compiled when enabled).

Randomness is counter-based: every uniform is a pure function of
(master seed, trajectory index, draw index), so trajectories are
reproducible bit-for-bit, independent of execution order, and the
vectorized numpy backend consumes exactly the same stream.  Draw indices
per trajectory: 0 is the initial state; stage k uses 1+3k (action pair),
2+3k (inter-jump time), 3+3k (post-jump target) in the time-resolved
kernel and 1+2k / 2+2k (pair, combined continue-and-target) in the
embedded-chain kernel.
"""

import math

import numpy as np

from ._accel import maybe_njit

U64_GOLD = np.uint64(0x9E3779B97F4A7C15)
U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = np.uint64(0x94D049BB133111EB)
INV_2_53 = 1.0 / 9007199254740992.0

N_BISECT = 64


@maybe_njit(signature="uint64(uint64)")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * U64_MIX2
    return z ^ (z >> np.uint64(31))


@maybe_njit(signature="uint64(uint64, int64)")
def trajectory_key(seed, idx):
    return mix64(np.uint64(seed) + U64_GOLD * (np.uint64(idx)
                                               + np.uint64(1)))


@maybe_njit(signature="float64(uint64, int64)")
def draw_unit(key, didx):
    """Uniform in the open interval (0, 1) for draw index ``didx``."""
    z = mix64(np.uint64(key) + U64_GOLD * (np.uint64(didx) + np.uint64(1)))
    return (float(z >> np.uint64(11)) + 0.5) * INV_2_53


@maybe_njit
def _hermite_cell(t0, t1, y0, y1, m0, m1, t):
    h = t1 - t0
    u = (t - t0) / h
    h00 = (1.0 + 2.0 * u) * (1.0 - u) ** 2
    h10 = u * (1.0 - u) ** 2
    h01 = u * u * (3.0 - 2.0 * u)
    h11 = u * u * (u - 1.0)
    return h00 * y0 + h01 * y1 + h * (h10 * m0 + h11 * m1)


@maybe_njit
def grid_value(gt, gc, gs, lo, hi, t):
    """Interpolant value at t on the ragged grid slice [lo, hi)."""
    if t <= gt[lo]:
        return gc[lo]
    if t >= gt[hi - 1]:
        return gc[hi - 1] + gs[hi - 1] * (t - gt[hi - 1])
    a = lo
    b = hi - 1
    while b - a > 1:
        mid = (a + b) // 2
        if gt[mid] <= t:
            a = mid
        else:
            b = mid
    while gt[a + 1] <= gt[a]:
        a += 1
    return _hermite_cell(gt[a], gt[a + 1], gc[a], gc[a + 1],
                         gs[a], gs[a + 1], t)


@maybe_njit
def invert_grid(gt, gc, gs, lo, hi, y):
    """First t with cumulative(t) = y, by fixed-count bisection."""
    if y <= gc[lo]:
        return gt[lo]
    if y >= gc[hi - 1]:
        return gt[hi - 1]
    a = lo
    b = hi - 1
    while b - a > 1:
        mid = (a + b) // 2
        if gc[mid] <= y:
            a = mid
        else:
            b = mid
    while gc[a + 1] <= gc[a]:
        if gc[a] >= y:
            return gt[a]
        a += 1
    t_lo = gt[a]
    t_hi = gt[a + 1]
    for _ in range(N_BISECT):
        t_mid = 0.5 * (t_lo + t_hi)
        if _hermite_cell(gt[a], gt[a + 1], gc[a], gc[a + 1],
                         gs[a], gs[a + 1], t_mid) < y:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


@maybe_njit
def simulate_time_kernel(
        seed, n_traj, eps_disc, max_stages, alpha,
        nu0_cdf, pol_rows, pol_cdf,
        row_state, row_group, grp_tstar,
        gptr, gt, gc, gs,
        cptr, ct, cv, cs, n_costs,
        pptr, pend, pc_ptr, pc_state, pc_cdf,
        bnd_ptr, bnd_state, bnd_cdf, r_cost,
        G, nu0,
        out_J, out_mass, out_stages, out_hits, out_capped,
        sum_r, sumsq_r, mu_sum, mu_sumsq,
        n_record, rec_traj, rec_k, rec_T, rec_Z, rec_kappa, rec_iota,
        rec_bhit, row_kappa, row_iota):
    """Time-resolved trajectory loop over the compiled stage tables."""
    s = nu0_cdf.shape[0]
    R = row_state.shape[0]
    r_buf = np.zeros(s)
    mu_buf = np.zeros(R)
    touched = np.empty(max_stages, dtype=np.int64)
    j_loc = np.empty(n_costs)
    rec_pos = 0
    for n in range(n_traj):
        key = trajectory_key(seed, n)
        u = draw_unit(key, 0)
        z = 0
        while nu0_cdf[z] < u:
            z += 1
        w = 1.0
        t_now = 0.0
        n_touch = 0
        hits = 0
        stages = 0
        capped = 1
        for i in range(n_costs):
            j_loc[i] = 0.0
        for k in range(max_stages):
            if w < eps_disc:
                capped = 0
                break
            u1 = draw_unit(key, 1 + 3 * k)
            idx = 0
            while pol_cdf[z, idx] < u1:
                idx += 1
            row = pol_rows[z, idx]
            g = row_group[row]
            mu_buf[row] += w
            touched[n_touch] = row
            n_touch += 1
            r_buf[z] += w
            for jj in range(s):
                r_buf[jj] -= w * G[row, jj]
            u2 = draw_unit(key, 2 + 3 * k)
            y = -math.log(u2)
            tstar = grp_tstar[g]
            glo = gptr[g]
            ghi = gptr[g + 1]
            boundary = False
            if np.isfinite(tstar) and y >= gc[ghi - 1]:
                dur = tstar
                boundary = True
            else:
                dur = invert_grid(gt, gc, gs, glo, ghi, y)
            for i in range(n_costs):
                ci = g * n_costs + i
                j_loc[i] += w * grid_value(ct, cv, cs, cptr[ci],
                                           cptr[ci + 1], dur)
            w_next = w * math.exp(-alpha * dur)
            u3 = draw_unit(key, 3 + 3 * k)
            if boundary:
                hits += 1
                for i in range(n_costs):
                    j_loc[i] += w_next * r_cost[i, row]
                idx = bnd_ptr[row]
                while bnd_cdf[idx] < u3:
                    idx += 1
                z_next = bnd_state[idx]
            else:
                p = pptr[g]
                while pend[p] <= dur:
                    p += 1
                idx = pc_ptr[p]
                while pc_cdf[idx] < u3:
                    idx += 1
                z_next = pc_state[idx]
            if n < n_record and rec_pos < rec_traj.shape[0]:
                rec_traj[rec_pos] = n
                rec_k[rec_pos] = k
                rec_T[rec_pos] = t_now
                rec_Z[rec_pos] = z
                rec_kappa[rec_pos] = row_kappa[row]
                rec_iota[rec_pos] = row_iota[row]
                rec_bhit[rec_pos] = 1 if boundary else 0
                rec_pos += 1
            t_now += dur
            z = z_next
            w = w_next
            stages += 1
        out_mass[n] = 0.0
        for i in range(n_costs):
            out_J[n, i] = j_loc[i]
        out_stages[n] = stages
        out_hits[n] = hits
        out_capped[n] = capped
        for m in range(n_touch):
            row = touched[m]
            val = mu_buf[row]
            if val != 0.0:
                out_mass[n] += val
                mu_sum[row] += val
                mu_sumsq[row] += val * val
                mu_buf[row] = 0.0
        for jj in range(s):
            diff = r_buf[jj] - nu0[jj]
            sum_r[jj] += diff
            sumsq_r[jj] += diff * diff
            r_buf[jj] = 0.0
    return rec_pos


@maybe_njit
def simulate_chain_kernel(
        seed, n_traj, max_stages, n_costs,
        nu0_cdf, pol_rows, pol_cdf,
        row_state, G_cdf, C, G, nu0,
        out_J, out_mass, out_stages, out_hits, out_capped,
        sum_r, sumsq_r, mu_sum, mu_sumsq):
    """Embedded absorbing-chain loop over a tabulated instance.

    Visits carry unit weight; continuation happens with probability equal to
    the kernel row mass and the next state comes from the normalized row, so
    every accumulated quantity estimates the same series as the
    time-resolved kernel.
    """
    s = nu0_cdf.shape[0]
    R = row_state.shape[0]
    r_buf = np.zeros(s)
    mu_buf = np.zeros(R)
    touched = np.empty(max_stages, dtype=np.int64)
    j_loc = np.empty(n_costs)
    for n in range(n_traj):
        key = trajectory_key(seed, n)
        u = draw_unit(key, 0)
        z = 0
        while nu0_cdf[z] < u:
            z += 1
        n_touch = 0
        stages = 0
        capped = 1
        for i in range(n_costs):
            j_loc[i] = 0.0
        for k in range(max_stages):
            u1 = draw_unit(key, 1 + 2 * k)
            idx = 0
            while pol_cdf[z, idx] < u1:
                idx += 1
            row = pol_rows[z, idx]
            mu_buf[row] += 1.0
            touched[n_touch] = row
            n_touch += 1
            r_buf[z] += 1.0
            for jj in range(s):
                r_buf[jj] -= G[row, jj]
            for i in range(n_costs):
                j_loc[i] += C[i, row]
            stages += 1
            u2 = draw_unit(key, 2 + 2 * k)
            if u2 >= G_cdf[row, s - 1]:
                capped = 0
                break
            z = 0
            while G_cdf[row, z] < u2:
                z += 1
        out_mass[n] = 0.0
        for i in range(n_costs):
            out_J[n, i] = j_loc[i]
        out_stages[n] = stages
        out_hits[n] = 0
        out_capped[n] = capped
        for m in range(n_touch):
            row = touched[m]
            val = mu_buf[row]
            if val != 0.0:
                out_mass[n] += val
                mu_sum[row] += val
                mu_sumsq[row] += val * val
                mu_buf[row] = 0.0
        for jj in range(s):
            diff = r_buf[jj] - nu0[jj]
            sum_r[jj] += diff
            sumsq_r[jj] += diff * diff
            r_buf[jj] = 0.0
    return 0
