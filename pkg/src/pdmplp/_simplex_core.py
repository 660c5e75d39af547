"""Dense revised-simplex pivot loop.

Single phase over a standard-form system ``A x = b, x >= 0`` minimizing
``c @ x`` from a given feasible basis.  Dantzig pricing with a permanent
switch to Bland's rule after ``bland_limit`` degenerate pivots; lowest-index
tie-breaks everywhere, so runs are deterministic.  The basis inverse is
maintained by eta updates and refactorized periodically.

Compiled with numba when available; the interpreted fallback (selected by
``PDMPLP_DISABLE_NUMBA=1``) runs the identical source, whose per-iteration
work is vectorized numpy.
"""

import numpy as np

from ._accel import maybe_njit

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_BREAKDOWN = 2
STATUS_MAXITER = 3

PIVOT_FLOOR = 1e-12
REFAC_PERIOD = 64


@maybe_njit
def _basis_matrix(A, basis):
    m = A.shape[0]
    B = np.empty((m, m))
    for k in range(m):
        B[:, k] = A[:, basis[k]]
    return B


@maybe_njit
def simplex_phase(A, b, c, basis, in_basis, allowed, x_b, b_inv,
                  bland, degen, bland_limit, tol_opt, max_iter, ray_out):
    """Run one simplex phase in place.

    Returns (status, iterations, bland, degen, entering).  On
    STATUS_UNBOUNDED, ``ray_out`` holds the basic direction components and
    ``entering`` the improving column.
    """
    m, n = A.shape
    iters = 0
    entering = -1
    while iters < max_iter:
        if iters % REFAC_PERIOD == 0 and iters > 0:
            b_inv[:, :] = np.linalg.inv(_basis_matrix(A, basis))
            xx = b_inv @ b
            for i in range(m):
                x_b[i] = xx[i] if xx[i] > 0.0 else 0.0
        y = c[basis] @ b_inv
        red = c - A.T @ y
        enter = -1
        if bland == 1:
            for j in range(n):
                if allowed[j] and not in_basis[j] and red[j] < -tol_opt:
                    enter = j
                    break
        else:
            best = -tol_opt
            for j in range(n):
                if allowed[j] and not in_basis[j] and red[j] < best:
                    best = red[j]
                    enter = j
        if enter < 0:
            return STATUS_OPTIMAL, iters, bland, degen, entering
        entering = enter
        col = np.empty(m)
        for i in range(m):
            col[i] = A[i, enter]
        d = b_inv @ col
        # ratio test
        min_ratio = np.inf
        for i in range(m):
            if d[i] > PIVOT_FLOOR:
                ratio = x_b[i] / d[i]
                if ratio < min_ratio:
                    min_ratio = ratio
        if not np.isfinite(min_ratio):
            for i in range(m):
                ray_out[i] = d[i]
            return STATUS_UNBOUNDED, iters, bland, degen, entering
        leave = -1
        tie_tol = 1e-10 * (1.0 + min_ratio)
        if bland == 1:
            best_var = 2 * n + 1
            for i in range(m):
                if d[i] > PIVOT_FLOOR and x_b[i] / d[i] <= min_ratio + tie_tol:
                    if basis[i] < best_var:
                        best_var = basis[i]
                        leave = i
        else:
            best_piv = 0.0
            for i in range(m):
                if d[i] > PIVOT_FLOOR and x_b[i] / d[i] <= min_ratio + tie_tol:
                    if d[i] > best_piv:
                        best_piv = d[i]
                        leave = i
        piv = d[leave]
        if piv < PIVOT_FLOOR:
            if bland == 0:
                bland = 1
                continue
            return STATUS_BREAKDOWN, iters, bland, degen, entering
        step = x_b[leave] / piv
        if step < PIVOT_FLOOR:
            degen += 1
            if bland == 0 and degen > bland_limit:
                bland = 1
        # eta update of the basis inverse and the basic solution
        b_inv[leave, :] = b_inv[leave, :] / piv
        for i in range(m):
            if i != leave and d[i] != 0.0:
                b_inv[i, :] = b_inv[i, :] - d[i] * b_inv[leave, :]
        for i in range(m):
            x_b[i] = x_b[i] - step * d[i]
            if x_b[i] < 0.0:
                x_b[i] = 0.0
        x_b[leave] = step
        in_basis[basis[leave]] = False
        in_basis[enter] = True
        basis[leave] = enter
        iters += 1
    return STATUS_MAXITER, iters, bland, degen, entering
