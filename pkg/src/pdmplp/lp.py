"""Finite linear programs over occupation-measure weights.

``assemble_problem_p`` writes the instance as the standard occupation-measure
LP: one nonnegative weight per feasible (state, interior, boundary) triple,
one balance equality per state (marginal minus expected discounted inflow
equals the initial mass) and one inequality per constraint cost.
``simplex_solve`` is a dense two-phase revised simplex (Dantzig pricing,
Bland fallback, deterministic tie-breaks) so results are reproducible
bit-for-bit; the LP can also be exported as fixed-column MPS text for
cross-checking against external solvers.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _simplex_core as core
from .errors import (InfeasibleProblem, NumericalBreakdown, UnboundedProblem)
from .model import validate_instance

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
CS_TOL = 1e-8


@dataclass
class LinearProgram:
    """min c @ x  s.t.  A_eq x = b_eq, A_in x <= b_in, x >= 0."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    var_names: list
    eq_names: list
    in_names: list

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(
            len(self.b_eq), len(self.c))
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.A_in = np.asarray(self.A_in, dtype=float).reshape(
            len(self.b_in), len(self.c))
        self.b_in = np.asarray(self.b_in, dtype=float)
        for arr, label in ((self.c, "c"), (self.A_eq, "A_eq"),
                           (self.b_eq, "b_eq"), (self.A_in, "A_in"),
                           (self.b_in, "b_in")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} contains non-finite entries")

    @property
    def n_vars(self):
        return len(self.c)


@dataclass
class LpSolution:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    iterations: int
    residuals: dict = field(default_factory=dict)
    ray: np.ndarray = None


def _standard_form(lp):
    """Standard-form data with slacks appended and rows flipped to b >= 0.

    Returns (A, b, flip, n_orig, n_slack); row order is equalities first."""
    m_eq, m_in, n = len(lp.b_eq), len(lp.b_in), lp.n_vars
    m = m_eq + m_in
    A = np.zeros((m, n + m_in))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_in
    for k in range(m_in):
        A[m_eq + k, n + k] = 1.0
    b = np.concatenate([lp.b_eq, lp.b_in])
    flip = np.ones(m)
    neg = b < 0.0
    A[neg] *= -1.0
    b[neg] *= -1.0
    flip[neg] = -1.0
    return A, b, flip, n, m_in


def _drive_out_artificials(A, b, basis, in_basis, b_inv, x_b, n_real):
    """Pivot remaining zero-valued artificials out of the basis; delete any
    redundant rows.  Returns possibly reduced (A, b, basis, in_basis, b_inv,
    x_b, kept_rows)."""
    m = A.shape[0]
    kept = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n_real:
            continue
        # artificial basic in row i (value must be ~0 at a feasible point)
        row = b_inv[i] @ A[:, :n_real]
        cand = -1
        best = 1e-9
        for j in range(n_real):
            if not in_basis[j] and abs(row[j]) > best:
                best = abs(row[j])
                cand = j
        if cand < 0:
            kept[i] = False
            continue
        d = b_inv @ A[:, cand]
        piv = d[i]
        b_inv[i] = b_inv[i] / piv
        for k in range(m):
            if k != i and d[k] != 0.0:
                b_inv[k] -= d[k] * b_inv[i]
        in_basis[basis[i]] = False
        in_basis[cand] = True
        basis[i] = cand
        x_b[i] = 0.0
    if np.all(kept):
        return A, b, basis, in_basis, b_inv, x_b, kept
    A = A[kept]
    b = b[kept]
    basis = basis[kept]
    B = A[:, basis]
    b_inv = np.linalg.inv(B)
    x_b = np.clip(b_inv @ b, 0.0, None)
    return A, b, basis, in_basis, b_inv, x_b, kept


def simplex_solve(lp, max_iter=None):
    """Two-phase dense revised simplex.

    Deterministic for identical input.  Raises NumericalBreakdown when a
    pivot falls below 1e-12 even under Bland's rule (the caller should
    rescale) or when the optimality certificate fails validation.
    """
    A, b, flip, n_orig, m_in = _standard_form(lp)
    m = A.shape[0]
    m_eq = m - m_in
    n_real = n_orig + m_in
    row_ids = np.arange(m)
    if max_iter is None:
        max_iter = 20000 + 200 * m
    bland_limit = 5 * max(m, 1)

    # phase 1: artificials on every row lacking a basic slack
    need_art = np.ones(m, dtype=bool)
    for k in range(m_in):
        if flip[m_eq + k] > 0:
            need_art[m_eq + k] = False
    art_rows = np.flatnonzero(need_art)
    n_art = len(art_rows)
    A1 = np.concatenate([A, np.zeros((m, n_art))], axis=1)
    for pos, row in enumerate(art_rows):
        A1[row, n_real + pos] = 1.0
    c1 = np.zeros(n_real + n_art)
    c1[n_real:] = 1.0
    basis = np.empty(m, dtype=np.int64)
    art_pos = 0
    for i in range(m):
        if need_art[i]:
            basis[i] = n_real + art_pos
            art_pos += 1
        else:
            basis[i] = n_orig + (i - m_eq)
    in_basis = np.zeros(n_real + n_art, dtype=bool)
    in_basis[basis] = True
    allowed = np.ones(n_real + n_art, dtype=bool)
    allowed[n_real:] = False        # artificials may leave but never re-enter
    x_b = b.copy()
    b_inv = np.eye(m)
    ray_buf = np.zeros(m)

    total_iters = 0
    if n_art > 0:
        status, iters, bland, degen, _ = core.simplex_phase(
            A1, b, c1, basis, in_basis, allowed, x_b, b_inv,
            0, 0, bland_limit, OPT_TOL, max_iter, ray_buf)
        total_iters += iters
        if status == core.STATUS_BREAKDOWN:
            raise NumericalBreakdown("phase-1 pivot below 1e-12")
        if status == core.STATUS_MAXITER:
            raise NumericalBreakdown("phase-1 iteration limit reached")
        phase1_obj = float(c1[basis] @ x_b)
        if phase1_obj > FEAS_TOL * (1.0 + float(np.max(b, initial=0.0))):
            return LpSolution(
                status="infeasible", objective=np.nan,
                x=np.full(n_orig, np.nan), duals_eq=np.zeros(m_eq),
                duals_in=np.zeros(m_in), iterations=total_iters,
                residuals={"phase1_objective": phase1_obj})
        A1, b, basis, in_basis, b_inv, x_b, kept = _drive_out_artificials(
            A1, b, basis, in_basis, b_inv, x_b, n_real)
        flip = flip[kept]
        row_ids = row_ids[kept]
        m = A1.shape[0]
        ray_buf = np.zeros(m)

    # phase 2 on the real columns only
    A2 = np.ascontiguousarray(A1[:, :n_real])
    c2 = np.concatenate([lp.c, np.zeros(m_in)])
    in_basis2 = in_basis[:n_real].copy()
    allowed2 = np.ones(n_real, dtype=bool)
    status, iters, bland, degen, entering = core.simplex_phase(
        A2, b, c2, basis, in_basis2, allowed2, x_b, b_inv,
        0, 0, bland_limit, OPT_TOL, max_iter, ray_buf)
    total_iters += iters
    if status == core.STATUS_BREAKDOWN:
        raise NumericalBreakdown("phase-2 pivot below 1e-12")
    if status == core.STATUS_MAXITER:
        raise NumericalBreakdown("phase-2 iteration limit reached")

    x_full = np.zeros(n_real)
    x_full[basis] = x_b
    x = x_full[:n_orig]
    y = c2[basis] @ b_inv
    # rows deleted as redundant carry zero multipliers
    y_rows = np.zeros(len(lp.b_eq) + len(lp.b_in))
    y_rows[row_ids] = flip * y
    duals_eq = y_rows[:len(lp.b_eq)]
    duals_in = y_rows[len(lp.b_eq):]

    if status == core.STATUS_UNBOUNDED:
        ray = np.zeros(n_real)
        ray[entering] = 1.0
        ray[basis] = -ray_buf
        return LpSolution(
            status="unbounded", objective=-np.inf, x=x,
            duals_eq=duals_eq, duals_in=duals_in, iterations=total_iters,
            ray=ray[:n_orig])

    sol = LpSolution(
        status="optimal", objective=float(lp.c @ x), x=x,
        duals_eq=duals_eq, duals_in=duals_in, iterations=total_iters)
    _validate_optimum(lp, sol)
    return sol


def _validate_optimum(lp, sol):
    """Check the optimality certificate; raise on contract violation."""
    x = sol.x
    scale = 1.0 + float(np.max(np.abs(np.concatenate([lp.b_eq, lp.b_in]))
                               if len(lp.b_eq) + len(lp.b_in) else [1.0]))
    primal = 0.0
    if len(lp.b_eq):
        primal = max(primal, float(np.max(np.abs(lp.A_eq @ x - lp.b_eq))))
    if len(lp.b_in):
        primal = max(primal, float(np.max(lp.A_in @ x - lp.b_in, initial=0.0)))
    primal = max(primal, float(max(0.0, -np.min(x, initial=0.0))))
    red = lp.c.copy()
    if len(lp.b_eq):
        red -= lp.A_eq.T @ sol.duals_eq
    if len(lp.b_in):
        red -= lp.A_in.T @ sol.duals_in
    cscale = 1.0 + float(np.max(np.abs(lp.c), initial=0.0))
    dual = max(0.0, float(-np.min(red, initial=0.0)),
               float(np.max(sol.duals_in, initial=0.0)))
    comp = float(np.abs(x * red).max(initial=0.0))
    if len(lp.b_in):
        comp = max(comp, float(np.abs(
            sol.duals_in * (lp.b_in - lp.A_in @ x)).max(initial=0.0)))
    sol.residuals.update({
        "primal": primal, "dual": dual, "complementarity": comp,
    })
    if primal > FEAS_TOL * scale or dual > OPT_TOL * cscale \
            or comp > CS_TOL * scale * cscale:
        raise NumericalBreakdown(
            f"optimality certificate failed validation: primal={primal:.2e} "
            f"dual={dual:.2e} comp={comp:.2e}")


# -- occupation-measure problems ---------------------------------------------

@dataclass
class OccupationMeasure:
    """Nonnegative weights over the instance's triples with per-state
    marginals; the balance residual per state is the marginal minus the
    initial mass minus the expected discounted inflow."""

    weights: np.ndarray
    inst: object

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def marginals(self):
        inst = self.inst
        out = np.zeros(inst.s)
        np.add.at(out, inst.rows[:, 0], self.weights)
        return out

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def balance_residual(self):
        inst = self.inst
        return self.marginals - inst.nu0 - self.weights @ inst.G

    def cost(self, i):
        return float(self.inst.stage_cost(i) @ self.weights)


def assemble_problem_p(inst):
    """Occupation-measure LP of a validated instance.

    The weighting-function integrability that general occupation measures
    must satisfy is automatic for finite sums, so no constraint is added
    for it (recorded here as the no-op it is).
    """
    R = inst.n_rows
    A_eq = -inst.G.T.copy()
    for row in range(R):
        A_eq[inst.rows[row, 0], row] += 1.0
    b_eq = inst.nu0.copy()
    n = inst.n_constraints
    A_in = np.zeros((n, R))
    for i in range(n):
        A_in[i] = inst.stage_cost(i + 1)
    var_names = [f"mu_{j}_{k}_{i}" for j, k, i in inst.rows]
    return LinearProgram(
        c=inst.stage_cost(0).copy(),
        A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=inst.d.copy(),
        var_names=var_names,
        eq_names=[f"bal_{j}" for j in range(inst.s)],
        in_names=[f"con_{i}" for i in range(1, n + 1)])


def solve_constrained_pdmp(inst):
    """Solve the constrained problem over occupation measures.

    Returns (LpSolution, OccupationMeasure) at the optimum; raises
    InfeasibleProblem when no strategy meets the limits at this tabulation
    and UnboundedProblem (with the simplex ray) if the objective is
    unbounded, which flags a broken instance since stage costs are
    nonnegative.
    """
    violations = validate_instance(inst)
    if violations:
        raise ValueError("invalid instance: " + "; ".join(violations))
    lp = assemble_problem_p(inst)
    sol = simplex_solve(lp)
    if sol.status == "infeasible":
        raise InfeasibleProblem(
            "no feasible occupation measure meets the limits", solution=sol)
    if sol.status == "unbounded":
        raise UnboundedProblem(
            "objective unbounded below", solution=sol, ray=sol.ray)
    mu = OccupationMeasure(weights=sol.x, inst=inst)
    resid = float(np.max(np.abs(mu.balance_residual())))
    if resid > FEAS_TOL * 10.0:
        raise NumericalBreakdown(
            f"balance residual {resid:.2e} exceeds tolerance")
    sol.residuals["balance"] = resid
    return sol, mu


def attained_costs(mu):
    """Objective and per-constraint attained values of a measure."""
    inst = mu.inst
    return np.array([mu.cost(i) for i in range(inst.n_costs)])


# -- MPS export ---------------------------------------------------------------

def export_mps(lp, name="PDMPLP"):
    """Fixed-column MPS text of the LP (long names, one entry per line)."""
    wn = max([len(s) for s in lp.var_names]
             + [len(s) for s in lp.eq_names]
             + [len(s) for s in lp.in_names] + [8]) + 2
    lines = [f"NAME          {name}", "ROWS", " N  COST"]
    for nm in lp.eq_names:
        lines.append(f" E  {nm}")
    for nm in lp.in_names:
        lines.append(f" L  {nm}")
    lines.append("COLUMNS")

    def entry(col, row, val):
        lines.append(f"    {col:<{wn}}{row:<{wn}}{val:.16g}")

    for j, col in enumerate(lp.var_names):
        if lp.c[j] != 0.0:
            entry(col, "COST", lp.c[j])
        for i, nm in enumerate(lp.eq_names):
            v = lp.A_eq[i, j]
            if v != 0.0:
                entry(col, nm, v)
        for i, nm in enumerate(lp.in_names):
            v = lp.A_in[i, j]
            if v != 0.0:
                entry(col, nm, v)
    lines.append("RHS")
    for i, nm in enumerate(lp.eq_names):
        if lp.b_eq[i] != 0.0:
            entry("RHS", nm, lp.b_eq[i])
    for i, nm in enumerate(lp.in_names):
        if lp.b_in[i] != 0.0:
            entry("RHS", nm, lp.b_in[i])
    lines.append("BOUNDS")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
