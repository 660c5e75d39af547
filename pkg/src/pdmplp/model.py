"""Problem data model: behavioral descriptions and tabulated instances.

A :class:`PdmpModel` describes the controlled process behaviorally (flow,
boundary time, jump rate, control path, post-jump distributions, costs) over
a finite set of post-jump points and a finite global action list.
:func:`tabulate` evaluates the one-stage operators at every feasible
(state, interior action, boundary action) triple and produces the
:class:`FiniteInstance` the LP consumes.
"""

import math
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .operators import QuadratureConfig

StateId = int
ActionId = int

IDENTITY_TOL = 1e-8


@dataclass
class FeasibleActionSets:
    """Per-state feasible interior and boundary action id lists.

    States whose flow never reaches the boundary still carry a nonempty
    boundary set; its entries are inert (they never influence the tabulated
    values) and exist only to keep one uniform (state, interior, boundary)
    variable layout.
    """

    interior: list
    boundary: list

    def pairs(self, j):
        return [(k, i) for k in self.interior[j] for i in self.boundary[j]]


def enumerate_rows(feasible):
    """Lexicographic (state, interior, boundary) triple enumeration."""
    rows = []
    for j in range(len(feasible.interior)):
        for kappa in feasible.interior[j]:
            for iota in feasible.boundary[j]:
                rows.append((j, kappa, iota))
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), 3)
    index = {tuple(t): r for r, t in enumerate(rows)}
    return arr, index


@dataclass
class FiniteInstance:
    """Tabulated problem data over the enumerated triples.

    Arrays are indexed by row = lexicographic (j, kappa, iota) position:
    ``G[row, :]`` is the expected discounted next-state distribution,
    ``Lf[i, row]`` / ``Hr[i, row]`` the running / boundary stage costs for
    cost index i, ``calL``/``calH`` the stage discount integral and the
    terminal boundary weight.  ``d`` holds the n constraint limits (cost
    indices 1..n).
    """

    s: int
    r: int
    feasible: FeasibleActionSets
    alpha: float
    G: np.ndarray
    Lf: np.ndarray
    Hr: np.ndarray
    calL: np.ndarray
    calH: np.ndarray
    nu0: np.ndarray
    d: np.ndarray
    rows: np.ndarray = None
    row_index: dict = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rows is None:
            self.rows, self.row_index = enumerate_rows(self.feasible)
        elif self.row_index is None:
            self.row_index = {tuple(t): r for r, t in enumerate(
                self.rows.tolist())}
        self.G = np.asarray(self.G, dtype=float)
        self.Lf = np.atleast_2d(np.asarray(self.Lf, dtype=float))
        self.Hr = np.atleast_2d(np.asarray(self.Hr, dtype=float))
        self.calL = np.asarray(self.calL, dtype=float)
        self.calH = np.asarray(self.calH, dtype=float)
        self.nu0 = np.asarray(self.nu0, dtype=float)
        self.d = np.asarray(self.d, dtype=float)

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def n_costs(self):
        return self.Lf.shape[0]

    @property
    def n_constraints(self):
        return len(self.d)

    def row_mass(self):
        return self.G.sum(axis=1)

    def identity_residual(self):
        """G(row; all states) + alpha * calL - 1, which should vanish."""
        return self.row_mass() + self.alpha * self.calL - 1.0

    def stage_cost(self, i):
        """Per-row one-stage cost Lf_i + Hr_i."""
        return self.Lf[i] + self.Hr[i]

    def state_rows(self, j):
        """Row ids belonging to state j, in enumeration order."""
        return np.flatnonzero(self.rows[:, 0] == j)


class PdmpModel(ABC):
    """Behavioral description of the controlled process.

    Concrete models supply the local characteristics as pure, reentrant
    callables (same inputs give same outputs; tabulation may evaluate rows
    concurrently) plus the finite enumeration the LP needs: ``states`` (the
    post-jump points), a global action list addressed by integer ids, the
    per-state feasible sets, the initial distribution, the discount rate and
    the constraint limits.
    """

    states: list
    alpha: float
    nu0: np.ndarray
    d: np.ndarray
    n_costs: int
    feasible: FeasibleActionSets

    # -- local characteristics ---------------------------------------------

    @abstractmethod
    def flow(self, x, t):
        """Deterministic motion from x for time t (semigroup in t)."""

    @abstractmethod
    def t_star(self, x):
        """First boundary-hit time of the flow from x (may be inf)."""

    @abstractmethod
    def lam(self, x, a_tilde):
        """Spontaneous jump rate at x under regulation value a_tilde."""

    @abstractmethod
    def ell(self, x, a, t):
        """Pre-committed regulation value at elapsed time t for interior
        action value a chosen at x."""

    def ell_breakpoints(self, x, a):
        """Times in (0, t_star(x)) where ell(x, a, .) is discontinuous."""
        return ()

    def q_breakpoints(self, x, a):
        """Times in (0, t_star(x)) where the interior post-jump distribution
        changes support or jumps; must be exhaustive for the quadrature split
        contract to hold."""
        return ()

    @abstractmethod
    def Q_interior(self, x, a_tilde):
        """Post-jump distribution after a spontaneous jump at flow point x:
        dict StateId -> probability."""

    @abstractmethod
    def Q_boundary(self, z, a_bnd):
        """Post-jump distribution after a forced jump at boundary point z
        under boundary action value a_bnd: dict StateId -> probability."""

    @abstractmethod
    def f(self, i, x, a):
        """Running cost i >= 0 at flow point x under interior action value
        a (i = 0 is the objective)."""

    @abstractmethod
    def r(self, i, z, a_bnd):
        """Boundary cost i >= 0 at boundary point z under boundary action
        value a_bnd."""

    # -- enumeration / declared bounds --------------------------------------

    @abstractmethod
    def action_value(self, kappa):
        """Value of global interior action id kappa."""

    @abstractmethod
    def boundary_value(self, iota):
        """Value of global boundary action id iota."""

    def lam_lower(self, j):
        """Declared positive lower rate bound along the flow from state j,
        or None.  Required for states with an infinite boundary time."""
        return None

    def lam_upper(self, j):
        """Declared upper rate bound along the flow from state j, or None."""
        return None

    def k_lambda(self):
        """Declared bound on int_0^{t*} exp(-int lam_lower) dt, or None."""
        return None

    def cost_sup(self, i):
        """Declared sup bound of the one-stage cost i, or None (used only to
        certify Monte Carlo truncation bias)."""
        return None

    @property
    def n_states(self):
        return len(self.states)


def validate_instance(inst, identity_tol=None):
    """Check every structural invariant of a tabulated instance.

    Returns a list of violation strings (empty iff the instance is valid);
    each violation names the offending row or field and the broken rule.
    """
    v = []
    tol = identity_tol
    if tol is None:
        tol = inst.meta.get("identity_tol", IDENTITY_TOL)
    if not (inst.alpha > 0.0 and math.isfinite(inst.alpha)):
        v.append("alpha must be a finite positive discount rate")
    if inst.s != len(inst.feasible.interior) \
            or inst.s != len(inst.feasible.boundary):
        v.append("feasible sets must list every state")
        return v
    for j in range(inst.s):
        for name, ids in (("interior", inst.feasible.interior[j]),
                          ("boundary", inst.feasible.boundary[j])):
            if len(ids) == 0:
                v.append(f"state {j}: empty {name} action set")
            if len(set(ids)) != len(ids):
                v.append(f"state {j}: duplicate ids in {name} action set")
            for a in ids:
                if not (0 <= a < inst.r):
                    v.append(f"state {j}: {name} action id {a} out of range")
    if inst.G.shape != (inst.n_rows, inst.s):
        v.append("G must have one row per triple and one column per state")
        return v
    if len(inst.nu0) != inst.s:
        v.append("nu0 must have one entry per state")
        return v
    if np.any(inst.nu0 < 0.0) or abs(inst.nu0.sum() - 1.0) > 1e-9:
        v.append("nu0 not a probability vector")
    if np.any(inst.d < 0.0):
        v.append("constraint limits d must be nonnegative")
    if np.any(inst.Lf < 0.0) or np.any(inst.Hr < 0.0):
        v.append("stage costs Lf, Hr must be nonnegative")
    if np.any(inst.calL <= 0.0):
        bad = int(np.argmax(inst.calL <= 0.0))
        v.append(f"row {tuple(int(x) for x in inst.rows[bad])}: "
                 f"calL must be positive")
    if np.any(inst.calH < 0.0):
        v.append("calH must be nonnegative")
    mass = inst.row_mass()
    for row in range(inst.n_rows):
        trip = tuple(int(x) for x in inst.rows[row])
        if np.any(inst.G[row] < -1e-15) or np.any(inst.G[row] > 1.0 + 1e-12):
            v.append(f"row {trip}: G entries must lie in [0, 1]")
        if mass[row] > 1.0 + 1e-9:
            v.append(f"row {trip}: G row mass {mass[row]:.12g} exceeds 1")
        resid = mass[row] + inst.alpha * inst.calL[row] - 1.0
        if abs(resid) > tol:
            v.append(
                f"row {trip}: identity G(row;E) + alpha*calL = 1 violated "
                f"by {resid:.3e}")
    return v


def _tabulate_stage(model, j, kappa, quad_cfg):
    sv = operators.evaluate_stage(model, j, kappa, quad_cfg)
    out = []
    n = model.n_costs
    for iota in model.feasible.boundary[j]:
        g = np.zeros(model.n_states)
        for y, p in sv.interior_kernel.items():
            g[y] += p
        hr = np.zeros(n)
        if not sv.truncated and sv.calH > 0.0:
            a_bnd = model.boundary_value(iota)
            for y, p in model.Q_boundary(sv.boundary_point, a_bnd).items():
                g[y] += sv.calH * p
            for i in range(n):
                hr[i] = sv.calH * model.r(i, sv.boundary_point, a_bnd)
        out.append(((j, kappa, iota), g, sv.Lf.copy(), hr,
                    sv.calL, sv.calH, sv.abs_err, sv.tail_bound))
    return out


def tabulate(model, quad_cfg=None):
    """Evaluate the one-stage operators at every feasible triple.

    Deterministic for identical model and config.  Stage evaluation is
    reentrant; set PDMP_LP_THREADS > 1 to evaluate stages concurrently (the
    result is identical either way since rows are independent).

    Raises QuadratureFailure when a tolerance cannot be met and
    UnboundedHorizon when a state has an infinite boundary time but no
    positive declared lower rate bound.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    feasible = model.feasible
    rows, row_index = enumerate_rows(feasible)
    n_rows = rows.shape[0]
    s = model.n_states
    n = model.n_costs
    G = np.zeros((n_rows, s))
    Lf = np.zeros((n, n_rows))
    Hr = np.zeros((n, n_rows))
    calL = np.zeros(n_rows)
    calH = np.zeros(n_rows)
    row_err = np.zeros(n_rows)
    row_tail = np.zeros(n_rows)

    stages = [(j, kappa) for j in range(s) for kappa in feasible.interior[j]]
    workers = int(os.environ.get("PDMP_LP_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(
                lambda jk: _tabulate_stage(model, jk[0], jk[1], quad_cfg),
                stages))
    else:
        results = [_tabulate_stage(model, j, k, quad_cfg)
                   for j, k in stages]

    for stage_rows in results:
        for trip, g, lf, hr, cl, ch, err, tail in stage_rows:
            row = row_index[trip]
            G[row] = g
            Lf[:, row] = lf
            Hr[:, row] = hr
            calL[row] = cl
            calH[row] = ch
            row_err[row] = err
            row_tail[row] = tail

    inst = FiniteInstance(
        s=s, r=_action_count(model), feasible=feasible, alpha=model.alpha,
        G=G, Lf=Lf, Hr=Hr, calL=calL, calH=calH,
        nu0=np.asarray(model.nu0, dtype=float),
        d=np.asarray(model.d, dtype=float),
        rows=rows, row_index=row_index,
        meta={
            "source": "tabulate",
            "quad": {
                "abs_tol": quad_cfg.abs_tol,
                "rel_tol": quad_cfg.rel_tol,
                "tail_epsilon": quad_cfg.tail_epsilon,
                "per_row_abs_err": row_err.tolist(),
                "per_row_tail_bound": row_tail.tolist(),
                "max_abs_err": float(row_err.max(initial=0.0)),
                "max_tail_bound": float(row_tail.max(initial=0.0)),
            },
            "identity_tol": max(
                10.0 * (quad_cfg.abs_tol + quad_cfg.rel_tol),
                10.0 * float(row_tail.max(initial=0.0))),
        })
    return inst


def _action_count(model):
    top = 0
    for j in range(model.n_states):
        ids = list(model.feasible.interior[j]) \
            + list(model.feasible.boundary[j])
        top = max(top, max(ids) + 1)
    return top
