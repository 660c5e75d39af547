"""Capacity expansion: the flagship worked model.

A demand process arrives at constant rate and each arrival raises demand by
one unit; a construction project absorbs investment at one of finitely many
rates until the cumulative investment reaches ``tau``, at which point the
project completes, demand drops by one unit and a new rate is chosen.  The
state is (cumulative investment, demand level, active rate index), rate
index 0 meaning idle.  After every jump the controller picks the investment
level at which the rate will switch and the rate to switch to, plus the rate
to start after the next completion.

Finite tabulation: demand is capped at ``M`` (arrivals at the cap keep the
demand level), the switch-level component of the action is restricted to a
per-state grid and post-jump investment coordinates snap to the nearest
point of a depth-limited closure of those grids (worst snap distance is
reported).  Construction states exist only at demand >= 1 and a completion
out of demand level 1 forces the idle restart, so no completion can ever
target a negative demand level.

Because the arrival rate is constant, every one-stage quantity has an
elementary closed form, which :func:`closed_form_G` provides and the
generic quadrature tabulation must match.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse
from .model import FeasibleActionSets, FiniteInstance, PdmpModel, \
    enumerate_rows


@dataclass(frozen=True)
class CapacityParams:
    """Parameters of the capacity expansion model.

    ``gamma`` lists the positive construction rates (index 1..kappa); rate
    index 0 is idle.  Costs are linear: running cost i is
    ``f_demand[i] * demand + f_mode[i][mode]`` and the completion cost i is
    ``r_mode[i][restart mode]``; ``d`` holds the constraint limits for cost
    indices 1..n.
    """

    lam: float
    tau: float
    gamma: tuple
    M: int
    alpha: float
    f_demand: tuple = (1.0,)
    f_mode: tuple = None
    r_mode: tuple = None
    d: tuple = ()
    sa_points: int = 5
    depth: int = 2
    max_snap: float = None

    def __post_init__(self):
        if self.lam <= 0 or self.tau <= 0 or self.alpha <= 0:
            raise ValueError("lam, tau, alpha must be positive")
        if len(self.gamma) < 1 or any(g <= 0 for g in self.gamma):
            raise ValueError("need at least one positive construction rate")
        if len(set(self.gamma)) != len(self.gamma):
            raise ValueError("construction rates must be distinct")
        if self.M < 1:
            raise ValueError("demand cap must be at least 1")
        if self.sa_points < 2 or self.depth < 1:
            raise ValueError("need at least 2 switch-grid points, depth >= 1")
        n_costs = len(self.f_demand)
        f_mode = self.f_mode
        if f_mode is None:
            f_mode = tuple((0.0,) * (self.kappa + 1)
                           for _ in range(n_costs))
        r_mode = self.r_mode
        if r_mode is None:
            r_mode = tuple((0.0,) * (self.kappa + 1)
                           for _ in range(n_costs))
        object.__setattr__(self, "f_mode", tuple(tuple(row) for row in f_mode))
        object.__setattr__(self, "r_mode", tuple(tuple(row) for row in r_mode))
        if len(self.f_mode) != n_costs or len(self.r_mode) != n_costs:
            raise ValueError("cost tables must cover every cost index")
        for row in self.f_mode + self.r_mode:
            if len(row) != self.kappa + 1 or any(v < 0 for v in row):
                raise ValueError("per-mode costs must be nonnegative and "
                                 "cover modes 0..kappa")
        if any(v < 0 for v in self.f_demand):
            raise ValueError("demand cost coefficients must be nonnegative")
        if len(self.d) != n_costs - 1:
            raise ValueError("d must have one limit per constraint cost")

    @property
    def kappa(self):
        return len(self.gamma)

    @property
    def n_costs(self):
        return len(self.f_demand)

    def rate_of(self, mode):
        return 0.0 if mode == 0 else float(self.gamma[mode - 1])


def switch_grid(params, s):
    """Per-state grid of feasible switch levels in [s, tau]."""
    n = params.sa_points
    return [s + i * (params.tau - s) / (n - 1) for i in range(n)]


def investment_grid(params):
    """Depth-limited closure of the switch grids, starting from 0."""
    pts = [0.0]
    for _ in range(params.depth):
        found = list(pts)
        for s in pts:
            for v in switch_grid(params, s):
                found.append(v)
        found.sort()
        merged = []
        for v in found:
            if not merged or v - merged[-1] > 1e-12 * (1.0 + params.tau):
                merged.append(v)
        pts = [v for v in merged if v < params.tau - 1e-12 * params.tau]
    return np.array(pts)


class CapacityModel(PdmpModel):
    """Behavioral model over the enumerated grid states."""

    def __init__(self, params):
        self.params = params
        p = params
        self.grid = investment_grid(p)
        if len(self.grid) < 1:
            raise GridTooCoarse("empty investment grid")
        self._cells = 0.5 * (self.grid[1:] + self.grid[:-1]) \
            if len(self.grid) > 1 else np.empty(0)
        # worst-case snap distance: half the widest cell, plus the gap from
        # the last grid point to the boundary
        gaps = np.diff(np.concatenate([self.grid, [p.tau]]))
        self.snap_distance_bound = float(np.max(gaps)) / 2.0 \
            if len(gaps) else 0.0
        if p.max_snap is not None and self.snap_distance_bound > p.max_snap:
            raise GridTooCoarse(
                f"worst-case snap distance {self.snap_distance_bound:g} "
                f"exceeds max_snap={p.max_snap:g}; deepen the grid")

        modes = range(p.kappa + 1)
        self.states = []
        self.state_index = {}
        for pos in range(len(self.grid)):
            for j in modes:
                m_lo = 0 if j == 0 else 1
                for m in range(m_lo, p.M + 1):
                    self.state_index[(pos, m, j)] = len(self.states)
                    self.states.append((float(self.grid[pos]), m, j))

        # global action list: interior values (switch level, next mode),
        # then one boundary value per restart mode
        interior_vals = {}
        for pos in range(len(self.grid)):
            s = float(self.grid[pos])
            for j in modes:
                if j == 0:
                    choices = [(s, ja) for ja in modes]
                else:
                    choices = [(sa, ja) for sa in switch_grid(p, s)
                               for ja in modes if ja != j]
                for sa, ja in choices:
                    key = (round(sa, 12), ja)
                    if key not in interior_vals:
                        interior_vals[key] = (sa, ja)
        self.interior_values = [interior_vals[k]
                                for k in sorted(interior_vals)]
        self._interior_id = {k: idx
                             for idx, k in enumerate(sorted(interior_vals))}
        self.n_interior = len(self.interior_values)
        self.boundary_values = list(modes)

        interior, boundary = [], []
        for (pos, m, j), _ in sorted(self.state_index.items(),
                                     key=lambda kv: kv[1]):
            s = float(self.grid[pos])
            if j == 0:
                ints = [self._aid(s, ja) for ja in modes]
                bnds = [self.n_interior]          # inert sentinel: restart 0
            else:
                ints = [self._aid(sa, ja) for sa in switch_grid(p, s)
                        for ja in modes if ja != j]
                if m == 1:
                    bnds = [self.n_interior]      # forced idle restart
                else:
                    bnds = [self.n_interior + ja for ja in modes]
            interior.append(ints)
            boundary.append(bnds)
        self.feasible = FeasibleActionSets(interior=interior,
                                           boundary=boundary)
        self.alpha = p.alpha
        self.n_costs = p.n_costs
        self.d = np.asarray(p.d, dtype=float)
        nu0 = np.zeros(len(self.states))
        nu0[self.state_index[(0, 0, 0)]] = 1.0
        self.nu0 = nu0

    def _aid(self, sa, ja):
        return self._interior_id[(round(sa, 12), ja)]

    def snap(self, s):
        """Nearest grid position for an investment coordinate."""
        if len(self._cells) == 0:
            return 0
        return int(np.searchsorted(self._cells, s, side="right"))

    # -- local characteristics ----------------------------------------------

    def flow(self, x, t):
        s, m, j = x
        return (s + self.params.rate_of(j) * t, m, j)

    def t_star(self, x):
        s, m, j = x
        if j == 0:
            return math.inf
        return (self.params.tau - s) / self.params.rate_of(j)

    def lam(self, x, a_tilde):
        return self.params.lam

    def ell(self, x, a, t):
        s, m, j = x
        sa, ja = a
        if s + self.params.rate_of(j) * t < sa - 1e-12 * (1 + self.params.tau):
            return j
        return ja

    def ell_breakpoints(self, x, a):
        s, m, j = x
        sa, ja = a
        if j == 0:
            return ()
        t_sw = (sa - s) / self.params.rate_of(j)
        if 0.0 < t_sw < self.t_star(x):
            return (t_sw,)
        return ()

    def q_breakpoints(self, x, a):
        s, m, j = x
        if j == 0:
            return ()
        rate = self.params.rate_of(j)
        out = []
        for b in self._cells:
            if s < b < self.params.tau:
                t = (b - s) / rate
                if 0.0 < t < self.t_star(x):
                    out.append(t)
        return tuple(out)

    def Q_interior(self, x, a_tilde):
        s, m, j = x
        target = (self.snap(s), min(m + 1, self.params.M), int(a_tilde))
        return {self.state_index[target]: 1.0}

    def Q_boundary(self, z, a_bnd):
        s, m, j = z
        if m <= 1 and a_bnd != 0:
            raise ValueError("completion at the lowest demand level must "
                             "restart idle")
        target = (0, m - 1, int(a_bnd))
        return {self.state_index[target]: 1.0}

    def f(self, i, x, a):
        s, m, j = x
        return self.params.f_demand[i] * m + self.params.f_mode[i][j]

    def r(self, i, z, a_bnd):
        return self.params.r_mode[i][int(a_bnd)]

    def action_value(self, kappa):
        return self.interior_values[kappa]

    def boundary_value(self, iota):
        return self.boundary_values[iota - self.n_interior]

    def lam_lower(self, j):
        return self.params.lam

    def lam_upper(self, j):
        return self.params.lam

    def k_lambda(self):
        return 1.0 / self.params.lam

    def cost_sup(self, i):
        p = self.params
        return (p.f_demand[i] * p.M + max(p.f_mode[i])) / p.alpha \
            + max(p.r_mode[i])


def build_capacity_model(params):
    return CapacityModel(params)


def interior_pieces(model, state_index, a_value):
    """Time partition of one stage by post-jump target.

    Returns [(t_lo, t_hi, target_state_id), ...] covering [0, t_star); the
    target is constant on each piece (the snapped investment cell and the
    committed mode are both piecewise constant in the jump time).
    """
    s, m, j = model.states[state_index]
    p = model.params
    if j == 0:
        sa, ja = a_value
        tgt = model.state_index[(model.snap(s), min(m + 1, p.M), ja)]
        return [(0.0, math.inf, tgt)]
    t_hi = model.t_star((s, m, j))
    cuts = sorted(set(model.q_breakpoints((s, m, j), a_value))
                  | set(model.ell_breakpoints((s, m, j), a_value)))
    edges = [0.0] + cuts + [t_hi]
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0.0:
            continue
        t_mid = 0.5 * (lo + hi)
        x_mid = model.flow((s, m, j), t_mid)
        mode = model.ell((s, m, j), a_value, t_mid)
        tgt = model.state_index[(model.snap(x_mid[0]),
                                 min(m + 1, p.M), mode)]
        pieces.append((lo, hi, tgt))
    return pieces


def closed_form_G(params, model, state_index, a_hat):
    """Exact one-stage kernel row and scalars for constant arrival rate.

    ``a_hat = (interior value, boundary mode)``.  Returns (dict StateId ->
    mass, calL, calH): with beta = alpha + lam, the spontaneous density is
    ``lam * exp(-beta t) dt`` split at the target partition, the boundary
    atom is ``exp(-beta * t_star)``, and for an idle state the row is the
    single atom ``lam / beta``.
    """
    lam, alpha = params.lam, params.alpha
    beta = alpha + lam
    a_value, a_bnd = a_hat
    s, m, j = model.states[state_index]
    values = {}
    if j == 0:
        calL = 1.0 / beta
        calH = 0.0
        (lo, hi, tgt), = interior_pieces(model, state_index, a_value)
        values[tgt] = lam / beta
        return values, calL, calH
    t_hi = model.t_star((s, m, j))
    calH = math.exp(-beta * t_hi)
    calL = (1.0 - calH) / beta
    for lo, hi, tgt in interior_pieces(model, state_index, a_value):
        mass = (lam / beta) * (math.exp(-beta * lo) - math.exp(-beta * hi))
        if mass != 0.0:
            values[tgt] = values.get(tgt, 0.0) + mass
    for y, prob in model.Q_boundary((params.tau, m, j), a_bnd).items():
        values[y] = values.get(y, 0.0) + calH * prob
    return values, calL, calH


def build_capacity_instance(params, model=None):
    """Exact tabulated instance via the closed forms."""
    if model is None:
        model = CapacityModel(params)
    feasible = model.feasible
    rows, row_index = enumerate_rows(feasible)
    n_rows = rows.shape[0]
    s_count = model.n_states
    n = model.n_costs
    G = np.zeros((n_rows, s_count))
    Lf = np.zeros((n, n_rows))
    Hr = np.zeros((n, n_rows))
    calL = np.zeros(n_rows)
    calH = np.zeros(n_rows)
    for row in range(n_rows):
        j_state, kappa, iota = rows[row]
        a_value = model.action_value(kappa)
        x = model.states[j_state]
        if x[2] == 0:
            a_bnd = 0
        else:
            a_bnd = model.boundary_value(iota)
        vals, cl, ch = closed_form_G(params, model, j_state,
                                     (a_value, a_bnd))
        for y, mass in vals.items():
            G[row, y] = mass
        calL[row] = cl
        calH[row] = ch
        for i in range(n):
            Lf[i, row] = model.f(i, x, a_value) * cl
            if ch > 0.0:
                Hr[i, row] = model.r(i, None, a_bnd) * ch
    inst = FiniteInstance(
        s=s_count, r=model.n_interior + len(model.boundary_values),
        feasible=feasible, alpha=params.alpha,
        G=G, Lf=Lf, Hr=Hr, calL=calL, calH=calH,
        nu0=model.nu0.copy(), d=np.asarray(params.d, dtype=float),
        rows=rows, row_index=row_index,
        meta={
            "source": "capacity_closed_form",
            "identity_tol": 1e-12,
            "snap_distance_bound": model.snap_distance_bound,
            "demand_cap": params.M,
            "deviations": [
                f"demand truncated at {params.M} with reflecting arrivals",
                "post-jump investment coordinates snap to the depth-"
                f"{params.depth} grid (worst distance "
                f"{model.snap_distance_bound:.6g})",
                "construction states exist only at demand >= 1; a "
                "completion out of demand level 1 restarts idle",
            ],
        })
    model._tabulated_instance = inst
    return model, inst


def reduction_polynomial(alpha_prime, rho):
    """g(rho) = alpha' rho^2 + (2 - alpha') rho - 1; the certificate below is
    valid on the untruncated demand space iff g(rho) >= 0 with 0 < rho < 1."""
    return alpha_prime * rho * rho + (2.0 - alpha_prime) * rho - 1.0


def capacity_certificate(params, rho):
    """Drift certificate (v, b, c) for the capacity model.

    v grows geometrically in the demand level with ratio 1 + alpha'*rho
    (alpha' = alpha/lam), b = 0, c = -rho*alpha; v is constant along every
    flow so its directional derivative vanishes identically.  The analytic
    reduced margin g(rho) captures the binding boundary inequality on the
    untruncated demand space, which demand truncation can only weaken.
    """
    from .assumptions import GrowthCertificate
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    lam, alpha = params.lam, params.alpha
    alpha_prime = alpha / lam
    a1 = math.log1p(alpha_prime * rho)

    def v(point):
        return lam * math.exp(a1 * point[1])

    return GrowthCertificate(
        v=v,
        c=-rho * alpha,
        Xv=lambda point: 0.0,
        reduced_margin=reduction_polynomial(alpha_prime, rho),
        reduced_margin_desc=(
            "closed-form reduction g(rho) of the boundary inequality over "
            "all demand levels (untruncated)"),
    )
