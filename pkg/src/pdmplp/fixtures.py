"""Reference models with closed-form tabulations.

These drive the test oracles: every model here has constant jump rate and
time-independent post-jump law within a stage, so the one-stage quantities
have elementary closed forms (with beta = alpha + rate)

    calL = (1 - exp(-beta*t_star)) / beta        (1/beta when t_star = inf)
    calH = exp(-beta*t_star)                     (0 when t_star = inf)
    G    = rate * calL * Q_interior + calH * Q_boundary
    Lf_i = f_i * calL,   Hr_i = r_i * calH

which the generic quadrature tabulation must reproduce.
"""

import math

import numpy as np

from .model import FeasibleActionSets, FiniteInstance, PdmpModel


class ConstantRateModel(PdmpModel):
    """Finite model whose rate, post-jump law and running cost are constant
    along each stage.  Points are (state, elapsed) pairs so the flow is the
    elapsed-time shift.

    Tables are dicts keyed by (state, interior id) or (state, boundary id):
    ``rate``, ``q_int`` (dict StateId -> prob, no self target), ``q_bnd``,
    ``f_cost[(i, j, kappa)]``, ``r_cost[(i, j, iota)]``; ``t_star_by_state``
    may contain inf.
    """

    def __init__(self, t_star_by_state, rate, q_int, q_bnd, f_cost, r_cost,
                 feasible, alpha, nu0, d, n_costs):
        self.t_star_by_state = [float(t) for t in t_star_by_state]
        self.rate = rate
        self.q_int = q_int
        self.q_bnd = q_bnd
        self.f_cost = f_cost
        self.r_cost = r_cost
        self.feasible = feasible
        self.alpha = float(alpha)
        self.nu0 = np.asarray(nu0, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.n_costs = int(n_costs)
        self.states = [(j, 0.0) for j in range(len(t_star_by_state))]

    # flow carries (state, elapsed)
    def flow(self, x, t):
        return (x[0], x[1] + t)

    def t_star(self, x):
        return self.t_star_by_state[x[0]] - x[1]

    def lam(self, x, a_tilde):
        return self.rate[(x[0], a_tilde)]

    def ell(self, x, a, t):
        return a

    def Q_interior(self, x, a_tilde):
        return self.q_int[(x[0], a_tilde)]

    def Q_boundary(self, z, a_bnd):
        return self.q_bnd[(z[0], a_bnd)]

    def f(self, i, x, a):
        return self.f_cost[(i, x[0], a)]

    def r(self, i, z, a_bnd):
        return self.r_cost[(i, z[0], a_bnd)]

    def action_value(self, kappa):
        return kappa

    def boundary_value(self, iota):
        return iota

    def lam_lower(self, j):
        return min(self.rate[(j, k)] for k in self.feasible.interior[j])

    def lam_upper(self, j):
        return max(self.rate[(j, k)] for k in self.feasible.interior[j])

    def k_lambda(self):
        worst = 0.0
        for j, ts in enumerate(self.t_star_by_state):
            lo = self.lam_lower(j)
            if math.isfinite(ts):
                worst = max(worst, (1.0 - math.exp(-lo * ts)) / lo)
            else:
                worst = max(worst, 1.0 / lo)
        return worst

    def cost_sup(self, i):
        f_max = max((v for (ii, _, _), v in self.f_cost.items() if ii == i),
                    default=0.0)
        r_max = max((v for (ii, _, _), v in self.r_cost.items() if ii == i),
                    default=0.0)
        return f_max / self.alpha + r_max


def closed_form_instance(model, meta_source="closed_form"):
    """Exact tabulation of a :class:`ConstantRateModel`."""
    feasible = model.feasible
    s = model.n_states
    n = model.n_costs
    from .model import enumerate_rows, _action_count
    rows, row_index = enumerate_rows(feasible)
    n_rows = rows.shape[0]
    G = np.zeros((n_rows, s))
    Lf = np.zeros((n, n_rows))
    Hr = np.zeros((n, n_rows))
    calL = np.zeros(n_rows)
    calH = np.zeros(n_rows)
    for row in range(n_rows):
        j, kappa, iota = rows[row].tolist()
        lam = model.rate[(j, kappa)]
        beta = model.alpha + lam
        ts = model.t_star_by_state[j]
        if math.isfinite(ts):
            cH = math.exp(-beta * ts)
            cL = (1.0 - cH) / beta
        else:
            cH = 0.0
            cL = 1.0 / beta
        calL[row] = cL
        calH[row] = cH
        for y, p in model.q_int[(j, kappa)].items():
            G[row, y] += lam * cL * p
        if cH > 0.0:
            for y, p in model.q_bnd[(j, iota)].items():
                G[row, y] += cH * p
        for i in range(n):
            Lf[i, row] = model.f_cost[(i, j, kappa)] * cL
            Hr[i, row] = model.r_cost[(i, j, iota)] * cH if cH > 0.0 else 0.0
    inst = FiniteInstance(
        s=s, r=_action_count(model), feasible=feasible, alpha=model.alpha,
        G=G, Lf=Lf, Hr=Hr, calL=calL, calH=calH,
        nu0=model.nu0.copy(), d=model.d.copy(),
        rows=rows, row_index=row_index,
        meta={"source": meta_source, "identity_tol": 1e-12},
    )
    model._tabulated_instance = inst
    return inst


def two_state_cycle(alpha=1.0, rate=1.0, running_cost=1.0,
                    constraint_cost=None, limit=None):
    """Two states cycling through each other by spontaneous jumps only.

    With alpha = rate = 1 and unit running cost the optimal value is
    running_cost/alpha = 1 and the occupation masses are (4/3, 2/3) from the
    start-at-first-state geometric series with half-mass kernel rows.
    Optionally adds one constraint with running cost ``constraint_cost`` per
    state and limit ``limit``.
    """
    feasible = FeasibleActionSets(interior=[[0], [0]], boundary=[[1], [1]])
    n_costs = 1 if constraint_cost is None else 2
    f_cost = {(0, 0, 0): float(running_cost), (0, 1, 0): float(running_cost)}
    r_cost = {(0, 0, 1): 0.0, (0, 1, 1): 0.0}
    d = []
    if constraint_cost is not None:
        f_cost[(1, 0, 0)] = float(constraint_cost[0])
        f_cost[(1, 1, 0)] = float(constraint_cost[1])
        r_cost[(1, 0, 1)] = 0.0
        r_cost[(1, 1, 1)] = 0.0
        d = [float(limit)]
    model = ConstantRateModel(
        t_star_by_state=[math.inf, math.inf],
        rate={(0, 0): float(rate), (1, 0): float(rate)},
        q_int={(0, 0): {1: 1.0}, (1, 0): {0: 1.0}},
        q_bnd={},
        f_cost=f_cost, r_cost=r_cost,
        feasible=feasible, alpha=alpha, nu0=[1.0, 0.0], d=d,
        n_costs=n_costs)
    return model, closed_form_instance(model, meta_source="two_state_cycle")


def random_model(rng, max_states=6, max_pairs=4, n_constraints=0):
    """Random constant-rate model with the given shape limits.

    Post-jump supports avoid self-targets for spontaneous jumps; every state
    with an infinite boundary time keeps a positive rate, so tabulation is
    always well posed.  Returns the model; pair it with
    :func:`closed_form_instance` and :func:`feasible_limits`.
    """
    s = int(rng.integers(2, max_states + 1))
    t_star = [float(rng.uniform(0.4, 2.5)) if rng.random() < 0.6 else math.inf
              for _ in range(s)]
    alpha = float(rng.uniform(0.5, 1.5))
    interior, boundary = [], []
    next_id = 0
    for j in range(s):
        n_int = int(rng.integers(1, 3))
        n_bnd = int(rng.integers(1, 3))
        while n_int * n_bnd > max_pairs:
            if n_bnd > 1:
                n_bnd -= 1
            else:
                n_int -= 1
        interior.append(list(range(next_id, next_id + n_int)))
        next_id += n_int
        boundary.append(list(range(next_id, next_id + n_bnd)))
        next_id += n_bnd
    feasible = FeasibleActionSets(interior=interior, boundary=boundary)

    def categorical(exclude=None):
        pool = [y for y in range(s) if y != exclude]
        size = int(rng.integers(1, min(3, len(pool)) + 1))
        support = rng.choice(pool, size=size, replace=False)
        w = rng.dirichlet(np.ones(size))
        return {int(y): float(p) for y, p in zip(support, w)}

    rate, q_int, q_bnd, f_cost, r_cost = {}, {}, {}, {}, {}
    n_costs = 1 + n_constraints
    for j in range(s):
        for kappa in interior[j]:
            rate[(j, kappa)] = float(rng.uniform(0.3, 2.2))
            q_int[(j, kappa)] = categorical(exclude=j)
            for i in range(n_costs):
                f_cost[(i, j, kappa)] = float(rng.uniform(0.0, 2.0))
        for iota in boundary[j]:
            if math.isfinite(t_star[j]):
                q_bnd[(j, iota)] = categorical()
            for i in range(n_costs):
                r_cost[(i, j, iota)] = float(rng.uniform(0.0, 1.5))
    nu0 = rng.dirichlet(np.ones(s))
    return ConstantRateModel(
        t_star_by_state=t_star, rate=rate, q_int=q_int, q_bnd=q_bnd,
        f_cost=f_cost, r_cost=r_cost, feasible=feasible, alpha=alpha,
        nu0=nu0, d=np.zeros(n_constraints), n_costs=n_costs)


def feasible_limits(inst, rng, slack_max=0.6):
    """Set constraint limits from an exactly evaluated random deterministic
    policy plus nonnegative slack, guaranteeing LP feasibility."""
    from .policy import StationaryPolicy, evaluate_policy_exact
    n = inst.n_constraints
    if n == 0:
        return inst
    probs = []
    for j in range(inst.s):
        state_rows = inst.state_rows(j)
        pick = int(rng.integers(0, len(state_rows)))
        p = np.zeros(len(state_rows))
        p[pick] = 1.0
        probs.append(p)
    phi = StationaryPolicy(probs=probs,
                           provenance=["DefaultFill"] * inst.s)
    costs = evaluate_policy_exact(phi, inst)
    d = np.array([
        costs[i] * (1.0 + rng.uniform(0.0, slack_max)) + 1e-9
        for i in range(1, n + 1)
    ])
    inst.d = d
    return inst


def random_instance(rng, max_states=6, max_pairs=4, n_constraints=0):
    """Random valid instance (identity exact by construction) together with
    its generating behavioral model."""
    model = random_model(rng, max_states=max_states, max_pairs=max_pairs,
                         n_constraints=n_constraints)
    inst = closed_form_instance(model, meta_source="random_instance")
    inst = feasible_limits(inst, rng)
    model.d = inst.d.copy()
    return model, inst
