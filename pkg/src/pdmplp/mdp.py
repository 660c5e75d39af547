"""Constrained total-cost MDP with state-dependent actions.

The cemetery augmentation turns the substochastic one-stage kernel into a
proper Markov kernel by routing the leaked discount mass to an absorbing
extra state DELTA with zero running costs, and adds one indicator constraint
(limit 0) that forces the occupation measure to put no mass on the (DELTA,
DELTA) pair.  Balance equalities are imposed on the original, non-absorbing
states; an absorbing state's balance reduces to "occupation equals initial
mass" under the stopped-chain convention (arrivals at an absorbing state are
killed), which is the finite-dimensional reading under which the augmented
optimum coincides with the direct occupation-measure LP.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleProblem, UnboundedProblem
from .lp import LinearProgram, OccupationMeasure, simplex_solve

ROW_SUM_TOL = 1e-12


@dataclass
class ConstrainedMdp:
    """Six-tuple (states, pairs, kernel, costs, limits, initial).

    ``pairs`` enumerates the feasible (state, action-label) pairs;
    ``T[p, :]`` is the transition row of pair p and must be stochastic.
    ``costs[0]`` is the objective, ``costs[1..q]`` the constrained costs with
    limits ``limits[0..q-1]``; all costs are nonnegative.
    """

    n_states: int
    pairs: list
    T: np.ndarray
    costs: np.ndarray
    limits: np.ndarray
    nu: np.ndarray
    pair_names: list
    state_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.costs = np.atleast_2d(np.asarray(self.costs, dtype=float))
        self.limits = np.asarray(self.limits, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)

    def validate(self):
        v = []
        sums = self.T.sum(axis=1)
        for p, total in enumerate(sums):
            if abs(total - 1.0) > ROW_SUM_TOL:
                v.append(f"pair {self.pair_names[p]}: row sums to {total!r}")
        if np.any(self.T < -1e-15):
            v.append("kernel entries must be nonnegative")
        if np.any(self.costs < 0.0):
            v.append("costs must be nonnegative")
        if abs(self.nu.sum() - 1.0) > 1e-9 or np.any(self.nu < 0.0):
            v.append("nu not a probability vector")
        return v

    def absorbing_states(self):
        """States whose every pair self-loops with probability one."""
        out = []
        for x in range(self.n_states):
            rows = [p for p, (st, _) in enumerate(self.pairs) if st == x]
            if rows and all(self.T[p, x] >= 1.0 - ROW_SUM_TOL for p in rows):
                out.append(x)
        return out


def augment_delta(inst):
    """Cemetery augmentation of a tabulated instance.

    The new state receives 1 - (row mass) from every original pair and
    self-loops; original costs extend with zero there, and the extra
    indicator cost (limit 0) charges only the cemetery pair.
    """
    R = inst.n_rows
    s = inst.s
    n = inst.n_constraints
    T = np.zeros((R + 1, s + 1))
    T[:R, :s] = inst.G
    T[:R, s] = np.clip(1.0 - inst.row_mass(), 0.0, None)
    T[R, s] = 1.0
    costs = np.zeros((n + 2, R + 1))
    for i in range(n + 1):
        costs[i, :R] = inst.stage_cost(i)
    costs[n + 1, R] = 1.0
    pairs = [(int(j), (int(k), int(i))) for j, k, i in inst.rows]
    pairs.append((s, "DELTA"))
    pair_names = [f"mu_{j}_{k}_{i}" for j, k, i in inst.rows] + ["mu_DELTA"]
    state_names = [f"bal_{j}" for j in range(s)] + ["bal_DELTA"]
    nu = np.concatenate([inst.nu0, [0.0]])
    return ConstrainedMdp(
        n_states=s + 1, pairs=pairs, T=T, costs=costs,
        limits=np.concatenate([inst.d, [0.0]]), nu=nu,
        pair_names=pair_names, state_names=state_names,
        meta={"source": "augment_delta"})


def assemble_total_cost_lp(mdp):
    """Occupation-measure LP of a total-cost MDP.

    Non-absorbing states get the flow balance
    ``sum_{pairs at x} mu - sum_p T(p; x) mu_p = nu(x)``; absorbing states
    get the stopped-chain balance ``sum_{pairs at x} mu = nu(x)``.
    """
    n_pairs = len(mdp.pairs)
    absorbing = set(mdp.absorbing_states())
    A_eq = np.zeros((mdp.n_states, n_pairs))
    for p, (x, _) in enumerate(mdp.pairs):
        A_eq[x, p] += 1.0
    for x in range(mdp.n_states):
        if x in absorbing:
            continue
        A_eq[x, :] -= mdp.T[:, x]
    q = len(mdp.limits)
    A_in = mdp.costs[1:q + 1, :].copy()
    return LinearProgram(
        c=mdp.costs[0].copy(),
        A_eq=A_eq, b_eq=mdp.nu.copy(),
        A_in=A_in, b_in=mdp.limits.copy(),
        var_names=list(mdp.pair_names),
        eq_names=list(mdp.state_names),
        in_names=[f"con_{i}" for i in range(1, q + 1)])


def solve_total_cost_lp(mdp):
    """Optimal occupation measure of the constrained total-cost MDP.

    Returns (LpSolution, weights over pairs).  Raises InfeasibleProblem when
    the constraint set is empty (in particular whenever mass is forced onto
    a pair charged by an indicator constraint with limit 0) and
    UnboundedProblem with the simplex ray certificate if the feasible set
    has a cost-reducing ray, which the nonnegative-cost hypothesis excludes.
    """
    violations = mdp.validate()
    if violations:
        raise ValueError("invalid MDP: " + "; ".join(violations))
    lp = assemble_total_cost_lp(mdp)
    sol = simplex_solve(lp)
    if sol.status == "infeasible":
        raise InfeasibleProblem("total-cost MDP has no feasible occupation "
                                "measure", solution=sol)
    if sol.status == "unbounded":
        raise UnboundedProblem("total-cost LP is unbounded", solution=sol,
                               ray=sol.ray)
    return sol, sol.x


def delta_equivalent_measure(inst, weights):
    """Restrict augmented-MDP weights to the instance's triples."""
    return OccupationMeasure(weights=np.asarray(weights[:inst.n_rows]),
                             inst=inst)
