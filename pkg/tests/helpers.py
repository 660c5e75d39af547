"""Shared test models and independent oracles."""

import itertools
import math

import numpy as np

from pdmplp.fixtures import ConstantRateModel
from pdmplp.model import FeasibleActionSets, PdmpModel
from pdmplp.policy import StationaryPolicy, evaluate_policy_exact


class SineRateModel(PdmpModel):
    """Two states cycling with a smoothly oscillating jump rate.

    rate(t) = base + amp * sin(freq * t) along the flow, so the cumulative
    rate has the closed form base*t + amp*(1 - cos(freq*t))/freq which the
    adaptive grids must reproduce.
    """

    def __init__(self, base=1.2, amp=0.7, freq=2.0, alpha=1.0):
        assert base - abs(amp) > 0
        self.base = base
        self.amp = amp
        self.freq = freq
        self.alpha = alpha
        self.states = [(0, 0.0), (1, 0.0)]
        self.feasible = FeasibleActionSets(interior=[[0], [0]],
                                           boundary=[[1], [1]])
        self.nu0 = np.array([1.0, 0.0])
        self.d = np.zeros(0)
        self.n_costs = 1

    def flow(self, x, t):
        return (x[0], x[1] + t)

    def t_star(self, x):
        return math.inf

    def lam(self, x, a_tilde):
        return self.base + self.amp * math.sin(self.freq * x[1])

    def cumulative_exact(self, t):
        return self.base * t + self.amp * (1.0 - math.cos(self.freq * t)) \
            / self.freq

    def ell(self, x, a, t):
        return a

    def Q_interior(self, x, a_tilde):
        return {1 - x[0]: 1.0}

    def Q_boundary(self, z, a_bnd):
        raise AssertionError("never reached: no boundary")

    def f(self, i, x, a):
        return 1.0

    def r(self, i, z, a_bnd):
        return 0.0

    def action_value(self, kappa):
        return kappa

    def boundary_value(self, iota):
        return iota

    def lam_lower(self, j):
        return self.base - abs(self.amp)

    def lam_upper(self, j):
        return self.base + abs(self.amp)

    def k_lambda(self):
        return 1.0 / (self.base - abs(self.amp))

    def cost_sup(self, i):
        return 1.0 / self.alpha


class SwitchRateModel(PdmpModel):
    """One finite-horizon stage whose regulation value switches at a known
    time: rate r1 before, r2 after, and the post-jump law switches with it.
    Closed form: cumulative = r1*min(t, t_sw) + r2*max(t - t_sw, 0).
    """

    def __init__(self, r1=0.5, r2=2.0, t_sw=0.8, t_star=2.0, alpha=1.0):
        self.r1, self.r2, self.t_sw = r1, r2, t_sw
        self._t_star = t_star
        self.alpha = alpha
        self.states = [(0, 0.0), (1, 0.0), (2, 0.0)]
        self.feasible = FeasibleActionSets(
            interior=[[0], [0], [0]], boundary=[[1], [1], [1]])
        self.nu0 = np.array([1.0, 0.0, 0.0])
        self.d = np.zeros(0)
        self.n_costs = 1

    def flow(self, x, t):
        return (x[0], x[1] + t)

    def t_star(self, x):
        return self._t_star - x[1]

    def lam(self, x, a_tilde):
        return self.r1 if a_tilde == 0 else self.r2

    def cumulative_exact(self, t):
        return self.r1 * min(t, self.t_sw) \
            + self.r2 * max(t - self.t_sw, 0.0)

    def ell(self, x, a, t):
        return 0 if x[1] + t < self.t_sw else 1

    def ell_breakpoints(self, x, a):
        t = self.t_sw - x[1]
        return (t,) if 0.0 < t < self.t_star(x) else ()

    def q_breakpoints(self, x, a):
        return self.ell_breakpoints(x, a)

    def Q_interior(self, x, a_tilde):
        return {1: 1.0} if a_tilde == 0 else {2: 1.0}

    def Q_boundary(self, z, a_bnd):
        return {0: 1.0}

    def f(self, i, x, a):
        return 1.0

    def r(self, i, z, a_bnd):
        return 0.5

    def action_value(self, kappa):
        return kappa

    def boundary_value(self, iota):
        return iota

    def lam_lower(self, j):
        return min(self.r1, self.r2)

    def lam_upper(self, j):
        return max(self.r1, self.r2)


def zero_rate_model(t_star=2.0, alpha=1.0):
    """Single stage with no spontaneous jumps: everything happens at the
    boundary."""
    feasible = FeasibleActionSets(interior=[[0], [0]], boundary=[[1], [1]])
    return ConstantRateModel(
        t_star_by_state=[t_star, t_star],
        rate={(0, 0): 0.0, (1, 0): 0.0},
        q_int={(0, 0): {1: 1.0}, (1, 0): {0: 1.0}},
        q_bnd={(0, 1): {1: 1.0}, (1, 1): {0: 1.0}},
        f_cost={(0, 0, 0): 1.0, (0, 1, 0): 1.0},
        r_cost={(0, 0, 1): 1.0, (0, 1, 1): 1.0},
        feasible=feasible, alpha=alpha, nu0=[1.0, 0.0], d=[], n_costs=1)


def deterministic_policies(inst):
    """Every deterministic stationary strategy of an instance."""
    per_state = [range(len(inst.state_rows(j))) for j in range(inst.s)]
    for choice in itertools.product(*per_state):
        probs = []
        for j, pick in enumerate(choice):
            p = np.zeros(len(inst.state_rows(j)))
            p[pick] = 1.0
            probs.append(p)
        yield StationaryPolicy(probs=probs,
                               provenance=["DefaultFill"] * inst.s)


def brute_force_value(inst, tol=1e-9):
    """Exhaustive minimum cost over deterministic stationary strategies that
    meet the limits (None if none does)."""
    best = None
    for phi in deterministic_policies(inst):
        vals = evaluate_policy_exact(phi, inst)
        if all(vals[i] <= inst.d[i - 1] + tol
               for i in range(1, inst.n_costs)):
            if best is None or vals[0] < best:
                best = float(vals[0])
    return best
