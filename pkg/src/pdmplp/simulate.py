"""Monte Carlo simulation of controlled trajectories.

Two interchangeable estimators of the same series
``sum_k E[discount_k * quantity(Z_k, pair_k)]``:

* time-resolved (needs a behavioral model): the inter-jump time is drawn by
  inverse transform through the cached cumulative-rate grid, forced boundary
  jumps occur exactly at the boundary time, running costs accrue through
  cumulative stage-cost grids evaluated at the realized duration;
* embedded chain (needs only a tabulated instance): visits carry unit
  weight, the chain continues with probability equal to the kernel row mass
  and moves to a state drawn from the normalized row.

Both run on the numba kernels when available and on the vectorized numpy
backend otherwise (``PDMPLP_DISABLE_NUMBA=1``); trajectories are
reproducible bit-for-bit per backend from the master seed, and the two
backends agree to floating-point reduction tolerance.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _sim_kernels as kern
from . import _sim_numpy as vec
from ._accel import HAVE_NUMBA, python_impl
from .operators import QuadratureConfig, StagePath, cumulative_grid

DEFAULT_N_TRAJ = 100_000
DEFAULT_EPS_DISC = 1e-8
MAX_STAGES = 100_000


@dataclass
class TrajectorySample:
    """Event history of one recorded trajectory.

    ``times[k]`` is the k-th post-jump instant (times[0] = 0), ``states``
    the post-jump states, ``interior_actions``/``boundary_actions`` the pair
    applied from that instant, ``boundary_hits[k]`` whether the stage ended
    with a forced jump.  Times are strictly increasing and a forced stage
    lasts exactly the boundary time of its start state.
    """

    traj_id: int
    times: np.ndarray
    states: np.ndarray
    interior_actions: np.ndarray
    boundary_actions: np.ndarray
    boundary_hits: np.ndarray


def recorded_trajectories(result):
    """Split a recorded run (``record > 0``) into TrajectorySample views."""
    rec = result.records
    if rec is None:
        raise ValueError("simulation was run without trajectory recording")
    out = []
    for tid in np.unique(rec["traj"]):
        sel = rec["traj"] == tid
        order = np.argsort(rec["k"][sel])
        out.append(TrajectorySample(
            traj_id=int(tid),
            times=rec["T"][sel][order],
            states=rec["Z"][sel][order],
            interior_actions=rec["kappa"][sel][order],
            boundary_actions=rec["iota"][sel][order],
            boundary_hits=rec["boundary_hit"][sel][order].astype(bool)))
    return out


@dataclass
class McEstimate:
    """Sample mean with its standard error."""

    mean: float
    se: float
    count: int
    trunc_bound: float = None

    def z_score(self, reference):
        if self.se == 0.0:
            return 0.0 if abs(reference - self.mean) == 0.0 else math.inf
        return (self.mean - reference) / self.se

    def consistency_z(self, reference):
        """z-score net of the certified truncation bias: the discrepancy in
        excess of the bias bound, in standard errors."""
        gap = abs(self.mean - reference) - (self.trunc_bound or 0.0)
        if gap <= 0.0:
            return 0.0
        if self.se == 0.0:
            return math.inf
        return gap / self.se


def _estimate(total, total_sq, n):
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


# -- compiled tables ----------------------------------------------------------

def _pad_ragged(ptr, values, fill):
    n = len(ptr) - 1
    width = max(int(np.max(ptr[1:] - ptr[:-1])), 1)
    out = np.full((n, width), fill, dtype=np.asarray(values).dtype)
    for i in range(n):
        out[i, :ptr[i + 1] - ptr[i]] = values[ptr[i]:ptr[i + 1]]
    return out


def _cdf_of(dist):
    """(states, cdf) arrays of a dict distribution, normalized to end at 1."""
    items = sorted(dist.items())
    states = np.array([y for y, _ in items], dtype=np.int64)
    probs = np.array([p for _, p in items], dtype=float)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"distribution mass {total!r} is not 1")
    cdf = np.cumsum(probs) / total
    cdf[-1] = 1.0
    return states, cdf


@dataclass
class TimeTables:
    """Flat arrays driving the time-resolved kernels (one stage group per
    (state, interior action) pair)."""

    alpha: float
    n_states: int
    n_costs: int
    n_rows: int
    row_state: np.ndarray
    row_kappa: np.ndarray
    row_iota: np.ndarray
    row_group: np.ndarray
    nu0: np.ndarray
    nu0_cdf: np.ndarray
    pol_rows: np.ndarray
    pol_cdf: np.ndarray
    grp_tstar: np.ndarray
    grp_lam_end: np.ndarray
    gptr: np.ndarray
    gt: np.ndarray
    gc: np.ndarray
    gs: np.ndarray
    cptr: np.ndarray
    ct: np.ndarray
    cv: np.ndarray
    cs: np.ndarray
    pptr: np.ndarray
    pend: np.ndarray
    pc_ptr: np.ndarray
    pc_state: np.ndarray
    pc_cdf: np.ndarray
    bnd_ptr: np.ndarray
    bnd_state: np.ndarray
    bnd_cdf: np.ndarray
    r_cost: np.ndarray
    G: np.ndarray
    group_of: dict
    # padded views of the narrow categoricals, for the vectorized backend
    PEND: np.ndarray = None
    PC_CDF: np.ndarray = None
    PC_STATE: np.ndarray = None
    BND_CDF: np.ndarray = None
    BND_STATE: np.ndarray = None

    def build_padded(self):
        self.PEND = _pad_ragged(self.pptr, self.pend, np.inf)
        self.PC_CDF = _pad_ragged(self.pc_ptr, self.pc_cdf, 1.0)
        self.PC_STATE = _pad_ragged(self.pc_ptr, self.pc_state, 0)
        self.BND_CDF = _pad_ragged(self.bnd_ptr, self.bnd_cdf, 1.0)
        self.BND_STATE = _pad_ragged(self.bnd_ptr, self.bnd_state, 0)
        return self


def _policy_padding(probs_by_state, rows_by_state):
    s = len(probs_by_state)
    width = max(len(p) for p in probs_by_state)
    pol_rows = np.zeros((s, width), dtype=np.int64)
    pol_cdf = np.ones((s, width))
    for j in range(s):
        p = np.asarray(probs_by_state[j], dtype=float)
        cdf = np.cumsum(p) / p.sum()
        cdf[-1] = 1.0
        pol_rows[j, :len(p)] = rows_by_state[j]
        pol_cdf[j, :len(p)] = cdf
    return pol_rows, pol_cdf


def _stage_pieces(model, path, j, a_value):
    """Piecewise-constant post-jump law over the sampling range of a stage.

    Splits at the declared breakpoints and verifies constancy by probing
    each piece at three interior points."""
    end = float(path.grid_t[-1])
    x = model.states[j]
    cuts = sorted({float(b) for b in list(model.ell_breakpoints(x, a_value))
                   + list(model.q_breakpoints(x, a_value)) if 0.0 < b < end})
    edges = [0.0] + cuts + [end]
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0.0:
            continue
        dists = []
        for frac in (0.1, 0.5, 0.9):
            t = lo + frac * (hi - lo)
            a_tilde = model.ell(x, a_value, t)
            dists.append(model.Q_interior(model.flow(x, t), a_tilde))
        ref = dists[0]
        for other in dists[1:]:
            if set(other) != set(ref) or any(
                    abs(other[key] - ref[key]) > 1e-9 for key in other):
                raise ValueError(
                    "post-jump law varies inside a declared segment; "
                    "declare the change time via q_breakpoints")
        t_end = hi if hi < end - 1e-15 else math.inf
        pieces.append((t_end, ref))
    return pieces


def compile_time_tables(model, phi, quad_cfg=None):
    """Build the flat stage tables for a model under a strategy."""
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    feas = model.feasible
    s = model.n_states
    nc = model.n_costs
    from .model import enumerate_rows
    rows, row_index = enumerate_rows(feas)
    R = rows.shape[0]
    groups = [(j, kappa) for j in range(s) for kappa in feas.interior[j]]
    group_of = {jk: g for g, jk in enumerate(groups)}
    row_group = np.array([group_of[(j, k)] for j, k, _ in rows],
                         dtype=np.int64)

    gptr = [0]
    gt_l, gc_l, gs_l = [], [], []
    cptr = [0]
    ct_l, cv_l, cs_l = [], [], []
    pptr = [0]
    pend_l = []
    pc_ptr = [0]
    pc_state_l, pc_cdf_l = [], []
    grp_tstar = np.empty(len(groups))
    grp_lam_end = np.empty(len(groups))
    boundary_pt = {}
    for g, (j, kappa) in enumerate(groups):
        x = model.states[j]
        a_value = model.action_value(kappa)
        # the rate and the running costs are smooth across post-jump-law
        # breakpoints, so the grids split at control breakpoints only
        path = StagePath(model, x, a_value, quad_cfg, state_index=j,
                         extend_for_sampling=True, split_q=False)
        grp_tstar[g] = path.t_star
        grp_lam_end[g] = path.grid_cum[-1]
        gt_l.append(path.grid_t)
        gc_l.append(path.grid_cum)
        gs_l.append(path.grid_slope)
        gptr.append(gptr[-1] + len(path.grid_t))
        boundary_pt[g] = path.boundary_point()
        end = float(path.grid_t[-1])
        edges = [0.0] + path._breakpoints(0.0, end) + [end]
        for i in range(nc):
            tt, yy, mm, _ = cumulative_grid(
                lambda t, _i=i: math.exp(-model.alpha * t)
                * model.f(_i, model.flow(x, t), a_value),
                edges, quad_cfg)
            ct_l.append(tt)
            cv_l.append(yy)
            cs_l.append(mm)
            cptr.append(cptr[-1] + len(tt))
        for t_end, dist in _stage_pieces(model, path, j, a_value):
            states, cdf = _cdf_of(dist)
            pend_l.append(t_end)
            pc_state_l.append(states)
            pc_cdf_l.append(cdf)
            pc_ptr.append(pc_ptr[-1] + len(states))
        pptr.append(len(pend_l))

    bnd_ptr = [0]
    bnd_state_l, bnd_cdf_l = [], []
    r_cost = np.zeros((nc, R))
    G = np.zeros((R, s))
    for row in range(R):
        j, kappa, iota = rows[row]
        g = row_group[row]
        z_bnd = boundary_pt[g]
        if z_bnd is not None:
            a_bnd = model.boundary_value(iota)
            states, cdf = _cdf_of(model.Q_boundary(z_bnd, a_bnd))
            bnd_state_l.append(states)
            bnd_cdf_l.append(cdf)
            bnd_ptr.append(bnd_ptr[-1] + len(states))
            for i in range(nc):
                r_cost[i, row] = model.r(i, z_bnd, a_bnd)
        else:
            bnd_ptr.append(bnd_ptr[-1])

    pol_rows, pol_cdf = _policy_padding(
        phi.probs, [np.flatnonzero(rows[:, 0] == j) for j in range(s)])
    nu0 = np.asarray(model.nu0, dtype=float)
    nu0_cdf = np.cumsum(nu0)
    nu0_cdf[-1] = 1.0

    tb = TimeTables(
        alpha=float(model.alpha), n_states=s, n_costs=nc, n_rows=R,
        row_state=rows[:, 0].copy(), row_kappa=rows[:, 1].copy(),
        row_iota=rows[:, 2].copy(), row_group=row_group,
        nu0=nu0, nu0_cdf=nu0_cdf, pol_rows=pol_rows, pol_cdf=pol_cdf,
        grp_tstar=grp_tstar, grp_lam_end=grp_lam_end,
        gptr=np.array(gptr, dtype=np.int64),
        gt=np.concatenate(gt_l), gc=np.concatenate(gc_l),
        gs=np.concatenate(gs_l),
        cptr=np.array(cptr, dtype=np.int64),
        ct=np.concatenate(ct_l), cv=np.concatenate(cv_l),
        cs=np.concatenate(cs_l),
        pptr=np.array(pptr, dtype=np.int64),
        pend=np.array(pend_l),
        pc_ptr=np.array(pc_ptr, dtype=np.int64),
        pc_state=np.concatenate(pc_state_l),
        pc_cdf=np.concatenate(pc_cdf_l),
        bnd_ptr=np.array(bnd_ptr, dtype=np.int64),
        bnd_state=(np.concatenate(bnd_state_l) if bnd_state_l
                   else np.empty(0, dtype=np.int64)),
        bnd_cdf=(np.concatenate(bnd_cdf_l) if bnd_cdf_l
                 else np.empty(0)),
        r_cost=r_cost, G=G, group_of=group_of)

    # expected one-stage kernel per row for balance residuals: integrate the
    # leak-free identity G = spontaneous + boundary via the same grids
    _fill_expected_kernel(model, tb, quad_cfg)
    return tb.build_padded()


def _fill_expected_kernel(model, tb, quad_cfg):
    """Expected discounted next-state kernel per row, from a tabulated
    instance when available or by quadrature otherwise."""
    inst = getattr(model, "_tabulated_instance", None)
    if inst is not None and inst.G.shape == tb.G.shape:
        tb.G[:, :] = inst.G
        return
    from . import operators
    for row in range(tb.n_rows):
        j = int(tb.row_state[row])
        kappa = int(tb.row_kappa[row])
        iota = int(tb.row_iota[row])
        a_hat = (model.action_value(kappa), model.boundary_value(iota))
        vals = operators.operator_G(model, model.states[j], a_hat,
                                    quad_cfg, state_index=j)
        for y, p in vals.items():
            tb.G[row, y] = p


@dataclass
class ChainTables:
    """Flat arrays driving the embedded-chain kernels."""

    n_states: int
    n_costs: int
    n_rows: int
    row_state: np.ndarray
    nu0: np.ndarray
    nu0_cdf: np.ndarray
    pol_rows: np.ndarray
    pol_cdf: np.ndarray
    G: np.ndarray
    G_cdf: np.ndarray
    C: np.ndarray


def compile_chain_tables(inst, phi):
    pol_rows, pol_cdf = _policy_padding(
        phi.probs, [inst.state_rows(j) for j in range(inst.s)])
    nu0_cdf = np.cumsum(inst.nu0)
    nu0_cdf[-1] = 1.0
    C = np.array([inst.stage_cost(i) for i in range(inst.n_costs)])
    return ChainTables(
        n_states=inst.s, n_costs=inst.n_costs, n_rows=inst.n_rows,
        row_state=inst.rows[:, 0].copy(), nu0=inst.nu0.copy(),
        nu0_cdf=nu0_cdf, pol_rows=pol_rows, pol_cdf=pol_cdf,
        G=inst.G.copy(), G_cdf=np.cumsum(inst.G, axis=1), C=C)


# -- running simulations ------------------------------------------------------

def _resolve_backend(backend):
    """"numba" (compiled), "numpy" (vectorized) or "scalar" (interpreted
    kernel, used for recording and tests)."""
    if backend is None:
        return "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is disabled "
                         "or unavailable")
    if backend not in ("numba", "numpy", "scalar"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


@dataclass
class SimOutputs:
    J: np.ndarray
    mass: np.ndarray
    stages: np.ndarray
    hits: np.ndarray
    capped: np.ndarray
    sum_r: np.ndarray
    sumsq_r: np.ndarray
    mu_sum: np.ndarray
    mu_sumsq: np.ndarray

    @classmethod
    def allocate(cls, n_traj, n_costs, s, R):
        return cls(J=np.zeros((n_traj, n_costs)), mass=np.zeros(n_traj),
                   stages=np.zeros(n_traj, dtype=np.int64),
                   hits=np.zeros(n_traj, dtype=np.int64),
                   capped=np.zeros(n_traj, dtype=np.uint8),
                   sum_r=np.zeros(s), sumsq_r=np.zeros(s),
                   mu_sum=np.zeros(R), mu_sumsq=np.zeros(R))


@dataclass
class SimResult:
    """Aggregated Monte Carlo estimates of one simulation run."""

    costs: list
    mass: McEstimate
    occupation_mean: np.ndarray
    occupation_se: np.ndarray
    residual_mean: np.ndarray
    residual_se: np.ndarray
    n_traj: int
    seed: int
    mode: str
    mean_stages: float
    mean_boundary_hits: float
    n_capped: int
    eps_disc: float = None
    samples: SimOutputs = None
    records: dict = None


def _aggregate(out, n_traj, seed, mode, eps_disc, keep_samples,
               cost_sups=None, mass_bound=None):
    n = n_traj
    costs = []
    for i in range(out.J.shape[1]):
        col = out.J[:, i]
        mean = float(np.mean(col))
        se = float(np.std(col, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        trunc = None
        if mode == "chain":
            trunc = 0.0
        elif eps_disc is not None and cost_sups is not None \
                and cost_sups[i] is not None and mass_bound is not None:
            trunc = float(eps_disc * cost_sups[i] * mass_bound)
        costs.append(McEstimate(mean=mean, se=se, count=n,
                                trunc_bound=trunc))
    mass_mean = float(np.mean(out.mass))
    mass_se = float(np.std(out.mass, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    occ_mean = out.mu_sum / n
    occ_var = np.maximum(out.mu_sumsq / n - occ_mean ** 2, 0.0) \
        * n / max(n - 1, 1)
    res_mean = out.sum_r / n
    res_var = np.maximum(out.sumsq_r / n - res_mean ** 2, 0.0) \
        * n / max(n - 1, 1)
    return SimResult(
        costs=costs,
        mass=McEstimate(mean=mass_mean, se=mass_se, count=n),
        occupation_mean=occ_mean, occupation_se=np.sqrt(occ_var / n),
        residual_mean=res_mean, residual_se=np.sqrt(res_var / n),
        n_traj=n, seed=seed, mode=mode,
        mean_stages=float(np.mean(out.stages)),
        mean_boundary_hits=float(np.mean(out.hits)),
        n_capped=int(np.sum(out.capped)),
        eps_disc=eps_disc,
        samples=out if keep_samples else None)


def run_time_simulation(model, phi, n_traj=DEFAULT_N_TRAJ, seed=0,
                        eps_disc=DEFAULT_EPS_DISC, quad_cfg=None,
                        tables=None, backend=None, keep_samples=False,
                        record=0, mass_bound=None):
    """Simulate the controlled process under a stationary strategy.

    ``backend`` is "numba", "numpy" or None (auto).  ``record`` keeps the
    first ``record`` trajectories event-by-event for CSV dumps (forces the
    scalar kernel).  The truncation-bias bound per cost is
    eps_disc * cost_sup * mass_bound when both bounds are declared.
    """
    if tables is None:
        tables = compile_time_tables(model, phi, quad_cfg)
    tb = tables
    out = SimOutputs.allocate(n_traj, tb.n_costs, tb.n_states, tb.n_rows)
    mode = _resolve_backend(backend)
    if record > 0 and mode == "numpy":
        mode = "scalar"              # recording needs the scalar loop
    records = None
    if mode != "numpy":
        rec_cap = 0
        if record > 0:
            rec_cap = record * 4096 + 1024
        rec_traj = np.empty(rec_cap, dtype=np.int64)
        rec_k = np.empty(rec_cap, dtype=np.int64)
        rec_T = np.empty(rec_cap)
        rec_Z = np.empty(rec_cap, dtype=np.int64)
        rec_kappa = np.empty(rec_cap, dtype=np.int64)
        rec_iota = np.empty(rec_cap, dtype=np.int64)
        rec_bhit = np.empty(rec_cap, dtype=np.int64)
        fn = kern.simulate_time_kernel
        if mode == "scalar":
            fn = python_impl(fn)
        with np.errstate(over="ignore"):
            n_rec = fn(
                np.uint64(seed), n_traj, eps_disc, MAX_STAGES, tb.alpha,
                tb.nu0_cdf, tb.pol_rows, tb.pol_cdf,
                tb.row_state, tb.row_group, tb.grp_tstar,
                tb.gptr, tb.gt, tb.gc, tb.gs,
                tb.cptr, tb.ct, tb.cv, tb.cs, tb.n_costs,
                tb.pptr, tb.pend, tb.pc_ptr, tb.pc_state, tb.pc_cdf,
                tb.bnd_ptr, tb.bnd_state, tb.bnd_cdf, tb.r_cost,
                tb.G, tb.nu0,
                out.J, out.mass, out.stages, out.hits, out.capped,
                out.sum_r, out.sumsq_r, out.mu_sum, out.mu_sumsq,
                record, rec_traj, rec_k, rec_T, rec_Z, rec_kappa,
                rec_iota, rec_bhit, tb.row_kappa, tb.row_iota)
        if record > 0:
            records = {
                "traj": rec_traj[:n_rec], "k": rec_k[:n_rec],
                "T": rec_T[:n_rec], "Z": rec_Z[:n_rec],
                "kappa": rec_kappa[:n_rec], "iota": rec_iota[:n_rec],
                "boundary_hit": rec_bhit[:n_rec],
            }
    else:
        vec.simulate_time_numpy(tb, seed, n_traj, eps_disc, MAX_STAGES, out)
    cost_sups = [getattr(model, "cost_sup", lambda i: None)(i)
                 for i in range(tb.n_costs)]
    if mass_bound is None:
        mass_bound = tail_mass_bound(
            getattr(model, "_tabulated_instance", None))
    result = _aggregate(out, n_traj, seed, "time", eps_disc, keep_samples,
                        cost_sups=cost_sups, mass_bound=mass_bound)
    result.records = records
    return result


def tail_mass_bound(inst):
    """Bound on the remaining discounted jump mass from any state.

    The per-stage identity "kernel mass + alpha * stage discount = 1" makes
    the weights telescope, so the series from any start is at most
    1 / (alpha * min stage discount).  None when no instance is available.
    """
    if inst is None:
        return None
    floor = float(np.min(inst.calL))
    if floor <= 0.0:
        return None
    return 1.0 / (inst.alpha * floor)


def run_chain_simulation(inst, phi, n_traj=DEFAULT_N_TRAJ, seed=0,
                         backend=None, keep_samples=False, tables=None):
    """Simulate the embedded absorbing chain of a tabulated instance."""
    if tables is None:
        tables = compile_chain_tables(inst, phi)
    tb = tables
    out = SimOutputs.allocate(n_traj, tb.n_costs, tb.n_states, tb.n_rows)
    mode = _resolve_backend(backend)
    if mode == "numpy":
        vec.simulate_chain_numpy(tb, seed, n_traj, MAX_STAGES, out)
    else:
        fn = kern.simulate_chain_kernel
        if mode == "scalar":
            fn = python_impl(fn)
        with np.errstate(over="ignore"):
            fn(np.uint64(seed), n_traj, MAX_STAGES, tb.n_costs,
               tb.nu0_cdf, tb.pol_rows, tb.pol_cdf,
               tb.row_state, tb.G_cdf, tb.C, tb.G, tb.nu0,
               out.J, out.mass, out.stages, out.hits, out.capped,
               out.sum_r, out.sumsq_r, out.mu_sum, out.mu_sumsq)
    result = _aggregate(out, n_traj, seed, "chain", None, keep_samples)
    result.records = None
    return result


def simulate_costs(model, phi, nu0=None, alpha=None,
                   budget=(DEFAULT_N_TRAJ, DEFAULT_EPS_DISC), seed=0,
                   quad_cfg=None, mass_bound=None, backend=None):
    """Per-cost discounted Monte Carlo estimates under a strategy.

    ``budget = (trajectory count, discount cutoff)``; each trajectory is
    truncated once its discount falls below the cutoff, and the bias bound
    eps * sup-stage-cost * mass-bound is attached when those bounds are
    declared (None otherwise: reported, not certified).
    """
    if nu0 is not None or alpha is not None:
        raise ValueError("model carries nu0 and alpha; overrides are not "
                         "supported, rebuild the model instead")
    n_traj, eps_disc = budget
    res = run_time_simulation(model, phi, n_traj=int(n_traj), seed=seed,
                              eps_disc=float(eps_disc), quad_cfg=quad_cfg,
                              mass_bound=mass_bound, backend=backend)
    return res.costs


def estimate_occupation(model, phi, nu0=None, alpha=None,
                        budget=(DEFAULT_N_TRAJ, DEFAULT_EPS_DISC), seed=0,
                        quad_cfg=None, backend=None):
    """Empirical occupation weights (per-triple discounted visit weights)
    plus the total-discount estimate used for the mass-bound check."""
    if nu0 is not None or alpha is not None:
        raise ValueError("model carries nu0 and alpha; overrides are not "
                         "supported, rebuild the model instead")
    n_traj, eps_disc = budget
    res = run_time_simulation(model, phi, n_traj=int(n_traj), seed=seed,
                              eps_disc=float(eps_disc), quad_cfg=quad_cfg,
                              backend=backend)
    return res


# -- single-draw sampling primitives -----------------------------------------

class StageSampler:
    """Inverse-transform sampler of one stage's inter-jump time."""

    def __init__(self, model, x, a, quad_cfg=None, state_index=None):
        if quad_cfg is None:
            quad_cfg = QuadratureConfig()
        self.path = StagePath(model, x, a, quad_cfg,
                              state_index=state_index,
                              extend_for_sampling=True)

    def sample_one(self, u):
        """(duration, hit_boundary) for a uniform u in (0, 1)."""
        path = self.path
        y = -math.log(u)
        if not path.truncated and y >= path.grid_cum[-1]:
            return path.t_star, True
        t = kern.invert_grid(path.grid_t, path.grid_cum, path.grid_slope,
                             0, len(path.grid_t), y)
        return float(t), False

    def sample_many(self, n, seed=0):
        """Vectorized draws using the counter-based stream."""
        keys = vec.trajectory_keys(seed, 0, n)
        u = vec.draw_unit_vec(keys, 0)
        y = -np.log(u)
        path = self.path
        hit = np.zeros(n, dtype=bool)
        if not path.truncated:
            hit = y >= path.grid_cum[-1]
        t = np.full(n, path.t_star if not path.truncated else np.nan)
        if (~hit).any():
            ptr = np.array([0, len(path.grid_t)], dtype=np.int64)
            rows = np.zeros(int((~hit).sum()), dtype=np.int64)
            t[~hit] = vec.invert_grids_vec(ptr, path.grid_t, path.grid_cum,
                                           path.grid_slope, rows, y[~hit])
        return t, hit

    def survival(self, t):
        """P(duration > t) = exp(-cumulative rate at t), before the boundary
        time."""
        arr = np.asarray(t, dtype=float)
        flat = np.array([
            math.exp(-self.path.cumulative(min(ti, self.path.grid_t[-1])))
            for ti in arr.reshape(-1)
        ])
        if arr.ndim == 0:
            return float(flat[0])
        return flat.reshape(arr.shape)


def sample_interjump(model, x, a, rng, quad_cfg=None, state_index=None):
    """One inverse-transform draw of the next jump time from ``x`` under
    interior action value ``a``: (duration, hit_boundary)."""
    sampler = StageSampler(model, x, a, quad_cfg, state_index=state_index)
    return sampler.sample_one(rng.random())


def sample_postjump(model, pre_jump_point, interior, a_or_bnd, rng):
    """Categorical draw of the post-jump state from the appropriate law."""
    if interior:
        dist = model.Q_interior(pre_jump_point, a_or_bnd)
    else:
        dist = model.Q_boundary(pre_jump_point, a_or_bnd)
    states, cdf = _cdf_of(dist)
    u = rng.random()
    return int(states[np.searchsorted(cdf, u, side="left")])


# -- survival-law verification ------------------------------------------------

def ks_survival_check(model, j, kappa, n=100_000, seed=0, quad_cfg=None):
    """Kolmogorov-Smirnov comparison of sampled inter-jump times against the
    survival law of the cached cumulative rate.

    For a finite boundary time the continuous part (conditional on jumping
    before the boundary) is KS-tested and the boundary atom is z-tested
    against its predicted mass.  Returns a dict with the p-value and the
    atom z-score (None when there is no boundary)."""
    from scipy import stats
    sampler = StageSampler(model, model.states[j],
                           model.action_value(kappa), quad_cfg,
                           state_index=j)
    t, hit = sampler.sample_many(n, seed=seed)
    path = sampler.path
    out = {"state": j, "interior_action": kappa, "n": n}
    if not path.truncated:
        p_atom = math.exp(-path.cumulative(path.t_star))
        n_hit = int(hit.sum())
        se = math.sqrt(p_atom * (1.0 - p_atom) / n)
        out["atom_z"] = (n_hit / n - p_atom) / se if se > 0 else 0.0
        cont = t[~hit]
        denom = 1.0 - p_atom

        def cdf(arr):
            vals = np.array([1.0 - math.exp(-path.cumulative(v))
                             for v in np.asarray(arr).reshape(-1)])
            return vals / denom
    else:
        out["atom_z"] = None
        cont = t

        def cdf(arr):
            return np.array([1.0 - math.exp(-path.cumulative(v))
                             for v in np.asarray(arr).reshape(-1)])

    stat, pvalue = stats.kstest(cont, cdf)
    out["ks_stat"] = float(stat)
    out["p_value"] = float(pvalue)
    return out


# -- trajectory dumps ---------------------------------------------------------

def write_trajectory_csv(path, result):
    """Dump recorded events as CSV (needs a run with ``record > 0``)."""
    rec = result.records
    if rec is None:
        raise ValueError("simulation was run without trajectory recording")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "k", "T_k", "Z_k", "theta_k",
                         "theta_partial_k", "boundary_hit"])
        for i in range(len(rec["traj"])):
            writer.writerow([
                int(rec["traj"][i]), int(rec["k"][i]),
                repr(float(rec["T"][i])), int(rec["Z"][i]),
                int(rec["kappa"][i]), int(rec["iota"][i]),
                int(rec["boundary_hit"][i]),
            ])
