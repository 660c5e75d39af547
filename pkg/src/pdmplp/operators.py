"""One-stage operators of the embedded jump chain.

Along the deterministic flow started at a post-jump point ``x`` under an
interior action ``a``, the controlled jump intensity is
``rate(t) = lam(flow(x, t), ell(x, a, t))`` and its integral ``Lambda(t)``
drives everything else:

* ``operator_L(g)``  — discounted running integral
  ``int_0^{t*} exp(-alpha*s - Lambda(s)) g(flow(x,s), a) ds``;
* ``operator_H(w)``  — boundary weight
  ``exp(-alpha*t* - Lambda(t*)) * w(flow(x,t*), a_bnd)`` (zero when the flow
  never reaches the boundary);
* ``operator_G``     — expected discounted next-state kernel, the sum of the
  spontaneous-jump integral and the boundary atom.

``Lambda`` is computed once per (point, action) on an adaptive grid and
reused through a monotone cubic interpolant with exact node derivatives
(Fritsch-Carlson limited).  The remaining integrals are evaluated per smooth
sub-segment with Gauss-Kronrod quadrature (scipy), splitting mandatorily at
every declared discontinuity of the control path and of the post-jump
distribution, and at the boundary time.  Grid nodes at a discontinuity are
duplicated so each side keeps its own one-sided slope.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import QuadratureFailure, UnboundedHorizon

# -ln of the smallest uniform draw the samplers produce; grids of
# never-terminating flows are extended until the cumulative rate covers this,
# so inverse-transform sampling never falls off the table.
SAMPLING_LOG_RANGE = 38.0

_GL4_NODES = (
    -0.8611363115940526, -0.3399810435848563,
    0.3399810435848563, 0.8611363115940526,
)
_GL4_WEIGHTS = (
    0.3478548451374538, 0.6521451548625461,
    0.6521451548625461, 0.3478548451374538,
)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and budgets for the stage integrals."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2048
    tail_epsilon: float = 1e-12

    def __post_init__(self):
        if self.abs_tol < 1e-13 or self.rel_tol < 1e-13:
            raise ValueError("abs_tol and rel_tol must be >= 1e-13")
        if not (0.0 < self.tail_epsilon < 1.0):
            raise ValueError("tail_epsilon must lie in (0, 1)")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")

    def halved(self):
        return QuadratureConfig(
            abs_tol=max(self.abs_tol / 2.0, 1e-13),
            rel_tol=max(self.rel_tol / 2.0, 1e-13),
            max_subdivisions=self.max_subdivisions,
            tail_epsilon=self.tail_epsilon,
        )


def _fritsch_carlson(t, y, m):
    """Limit exact slopes ``m`` so the cubic Hermite through (t, y) is
    monotone (Fritsch-Carlson).  ``y`` must be nondecreasing."""
    m = np.array(m, dtype=float)
    for i in range(len(t) - 1):
        delta = (y[i + 1] - y[i]) / (t[i + 1] - t[i])
        if delta <= 0.0:
            m[i] = 0.0
            m[i + 1] = 0.0
            continue
        a = m[i] / delta
        b = m[i + 1] / delta
        s = a * a + b * b
        if s > 9.0:
            tau = 3.0 / math.sqrt(s)
            m[i] = tau * a * delta
            m[i + 1] = tau * b * delta
    return m


def hermite_eval(t_nodes, y_nodes, m_nodes, t):
    """Evaluate the piecewise cubic Hermite interpolant at scalar ``t``.

    Duplicated nodes (discontinuity edges carrying one-sided slopes) are
    handled by taking the rightmost cell whose left edge is <= t.
    """
    if t <= t_nodes[0]:
        return float(y_nodes[0])
    if t >= t_nodes[-1]:
        return float(y_nodes[-1] + m_nodes[-1] * (t - t_nodes[-1]))
    i = int(np.searchsorted(t_nodes, t, side="right")) - 1
    if i >= len(t_nodes) - 1:
        i = len(t_nodes) - 2
    h = t_nodes[i + 1] - t_nodes[i]
    if h <= 0.0:
        i += 1
        h = t_nodes[i + 1] - t_nodes[i]
    u = (t - t_nodes[i]) / h
    h00 = (1.0 + 2.0 * u) * (1.0 - u) ** 2
    h10 = u * (1.0 - u) ** 2
    h01 = u * u * (3.0 - 2.0 * u)
    h11 = u * u * (u - 1.0)
    return float(h00 * y_nodes[i] + h01 * y_nodes[i + 1]
                 + h * (h10 * m_nodes[i] + h11 * m_nodes[i + 1]))


def _gl4_panel(f, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    acc = 0.0
    for w, z in zip(_GL4_WEIGHTS, _GL4_NODES):
        acc += w * f(mid + half * z)
    return acc * half


def refine_cumulative(f, lo, hi, cfg):
    """Adaptive cumulative integral of nonnegative ``f`` on [lo, hi].

    Doubles a uniform grid (4-point Gauss panels per cell) until node values
    agree, then bounds the Hermite interpolation error at cell midpoints and
    refines further while it dominates.  Returns (nodes,
    cumulative-from-lo, limited exact slopes, interp error estimate).
    """
    if hi - lo <= 0.0:
        raise ValueError("empty segment")
    n = 4
    prev = None
    while True:
        tt = np.linspace(lo, hi, n + 1)
        panels = np.array([
            _gl4_panel(f, tt[i], tt[i + 1]) for i in range(n)
        ])
        yy = np.concatenate([[0.0], np.cumsum(panels)])
        tol = max(cfg.abs_tol, cfg.rel_tol * abs(yy[-1]))
        converged = prev is not None \
            and np.max(np.abs(yy[::2] - prev)) <= tol
        if converged:
            # one-sided limits at the segment edges: f may jump exactly there
            eps_h = 1e-9 * (hi - lo)
            slopes = [f(lo + eps_h)] + [f(ti) for ti in tt[1:-1]] \
                + [f(hi - eps_h)]
            mm = _fritsch_carlson(tt, yy, slopes)
            err = 0.0
            for i in range(n):
                mid = 0.5 * (tt[i] + tt[i + 1])
                direct = yy[i] + _gl4_panel(f, tt[i], mid)
                err = max(err, abs(hermite_eval(tt, yy, mm, mid) - direct))
            if err <= 10.0 * tol or n >= cfg.max_subdivisions:
                return tt, yy, mm, err
        elif n >= cfg.max_subdivisions:
            raise QuadratureFailure(
                f"cumulative integral on [{lo:g}, {hi:g}] did not converge "
                f"within {cfg.max_subdivisions} subdivisions")
        prev = yy
        n *= 2


def cumulative_grid(f, edges, cfg):
    """Cumulative-integral grid of ``f`` over consecutive ``edges``.

    Nodes at interior edges are duplicated so each side keeps its one-sided
    slope.  Returns (t, cum, slope, interp_error)."""
    t_parts, y_parts, m_parts = [], [], []
    base = 0.0
    interp_err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        tt, yy, mm, err = refine_cumulative(f, lo, hi, cfg)
        t_parts.append(tt)
        y_parts.append(base + yy)
        m_parts.append(mm)
        base += yy[-1]
        interp_err = max(interp_err, err)
    return (np.concatenate(t_parts), np.concatenate(y_parts),
            np.concatenate(m_parts), interp_err)


class StagePath:
    """Cumulative controlled rate along one stage, with its interpolant.

    ``horizon`` overrides the integration endpoint (used by
    ``cumulative_rate``); otherwise it is ``t_star(x)`` when finite, else the
    truncation time ``-ln(tail_epsilon)/(alpha + lam_lower)`` derived from
    the declared lower rate bound.
    """

    def __init__(self, model, x, a_value, quad_cfg, state_index=None,
                 horizon=None, extend_for_sampling=True, split_q=True):
        self.model = model
        self.x = x
        self.a_value = a_value
        self.cfg = quad_cfg
        self.split_q = split_q
        self.t_star = float(model.t_star(x))
        if self.t_star <= 0.0:
            raise ValueError("t_star(x) must be positive")
        self.alpha = float(model.alpha)
        self.lam_lower = None
        if horizon is not None:
            self.t_cut = float(min(horizon, self.t_star))
            self.truncated = self.t_cut < self.t_star
            extend_for_sampling = False
        elif math.isfinite(self.t_star):
            self.t_cut = self.t_star
            self.truncated = False
        else:
            lam_lo = model.lam_lower(state_index) \
                if state_index is not None else None
            if lam_lo is None or lam_lo <= 0.0:
                raise UnboundedHorizon(
                    "flow never reaches the boundary and no positive lower "
                    "rate bound is declared; cannot truncate the horizon")
            self.lam_lower = float(lam_lo)
            self.t_cut = -math.log(quad_cfg.tail_epsilon) \
                / (self.alpha + self.lam_lower)
            self.truncated = True
        self._build_grid(extend_for_sampling)

    # -- grid construction ------------------------------------------------

    def _rate(self, t):
        v = float(self.model.lam(self.model.flow(self.x, t),
                                 self.model.ell(self.x, self.a_value, t)))
        if v < 0.0 or not math.isfinite(v):
            raise ValueError(f"jump rate must be finite and >= 0, got {v}")
        return v

    def _breakpoints(self, lo, hi):
        pts = set()
        for t in self.model.ell_breakpoints(self.x, self.a_value):
            if lo < t < hi:
                pts.add(float(t))
        if self.split_q:
            for t in self.model.q_breakpoints(self.x, self.a_value):
                if lo < t < hi:
                    pts.add(float(t))
        return sorted(pts)

    def _build_grid(self, extend_for_sampling):
        edges = [0.0] + self._breakpoints(0.0, self.t_cut) + [self.t_cut]
        t, y, m, interp_err = cumulative_grid(self._rate, edges, self.cfg)
        # extend past the truncation point until inverse sampling is covered
        if self.truncated and extend_for_sampling and self.lam_lower:
            guard = 0
            while y[-1] < SAMPLING_LOG_RANGE and guard < 64:
                lo = t[-1]
                hi = lo + max(self.t_cut,
                              (SAMPLING_LOG_RANGE - y[-1]) / self.lam_lower)
                sub = [lo] + self._breakpoints(lo, hi) + [hi]
                tt, yy, mm, err = cumulative_grid(self._rate, sub, self.cfg)
                t = np.concatenate([t, tt])
                y = np.concatenate([y, y[-1] + yy])
                m = np.concatenate([m, mm])
                interp_err = max(interp_err, err)
                guard += 1
        self.grid_t = t
        self.grid_cum = y
        self.grid_slope = m
        self.interp_error = interp_err
        self.segment_edges = edges

    # -- evaluation --------------------------------------------------------

    def cumulative(self, t):
        """Lambda(t), nonnegative and nondecreasing."""
        if t < 0.0:
            raise ValueError("t must be nonnegative")
        return max(0.0, hermite_eval(self.grid_t, self.grid_cum,
                                     self.grid_slope, t))

    def survival_weight(self, t):
        """exp(-alpha*t - Lambda(t))."""
        return math.exp(-self.alpha * t - self.cumulative(t))

    def terminal_weight(self):
        """Weight at the boundary time; 0 for a never-terminating flow."""
        if self.truncated:
            return 0.0
        return self.survival_weight(self.t_star)

    def boundary_point(self):
        if self.truncated:
            return None
        return self.model.flow(self.x, self.t_star)

    def tail_bound(self):
        """Bound on the neglected mass of exp(-alpha*t - Lambda) beyond the
        truncation time (0 when the horizon is exact)."""
        if not self.truncated or self.lam_lower is None:
            return 0.0
        rate = self.alpha + self.lam_lower
        return math.exp(-rate * self.t_cut) / rate

    def integrate(self, g, detail=None):
        """int_0^{t_cut} exp(-alpha*s - Lambda(s)) g(s) ds per segment."""
        cfg = self.cfg
        total = 0.0
        err_acc = 0.0

        def integrand(s):
            return self.survival_weight(s) * g(s)

        for lo, hi in zip(self.segment_edges[:-1], self.segment_edges[1:]):
            if hi - lo <= 0.0:
                continue
            out = quad(integrand, lo, hi, epsabs=cfg.abs_tol,
                       epsrel=cfg.rel_tol,
                       limit=max(cfg.max_subdivisions, 50), full_output=1)
            val, abserr = out[0], out[1]
            if len(out) > 3 and abserr > 50.0 * (cfg.abs_tol
                                                 + cfg.rel_tol * abs(val)):
                raise QuadratureFailure(
                    f"stage integral on [{lo:g}, {hi:g}] failed: {out[3]}")
            total += val
            err_acc += abserr
        if detail is not None:
            detail["abs_err"] = err_acc + self.interp_error * self.t_cut
            detail["truncated"] = self.truncated
            detail["tail_bound"] = self.tail_bound()
        return total


def cumulative_rate(model, x, a, t, quad_cfg=None):
    """Integral of the controlled jump rate along the flow up to ``t``.

    ``t`` must be finite and within ``[0, t_star(x)]``.  The grid splits at
    every declared discontinuity of the control path below ``t``.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    if not math.isfinite(t) or t < 0.0:
        raise ValueError("t must be finite and nonnegative")
    if t > model.t_star(x):
        raise ValueError("t exceeds the boundary time of the flow")
    if t == 0.0:
        return 0.0
    path = StagePath(model, x, a, quad_cfg, horizon=t)
    return path.cumulative(t)


def operator_L(model, x, a_hat, g, quad_cfg=None, state_index=None,
               detail=None):
    """Discounted running integral of ``g`` over one stage.

    ``a_hat = (a, a_bnd)``; only the interior component enters.  ``g`` is
    called as ``g(point, a)`` and must be nonnegative for the result to carry
    its usual meaning.  For a never-terminating flow the integral is
    truncated with tail mass below ``tail_epsilon/(alpha+lam_lower)``; the
    truncation is reported through ``detail``.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    a, _ = a_hat
    path = StagePath(model, x, a, quad_cfg, state_index=state_index,
                     extend_for_sampling=False)
    return path.integrate(lambda s: g(model.flow(x, s), a), detail=detail)


def operator_H(model, x, a_hat, w, quad_cfg=None, state_index=None):
    """Boundary evaluation of ``w`` weighted by the terminal survival
    discount; identically zero when the flow never reaches the boundary."""
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    a, a_bnd = a_hat
    if not math.isfinite(model.t_star(x)):
        return 0.0
    path = StagePath(model, x, a, quad_cfg, state_index=state_index)
    return path.terminal_weight() * w(path.boundary_point(), a_bnd)


def operator_G(model, x, a_hat, quad_cfg=None, state_index=None,
               detail=None):
    """Expected discounted next-state distribution for one stage.

    Returns a dict StateId -> mass with total mass at most 1: the
    spontaneous part integrates ``rate * Q_interior`` against the survival
    discount and the boundary part adds the terminal weight times
    ``Q_boundary``.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    a, a_bnd = a_hat
    path = StagePath(model, x, a, quad_cfg, state_index=state_index,
                     extend_for_sampling=False)
    values = _interior_kernel(model, path, detail=detail)
    if not path.truncated:
        w_term = path.terminal_weight()
        if w_term > 0.0:
            for y, p in model.Q_boundary(path.boundary_point(), a_bnd).items():
                values[y] = values.get(y, 0.0) + w_term * p
    return values


def _interior_kernel(model, path, detail=None):
    """Spontaneous-jump part of the next-state kernel, per target state.

    The support within each smooth segment is collected by probing the
    post-jump distribution near both edges and at the midpoint; models must
    declare any time where the support changes via ``q_breakpoints``.
    """
    x, a = path.x, path.a_value
    values = {}
    err_acc = 0.0
    for lo, hi in zip(path.segment_edges[:-1], path.segment_edges[1:]):
        if hi - lo <= 0.0:
            continue
        targets = set()
        for t in (lo + 1e-9 * (hi - lo), 0.5 * (lo + hi),
                  hi - 1e-9 * (hi - lo)):
            a_tilde = model.ell(x, a, t)
            targets.update(model.Q_interior(model.flow(x, t), a_tilde).keys())
        for y in sorted(targets):

            def integrand(s, _y=y):
                pt = model.flow(x, s)
                a_tilde = model.ell(x, a, s)
                q = model.Q_interior(pt, a_tilde).get(_y, 0.0)
                if q == 0.0:
                    return 0.0
                return path.survival_weight(s) * model.lam(pt, a_tilde) * q

            out = quad(integrand, lo, hi, epsabs=path.cfg.abs_tol,
                       epsrel=path.cfg.rel_tol,
                       limit=max(path.cfg.max_subdivisions, 50),
                       full_output=1)
            val, abserr = out[0], out[1]
            if len(out) > 3 and abserr > 50.0 * (path.cfg.abs_tol
                                                 + path.cfg.rel_tol
                                                 * abs(val)):
                raise QuadratureFailure(
                    f"kernel integral on [{lo:g}, {hi:g}] failed: {out[3]}")
            if val != 0.0:
                values[y] = values.get(y, 0.0) + val
            err_acc += abserr
    if detail is not None:
        detail["abs_err"] = err_acc + path.interp_error
        detail["truncated"] = path.truncated
        detail["tail_bound"] = path.tail_bound()
    return values


@dataclass
class StageValues:
    """Boundary-action-independent quantities of one (state, interior action)
    stage, shared by every boundary action of that state."""

    calL: float
    calH: float
    interior_kernel: dict
    Lf: np.ndarray
    boundary_point: object
    truncated: bool
    abs_err: float
    tail_bound: float


def evaluate_stage(model, state_index, kappa, quad_cfg):
    """Stage quantities for post-jump state ``state_index`` under interior
    action id ``kappa``."""
    x = model.states[state_index]
    a = model.action_value(kappa)
    path = StagePath(model, x, a, quad_cfg, state_index=state_index,
                     extend_for_sampling=False)
    det = {}
    calL = path.integrate(lambda s: 1.0, detail=det)
    err = det["abs_err"]
    kern_det = {}
    interior = _interior_kernel(model, path, detail=kern_det)
    err = max(err, kern_det["abs_err"])
    lf = np.empty(model.n_costs)
    for i in range(model.n_costs):
        lf[i] = path.integrate(
            lambda s, _i=i: model.f(_i, model.flow(x, s), a))
    return StageValues(
        calL=calL,
        calH=path.terminal_weight(),
        interior_kernel=interior,
        Lf=lf,
        boundary_point=path.boundary_point(),
        truncated=path.truncated,
        abs_err=err,
        tail_bound=path.tail_bound(),
    )
