"""Numerical checks of the standing assumptions on a behavioral model.

All checks are probe-based: a PASS means "verified on the probe set", never
a proof — the underlying conditions quantify over a continuum.  Probes per
flow segment are Chebyshev-spaced with every declared discontinuity pinned
(straddled by a point just before and just after) plus both endpoints.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .operators import QuadratureConfig

MARGIN_TOL = -1e-8
DEFAULT_CHEB = 33


@dataclass
class GrowthCertificate:
    """Candidate drift data (v, b, c) for the expected-growth condition.

    ``v`` maps flow/boundary points to positive reals, ``b`` defaults to
    zero, ``c`` must exceed -alpha.  ``Xv`` optionally supplies the exact
    directional derivative of v along the flow; otherwise a second-order
    finite difference with step ``fd_step * (1 + |t|)`` is used.  For checks
    on tabulated instances without a behavioral model, ``v_values`` gives v
    at the enumerated states directly.  ``reduced_margin`` optionally
    carries a certificate-specific closed-form worst-case margin (reported
    and gated like the probe margins).
    """

    v: object = None
    c: float = 0.0
    b: object = None
    Xv: object = None
    fd_step: float = 1e-5
    v_values: np.ndarray = None
    reduced_margin: float = None
    reduced_margin_desc: str = ""

    def b_at(self, point):
        return 0.0 if self.b is None else float(self.b(point))


def probe_times(model, j, kappa, n_cheb=DEFAULT_CHEB, quad_cfg=None):
    """Chebyshev-spaced probe times for one stage, with breakpoints
    straddled and both endpoints included."""
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    x = model.states[j]
    a = model.action_value(kappa)
    t_star = model.t_star(x)
    if math.isfinite(t_star):
        t_hi = t_star * (1.0 - 1e-9)
    else:
        lam_lo = model.lam_lower(j)
        if lam_lo is None or lam_lo <= 0.0:
            t_hi = 1.0
        else:
            t_hi = -math.log(quad_cfg.tail_epsilon) / (model.alpha + lam_lo)
    nodes = 0.5 * t_hi * (1.0 - np.cos(
        np.pi * np.arange(n_cheb) / (n_cheb - 1)))
    pts = set(float(t) for t in nodes)
    pts.add(0.0)
    pts.add(t_hi)
    for bp in list(model.ell_breakpoints(x, a)) + list(
            model.q_breakpoints(x, a)):
        if 0.0 < bp < t_hi:
            eps = 1e-7 * (1.0 + bp)
            pts.update((bp, max(bp - eps, 0.0), min(bp + eps, t_hi)))
    return sorted(pts)


def _worst(entries):
    """(min margin, argmin descriptor) of [(margin, desc), ...]."""
    if not entries:
        return math.inf, None
    margin, desc = min(entries, key=lambda e: e[0])
    return float(margin), desc


@dataclass
class CheckReport:
    """Per-inequality minimum margins with their argmin probes."""

    name: str
    passed: bool
    inequalities: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "check": self.name,
            "pass": bool(self.passed),
            "inequalities": {
                key: {"min_margin": m, "argmin": desc}
                for key, (m, desc) in self.inequalities.items()
            },
            "notes": list(self.notes),
        }


def check_rate_bounds(model, probes=None, quad_cfg=None):
    """Verify the declared rate bounds and the survival-integral bound.

    Pointwise: lam_lower(j) <= rate <= lam_upper(j) at every probe.  The
    integral of exp(-int lam_lower) over each stage is evaluated by
    quadrature and compared against the declared k_lambda.  Violations are
    reported, not raised.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    lower_entries, upper_entries, k_entries = [], [], []
    notes = []
    for j in range(model.n_states):
        x = model.states[j]
        lam_lo = model.lam_lower(j)
        lam_hi = model.lam_upper(j)
        for kappa in model.feasible.interior[j]:
            a = model.action_value(kappa)
            times = probes if probes is not None \
                else probe_times(model, j, kappa, quad_cfg=quad_cfg)
            for t in times:
                pt = model.flow(x, t)
                rate = model.lam(pt, model.ell(x, a, t))
                desc = {"state": j, "interior_action": int(kappa),
                        "t": float(t)}
                if lam_lo is not None:
                    lower_entries.append((rate - lam_lo, desc))
                if lam_hi is not None:
                    upper_entries.append((lam_hi - rate, desc))
        if lam_lo is None:
            notes.append(f"state {j}: no lower rate bound declared")
            continue
        t_star = model.t_star(x)
        if math.isfinite(t_star):
            val = quad(lambda t: math.exp(-lam_lo * t), 0.0, t_star,
                       epsabs=quad_cfg.abs_tol, epsrel=quad_cfg.rel_tol)[0]
        elif lam_lo > 0.0:
            horizon = -math.log(quad_cfg.tail_epsilon) / lam_lo
            val = quad(lambda t: math.exp(-lam_lo * t), 0.0, horizon,
                       epsabs=quad_cfg.abs_tol, epsrel=quad_cfg.rel_tol)[0] \
                + math.exp(-lam_lo * horizon) / lam_lo
        else:
            lower_entries.append((-math.inf,
                                  {"state": j,
                                   "rule": "lam_lower must be > 0 when "
                                   "t_star is infinite"}))
            continue
        k_lam = model.k_lambda()
        if k_lam is not None:
            k_entries.append((k_lam - val, {"state": j,
                                            "integral": float(val)}))
    ineqs = {
        "rate_above_lower": _worst(lower_entries),
        "rate_below_upper": _worst(upper_entries),
        "survival_integral_below_k_lambda": _worst(k_entries),
    }
    passed = all(m >= MARGIN_TOL for m, _ in ineqs.values())
    return CheckReport(name="rate_bounds", passed=passed,
                       inequalities=ineqs, notes=notes)


def _directional_derivative(model, cert, x, t, t_hi):
    """d/dt of v along the flow from x at elapsed time t."""
    if cert.Xv is not None:
        return float(cert.Xv(model.flow(x, t)))
    h = cert.fd_step * (1.0 + abs(t))
    if t - h >= 0.0 and t + h <= t_hi:
        return (cert.v(model.flow(x, t + h))
                - cert.v(model.flow(x, t - h))) / (2.0 * h)
    if t + 2 * h <= t_hi:
        return (-3.0 * cert.v(model.flow(x, t))
                + 4.0 * cert.v(model.flow(x, t + h))
                - cert.v(model.flow(x, t + 2 * h))) / (2.0 * h)
    return (3.0 * cert.v(model.flow(x, t))
            - 4.0 * cert.v(model.flow(x, t - h))
            + cert.v(model.flow(x, t - 2 * h))) / (2.0 * h)


def check_growth(model, cert, n_cheb=DEFAULT_CHEB, quad_cfg=None):
    """Probe the three drift inequalities of the growth condition.

    (drift)     Xv + c v - rate (v - Qv) <= b          along every flow;
    (domination) rate + b/(c+alpha) <= v               along every flow;
    (boundary)  v(boundary) >= Qv(boundary, a) + c + alpha
                at every finite-boundary stage.

    A certificate-supplied closed-form reduced margin, when present, is
    reported and gated alongside the probe margins.  PASS iff every minimum
    margin is >= -1e-8.
    """
    if quad_cfg is None:
        quad_cfg = QuadratureConfig()
    alpha = model.alpha
    if cert.c + alpha <= 0.0:
        raise ValueError("certificate must satisfy c + alpha > 0")
    drift, dominate, boundary, b_integrals = [], [], [], []
    for j in range(model.n_states):
        x = model.states[j]
        t_star = model.t_star(x)
        for kappa in model.feasible.interior[j]:
            a = model.action_value(kappa)
            times = probe_times(model, j, kappa, n_cheb=n_cheb,
                                quad_cfg=quad_cfg)
            t_hi = times[-1]
            if cert.b is not None:
                # a nonzero drift offset must have a finite discounted
                # running integral; only finiteness is checked
                from .operators import operator_L
                val = operator_L(model, x, (a, None),
                                 lambda pt, _a: abs(cert.b(pt)),
                                 quad_cfg, state_index=j)
                b_integrals.append(
                    (math.inf if math.isfinite(val) else -math.inf,
                     {"state": j, "interior_action": int(kappa),
                      "integral": float(val)}))
            for t in times:
                pt = model.flow(x, t)
                a_tilde = model.ell(x, a, t)
                rate = model.lam(pt, a_tilde)
                v_here = float(cert.v(pt))
                qv = sum(p * cert.v(model.states[y])
                         for y, p in model.Q_interior(pt, a_tilde).items())
                xv = _directional_derivative(model, cert, x, t, t_hi)
                desc = {"state": j, "interior_action": int(kappa),
                        "t": float(t)}
                drift.append((cert.b_at(pt) - (xv + cert.c * v_here
                                               - rate * (v_here - qv)), desc))
                dominate.append((v_here - rate
                                 - cert.b_at(pt) / (cert.c + alpha), desc))
        if math.isfinite(t_star):
            z = model.flow(x, t_star)
            v_bnd = float(cert.v(z))
            for iota in model.feasible.boundary[j]:
                a_bnd = model.boundary_value(iota)
                qv = sum(p * cert.v(model.states[y])
                         for y, p in model.Q_boundary(z, a_bnd).items())
                boundary.append((v_bnd - qv - (cert.c + alpha),
                                 {"state": j, "boundary_action": int(iota)}))
    ineqs = {
        "drift": _worst(drift),
        "rate_domination": _worst(dominate),
        "boundary_jump": _worst(boundary),
    }
    notes = []
    if b_integrals:
        ineqs["offset_integral_finite"] = _worst(b_integrals)
        notes.append("nonzero drift offset: only finiteness of its "
                     "discounted running integral is checked")
    if cert.reduced_margin is not None:
        ineqs["closed_form_reduction"] = (
            float(cert.reduced_margin),
            {"description": cert.reduced_margin_desc})
        notes.append("closed-form reduction supplied by the certificate")
    passed = all(m >= MARGIN_TOL for m, _ in ineqs.values())
    notes.append("verified on probes only; not a proof")
    return CheckReport(name="growth", passed=passed, inequalities=ineqs,
                       notes=notes)


def certificate_state_values(cert, model=None, inst=None):
    """v at the enumerated states, from v_values or the callable."""
    if cert.v_values is not None:
        return np.asarray(cert.v_values, dtype=float)
    if model is None:
        raise ValueError("certificate has no per-state values and no "
                         "behavioral model was given")
    return np.array([float(cert.v(x)) for x in model.states])


def mass_bound(cert, inst, mu, model=None):
    """Check the discounted-mass bound nu0(v)/(c+alpha) + 1 on a measure."""
    v_states = certificate_state_values(cert, model=model, inst=inst)
    if np.any(v_states <= 0.0):
        raise ValueError("v must be positive at every state")
    denom = cert.c + inst.alpha
    if denom <= 0.0:
        raise ValueError("certificate must satisfy c + alpha > 0")
    bound = float(inst.nu0 @ v_states) / denom + 1.0
    total = float(np.sum(mu.weights))
    margin = bound + 1e-7 - total
    report = CheckReport(
        name="mass_bound", passed=margin >= 0.0,
        inequalities={"total_mass_below_bound": (
            margin, {"total_mass": total, "bound": bound})})
    return report


def check_w_positive(inst, c0=1.0):
    """Positivity of the shifted one-stage objective cost and of its
    per-state infimum, for any positive shift c0."""
    if c0 <= 0.0:
        raise ValueError("c0 must be positive")
    w_rows = c0 + inst.stage_cost(0)
    w0 = np.array([w_rows[inst.state_rows(j)].min() for j in range(inst.s)])
    ineqs = {
        "w_positive": (float(w_rows.min()), {"row": int(np.argmin(w_rows))}),
        "w0_positive": (float(w0.min()), {"state": int(np.argmin(w0))}),
    }
    return CheckReport(name="w_positivity",
                       passed=bool(w_rows.min() > 0.0 and w0.min() > 0.0),
                       inequalities=ineqs)
