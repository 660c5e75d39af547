"""Command-line driver: solve, simulate, check, gen-capacity, export-lp.

Reports are deterministic for identical inputs and seed (byte-identical
JSON); wall-clock data goes to a ``*.timings.json`` sidecar.  Exit codes:
0 success / all checks pass, 1 usage or input error, 2 infeasible or failed
check, 3 unbounded.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .assumptions import (check_growth, check_rate_bounds, check_w_positive,
                          mass_bound)
from .capacity import CapacityParams, capacity_certificate
from .errors import InfeasibleProblem, PdmplpError, UnboundedProblem
from .instance_io import (InstanceFormatError, instance_digest,
                          load_instance, save_capacity)
from .lp import assemble_problem_p, export_mps, solve_constrained_pdmp
from .mdp import assemble_total_cost_lp, augment_delta
from .operators import QuadratureConfig
from .policy import disintegrate, load_policy, save_policy
from .simulate import (run_chain_simulation, run_time_simulation,
                       write_trajectory_csv)

Z_LIMIT = 3.0


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_timings(path, timings):
    _write_json(path, {"timestamp": time.time(), "timings": timings})


def _report_skeleton(seed, digest):
    return {
        "schema": 1,
        "tool": f"pdmplp {__version__}",
        "seed": int(seed),
        "instance_digest": digest,
    }


def cmd_solve(args):
    t0 = time.time()
    inst, model, params = load_instance(args.instance)
    timings = {"load": time.time() - t0}
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    try:
        sol, mu = solve_constrained_pdmp(inst)
    except InfeasibleProblem:
        _write_json(os.path.join(out_dir, "report.json"), {
            **_report_skeleton(args.seed, instance_digest(inst)),
            "lp": {"status": "infeasible"},
        })
        print("infeasible: no strategy meets the limits at this tabulation")
        return 2
    except UnboundedProblem:
        _write_json(os.path.join(out_dir, "report.json"), {
            **_report_skeleton(args.seed, instance_digest(inst)),
            "lp": {"status": "unbounded"},
        })
        print("unbounded objective: the instance violates cost finiteness")
        return 3
    timings["solve"] = time.time() - t0
    phi = disintegrate(mu, inst)
    digest = instance_digest(inst)
    save_policy(os.path.join(out_dir, "policy.json"), phi, inst,
                instance_digest=digest)
    with open(os.path.join(out_dir, "measure.csv"), "w") as fh:
        fh.write("state,interior_action,boundary_action,mu\n")
        for row in range(inst.n_rows):
            j, k, i = inst.rows[row]
            fh.write(f"{j},{k},{i},{mu.weights[row]!r}\n")
    report = _report_skeleton(args.seed, digest)
    report["instance_meta"] = {
        k: v for k, v in inst.meta.items()
        if k in ("source", "identity_tol", "snap_distance_bound",
                 "demand_cap", "deviations")
    }
    report["lp"] = {
        "status": sol.status,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "total_mass": mu.total_mass,
        "max_balance_residual": float(
            np.max(np.abs(mu.balance_residual()))),
        "constraints": [
            {"index": i, "attained": mu.cost(i), "limit": float(inst.d[i - 1])}
            for i in range(1, inst.n_costs)
        ],
    }
    report["policy_summary"] = {
        "n_states": inst.s,
        "randomized_states": [
            j for j in range(inst.s)
            if int(np.sum(phi.probs[j] > 1e-12)) > 1],
        "default_fill_states": [
            j for j in range(inst.s) if phi.provenance[j] == "DefaultFill"],
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    _write_timings(os.path.join(out_dir, "report.timings.json"), timings)
    print(f"optimal value {sol.objective!r} "
          f"({inst.s} states, {inst.n_rows} weights, "
          f"{sol.iterations} pivots)")
    for c in report["lp"]["constraints"]:
        print(f"constraint {c['index']}: attained {c['attained']!r} "
              f"<= limit {c['limit']!r}")
    return 0


def cmd_simulate(args):
    inst, model, params = load_instance(args.instance)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    digest = instance_digest(inst)
    try:
        phi = load_policy(args.policy, inst, expected_digest=digest)
    except ValueError as exc:
        print(f"incompatible policy: {exc}", file=sys.stderr)
        return 1
    timings = {}
    t0 = time.time()
    sol, mu = solve_constrained_pdmp(inst)
    timings["solve"] = time.time() - t0
    references = [float(inst.stage_cost(i) @ _policy_weights(phi, inst))
                  for i in range(inst.n_costs)]
    t0 = time.time()
    if model is not None:
        res = run_time_simulation(model, phi, n_traj=args.n_traj,
                                  seed=args.seed, eps_disc=args.eps_disc,
                                  quad_cfg=getattr(args, "quad_cfg", None),
                                  record=args.dump_traj)
    else:
        if args.dump_traj:
            print("trajectory dumps need a behavioral instance flavor",
                  file=sys.stderr)
            return 1
        res = run_chain_simulation(inst, phi, n_traj=args.n_traj,
                                   seed=args.seed)
    timings["simulate"] = time.time() - t0
    if args.dump_traj:
        write_trajectory_csv(os.path.join(out_dir, "trajectories.csv"), res)

    table = []
    names = ["objective"] + [f"constraint_{i}"
                             for i in range(1, inst.n_costs)]
    worst = 0.0
    for i, name in enumerate(names):
        z = res.costs[i].consistency_z(references[i])
        worst = max(worst, abs(z))
        table.append({
            "name": name, "reference": references[i],
            "mc_mean": res.costs[i].mean, "se": res.costs[i].se,
            "z": z, "trunc_bound": res.costs[i].trunc_bound,
        })
    exact_mass = float(np.sum(_policy_weights(phi, inst)))
    z_mass = res.mass.z_score(exact_mass)
    worst = max(worst, abs(z_mass))
    table.append({"name": "total_mass", "reference": exact_mass,
                  "mc_mean": res.mass.mean, "se": res.mass.se,
                  "z": z_mass, "trunc_bound": None})
    z_resid = res.residual_mean / np.maximum(res.residual_se, 1e-300)
    worst = max(worst, float(np.max(np.abs(z_resid))))

    report = _report_skeleton(args.seed, digest)
    report["mc"] = {
        "mode": res.mode,
        "n_traj": res.n_traj,
        "eps_disc": res.eps_disc,
        "table": table,
        "balance_max_abs_z": float(np.max(np.abs(z_resid))),
        "mean_stages": res.mean_stages,
        "mean_boundary_hits": res.mean_boundary_hits,
        "n_capped": res.n_capped,
        "lp_objective": sol.objective,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    _write_timings(os.path.join(out_dir, "report.timings.json"), timings)
    for entry in table:
        print(f"{entry['name']}: mc {entry['mc_mean']:.8g} "
              f"ref {entry['reference']:.8g} z {entry['z']:.3f}")
    print(f"balance max |z| {report['mc']['balance_max_abs_z']:.3f}")
    if worst > Z_LIMIT:
        print(f"FAIL: worst |z| {worst:.3f} exceeds {Z_LIMIT}")
        return 2
    print("PASS: all z-scores within 3 standard errors")
    return 0


def _policy_weights(phi, inst):
    """Exact occupation weights of a strategy (reference values for MC)."""
    from .policy import policy_marginal
    marg = policy_marginal(phi, inst)
    w = np.zeros(inst.n_rows)
    for j in range(inst.s):
        rows = inst.state_rows(j)
        w[rows] = marg[j] * phi.probs[j]
    return w


def cmd_check(args):
    inst, model, params = load_instance(args.instance)
    with open(args.certificate) as fh:
        try:
            cert_data = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"certificate: invalid JSON at line {exc.lineno}: "
                  f"{exc.msg}", file=sys.stderr)
            return 1
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    reports = []
    try:
        if cert_data.get("kind") == "capacity":
            if params is None:
                print("a capacity certificate needs a capacity_expansion "
                      "instance", file=sys.stderr)
                return 1
            cert = capacity_certificate(params, float(cert_data["rho"]))
        elif cert_data.get("kind") == "state_values":
            from .assumptions import GrowthCertificate
            cert = GrowthCertificate(
                v_values=np.array(cert_data["v"], dtype=float),
                c=float(cert_data["c"]))
        else:
            print(f"unknown certificate kind {cert_data.get('kind')!r}",
                  file=sys.stderr)
            return 1
    except (KeyError, TypeError, ValueError) as exc:
        print(f"certificate is missing or mistypes field {exc!r}",
              file=sys.stderr)
        return 1

    if model is not None:
        reports.append(check_rate_bounds(model))
        if cert.v is not None:
            reports.append(check_growth(model, cert))
    sol, mu = solve_constrained_pdmp(inst)
    reports.append(mass_bound(cert, inst, mu, model=model))
    reports.append(check_w_positive(inst))
    all_pass = all(r.passed for r in reports)
    report = _report_skeleton(args.seed, instance_digest(inst))
    report["assumptions"] = {r.name: r.to_dict() for r in reports}
    report["all_pass"] = bool(all_pass)
    _write_json(os.path.join(out_dir, "report.json"), report)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        worst = min((m for m, _ in r.inequalities.values()),
                    default=float("inf"))
        print(f"{status} {r.name} (min margin {worst:.6g})")
    return 0 if all_pass else 2


def cmd_gen_capacity(args):
    params = CapacityParams(
        lam=args.lam, tau=args.tau, gamma=tuple(args.gamma),
        M=args.demand_cap, alpha=args.alpha,
        f_demand=tuple(args.f_demand),
        f_mode=(tuple(tuple(args.f_mode[i:i + len(args.gamma) + 1])
                      for i in range(0, len(args.f_mode),
                                     len(args.gamma) + 1))
                if args.f_mode else None),
        r_mode=(tuple(tuple(args.r_mode[i:i + len(args.gamma) + 1])
                      for i in range(0, len(args.r_mode),
                                     len(args.gamma) + 1))
                if args.r_mode else None),
        d=tuple(args.limit),
        sa_points=args.sa_grid, depth=args.depth)
    save_capacity(args.out, params)
    print(f"wrote {args.out}")
    return 0


def cmd_export_lp(args):
    inst, model, params = load_instance(args.instance)
    if args.delta:
        lp = assemble_total_cost_lp(augment_delta(inst))
    else:
        lp = assemble_problem_p(inst)
    text = export_mps(lp)
    with open(args.out, "w") as fh:
        fh.write(text)
    print(f"wrote {args.out} ({lp.n_vars} columns)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pdmplp",
        description="Constrained discounted control of piecewise "
        "deterministic Markov processes via occupation-measure LPs.")
    parser.add_argument("--version", action="version",
                        version=f"pdmplp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--quad-tol", type=float, default=None,
                       help="absolute/relative quadrature tolerance")

    p = sub.add_parser("solve", help="solve the occupation-measure LP and "
                       "extract the optimal strategy")
    p.add_argument("instance")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo cross-validation of a "
                       "strategy against the LP values")
    p.add_argument("instance")
    p.add_argument("policy")
    common(p)
    p.add_argument("--n-traj", type=int, default=100_000)
    p.add_argument("--eps-disc", type=float, default=1e-8)
    p.add_argument("--dump-traj", type=int, default=0, metavar="N",
                   help="record the first N trajectories to CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="verify rate bounds, the growth "
                       "certificate and the mass bound")
    p.add_argument("instance")
    p.add_argument("certificate")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen-capacity", help="write a capacity-expansion "
                       "instance file")
    p.add_argument("out")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--gamma", type=float, nargs="+", default=[1.0, 2.0])
    p.add_argument("--demand-cap", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--f-demand", type=float, nargs="+", default=[1.0])
    p.add_argument("--f-mode", type=float, nargs="*", default=None)
    p.add_argument("--r-mode", type=float, nargs="*", default=None)
    p.add_argument("--limit", type=float, nargs="*", default=[])
    p.add_argument("--sa-grid", type=int, default=5)
    p.add_argument("--depth", type=int, default=2)
    p.set_defaults(func=cmd_gen_capacity)

    p = sub.add_parser("export-lp", help="export the LP as fixed-column MPS")
    p.add_argument("instance")
    p.add_argument("out")
    p.add_argument("--delta", action="store_true",
                   help="export the cemetery-augmented total-cost LP")
    common(p)
    p.set_defaults(func=cmd_export_lp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "quad_tol", None):
        args.quad_cfg = QuadratureConfig(abs_tol=args.quad_tol,
                                         rel_tol=args.quad_tol)
    try:
        return args.func(args)
    except InstanceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PdmplpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
