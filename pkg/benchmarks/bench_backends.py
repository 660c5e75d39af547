"""Compare the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_backends.py [--n-traj N]

Covers the three hot paths: the time-resolved trajectory kernel, the
embedded-chain kernel and the simplex pivot loop (compiled vs interpreted).
Table compilation is shared, so timings isolate the kernels themselves.
"""

import argparse
import time

from pdmplp._accel import HAVE_NUMBA
from pdmplp.capacity import CapacityParams, build_capacity_instance
from pdmplp.fixtures import two_state_cycle
from pdmplp.lp import assemble_problem_p, simplex_solve
from pdmplp.policy import disintegrate
from pdmplp.lp import solve_constrained_pdmp
from pdmplp.simulate import (compile_chain_tables, compile_time_tables,
                             run_chain_simulation, run_time_simulation)


def timed(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_simulation(n_traj):
    params = CapacityParams(lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=5,
                            alpha=1.0)
    model, inst = build_capacity_instance(params)
    sol, mu = solve_constrained_pdmp(inst)
    phi = disintegrate(mu, inst)
    print("compiling stage tables ...")
    tables = compile_time_tables(model, phi)
    rows = []
    backends = (["numba"] if HAVE_NUMBA else []) + ["numpy"]
    results = {}
    for backend in backends:
        run_time_simulation(model, phi, n_traj=100, seed=0, tables=tables,
                            backend=backend)   # warm up / JIT
        dt, res = timed(lambda b=backend: run_time_simulation(
            model, phi, n_traj=n_traj, seed=0, tables=tables, backend=b),
            repeats=2)
        results[backend] = res
        rows.append(("time-resolved capacity", backend, dt,
                     res.costs[0].mean))
    if len(backends) == 2:
        diff = abs(results["numba"].costs[0].mean
                   - results["numpy"].costs[0].mean)
        print(f"  cross-backend objective agreement: {diff:.3e}")

    _, cyc = two_state_cycle()
    sol, mu = solve_constrained_pdmp(cyc)
    phi = disintegrate(mu, cyc)
    chain_tables = compile_chain_tables(cyc, phi)
    for backend in backends:
        run_chain_simulation(cyc, phi, n_traj=100, seed=0,
                             tables=chain_tables, backend=backend)
        dt, res = timed(lambda b=backend: run_chain_simulation(
            cyc, phi, n_traj=n_traj, seed=0, tables=chain_tables,
            backend=b), repeats=2)
        rows.append(("embedded-chain cycle", backend, dt,
                     res.costs[0].mean))
    return rows


def bench_simplex():
    from pdmplp import _simplex_core
    params = CapacityParams(lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=5,
                            alpha=1.0, f_demand=(1.0, 0.0),
                            f_mode=((0.0, 0.3, 0.8), (0.0, 1.0, 1.0)),
                            r_mode=None, d=(0.6,))
    _, inst = build_capacity_instance(params)
    lp = assemble_problem_p(inst)
    rows = []
    dt, sol = timed(lambda: simplex_solve(lp), repeats=2)
    label = "numba" if HAVE_NUMBA else "numpy"
    rows.append((f"simplex {lp.A_eq.shape[0]}x{lp.n_vars}", label, dt,
                 sol.objective))
    if HAVE_NUMBA:
        compiled = _simplex_core.simplex_phase
        try:
            _simplex_core.simplex_phase = compiled.py_func
            dt, sol = timed(lambda: simplex_solve(lp), repeats=2)
            rows.append((f"simplex {lp.A_eq.shape[0]}x{lp.n_vars}",
                         "numpy", dt, sol.objective))
        finally:
            _simplex_core.simplex_phase = compiled
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n-traj", type=int, default=100_000)
    args = parser.parse_args()
    print(f"numba available: {HAVE_NUMBA} "
          f"(set PDMPLP_DISABLE_NUMBA=1 for the fallback)")
    rows = bench_simulation(args.n_traj) + bench_simplex()
    print(f"\n{'benchmark':<28}{'backend':<10}{'seconds':>10}"
          f"{'value':>16}")
    for name, backend, dt, value in rows:
        print(f"{name:<28}{backend:<10}{dt:>10.3f}{value:>16.8f}")


if __name__ == "__main__":
    main()
