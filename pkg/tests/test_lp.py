import numpy as np
import pytest
from scipy.optimize import linprog

from pdmplp.errors import InfeasibleProblem
from pdmplp.fixtures import random_instance, two_state_cycle
from pdmplp.instance_io import instance_from_dict, instance_to_dict
from pdmplp.lp import (LinearProgram, assemble_problem_p, attained_costs,
                       export_mps, simplex_solve, solve_constrained_pdmp)


def small_lp(c, A_eq=None, b_eq=None, A_in=None, b_in=None):
    n = len(c)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq)
    A_in = np.zeros((0, n)) if A_in is None else np.asarray(A_in)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in)
    return LinearProgram(
        c=np.asarray(c, dtype=float), A_eq=A_eq, b_eq=b_eq,
        A_in=A_in, b_in=b_in,
        var_names=[f"x{i}" for i in range(n)],
        eq_names=[f"e{i}" for i in range(len(b_eq))],
        in_names=[f"i{i}" for i in range(len(b_in))])


class TestSimplex:
    def test_single_equality(self):
        sol = simplex_solve(small_lp([1.0], A_eq=[[1.0]], b_eq=[1.0]))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-12)

    def test_inequality_and_negative_cost(self):
        # min -x1 - 2 x2 st x1 + x2 <= 4, x2 <= 3
        sol = simplex_solve(small_lp([-1.0, -2.0],
                                     A_in=[[1.0, 1.0], [0.0, 1.0]],
                                     b_in=[4.0, 3.0]))
        assert sol.objective == pytest.approx(-7.0, abs=1e-9)
        assert sol.x == pytest.approx([1.0, 3.0], abs=1e-9)

    def test_infeasible(self):
        sol = simplex_solve(small_lp([1.0], A_eq=[[1.0]], b_eq=[-2.0]))
        assert sol.status == "infeasible"

    def test_unbounded_gives_ray(self):
        sol = simplex_solve(small_lp([-1.0, 0.0],
                                     A_in=[[0.0, 1.0]], b_in=[1.0]))
        assert sol.status == "unbounded"
        assert sol.ray is not None and sol.ray[0] > 0

    def test_negative_rhs_inequality(self):
        # x1 >= 2 written as -x1 <= -2
        sol = simplex_solve(small_lp([1.0], A_in=[[-1.0]], b_in=[-2.0]))
        assert sol.objective == pytest.approx(2.0, abs=1e-9)

    def test_redundant_equalities(self):
        sol = simplex_solve(small_lp(
            [1.0, 1.0],
            A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0]))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-9)

    def test_duals_certify_optimum(self):
        lp = small_lp([2.0, 3.0, 1.0],
                      A_eq=[[1.0, 1.0, 1.0]], b_eq=[2.0],
                      A_in=[[-1.0, 0.0, 0.0]], b_in=[-0.5])
        sol = simplex_solve(lp)
        red = lp.c - lp.A_eq.T @ sol.duals_eq - lp.A_in.T @ sol.duals_in
        assert np.min(red) >= -1e-8
        assert np.max(sol.duals_in) <= 1e-9

    def test_degenerate_cycling_prone_lp_terminates(self):
        # Beale's classic example stalls under naive most-negative pricing;
        # the degenerate-pivot counter must hand over to lowest-index
        # selection and finish at the external solver's optimum
        c = [-0.75, 150.0, -0.02, 6.0]
        A_in = [[0.25, -60.0, -1.0 / 25.0, 9.0],
                [0.5, -90.0, -1.0 / 50.0, 3.0],
                [0.0, 0.0, 1.0, 0.0]]
        b_in = [0.0, 0.0, 1.0]
        lp = small_lp(c, A_in=A_in, b_in=b_in)
        sol = simplex_solve(lp)
        ref = linprog(c, A_ub=A_in, b_ub=b_in, bounds=(0, None),
                      method="highs")
        assert sol.status == "optimal" and ref.status == 0
        assert sol.objective == pytest.approx(ref.fun, abs=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_external_solver_on_random_lps(self, seed):
        rng = np.random.default_rng(seed)
        n, m_eq, m_in = 12, 4, 3
        A_eq = rng.normal(size=(m_eq, n))
        x_feas = rng.uniform(0.1, 1.0, size=n)
        b_eq = A_eq @ x_feas
        A_in = rng.normal(size=(m_in, n))
        b_in = A_in @ x_feas + rng.uniform(0.1, 1.0, size=m_in)
        c = rng.uniform(0.0, 2.0, size=n)
        lp = small_lp(c, A_eq, b_eq, A_in, b_in)
        ours = simplex_solve(lp)
        ref = linprog(c, A_ub=A_in, b_ub=b_in, A_eq=A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        assert ours.status == "optimal" and ref.status == 0
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)


class TestProblemAssembly:
    def test_two_state_structure(self, cycle):
        _, inst = cycle
        lp = assemble_problem_p(inst)
        assert lp.n_vars == 2
        assert lp.A_eq.shape == (2, 2)
        assert lp.in_names == []
        assert lp.eq_names == ["bal_0", "bal_1"]
        assert lp.var_names == ["mu_0_0_1", "mu_1_0_1"]

    def test_constraint_rows_match_limits(self, rng):
        _, inst = random_instance(rng, n_constraints=2)
        lp = assemble_problem_p(inst)
        assert lp.A_in.shape == (2, inst.n_rows)
        assert lp.in_names == ["con_1", "con_2"]
        assert np.array_equal(lp.b_in, inst.d)

    def test_infeasible_pair_absent(self, cycle):
        # only feasible triples become variables
        _, inst = cycle
        lp = assemble_problem_p(inst)
        assert len(lp.var_names) == inst.n_rows == 2


class TestSolveConstrained:
    def test_cycle_value_and_masses(self, cycle):
        _, inst = cycle
        # independent oracle: geometric series of the half-mass kernel
        K = np.array([[0.0, 0.5], [0.5, 0.0]])
        marg = np.linalg.solve(np.eye(2) - K.T, np.array([1.0, 0.0]))
        sol, mu = solve_constrained_pdmp(inst)
        assert sol.objective == pytest.approx(1.0, abs=1e-9)
        assert mu.marginals == pytest.approx(marg, abs=1e-9)
        assert marg == pytest.approx([4.0 / 3.0, 2.0 / 3.0], abs=1e-12)

    def test_zero_limit_with_positive_cost_infeasible(self):
        model, inst = two_state_cycle(constraint_cost=(1.0, 1.0), limit=0.0)
        with pytest.raises(InfeasibleProblem):
            solve_constrained_pdmp(inst)

    def test_huge_limit_is_inactive(self):
        _, base = two_state_cycle()
        model, inst = two_state_cycle(constraint_cost=(1.0, 1.0),
                                      limit=1e12)
        sol_free, _ = solve_constrained_pdmp(base)
        sol, _ = solve_constrained_pdmp(inst)
        assert sol.objective == pytest.approx(sol_free.objective, abs=1e-9)

    def test_cost_scaling_is_linear(self, rng):
        _, inst = random_instance(rng, n_constraints=1)
        sol, mu = solve_constrained_pdmp(inst)
        gamma = 3.7
        scaled = instance_from_dict(instance_to_dict(inst))
        scaled.Lf[1] *= gamma
        scaled.Hr[1] *= gamma
        attained = float(scaled.stage_cost(1) @ mu.weights)
        assert attained == pytest.approx(gamma * mu.cost(1), rel=1e-12)

    def test_relaxing_limits_never_hurts(self, rng):
        for _ in range(5):
            _, inst = random_instance(rng, n_constraints=2)
            inst.d = inst.d * 0.98
            try:
                tight, _ = solve_constrained_pdmp(inst)
            except InfeasibleProblem:
                continue
            inst2 = instance_from_dict(instance_to_dict(inst))
            inst2.d = inst.d * 1.5
            loose, _ = solve_constrained_pdmp(inst2)
            assert loose.objective <= tight.objective + 1e-9

    def test_balance_residual_small(self, capacity_constrained):
        _, _, inst = capacity_constrained
        sol, mu = solve_constrained_pdmp(inst)
        assert np.max(np.abs(mu.balance_residual())) <= 1e-9
        att = attained_costs(mu)
        assert att[1] <= inst.d[0] + 1e-9

    def test_dual_reduced_costs_nonnegative(self, capacity_constrained):
        _, _, inst = capacity_constrained
        lp = assemble_problem_p(inst)
        sol = simplex_solve(lp)
        red = lp.c - lp.A_eq.T @ sol.duals_eq - lp.A_in.T @ sol.duals_in
        assert float(np.min(red)) >= -1e-8


def value_iteration(inst, tol=1e-13, max_iter=200_000):
    """LP-free oracle for the unconstrained value: Bellman fixed point of
    the one-stage cost against the substochastic kernel."""
    assert inst.n_constraints == 0
    V = np.zeros(inst.s)
    c0 = inst.stage_cost(0)
    rows_by_state = [inst.state_rows(j) for j in range(inst.s)]
    for _ in range(max_iter):
        q = c0 + inst.G @ V
        V_new = np.array([q[rows].min() for rows in rows_by_state])
        if float(np.max(np.abs(V_new - V))) < tol:
            return V_new
        V = V_new
    raise AssertionError("value iteration did not converge")


class TestValueIterationOracle:
    def test_cycle(self, cycle):
        _, inst = cycle
        sol, _ = solve_constrained_pdmp(inst)
        V = value_iteration(inst)
        assert float(inst.nu0 @ V) == pytest.approx(sol.objective,
                                                    abs=1e-9)

    def test_capacity_unconstrained(self, capacity_fixture):
        _, _, inst = capacity_fixture
        sol, _ = solve_constrained_pdmp(inst)
        V = value_iteration(inst)
        assert float(inst.nu0 @ V) == pytest.approx(sol.objective,
                                                    abs=1e-8)

    def test_random_unconstrained(self, rng):
        for _ in range(5):
            _, inst = random_instance(rng, n_constraints=0)
            sol, _ = solve_constrained_pdmp(inst)
            V = value_iteration(inst)
            assert float(inst.nu0 @ V) == pytest.approx(sol.objective,
                                                        abs=1e-8)

    def test_balance_duals_are_superharmonic_values(self, capacity_fixture):
        # at an unconstrained optimum the balance multipliers solve the
        # same fixed point, so they must match the iteration limit
        _, _, inst = capacity_fixture
        lp = assemble_problem_p(inst)
        sol = simplex_solve(lp)
        V = value_iteration(inst)
        q = inst.stage_cost(0) + inst.G @ V
        for j in range(inst.s):
            rows = inst.state_rows(j)
            assert sol.duals_eq[j] <= q[rows].min() + 1e-8


class TestAgainstExternalSolver:
    def test_capacity_value_matches_highs(self, capacity_constrained):
        _, _, inst = capacity_constrained
        lp = assemble_problem_p(inst)
        ours = simplex_solve(lp)
        ref = linprog(lp.c, A_ub=lp.A_in, b_ub=lp.b_in, A_eq=lp.A_eq,
                      b_eq=lp.b_eq, bounds=(0, None), method="highs")
        assert ref.status == 0
        assert ours.objective == pytest.approx(ref.fun, abs=1e-8)

    def test_random_instances_match_highs(self, rng):
        for _ in range(5):
            _, inst = random_instance(rng, n_constraints=2)
            lp = assemble_problem_p(inst)
            ours = simplex_solve(lp)
            ref = linprog(lp.c, A_ub=lp.A_in, b_ub=lp.b_in, A_eq=lp.A_eq,
                          b_eq=lp.b_eq, bounds=(0, None), method="highs")
            assert ours.objective == pytest.approx(ref.fun, abs=1e-8)


def parse_mps(text):
    """Minimal fixed-column MPS reader (objective COST, E/L rows)."""
    section = None
    row_kind, row_order = {}, []
    cols = {}
    rhs = {}
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" ") and not raw.startswith("\t"):
            section = raw.split()[0]
            continue
        parts = raw.split()
        if section == "ROWS":
            kind, name = parts
            row_kind[name] = kind
            if kind != "N":
                row_order.append(name)
        elif section == "COLUMNS":
            col, row, val = parts
            cols.setdefault(col, {})[row] = float(val)
        elif section == "RHS":
            _, row, val = parts
            rhs[row] = float(val)
    col_order = list(cols)
    c = np.array([cols[v].get("COST", 0.0) for v in col_order])
    eq_rows = [r for r in row_order if row_kind[r] == "E"]
    in_rows = [r for r in row_order if row_kind[r] == "L"]
    A_eq = np.array([[cols[v].get(r, 0.0) for v in col_order]
                     for r in eq_rows]).reshape(len(eq_rows), len(col_order))
    A_in = np.array([[cols[v].get(r, 0.0) for v in col_order]
                     for r in in_rows]).reshape(len(in_rows), len(col_order))
    b_eq = np.array([rhs.get(r, 0.0) for r in eq_rows])
    b_in = np.array([rhs.get(r, 0.0) for r in in_rows])
    return c, A_eq, b_eq, A_in, b_in, col_order


class TestExport:
    def test_mps_contains_contract_names(self, cycle):
        _, inst = cycle
        text = export_mps(assemble_problem_p(inst))
        assert " E  bal_0" in text
        assert "mu_0_0_1" in text
        assert text.startswith("NAME")
        assert text.rstrip().endswith("ENDATA")

    def test_mps_deterministic(self, rng):
        _, inst = random_instance(rng, n_constraints=1)
        lp = assemble_problem_p(inst)
        assert export_mps(lp) == export_mps(lp)

    def test_mps_round_trips_through_external_solve(self, rng):
        _, inst = random_instance(rng, n_constraints=1)
        lp = assemble_problem_p(inst)
        c, A_eq, b_eq, A_in, b_in, names = parse_mps(export_mps(lp))
        assert names == lp.var_names
        ref = linprog(c, A_ub=A_in, b_ub=b_in, A_eq=A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        ours = simplex_solve(lp)
        assert ours.objective == pytest.approx(ref.fun, abs=1e-8)
