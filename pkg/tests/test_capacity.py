import math

import numpy as np
import pytest

from pdmplp.capacity import (CapacityParams, CapacityModel,
                             build_capacity_instance, capacity_certificate,
                             closed_form_G, reduction_polynomial)
from pdmplp.errors import GridTooCoarse
from pdmplp.lp import solve_constrained_pdmp
from pdmplp.model import validate_instance
from pdmplp.operators import QuadratureConfig, operator_G, operator_L

CFG = QuadratureConfig()


class TestEnumeration:
    def test_depth_two_grid(self, capacity_fixture):
        params, model, inst = capacity_fixture
        expected = [0.0, 0.25, 0.4375, 0.5, 0.625, 0.75, 0.8125, 0.875,
                    0.9375]
        assert model.grid == pytest.approx(expected, abs=1e-12)

    def test_state_demand_ranges(self, capacity_fixture):
        params, model, inst = capacity_fixture
        for (s, m, j) in model.states:
            if j == 0:
                assert 0 <= m <= params.M
            else:
                assert 1 <= m <= params.M

    def test_idle_states_have_inert_boundary_sentinel(self, capacity_fixture):
        params, model, inst = capacity_fixture
        for j_state in range(inst.s):
            if model.states[j_state][2] == 0:
                assert len(model.feasible.boundary[j_state]) == 1
                rows = inst.state_rows(j_state)
                assert np.all(inst.calH[rows] == 0.0)

    def test_lowest_demand_forces_idle_restart(self, capacity_fixture):
        params, model, inst = capacity_fixture
        for j_state in range(inst.s):
            s, m, j = model.states[j_state]
            if j >= 1 and m == 1:
                ids = model.feasible.boundary[j_state]
                assert [model.boundary_value(i) for i in ids] == [0]

    def test_grid_too_coarse_raises(self):
        with pytest.raises(GridTooCoarse):
            CapacityModel(CapacityParams(lam=1.0, tau=1.0, gamma=(1.0,),
                                         M=2, alpha=1.0, depth=1,
                                         max_snap=1e-3))

    def test_param_validation(self):
        with pytest.raises(ValueError, match="distinct"):
            CapacityParams(lam=1.0, tau=1.0, gamma=(1.0, 1.0), M=2,
                           alpha=1.0)
        with pytest.raises(ValueError, match="demand cap"):
            CapacityParams(lam=1.0, tau=1.0, gamma=(1.0,), M=0, alpha=1.0)
        with pytest.raises(ValueError, match="limit per constraint"):
            CapacityParams(lam=1.0, tau=1.0, gamma=(1.0,), M=2, alpha=1.0,
                           d=(0.5,))


class TestJumpTargets:
    def test_interior_jump_raises_demand_and_commits_mode(
            self, capacity_fixture):
        params, model, inst = capacity_fixture
        j_state = model.state_index[(0, 2, 1)]
        x = model.states[j_state]
        pt = model.flow(x, 0.3)
        dist = model.Q_interior(pt, 2)
        (target, p), = dist.items()
        s_t, m_t, j_t = model.states[target]
        assert p == 1.0
        assert m_t == 3 and j_t == 2
        assert abs(s_t - pt[0]) <= model.snap_distance_bound

    def test_boundary_jump_completes_project(self, capacity_fixture):
        params, model, inst = capacity_fixture
        dist = model.Q_boundary((params.tau, 3, 1), 2)
        (target, p), = dist.items()
        assert model.states[target] == (0.0, 2, 2)

    def test_idle_jump_keeps_investment(self, capacity_fixture):
        params, model, inst = capacity_fixture
        j_state = model.state_index[(2, 1, 0)]
        x = model.states[j_state]
        dist = model.Q_interior(x, 1)
        (target, p), = dist.items()
        s_t, m_t, j_t = model.states[target]
        assert (s_t, m_t, j_t) == (x[0], 2, 1)

    def test_demand_cap_reflects(self, capacity_fixture):
        params, model, inst = capacity_fixture
        j_state = model.state_index[(0, params.M, 1)]
        x = model.states[j_state]
        dist = model.Q_interior(model.flow(x, 0.1), 1)
        (target, _), = dist.items()
        assert model.states[target][1] == params.M


class TestClosedForm:
    def test_idle_row_single_atom(self, capacity_fixture):
        params, model, inst = capacity_fixture
        j_state = model.state_index[(0, 0, 0)]
        kappa = model.feasible.interior[j_state][1]
        a_val = model.action_value(kappa)
        vals, calL, calH = closed_form_G(params, model, j_state, (a_val, 0))
        assert calH == 0.0
        assert calL == pytest.approx(1.0 / (params.alpha + params.lam))
        (target, mass), = vals.items()
        assert mass == pytest.approx(params.lam / (params.alpha + params.lam),
                                     abs=1e-15)

    def test_lam_equals_alpha_gives_half(self):
        params = CapacityParams(lam=2.0, tau=1.0, gamma=(1.0,), M=2,
                                alpha=2.0)
        model, inst = build_capacity_instance(params)
        j_state = model.state_index[(0, 0, 0)]
        row = inst.state_rows(j_state)[0]
        assert inst.row_mass()[row] == pytest.approx(0.5, abs=1e-15)

    def test_construction_row_total_mass(self, capacity_fixture):
        # derived oracle: lam/(alpha+lam)*(1-exp(-beta dt)) + exp(-beta dt)
        params, model, inst = capacity_fixture
        beta = params.alpha + params.lam
        for j_state in (model.state_index[(1, 2, 1)],
                        model.state_index[(3, 4, 2)]):
            s, m, j = model.states[j_state]
            dt = (params.tau - s) / params.gamma[j - 1]
            expected = params.lam / beta * (1.0 - math.exp(-beta * dt)) \
                + math.exp(-beta * dt)
            row = inst.state_rows(j_state)[0]
            assert inst.row_mass()[row] == pytest.approx(expected,
                                                         abs=1e-12)

    def test_identity_exact(self, capacity_fixture):
        params, model, inst = capacity_fixture
        assert np.max(np.abs(inst.identity_residual())) <= 1e-12
        assert validate_instance(inst) == []

    def test_closed_form_matches_quadrature(self, capacity_fixture, rng):
        params, model, inst = capacity_fixture
        rows = rng.choice(inst.n_rows, size=25, replace=False)
        worst = 0.0
        for row in rows:
            j, kappa, iota = (int(v) for v in inst.rows[row])
            a_val = model.action_value(kappa)
            a_bnd = model.boundary_value(iota) \
                if model.states[j][2] != 0 else 0
            got = operator_G(model, model.states[j], (a_val, a_bnd), CFG,
                             state_index=j)
            vec = np.zeros(inst.s)
            for y, p in got.items():
                vec[y] = p
            worst = max(worst, float(np.max(np.abs(vec - inst.G[row]))))
            calL_q = operator_L(model, model.states[j], (a_val, a_bnd),
                                lambda pt, a: 1.0, CFG, state_index=j)
            worst = max(worst, abs(calL_q - inst.calL[row]))
        assert worst <= 1e-9

    def test_unit_cost_value_is_inverse_alpha(self):
        params = CapacityParams(lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=4,
                                alpha=0.8, f_demand=(0.0,),
                                f_mode=((1.0, 1.0, 1.0),))
        model, inst = build_capacity_instance(params)
        sol, _ = solve_constrained_pdmp(inst)
        assert sol.objective == pytest.approx(1.0 / params.alpha, abs=1e-9)


class TestBindingBudget:
    def test_binding_constraint_attains_its_limit(self):
        # the unconstrained optimum spends ~0.283 on construction time, so a
        # 0.2 budget must bind exactly at the constrained optimum
        base = dict(lam=1.0, tau=1.0, gamma=(1.0, 2.0), M=5, alpha=1.0,
                    f_demand=(1.0, 0.0),
                    f_mode=((0.0, 0.3, 0.8), (0.0, 1.0, 1.0)),
                    r_mode=((0.0, 0.2, 0.4), (0.0, 0.0, 0.0)))
        _, free_inst = build_capacity_instance(
            CapacityParams(d=(1e6,), **base))
        free_sol, free_mu = solve_constrained_pdmp(free_inst)
        spent = free_mu.cost(1)
        assert spent > 0.2
        _, inst = build_capacity_instance(CapacityParams(d=(0.2,), **base))
        sol, mu = solve_constrained_pdmp(inst)
        assert mu.cost(1) == pytest.approx(0.2, abs=1e-7)
        assert sol.objective > free_sol.objective
        # the extracted strategy reproduces both the value and the active
        # budget, and a binding constraint forces randomization somewhere
        from pdmplp.policy import disintegrate, evaluate_policy_exact
        phi = disintegrate(mu, inst)
        vals = evaluate_policy_exact(phi, inst)
        assert vals[0] == pytest.approx(sol.objective, abs=1e-7)
        assert vals[1] == pytest.approx(0.2, abs=1e-7)
        randomized = [j for j in range(inst.s)
                      if int(np.sum(phi.probs[j] > 1e-10)) > 1]
        assert randomized


class TestCertificate:
    def test_reduction_polynomial_anchors(self):
        assert reduction_polynomial(1.0, 1.0) == pytest.approx(1.0)
        for ap in (0.5, 1.0, 2.0):
            assert reduction_polynomial(ap, 0.5) \
                == pytest.approx(-ap / 4.0)

    def test_minimal_valid_rho_alpha_prime_one(self):
        root = (math.sqrt(5.0) - 1.0) / 2.0
        assert reduction_polynomial(1.0, root) == pytest.approx(0.0,
                                                                abs=1e-12)
        assert reduction_polynomial(1.0, root + 1e-6) > 0.0
        assert reduction_polynomial(1.0, root - 1e-6) < 0.0

    def test_certificate_fields(self, capacity_fixture):
        params, model, inst = capacity_fixture
        cert = capacity_certificate(params, 0.7)
        assert cert.c == pytest.approx(-0.7)
        v0 = cert.v((0.0, 0, 0))
        v1 = cert.v((0.0, 1, 0))
        assert v1 / v0 == pytest.approx(1.0 + 0.7, rel=1e-12)
        assert cert.Xv((0.3, 2, 1)) == 0.0
