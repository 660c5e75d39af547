import math

import numpy as np
import pytest
from scipy.integrate import quad

from helpers import SineRateModel
from pdmplp.assumptions import (GrowthCertificate, check_growth,
                                check_rate_bounds, check_w_positive,
                                mass_bound)
from pdmplp.capacity import capacity_certificate
from pdmplp.lp import solve_constrained_pdmp
from pdmplp.model import FeasibleActionSets, PdmpModel


class TestRateBounds:
    def test_constant_rate_tight(self, cycle):
        model, _ = cycle
        rep = check_rate_bounds(model)
        assert rep.passed
        lo, _ = rep.inequalities["rate_above_lower"]
        hi, _ = rep.inequalities["rate_below_upper"]
        assert lo == pytest.approx(0.0, abs=1e-12)
        assert hi == pytest.approx(0.0, abs=1e-12)

    def test_survival_integral_capacity(self, capacity_fixture):
        params, model, inst = capacity_fixture
        rep = check_rate_bounds(model)
        assert rep.passed
        # closed-form oracle for a finite-horizon state, cross-checked by
        # quadrature: (1 - exp(-lam * tau/gamma_min)) / lam
        t_star = params.tau / params.gamma[0]
        closed = (1.0 - math.exp(-params.lam * t_star)) / params.lam
        numeric = quad(lambda t: math.exp(-params.lam * t), 0.0, t_star)[0]
        assert numeric == pytest.approx(closed, abs=1e-12)
        assert closed <= model.k_lambda() + 1e-12

    def test_oscillating_rate_margins(self):
        model = SineRateModel(base=1.2, amp=0.7, freq=2.0)
        rep = check_rate_bounds(model)
        assert rep.passed
        lo, _ = rep.inequalities["rate_above_lower"]
        assert lo >= -1e-12

    def test_violated_upper_bound_reported(self):
        model = SineRateModel(base=1.2, amp=0.7, freq=2.0)
        model.lam_upper = lambda j: 1.5     # true max is 1.9
        rep = check_rate_bounds(model)
        assert not rep.passed
        margin, where = rep.inequalities["rate_below_upper"]
        assert margin < -0.3
        assert "state" in where

    def test_zero_lower_bound_with_infinite_horizon(self):
        model = SineRateModel()
        model.lam_lower = lambda j: 0.0
        rep = check_rate_bounds(model)
        assert not rep.passed


class TestGrowth:
    def test_capacity_pass_and_fail(self, capacity_fixture):
        params, model, inst = capacity_fixture
        rep = check_growth(model, capacity_certificate(params, 0.7))
        assert rep.passed
        assert rep.inequalities["closed_form_reduction"][0] \
            == pytest.approx(0.19, abs=1e-12)
        rep5 = check_growth(model, capacity_certificate(params, 0.5))
        assert not rep5.passed
        assert rep5.inequalities["closed_form_reduction"][0] \
            == pytest.approx(-0.25, abs=1e-12)

    def test_rho_near_root(self, capacity_fixture):
        params, model, inst = capacity_fixture
        assert check_growth(model,
                            capacity_certificate(params, 0.63)).passed
        assert not check_growth(model,
                                capacity_certificate(params, 0.61)).passed

    def test_cycle_flat_certificate(self, cycle):
        model, _ = cycle
        cert = GrowthCertificate(v=lambda pt: 1.0, c=-0.5,
                                 Xv=lambda pt: 0.0)
        rep = check_growth(model, cert)
        assert rep.passed

    def test_requires_c_above_minus_alpha(self, cycle):
        model, _ = cycle
        with pytest.raises(ValueError, match="c \\+ alpha"):
            check_growth(model, GrowthCertificate(v=lambda pt: 1.0, c=-1.0))

    def test_finite_difference_matches_analytic(self):
        # flow moves along the time axis; v quadratic in elapsed time
        class DriftModel(PdmpModel):
            alpha = 1.0
            n_costs = 1

            def __init__(self):
                self.states = [(0, 0.0)]
                self.feasible = FeasibleActionSets(interior=[[0]],
                                                   boundary=[[1]])
                self.nu0 = np.array([1.0])
                self.d = np.zeros(0)

            def flow(self, x, t):
                return (x[0], x[1] + t)

            def t_star(self, x):
                return 2.0 - x[1]

            def lam(self, x, a_tilde):
                return 1.0

            def ell(self, x, a, t):
                return a

            def Q_interior(self, x, a_tilde):
                return {0: 1.0}

            def Q_boundary(self, z, a_bnd):
                return {0: 1.0}

            def f(self, i, x, a):
                return 0.0

            def r(self, i, z, a_bnd):
                return 0.0

            def action_value(self, kappa):
                return kappa

            def boundary_value(self, iota):
                return iota

        model = DriftModel()

        def v(pt):
            return 5.0 + math.sin(1.3 * pt[1])

        def xv(pt):
            return 1.3 * math.cos(1.3 * pt[1])

        from pdmplp.assumptions import _directional_derivative
        errs = []
        for h in (1e-3, 5e-4):
            cert = GrowthCertificate(v=v, c=-0.5, fd_step=h)
            worst = 0.0
            for t in (0.0, 0.4, 1.1, 1.9):
                fd = _directional_derivative(model, cert, (0, 0.0), t, 2.0)
                worst = max(worst, abs(fd - xv((0, t))))
            errs.append(worst)
        # halving h quarters the central-difference error
        assert errs[1] <= errs[0] / 3.0


class TestMassBound:
    def test_cycle_bound_three(self, cycle):
        model, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        # v = 1 and c + alpha = 0.5*alpha gives bound 1/0.5 + 1 = 3 >= 2
        cert = GrowthCertificate(v=lambda pt: 1.0, c=-0.5)
        rep = mass_bound(cert, inst, mu, model=model)
        assert rep.passed
        margin, info = rep.inequalities["total_mass_below_bound"]
        assert info["bound"] == pytest.approx(3.0, abs=1e-12)
        assert info["total_mass"] == pytest.approx(2.0, abs=1e-9)

    def test_capacity_bound(self, capacity_fixture):
        params, model, inst = capacity_fixture
        sol, mu = solve_constrained_pdmp(inst)
        cert = capacity_certificate(params, 0.7)
        assert mass_bound(cert, inst, mu, model=model).passed

    def test_state_values_path(self, cycle):
        _, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        cert = GrowthCertificate(v_values=np.array([1.0, 1.0]), c=-0.5)
        assert mass_bound(cert, inst, mu).passed

    def test_violated_bound_fails(self, cycle):
        model, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        cert = GrowthCertificate(v=lambda pt: 0.2, c=-0.5)  # bound 1.4 < 2
        assert not mass_bound(cert, inst, mu, model=model).passed


class TestWPositivity:
    def test_positive_for_positive_shift(self, capacity_fixture):
        _, _, inst = capacity_fixture
        rep = check_w_positive(inst, c0=1.0)
        assert rep.passed
        assert rep.inequalities["w_positive"][0] >= 1.0

    def test_tiny_shift_still_positive(self, cycle):
        _, inst = cycle
        assert check_w_positive(inst, c0=1e-9).passed

    def test_rejects_nonpositive_shift(self, cycle):
        _, inst = cycle
        with pytest.raises(ValueError):
            check_w_positive(inst, c0=0.0)
