import math

import numpy as np
import pytest

from helpers import SineRateModel
from pdmplp.assumptions import mass_bound
from pdmplp.capacity import capacity_certificate
from pdmplp.fixtures import random_instance, two_state_cycle
from pdmplp.lp import OccupationMeasure, solve_constrained_pdmp
from pdmplp.model import validate_instance
from pdmplp.policy import disintegrate
from pdmplp.simulate import estimate_occupation


class TestRandomInstances:
    def test_always_valid(self, rng):
        for _ in range(10):
            _, inst = random_instance(rng, n_constraints=int(
                rng.integers(0, 3)))
            assert validate_instance(inst) == []

    def test_limits_always_feasible(self, rng):
        for _ in range(10):
            _, inst = random_instance(rng, n_constraints=2)
            solve_constrained_pdmp(inst)   # must not raise

    def test_shapes_respect_caps(self, rng):
        for _ in range(10):
            _, inst = random_instance(rng, max_states=4, max_pairs=3)
            assert inst.s <= 4
            for j in range(inst.s):
                assert len(inst.state_rows(j)) <= 3


class TestFlowSemigroup:
    @pytest.mark.parametrize("factory", [
        lambda: two_state_cycle()[0],
        SineRateModel,
    ])
    def test_shift_composition(self, factory, rng):
        model = factory()
        for _ in range(20):
            x = model.states[int(rng.integers(0, model.n_states))]
            t, s = rng.uniform(0.0, 2.0, size=2)
            a = model.flow(x, t + s)
            b = model.flow(model.flow(x, t), s)
            assert abs(a[-1] - b[-1]) <= 1e-9

    def test_capacity_flow(self, capacity_fixture, rng):
        params, model, inst = capacity_fixture
        for _ in range(30):
            j = int(rng.integers(0, inst.s))
            x = model.states[j]
            horizon = model.t_star(x)
            if not math.isfinite(horizon):
                horizon = 2.0
            t = rng.uniform(0.0, horizon * 0.6)
            s = rng.uniform(0.0, horizon * 0.39)
            a = model.flow(x, t + s)
            b = model.flow(model.flow(x, t), s)
            assert np.allclose(a[0], b[0], atol=1e-9)
            assert a[1:] == b[1:]


class TestMassBoundBothPaths:
    def test_lp_and_mc_mass_within_bound(self, capacity_fixture):
        params, model, inst = capacity_fixture
        cert = capacity_certificate(params, 0.7)
        sol, mu = solve_constrained_pdmp(inst)
        assert mass_bound(cert, inst, mu, model=model).passed
        phi = disintegrate(mu, inst)
        res = estimate_occupation(model, phi, budget=(20_000, 1e-8),
                                  seed=0)
        empirical = OccupationMeasure(weights=res.occupation_mean,
                                      inst=inst)
        rep = mass_bound(cert, inst, empirical, model=model)
        assert rep.passed
