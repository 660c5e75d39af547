import numpy as np
import pytest

from pdmplp.errors import SeriesDivergence
from pdmplp.fixtures import random_instance
from pdmplp.lp import OccupationMeasure, solve_constrained_pdmp
from pdmplp.policy import (StationaryPolicy, disintegrate,
                           evaluate_policy_exact, load_policy,
                           policy_marginal, save_policy)


class TestDisintegrate:
    def test_single_pair_gets_point_mass(self, cycle):
        _, inst = cycle
        _, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        for j in range(inst.s):
            assert phi.probs[j] == pytest.approx([1.0])
            assert phi.provenance[j] == "FromMeasure"

    def test_normalization(self, rng):
        _, inst = random_instance(rng, max_states=3, max_pairs=4)
        rows0 = inst.state_rows(0)
        weights = np.zeros(inst.n_rows)
        weights[rows0[0]] = 0.3
        if len(rows0) > 1:
            weights[rows0[1]] = 0.1
        mu = OccupationMeasure(weights=weights, inst=inst)
        phi = disintegrate(mu, inst)
        if len(rows0) > 1:
            assert phi.probs[0][:2] == pytest.approx([0.75, 0.25])
        assert phi.probs[0].sum() == pytest.approx(1.0, abs=1e-12)

    def test_unreachable_state_default_fill(self, cycle):
        _, inst = cycle
        weights = np.array([1.0, 0.0])
        phi = disintegrate(OccupationMeasure(weights=weights, inst=inst),
                           inst)
        assert phi.provenance == ["FromMeasure", "DefaultFill"]
        assert phi.probs[1] == pytest.approx([1.0])

    def test_default_fill_never_changes_values(self, rng):
        # craft an instance whose second state is unreachable, then check
        # the evaluated costs are identical for two different fills
        model, inst = random_instance(rng, max_states=4, max_pairs=4,
                                      n_constraints=1)
        j_dead = inst.s - 1
        keep = inst.nu0.copy()
        keep[j_dead] = 0.0
        inst.nu0 = keep / keep.sum()
        for row in range(inst.n_rows):
            inst.G[row, j_dead] = 0.0
        inst.calL = (1.0 - inst.row_mass()) / inst.alpha  # restore identity
        sol, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        assert phi.provenance[j_dead] == "DefaultFill"
        vals_a = evaluate_policy_exact(phi, inst)
        alt = [p.copy() for p in phi.probs]
        alt[j_dead] = np.zeros_like(alt[j_dead])
        alt[j_dead][-1] = 1.0
        phi_b = StationaryPolicy(probs=alt, provenance=phi.provenance)
        vals_b = evaluate_policy_exact(phi_b, inst)
        assert vals_a == pytest.approx(vals_b, abs=1e-12)


class TestEvaluateExact:
    def test_cycle_point_mass_value(self, cycle):
        _, inst = cycle
        phi = StationaryPolicy(probs=[np.array([1.0]), np.array([1.0])],
                               provenance=["FromMeasure"] * 2)
        vals = evaluate_policy_exact(phi, inst)
        assert vals[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_costs_zero_value(self, rng):
        _, inst = random_instance(rng, n_constraints=1)
        inst.Lf[:] = 0.0
        inst.Hr[:] = 0.0
        phi = StationaryPolicy(
            probs=[np.eye(len(inst.state_rows(j)))[0]
                   for j in range(inst.s)],
            provenance=["DefaultFill"] * inst.s)
        vals = evaluate_policy_exact(phi, inst)
        assert np.all(vals == 0.0)

    def test_roundtrip_reproduces_lp(self, rng):
        for _ in range(6):
            _, inst = random_instance(rng, n_constraints=2)
            sol, mu = solve_constrained_pdmp(inst)
            phi = disintegrate(mu, inst)
            vals = evaluate_policy_exact(phi, inst)
            assert abs(vals[0] - sol.objective) <= 1e-7
            for i in range(1, inst.n_costs):
                assert vals[i] <= inst.d[i - 1] + 1e-7

    def test_marginal_matches_measure(self, cycle):
        _, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        assert policy_marginal(phi, inst) == pytest.approx(mu.marginals,
                                                           abs=1e-9)

    def test_divergent_kernel_detected(self, cycle):
        from pdmplp.instance_io import instance_from_dict, instance_to_dict
        _, inst = cycle
        inst = instance_from_dict(instance_to_dict(inst))
        inst.G = np.array([[0.0, 1.0], [1.0, 0.0]])  # mass 1: series diverges
        phi = StationaryPolicy(probs=[np.array([1.0]), np.array([1.0])],
                               provenance=["FromMeasure"] * 2)
        with pytest.raises(SeriesDivergence):
            evaluate_policy_exact(phi, inst)


class TestPolicyIo:
    def test_round_trip(self, tmp_path, rng):
        _, inst = random_instance(rng, n_constraints=1)
        sol, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        path = tmp_path / "policy.json"
        save_policy(path, phi, inst, instance_digest="abc")
        back = load_policy(path, inst, expected_digest="abc")
        for j in range(inst.s):
            assert back.probs[j] == pytest.approx(phi.probs[j], abs=1e-15)

    def test_digest_mismatch_rejected(self, tmp_path, cycle):
        _, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        path = tmp_path / "policy.json"
        save_policy(path, phi, inst, instance_digest="abc")
        with pytest.raises(ValueError, match="different instance"):
            load_policy(path, inst, expected_digest="other")

    def test_wrong_state_count_rejected(self, tmp_path, cycle, rng):
        _, inst = cycle
        sol, mu = solve_constrained_pdmp(inst)
        phi = disintegrate(mu, inst)
        path = tmp_path / "policy.json"
        save_policy(path, phi, inst)
        _, other = random_instance(rng, max_states=5)
        while other.s == inst.s:
            _, other = random_instance(rng, max_states=5)
        with pytest.raises(ValueError):
            load_policy(path, other)
