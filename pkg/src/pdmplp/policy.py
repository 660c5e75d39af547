"""Stationary randomized strategies: disintegration and exact evaluation."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import SeriesDivergence

ZERO_MARGINAL = 1e-12
SPECTRAL_GAP = 1e-9


@dataclass
class StationaryPolicy:
    """Per-state probability vector over that state's feasible
    (interior, boundary) pairs, in enumeration order.

    ``provenance[j]`` records whether the row came from a measure marginal
    ("FromMeasure") or from the deterministic fill used at unreachable
    states ("DefaultFill").
    """

    probs: list
    provenance: list

    def __post_init__(self):
        self.probs = [np.asarray(p, dtype=float) for p in self.probs]
        for j, p in enumerate(self.probs):
            if len(p) == 0:
                raise ValueError(f"state {j}: empty policy row")
            if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(
                    f"state {j}: policy row is not a probability vector")

    @property
    def n_states(self):
        return len(self.probs)

    def pair_probabilities(self, inst, j):
        """[(kappa, iota, probability), ...] for state j."""
        out = []
        for p, row in zip(self.probs[j], inst.state_rows(j)):
            _, kappa, iota = inst.rows[row]
            out.append((int(kappa), int(iota), float(p)))
        return out


def disintegrate(mu, inst):
    """Split an occupation measure into a stationary randomized strategy.

    States with marginal above 1e-12 get the normalized conditional row;
    unreachable states get a point mass on their lexicographically smallest
    feasible pair (the choice is observable only through the provenance
    flag, never through the evaluated costs).
    """
    weights = np.asarray(mu.weights, dtype=float)
    probs, provenance = [], []
    for j in range(inst.s):
        rows = inst.state_rows(j)
        w = weights[rows]
        tot = w.sum()
        if tot > ZERO_MARGINAL:
            p = np.clip(w, 0.0, None) / tot
            p = p / p.sum()
            provenance.append("FromMeasure")
        else:
            p = np.zeros(len(rows))
            p[0] = 1.0
            provenance.append("DefaultFill")
        probs.append(p)
    return StationaryPolicy(probs=probs, provenance=provenance)


def policy_kernel(phi, inst):
    """State-to-state expected discounted kernel under the strategy."""
    K = np.zeros((inst.s, inst.s))
    for j in range(inst.s):
        rows = inst.state_rows(j)
        K[j] = phi.probs[j] @ inst.G[rows]
    return K


def evaluate_policy_exact(phi, inst):
    """Exact discounted costs of a stationary strategy.

    Sums the geometric series of the policy kernel by solving the linear
    balance system (I - K^T) marginal = nu0 and contracting the marginal
    against the per-state expected stage costs.  Raises SeriesDivergence if
    the kernel's spectral radius reaches 1 (the series would not converge;
    this flags a broken instance)."""
    K = policy_kernel(phi, inst)
    radius = float(np.max(np.abs(np.linalg.eigvals(K))))
    if radius >= 1.0 - SPECTRAL_GAP:
        raise SeriesDivergence(
            f"policy kernel spectral radius {radius:.12g} >= 1 - 1e-9")
    marginal = np.linalg.solve(np.eye(inst.s) - K.T, inst.nu0)
    values = np.empty(inst.n_costs)
    for i in range(inst.n_costs):
        cost = inst.stage_cost(i)
        per_state = np.array([
            phi.probs[j] @ cost[inst.state_rows(j)] for j in range(inst.s)
        ])
        values[i] = marginal @ per_state
    return values


def policy_marginal(phi, inst):
    """State marginal of the occupation measure induced by the strategy."""
    K = policy_kernel(phi, inst)
    return np.linalg.solve(np.eye(inst.s) - K.T, inst.nu0)


# -- JSON interchange -------------------------------------------------------

def policy_to_dict(phi, inst, instance_digest=None):
    states = []
    for j in range(inst.s):
        states.append([
            {"interior_action": k, "boundary_action": i, "probability": p}
            for k, i, p in phi.pair_probabilities(inst, j)
        ])
    out = {
        "schema": 1,
        "states": states,
        "provenance": list(phi.provenance),
    }
    if instance_digest is not None:
        out["instance_digest"] = instance_digest
    return out


def save_policy(path, phi, inst, instance_digest=None):
    with open(path, "w") as fh:
        json.dump(policy_to_dict(phi, inst, instance_digest), fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


def load_policy(path, inst, expected_digest=None):
    """Read a policy file and align it with the instance's enumeration.

    Raises ValueError when the state count, a listed pair, or a recorded
    instance digest does not match the instance."""
    with open(path) as fh:
        data = json.load(fh)
    digest = data.get("instance_digest")
    if expected_digest is not None and digest is not None \
            and digest != expected_digest:
        raise ValueError("policy was extracted from a different instance")
    states = data["states"]
    if len(states) != inst.s:
        raise ValueError(
            f"policy lists {len(states)} states, instance has {inst.s}")
    probs = []
    for j, entries in enumerate(states):
        rows = inst.state_rows(j)
        pos = {tuple(inst.rows[row][1:]): idx
               for idx, row in enumerate(rows)}
        p = np.zeros(len(rows))
        for e in entries:
            key = (int(e["interior_action"]), int(e["boundary_action"]))
            if key not in pos:
                raise ValueError(
                    f"state {j}: pair {key} is not feasible in the instance")
            p[pos[key]] += float(e["probability"])
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"state {j}: probabilities sum to {p.sum()}")
        probs.append(p / p.sum())
    provenance = data.get("provenance", ["FromMeasure"] * inst.s)
    return StationaryPolicy(probs=probs, provenance=provenance)
