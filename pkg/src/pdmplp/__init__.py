"""Constrained discounted control of piecewise deterministic Markov
processes via occupation-measure linear programming."""

__version__ = "0.1.0"

from .errors import (GridTooCoarse, InfeasibleProblem, NumericalBreakdown,
                     PdmplpError, QuadratureFailure, SeriesDivergence,
                     UnboundedHorizon, UnboundedProblem)
from .operators import (QuadratureConfig, cumulative_rate, operator_G,
                        operator_H, operator_L)
from .model import (FeasibleActionSets, FiniteInstance, PdmpModel,
                    tabulate, validate_instance)
from .lp import (LinearProgram, LpSolution, OccupationMeasure,
                 assemble_problem_p, export_mps, simplex_solve,
                 solve_constrained_pdmp)
from .mdp import (ConstrainedMdp, augment_delta, solve_total_cost_lp)
from .policy import (StationaryPolicy, disintegrate, evaluate_policy_exact,
                     load_policy, save_policy)
from .simulate import (McEstimate, TrajectorySample, estimate_occupation,
                       ks_survival_check, recorded_trajectories,
                       run_chain_simulation, run_time_simulation,
                       sample_interjump, sample_postjump, simulate_costs)
from .assumptions import (GrowthCertificate, check_growth,
                          check_rate_bounds, check_w_positive, mass_bound)
from .capacity import (CapacityParams, build_capacity_instance,
                       build_capacity_model, capacity_certificate,
                       closed_form_G)
from .instance_io import (instance_digest, load_instance, save_capacity,
                          save_instance)

__all__ = [
    "CapacityParams", "ConstrainedMdp", "FeasibleActionSets",
    "FiniteInstance", "GridTooCoarse", "GrowthCertificate",
    "InfeasibleProblem", "LinearProgram", "LpSolution", "McEstimate",
    "NumericalBreakdown", "OccupationMeasure", "PdmpModel", "PdmplpError",
    "QuadratureConfig", "QuadratureFailure", "SeriesDivergence",
    "StationaryPolicy", "TrajectorySample", "UnboundedHorizon",
    "UnboundedProblem",
    "assemble_problem_p", "augment_delta", "build_capacity_instance",
    "build_capacity_model", "capacity_certificate", "check_growth",
    "check_rate_bounds", "check_w_positive", "closed_form_G",
    "cumulative_rate", "disintegrate", "estimate_occupation",
    "evaluate_policy_exact", "export_mps", "instance_digest",
    "ks_survival_check", "load_instance", "load_policy", "mass_bound",
    "operator_G", "operator_H", "operator_L", "recorded_trajectories",
    "run_chain_simulation",
    "run_time_simulation", "sample_interjump", "sample_postjump",
    "save_capacity", "save_instance", "save_policy", "simplex_solve",
    "simulate_costs", "solve_constrained_pdmp", "solve_total_cost_lp",
    "tabulate", "validate_instance",
]
