"""Near-minimax affine estimation of linear functionals by convex programming.

The package builds affine estimators of ``g @ x`` for signals ``x`` in a
convex compact set observed through exponential-type channels (discrete,
Poisson, fixed-covariance Gaussian and their finite products), certifies
their confidence-interval risk through a computable dual program, and
verifies the certificates by Monte Carlo.
"""

from .adaptive import (AdaptiveEstimator, NestedProblem, build_levels,
                       select_and_estimate, vartheta)
from .errors import (DimensionMismatchError, DomainError, InnerSolveError,
                     SolverCapError, ValidationError)
from .estimator import (AffineEstimator, construct, evaluate, evaluate_many,
                        theta_epsilon)
from .families import (Discrete, Family, Gaussian, Poisson, Product,
                       bernoulli, gaussian_identity)
from .gaussian import (GaussianProblem, construct_gaussian, erfinv_tail,
                       gaussian_two_point_value, psi_epsilon)
from .pet import PetModel, demo_model, pet_construct, pet_objective, pet_simulate
from .problems import (AffineMap, ChannelGroup, EstimationProblem,
                       bernoulli_problem, gaussian_sequence_problem,
                       problem_from_json, problem_to_json)
from .risklab import (RiskReport, bernoulli_testing_lower_bound, binomial_tv,
                      lower_bound_hellinger, mc_risk, wilson_upper)
from .saddle import (DualSolution, SaddleSolution, hellinger_dual,
                     minimize_outer, outer_value, phi_r,
                     phi_star_concavity_check)
from .sets import Box, Interval, SignalSet, Simplex, VPolytope

__version__ = "0.1.0"

__all__ = [
    "AdaptiveEstimator", "AffineEstimator", "AffineMap", "Box", "ChannelGroup",
    "DimensionMismatchError", "Discrete", "DomainError", "DualSolution",
    "EstimationProblem", "Family", "Gaussian", "GaussianProblem",
    "InnerSolveError", "Interval", "NestedProblem", "PetModel", "Poisson",
    "Product", "RiskReport", "SaddleSolution", "SignalSet", "Simplex",
    "SolverCapError", "VPolytope", "ValidationError", "bernoulli",
    "bernoulli_problem", "bernoulli_testing_lower_bound", "binomial_tv",
    "build_levels", "construct", "construct_gaussian", "demo_model",
    "erfinv_tail", "evaluate", "evaluate_many", "gaussian_identity",
    "gaussian_sequence_problem", "gaussian_two_point_value", "hellinger_dual",
    "lower_bound_hellinger", "mc_risk", "minimize_outer", "outer_value",
    "pet_construct", "pet_objective", "pet_simulate", "phi_r",
    "phi_star_concavity_check", "problem_from_json", "problem_to_json",
    "psi_epsilon", "select_and_estimate", "theta_epsilon", "vartheta",
    "wilson_upper",
]
