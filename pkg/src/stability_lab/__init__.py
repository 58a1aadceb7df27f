"""Stability lab: measuring and engineering output stability of learning
rules on finite concept classes."""

from .concepts import (ConceptClass, Domain, Hypothesis, hollow_star_number,
                       littlestone_dimension, load_class, make_cube,
                       make_singletons, make_thresholds, save_class,
                       vc_dimension)
from .distributions import (FiniteDistribution, LabeledExample, Sample,
                            draw_sample, empirical_distribution,
                            empirical_loss, is_realizable, load_distribution,
                            population_loss, save_distribution, tv_distance,
                            witness_distribution)
from .learners import (Learner, all_plus, coloring_learner, cube_learner,
                       empiricalize, erm_learner, first_example_learner,
                       full_cube, parse_class, parse_learner,
                       threshold_learner)
from .estimators import (Estimate, OutputHistogram, StabilityReport,
                         exact_output_distribution, hoeffding_half_width,
                         list_coverage, output_histogram, run_trials,
                         shared_randomness_replicability, stability_report)
from .booster import BoostParams, boost, boost_params
from .adversary import (InstabilityCertificate, InstabilityWitness,
                        PartitionCell, SolverConfig, ValidationResult,
                        cube_witness, find_hard_distribution, g_vector,
                        hollow_star_witness, load_witness, save_witness,
                        validate_witness)
from .errors import (BoundaryPreconditionError, CapExceededError,
                     DomainMismatchError, EmpiricalLearnerViolationError,
                     RealizabilityViolationError, StabilityLabError,
                     WitnessValidationError)
from .kernels import available_backends, get_backend, set_backend

__version__ = "0.1.0"

__all__ = [
    "BoostParams", "BoundaryPreconditionError", "CapExceededError",
    "ConceptClass", "Domain", "DomainMismatchError",
    "EmpiricalLearnerViolationError", "Estimate", "FiniteDistribution",
    "Hypothesis", "InstabilityCertificate", "InstabilityWitness",
    "LabeledExample", "Learner", "OutputHistogram", "PartitionCell",
    "RealizabilityViolationError", "Sample", "SolverConfig",
    "StabilityLabError", "StabilityReport", "ValidationResult",
    "WitnessValidationError", "all_plus", "available_backends", "boost",
    "boost_params", "coloring_learner", "cube_learner", "cube_witness",
    "draw_sample", "empirical_distribution", "empirical_loss", "empiricalize",
    "erm_learner", "exact_output_distribution", "find_hard_distribution",
    "first_example_learner", "full_cube", "g_vector", "get_backend",
    "hoeffding_half_width", "hollow_star_number", "hollow_star_witness",
    "is_realizable", "list_coverage", "littlestone_dimension", "load_class",
    "load_distribution", "load_witness", "make_cube", "make_singletons",
    "make_thresholds", "output_histogram", "parse_class", "parse_learner",
    "population_loss", "run_trials", "save_class", "save_distribution",
    "save_witness", "set_backend", "shared_randomness_replicability",
    "stability_report", "threshold_learner", "tv_distance", "validate_witness",
    "vc_dimension", "witness_distribution",
]
