"""Interacting particles with stable collateral jumps, their coupling to a
subordinator-driven mean-field limit, and rate checks."""
from .coupling import (CoupledSubordinator, SlotRecord, SlotRecords, build_slot_records,
                       paste_subordinator, verify_interaction_identity)
from .finite_system import AtomLog, NumericalAbort, Trajectory, interaction_paths, simulate_finite
from .harness import ExperimentConfig, RateReport, run_distribution_suite, run_rate_experiment
from .limit_system import (PicardMeans, empirical_conditional_law, picard_iterate, picard_solve,
                           simulate_mean_field)
from .metric_a import (DistanceFunctionA, EmpiricalMeasure, a_eval, check_assumption_a,
                       coupled_a_distance, wasserstein_q_exact)
from .model import InitialLaw, ModelSpec, constant_model, evaluate_coefficients, reference_model, validate_model
from .stable_core import (CountLaw, IncrementPath, RngStream, StableParams, jump_measure_tail,
                          random_sum_scaled, sample_stable, sample_subordinator)

__version__ = "0.1.0"
