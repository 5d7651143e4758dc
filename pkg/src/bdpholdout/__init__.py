"""Reusable holdout with Bayesian-DP calibration for correlated samples."""

from .bounds import (
    BoundReport,
    empirical_max_info,
    generalization_tail,
    maxinfo_bound_bdp,
    maxinfo_bound_simple,
    n_pound,
    n_star,
    thm2_params,
    thm2_sample_bound,
)
from .calibration import (
    CalibrationReport,
    DiscreteMechanism,
    bdpl_bruteforce,
    calibrate_blanket,
    calibrate_quilts,
    chain_spectral_params,
    clip_to_dp_level,
    dp_for_bdp_blanket,
    dp_for_bdp_quilts,
    dp_leakage_bruteforce,
    h_markov,
)
from .experiments import ExperimentConfig, ExperimentReport, SignThresholdClassifier, SyntheticConfig, run_experiment
from .graphical_model import (
    DependencyGraph,
    JointTable,
    MarkovChainSpec,
    QuiltPartition,
    build_joint_from_chain,
    enumerate_chain_quilts,
    find_quilts,
    markov_blanket,
    moralize,
    validate_quilt,
)
from .holdout import HoldoutSession, Provenance, calibrate_session_for_bdp, session_dp_epsilon
from .influence import blanket_coefficient, chain_coefficients, max_influence, max_influence_cond, quilt_coefficient
from .mechanisms import NoiseSource, StatQuery, ZeroNoise, exponential_mechanism, laplace_mechanism
from .model_io import load_mechanism, load_model

__version__ = "0.1.0"
