"""Finite-sample posterior concentration for sparse Gaussian linear regression.

Restricted isometry certification, the Dantzig selector, spike-and-slab
priors and their exact posteriors, and the concentration bounds that tie them
together, with Monte Carlo experiments that check each bound.
"""
from .bounds import (
    BoundReport,
    ConcentrationParams,
    SharpBoundParams,
    concentration_bound,
    derive_sharp_constants,
    general_concentration_bound,
    l1_small_ball_radius,
    noise_event_membership,
    sharp_mass_lower_bound,
)
from .dantzig import DantzigSelector, dantzig_select, estimation_radius, failure_mass, lambda_p
from .harness import ExperimentConfig, run_concentration_experiment, run_dantzig_experiment
from .posterior import PosteriorMixture, SpikeSlabPosterior, ball_mass, enumerate_posterior
from .priors import PriorSpec, sample_prior
from .problem import Observation, ProblemInstance, generate_design, synthesize_observation
from .rip import RipCertificate, certify_rip

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConcentrationParams",
    "DantzigSelector",
    "ExperimentConfig",
    "Observation",
    "PosteriorMixture",
    "PriorSpec",
    "ProblemInstance",
    "RipCertificate",
    "SharpBoundParams",
    "SpikeSlabPosterior",
    "ball_mass",
    "certify_rip",
    "concentration_bound",
    "dantzig_select",
    "derive_sharp_constants",
    "enumerate_posterior",
    "estimation_radius",
    "failure_mass",
    "general_concentration_bound",
    "generate_design",
    "l1_small_ball_radius",
    "lambda_p",
    "noise_event_membership",
    "run_concentration_experiment",
    "run_dantzig_experiment",
    "sample_prior",
    "sharp_mass_lower_bound",
    "synthesize_observation",
]
