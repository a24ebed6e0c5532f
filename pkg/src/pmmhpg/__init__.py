"""Particle MCMC samplers mixing PMMH and particle Gibbs steps for state-space models."""

from .backward import backward_simulate
from .ccsmc import run_ccsmc
from .diagnostics import iact, summarize
from .errors import (
    ConfigError,
    DataError,
    DegenerateConstraintError,
    DegenerateWeightsError,
    ModelEvaluationError,
    PmcmcError,
    SamplerError,
    SingularModelError,
)
from .hilbert import hilbert_keys, sort_particles
from .rng import RandomInputs, Stream, draw_inputs, new_stream
from .sampler import Block, BlockingPlan, run_chain
from .smc import run_smc
from .ssm import ParticleSystem, StateSpaceModel, Trajectory

__version__ = "0.1.0"

__all__ = [
    "Block", "BlockingPlan", "ConfigError", "DataError", "DegenerateConstraintError",
    "DegenerateWeightsError", "ModelEvaluationError", "ParticleSystem", "PmcmcError",
    "RandomInputs", "SamplerError", "SingularModelError", "StateSpaceModel", "Stream",
    "Trajectory", "backward_simulate", "draw_inputs", "hilbert_keys", "iact", "new_stream",
    "run_ccsmc", "run_chain", "run_smc", "sort_particles", "summarize",
]
