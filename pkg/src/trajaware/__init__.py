"""Trajectory self-awareness: incremental switching-model learning and
online abnormality detection with a Markov jump particle filter."""
from ._kernels import available_backends, use_backend
from .core import (
    DUMMY,
    AbnormalitySample,
    AgentState,
    GaussianBelief,
    LabeledWindow,
    NoiseParams,
    Observation,
    SlModel,
    SuperState,
    TransitionTensor,
    certainty_threshold,
    weighted_distance,
)
from .learner import LearnConfig, ModelBank, fit_normality
from .mjpf import MjpfConfig, run
from .simulator import ScenarioSpec, default_specs, generate

__version__ = "0.1.0"
