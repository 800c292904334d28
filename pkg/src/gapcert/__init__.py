"""Certified lower bounds on a true system's worst-case expected robustness.

A simulator's minimum expected robustness and the maximum expected
sim-vs-true robustness gap are each bounded by a modified GP-UCB loop that
stops with a probabilistic certificate; the two bounds combine into a
certified lower bound on the true system.
"""

from .bo import BoParams, BoundCertificate, Objective, lower_bound_min, run
from .domain import SeededRng, Signal, TestDomain, derive_seed
from .errors import (
    AdapterError,
    BudgetError,
    ConfigError,
    DimensionError,
    DomainError,
    GapCertError,
    HorizonError,
    NumericalError,
    ParameterError,
    ProtocolError,
    SpecError,
    UnterminatedError,
)
from .gp import Dataset, KernelSpec, NoiseModel, fit
from .robustness import ReachAvoidSpec, RobustnessMeasure, VelocitySpec, evaluate
from .systems import SystemPair, build_pair, expected_gap, expected_robustness
from .verifier import (
    RepeatabilityResult,
    VerificationConfig,
    VerificationReport,
    bound_gap,
    bound_sim_robustness,
    combine,
    repeatability_study,
    verify,
)

__version__ = "0.1.0"
