"""Simulation and security analysis of an entangled-state QKD protocol whose
security rests only on the monogamy of entanglement."""

from .hv_adversary import (
    CANONICAL_SETTING,
    ChshSetting,
    HVEnsemble,
    HVStrategy,
    LocalityClass,
    build_local,
    build_pr_nonlocal,
    check_constraints,
    chsh_value,
    classify,
    critical_ensemble,
    ensemble_chsh,
    min_nonlocal_fraction,
)
from .protocol import EnsembleSource, IdealSource, ProtocolConfig, run_protocol
from .quantum_core import correlation, sample_joint, singlet_distribution, to_bit
from .rng import RngStreams
from .security import P_THEORY, analyze, p_theory

__version__ = "0.1.0"
