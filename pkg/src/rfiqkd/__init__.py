"""Modeling and finite-key security analysis for decoy-state
reference-frame-independent QKD."""

from .finitekey import DecoyBounds, EpsilonBudget, decoy_bounds, hoeffding_bounds, tau
from .mcoracle import SimConfig, end_to_end_skr, simulate_session
from .optimizer import Candidate, GAConfig, InfeasibleLinkError, SearchSpace, fitness, grid_search, optimize, repair
from .records import ExperimentRecord, RecordError, load_dataset, load_record, save_record
from .security import SecurityResult, analyze, binary_entropy, c_quantity, estimate_theta, eve_information, secret_key_rate
from .statmodel import (
    BASIS_PAIRS,
    INTENSITIES,
    ChannelParams,
    ProtocolParams,
    SessionParams,
    TallyTable,
    expected_tallies,
    gain,
    pair_probabilities,
    qber,
    transmittance,
)

__version__ = "0.1.0"
