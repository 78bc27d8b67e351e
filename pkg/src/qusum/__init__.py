"""qusum: quantum CUSUM change-point detection with optimized measurements."""

__version__ = "0.1.0"

from .detection import ChangePointModel, CusumDetector, build_llr_table, cusum_step, run_trial, stop_times
from .entropy import OutcomeDistribution, kl_divergence, measured_relative_entropy, quantum_relative_entropy, relative_entropy
from .measurement import KrausChannel, Povm, apply_channel, compression_channel, pushforward_povm
from .povm_search import SearchConfig, block_measurement_sweep, optimize_measurement
from .states import DensityMatrix, StateSpec, build_state, build_states, parse_state_spec

__all__ = [
    "ChangePointModel", "CusumDetector", "DensityMatrix", "KrausChannel", "OutcomeDistribution", "Povm",
    "SearchConfig", "StateSpec", "apply_channel", "block_measurement_sweep", "build_llr_table", "build_state",
    "build_states", "compression_channel", "cusum_step", "kl_divergence", "measured_relative_entropy",
    "optimize_measurement", "parse_state_spec", "pushforward_povm", "quantum_relative_entropy",
    "relative_entropy", "run_trial", "stop_times",
]
