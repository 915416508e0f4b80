"""Simple power analysis of the Twofish key schedule on simulated Hamming traces."""

from .attack import (
    AttackReport,
    ExactAttackError,
    attack_exact,
    attack_multi,
    attack_noisy,
    cluster_estimates,
)
from .schedule import SecretKey, compute_intermediates, derive_subkeys
from .tracesim import HammingTrace, NoiseModel, read_trace, simulate_trace, write_trace

__version__ = "0.1.0"
