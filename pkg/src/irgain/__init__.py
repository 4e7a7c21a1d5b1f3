"""Processing-gain tradeoff simulator for random time-hopping impulse radio."""

from .model import Coding, HoppingSequence, SystemConfig
from .channel import ChannelImpulseResponse, snr_to_energy
from .detectors import (
    DetectorKind,
    MatchedFilterDetector,
    DecorrelatingDetector,
    MMSEDetector,
    MLDetector,
)
from .montecarlo import BerEstimate, TrialPlan, run_ber, run_sweep

__all__ = [
    "Coding",
    "HoppingSequence",
    "SystemConfig",
    "ChannelImpulseResponse",
    "snr_to_energy",
    "DetectorKind",
    "MatchedFilterDetector",
    "DecorrelatingDetector",
    "MMSEDetector",
    "MLDetector",
    "BerEstimate",
    "TrialPlan",
    "run_ber",
    "run_sweep",
]

__version__ = "0.1.0"
