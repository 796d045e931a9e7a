"""Low-complexity sum-of-outer-products beamforming for the multi-user URA downlink."""

from .model import (ChannelSet, ConvergenceTrace, FDBeamformer, IGSBeamformer,
                    OuterProductBeamformer, RateReport, ScenarioConfig, assemble_bm,
                    dbm_to_watts, from_composite_real, to_composite_real)
from .rates import ObjectiveKind
from .algorithms import AlgorithmSpec, run_algorithm

__all__ = [
    "AlgorithmSpec", "ChannelSet", "ConvergenceTrace", "FDBeamformer", "IGSBeamformer",
    "ObjectiveKind", "OuterProductBeamformer", "RateReport", "ScenarioConfig", "assemble_bm",
    "dbm_to_watts", "from_composite_real", "run_algorithm", "to_composite_real",
]
