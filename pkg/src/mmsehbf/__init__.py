"""Hybrid analog/digital beamforming under MMSE and weighted-MMSE criteria."""

from .channel import ArrayGeometry, ChannelRealization, RayParams, draw_rays, gen_channel, make_rng, random_channel
from .driver import Algorithm, Criterion, Init, RunTrace, SolveResult, SolverError, SolverOptions, solve
from .mmse import HybridBeamformer, SystemDims, Transceiver, WeightMatrices

__all__ = [
    "Algorithm",
    "ArrayGeometry",
    "ChannelRealization",
    "Criterion",
    "HybridBeamformer",
    "Init",
    "RayParams",
    "RunTrace",
    "SolveResult",
    "SolverError",
    "SolverOptions",
    "SystemDims",
    "Transceiver",
    "WeightMatrices",
    "draw_rays",
    "gen_channel",
    "make_rng",
    "random_channel",
    "solve",
]
