"""Desk-scale simulation of digital multi-beam mm-wave array receivers and links."""

from .array import Angle, ArrayGeometry, Beampattern, array_factor, beampattern, make_ula, steering_vector
from .beamformer import BeamBank, CombinerConfig, HybridConfig, apply_beam_bank, combine, matched_beam_bank, precode
from .channel import ChannelMatrix, ClusterParams, SubpathSet, TappedChannel, apply_channel, assemble_narrowband, assemble_wideband, draw_subpaths

__version__ = "0.1.0"

__all__ = [
    "Angle", "ArrayGeometry", "Beampattern", "array_factor", "beampattern", "make_ula",
    "steering_vector", "BeamBank", "CombinerConfig", "HybridConfig", "apply_beam_bank",
    "combine", "matched_beam_bank", "precode", "ChannelMatrix", "ClusterParams", "SubpathSet",
    "TappedChannel", "apply_channel", "assemble_narrowband", "assemble_wideband", "draw_subpaths",
]
