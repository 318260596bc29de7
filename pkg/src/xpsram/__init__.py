"""Electro-optic simulator of a photonic SRAM bitcell with in-memory XOR and its WDM array."""

from xpsram.array import (
    ChannelPlan,
    ColumnSpectrum,
    WdmArray,
    build_array,
    crosstalk_matrix,
    decode_column_spectrum,
    encode_input_word,
    plan_channels,
    popcount_accumulate,
)
from xpsram.bitcell import Bitcell, BitcellConfig, Op, build_bitcell, encode_input
from xpsram.energy import EnergyReport, electrical_energy, optical_energy, report, thermal_tuning_power
from xpsram.engine import PulseEvent, Schedule, Waveform, run, write_csv
from xpsram.errors import ConfigurationError, Diagnostic, XpsramError
from xpsram.latch import DriverParams, LatchState, latch_fixed_points
from xpsram.optics import PdParams, RingParams, RingState, WdmSignal, fsr, ring_transfer

__version__ = "0.1.0"

__all__ = [
    "Bitcell",
    "BitcellConfig",
    "ChannelPlan",
    "ColumnSpectrum",
    "ConfigurationError",
    "Diagnostic",
    "DriverParams",
    "EnergyReport",
    "LatchState",
    "Op",
    "PdParams",
    "PulseEvent",
    "RingParams",
    "RingState",
    "Schedule",
    "Waveform",
    "WdmArray",
    "WdmSignal",
    "XpsramError",
    "build_array",
    "build_bitcell",
    "crosstalk_matrix",
    "decode_column_spectrum",
    "electrical_energy",
    "encode_input",
    "encode_input_word",
    "fsr",
    "latch_fixed_points",
    "optical_energy",
    "plan_channels",
    "popcount_accumulate",
    "report",
    "ring_transfer",
    "run",
    "thermal_tuning_power",
    "write_csv",
]
