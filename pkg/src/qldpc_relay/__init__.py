"""Relay-BP decoding for quantum LDPC codes with a bit-exact fixed-point emulator.

Modules:

* :mod:`model` - check/action matrices, priors, model files and built-in codes
* :mod:`bp_ref` - binary64 min-sum, DMem-BP and Relay-BP-S
* :mod:`qarith` - intN.S.M reduced-precision arithmetic
* :mod:`gateware` - CNU/VNU datapath emulation in fixed point
* :mod:`window` - (W, C) sliding-window decoding of detector streams
* :mod:`bench` - Monte Carlo estimation, exhaustive oracle, real-time budget
"""

__version__ = "0.1.0"

from .bench import BenchReport, TimingModel, map_oracle, realtime_budget, run_shots, run_windowed_shots
from .bp_ref import DecodeOutcome, RelayConfig, dmem_bp_leg, relay_decode
from .gateware import gateware_decode
from .model import (DecodingModel, ModelError, gen_memory_code, gen_single_shot_code, load_model,
                    parse_model, render_model, save_model)
from .qarith import PrecisionSpec, approx_mul_shift, parse_precision
from .window import SlidingWindowDecoder, build_window_model, synthesize_stream

__all__ = [
    "__version__",
    "BenchReport",
    "DecodeOutcome",
    "DecodingModel",
    "ModelError",
    "PrecisionSpec",
    "RelayConfig",
    "SlidingWindowDecoder",
    "TimingModel",
    "approx_mul_shift",
    "build_window_model",
    "dmem_bp_leg",
    "gateware_decode",
    "gen_memory_code",
    "gen_single_shot_code",
    "load_model",
    "map_oracle",
    "parse_model",
    "parse_precision",
    "realtime_budget",
    "relay_decode",
    "render_model",
    "run_shots",
    "run_windowed_shots",
    "save_model",
    "synthesize_stream",
]
