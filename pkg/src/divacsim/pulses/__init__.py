from .dsl import Drive, Laser, PulseSequence, Read, Var, Wait, format_sequence, parse_sequence
from .engine import (DensityState, NoiseModel, RWAWarning, SimTrace, addressed_transition,
                     apply_drive, evolve_noise, evolve_sequence, initialize, ms0_population,
                     read_signal, run_experiment, simulate)

__all__ = [
    "DensityState", "Drive", "Laser", "NoiseModel", "PulseSequence", "RWAWarning", "Read",
    "SimTrace", "Var", "Wait", "addressed_transition", "apply_drive", "evolve_noise",
    "evolve_sequence", "format_sequence", "initialize", "ms0_population", "parse_sequence",
    "read_signal", "run_experiment", "simulate",
]
