from .cases import CASE_IDS, CASE_TABLE, make_case, make_input_cycle
from .dataset import SEGMENT_SECONDS, TimeSeriesDataset
from .drive_cycle import CycleProfile, DriveCycle, smooth_cycle, synthesize_drive_cycle
from .integrate import CHANNELS, SimulationAborted, default_initial_state, integrate, settle
from .noise import NO_NOISE, PAPER_NOISE, NoiseSpec, add_noise

__all__ = [
    "CASE_IDS",
    "CASE_TABLE",
    "make_case",
    "make_input_cycle",
    "SEGMENT_SECONDS",
    "TimeSeriesDataset",
    "CycleProfile",
    "DriveCycle",
    "smooth_cycle",
    "synthesize_drive_cycle",
    "CHANNELS",
    "SimulationAborted",
    "default_initial_state",
    "integrate",
    "settle",
    "NO_NOISE",
    "PAPER_NOISE",
    "NoiseSpec",
    "add_noise",
]
