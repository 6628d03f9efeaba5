"""Simulation and analysis of two-way clock synchronization with entangled photon pairs."""

__version__ = "0.1.0"

from .channel import AttackSpec, FiberLink, apply_attack, ndc_configuration, propagate
from .clocks import ClockModel, ClockPhaseSeries, clock_error_at, preset, simulate_clock
from .source import DetectorModel, PairStream, detect, generate_pairs
from .stats import (
    DriftFit,
    RankDeficient,
    StabilitySeries,
    fit_quadratic,
    modified_adev,
    overlapping_adev,
    stability,
    summary_sd,
    tdev,
)
from .sync import (
    CoincidenceResult,
    EmptyWindow,
    FitDiverged,
    NoPeak,
    SyncSeries,
    coarse_offset,
    coincidence_histogram,
    extract_time_offset,
    fit_peak,
    precision_estimate,
)
from .timebase import TagStream, TimeTag, read_tags, tag_add, tag_sub, write_tags
from .timers import EventTimer, calibration_scan, six_config_homogeneity, tag_events

__all__ = [
    "__version__",
    "apply_attack",
    "AttackSpec",
    "calibration_scan",
    "clock_error_at",
    "ClockModel",
    "ClockPhaseSeries",
    "coarse_offset",
    "coincidence_histogram",
    "CoincidenceResult",
    "detect",
    "DetectorModel",
    "DriftFit",
    "EmptyWindow",
    "EventTimer",
    "extract_time_offset",
    "FiberLink",
    "fit_peak",
    "fit_quadratic",
    "FitDiverged",
    "generate_pairs",
    "modified_adev",
    "ndc_configuration",
    "NoPeak",
    "overlapping_adev",
    "PairStream",
    "precision_estimate",
    "preset",
    "propagate",
    "RankDeficient",
    "read_tags",
    "simulate_clock",
    "six_config_homogeneity",
    "stability",
    "StabilitySeries",
    "summary_sd",
    "SyncSeries",
    "tag_add",
    "tag_events",
    "tag_sub",
    "TagStream",
    "tdev",
    "TimeTag",
    "write_tags",
]
