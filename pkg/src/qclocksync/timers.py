"""Event-timer model: true detection times -> local-clock tags.

A timer is wired to two clocks: the one feeding its 10 MHz input sets the
running rate, the one feeding its 1 PPS input sets the epoch.  The tag of
an event at true time ``t`` is

    t + [x_freq(t) - x_freq(t_start)] + [x_pps(t_start) + pps_offset]
      + port_bias + N(0, meas_jitter)

rounded to the quantization grid.  The PPS clock only enters through its
error at session start, so two timers sharing a 10 MHz source never drift
apart whatever their PPS wiring.  The per-port sampling-rate ceiling is a
non-paralyzable dead time of ``1/max_rate_per_port``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .clocks import ClockPhaseSeries
from .source import deadtime_keep
from .timebase import FS_PER_S, NS, PS, TagStream

PORTS = ("A", "B")

# Six start/stop configurations (start timer+port, stop timer+port).
SIX_CONFIGS = {
    "1A2A": ((1, "A"), (2, "A")),
    "1A2B": ((1, "A"), (2, "B")),
    "1B2A": ((1, "B"), (2, "A")),
    "1B2B": ((1, "B"), (2, "B")),
    "1A1B": ((1, "A"), (1, "B")),
    "2A2B": ((2, "A"), (2, "B")),
}

# Reported means (ns) for a 100.147 ns preset delay between the two PPS inputs.
REPORTED_DELAY_NS = 100.147
REPORTED_MEANS_NS = {
    "1A2A": 101.034,
    "1A2B": 101.097,
    "1B2A": 100.984,
    "1B2B": 101.045,
    "1A1B": 100.196,
    "2A2B": 100.211,
}
REPORTED_MAX_BIAS_NS = 0.893


@dataclass(frozen=True)
class EventTimer:
    port_bias_a: float = 0.0  # fs
    port_bias_b: float = 0.0  # fs
    meas_jitter_sigma: float = 5.66 * PS  # fs; sqrt(2) x this ~ 8 ps per start/stop pair
    quantization: int = PS  # fs
    max_rate_per_port: float = 6e3  # Hz
    freq_ref: str = "ntsc"
    pps_ref: str = "ntsc"

    def __post_init__(self):
        if not self.max_rate_per_port > 0:
            raise ValueError("max_rate_per_port must be positive")
        if self.quantization < 1 or FS_PER_S % int(self.quantization):
            raise ValueError("quantization must be a positive divisor of 1 s in fs")
        if self.meas_jitter_sigma < 0:
            raise ValueError("meas_jitter_sigma must be non-negative")

    @property
    def dead_time_fs(self) -> int:
        return math.ceil(FS_PER_S / self.max_rate_per_port)

    def bias(self, port: str) -> float:
        if port not in PORTS:
            raise ValueError(f"unknown port {port!r}")
        return self.port_bias_a if port == "A" else self.port_bias_b


def quantize(v: np.ndarray, q: int) -> np.ndarray:
    """Round int64 values to the nearest multiple of ``q`` (ties upward)."""
    if q == 1:
        return v
    return (v + q // 2) // q * q


def tag_events(
    events: TagStream,
    timer: EventTimer,
    port: str,
    freq_clock: ClockPhaseSeries | None = None,
    pps_clock: ClockPhaseSeries | None = None,
    seed=None,
) -> TagStream:
    """Tag a sorted true-time event stream on ``port`` of ``timer``.

    ``None`` clocks are ideal.  Clock series must cover the event span.
    """
    rng = np.random.default_rng(seed)
    if not len(events):
        return TagStream.empty(events.channel)
    origin = int(events.seconds[0])
    rel = events.relative_fs(origin)

    offset = timer.bias(port)
    if pps_clock is not None:
        offset += pps_clock.initial_error() + pps_clock.pps_offset
    shift = np.full(rel.size, offset)
    if freq_clock is not None:
        shift += freq_clock.phase_at(origin, rel) - freq_clock.initial_error()
    if timer.meas_jitter_sigma > 0:
        shift += rng.normal(0.0, timer.meas_jitter_sigma, rel.size)
    tags = quantize(rel + np.rint(shift).astype(np.int64), int(timer.quantization))
    tags.sort(kind="stable")
    tags = tags[deadtime_keep(tags, timer.dead_time_fs)]
    return TagStream.from_relative(origin, tags, events.channel)


@dataclass(frozen=True)
class ScanPoint:
    delay: int  # fs
    mean1: float
    sd1: float
    mean2: float
    sd2: float


def _pps_pair(delay: int, pulses: int, start_s: int = 1):
    a = TagStream(np.arange(start_s, start_s + pulses), np.zeros(pulses, np.int64))
    rel = np.arange(pulses, dtype=np.int64) * FS_PER_S + int(delay)
    b = TagStream.from_relative(start_s, rel)
    return a, b


def _mean_sd(v: np.ndarray) -> tuple[float, float]:
    return float(np.mean(v)), float(np.std(v, ddof=1)) if v.size > 1 else 0.0


def _offsets(start: TagStream, stop: TagStream) -> np.ndarray:
    if len(start) != len(stop):
        raise RuntimeError("a calibration pulse was lost to the timer dead time")
    origin = int(start.seconds[0])
    return (stop.relative_fs(origin) - start.relative_fs(origin)).astype(float)


def calibration_scan(timer1: EventTimer, timer2: EventTimer, delays, pulses: int = 100, seed=None) -> list[ScanPoint]:
    """Measured B-minus-A offset of each timer for PPS pairs ``delay`` apart."""
    rng = np.random.default_rng(seed)
    out = []
    for delay in delays:
        a, b = _pps_pair(int(delay), pulses)
        stats = []
        for timer in (timer1, timer2):
            ta = tag_events(a, timer, "A", seed=rng)
            tb = tag_events(b, timer, "B", seed=rng)
            stats.extend(_mean_sd(_offsets(ta, tb)))
        out.append(ScanPoint(int(delay), *stats))
    return out


@dataclass(frozen=True)
class HomogeneityResult:
    fixed_delay: int
    configs: dict  # name -> (mean_fs, sd_fs)

    @property
    def biases(self) -> dict:
        return {k: m - self.fixed_delay for k, (m, _) in self.configs.items()}

    @property
    def mean_cross_bias(self) -> float:
        """Average bias of the four timer-to-timer configurations."""
        b = self.biases
        return float(np.mean([b[k] for k in ("1A2A", "1A2B", "1B2A", "1B2B")]))

    @property
    def max_spread(self) -> float:
        means = [m for m, _ in self.configs.values()]
        return max(means) - min(means)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("config", "mean_ns", "sd_ns"))
            for name, (m, s) in self.configs.items():
                w.writerow((name, f"{m / NS:.6f}", f"{s / NS:.6f}"))


def six_config_homogeneity(
    timer1: EventTimer, timer2: EventTimer, fixed_delay: int = round(REPORTED_DELAY_NS * NS), pulses: int = 100, seed=None
) -> HomogeneityResult:
    rng = np.random.default_rng(seed)
    timers = {1: timer1, 2: timer2}
    start, stop = _pps_pair(fixed_delay, pulses)
    configs = {}
    for name, ((t_a, p_a), (t_b, p_b)) in SIX_CONFIGS.items():
        ta = tag_events(start, timers[t_a], p_a, seed=rng)
        tb = tag_events(stop, timers[t_b], p_b, seed=rng)
        configs[name] = _mean_sd(_offsets(ta, tb))
    return HomogeneityResult(int(fixed_delay), configs)


def fit_port_biases(means_ns: dict = REPORTED_MEANS_NS, delay_ns: float = REPORTED_DELAY_NS):
    """Least-squares port biases (fs) reproducing six start/stop means.

    Only bias differences are observable, so timer 1 port A is pinned to 0.
    Returns ``(biases, residuals)`` with ``biases`` keyed ``"1A"..."2B"`` and
    residuals (fs) keyed by configuration.
    """
    names = ["1B", "2A", "2B"]
    rows, rhs = [], []
    for cfg, ((ta, pa), (tb, pb)) in SIX_CONFIGS.items():
        row = np.zeros(3)
        for sign, key in ((1.0, f"{tb}{pb}"), (-1.0, f"{ta}{pa}")):
            if key in names:
                row[names.index(key)] += sign
        rows.append(row)
        rhs.append((means_ns[cfg] - delay_ns) * NS)
    a, y = np.array(rows), np.array(rhs)
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    biases = {"1A": 0.0, **dict(zip(names, sol.tolist()))}
    residuals = dict(zip(SIX_CONFIGS, (y - a @ sol).tolist()))
    return biases, residuals


def reported_timers(**kw) -> tuple[EventTimer, EventTimer]:
    """Timer pair whose port biases reproduce the reported six-configuration means."""
    b, _ = fit_port_biases()
    return (
        EventTimer(port_bias_a=b["1A"], port_bias_b=b["1B"], **kw),
        EventTimer(port_bias_a=b["2A"], port_bias_b=b["2B"], **kw),
    )
