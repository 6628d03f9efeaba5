"""Reference clock models (two-state white-FM + random-walk-FM noise).

A clock is described by its time error ``x(t)`` relative to an ideal
timescale:

    x(t) = x0 + y0*t + (d/2)*t**2
           + env_amp * env_period/(2*pi) * sin(2*pi*t/env_period)
           + W(t)

where ``W`` integrates white frequency noise (intensity ``h_wfm``, IEEE
``h0`` in seconds) and random-walk frequency noise (``h_rwfm``, IEEE
``h-2`` in 1/s).  The sinusoid is the integral of a cosine frequency
modulation of amplitude ``env_amp``, a stand-in for periodic lab
temperature.

Discretization with step ``dt``:

* white FM: each step draws an independent fractional frequency
  ``N(0, h_wfm / (2*dt))``;
* random-walk FM: the frequency takes increments ``N(0, 2*pi**2*h_rwfm*dt)``.

so that the sampled phase has ``AVAR = h_wfm/(2*tau) + (2*pi**2/3)*h_rwfm*tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .timebase import FS_PER_S, TimeTag, tag_sub


@dataclass(frozen=True)
class ClockModel:
    x0: float = 0.0  # fs
    y0: float = 0.0
    d: float = 0.0  # 1/s
    h_wfm: float = 0.0  # s
    h_rwfm: float = 0.0  # 1/s
    pps_offset: float = 0.0  # fs
    env_amp: float = 0.0
    env_period: float = 2000.0  # s

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"ClockModel.{f.name} must be finite, got {v}")
        if self.h_wfm < 0 or self.h_rwfm < 0:
            raise ValueError("noise intensities must be non-negative")
        if self.env_period <= 0:
            raise ValueError("env_period must be positive")

    @property
    def is_noiseless(self) -> bool:
        return self.h_wfm == 0 and self.h_rwfm == 0


@dataclass(frozen=True, eq=False)
class ClockPhaseSeries:
    """Sampled time error: ``x[k]`` (fs, float) at ``start_s + k*step_fs``."""

    step_fs: int
    x: np.ndarray
    seed: object = None
    start_s: int = 0
    pps_offset: float = 0.0

    def __post_init__(self):
        if self.x.size < 2:
            raise ValueError("a phase series needs at least two samples")
        self.x.setflags(write=False)

    @property
    def span_fs(self) -> int:
        return (self.x.size - 1) * self.step_fs

    @property
    def times_s(self) -> np.ndarray:
        return self.start_s + np.arange(self.x.size) * (self.step_fs / FS_PER_S)

    def phase_at(self, origin_s: int, rel_fs) -> np.ndarray:
        """Interpolated ``x`` (fs) at instants ``origin_s + rel_fs`` (int64 fs)."""
        rel_fs = np.asarray(rel_fs, dtype=np.int64)
        # origin offset split into whole steps plus a remainder keeps int64 safe
        k0, r0 = divmod((int(origin_s) - self.start_s) * FS_PER_S, self.step_fs)
        q, r = np.divmod(rel_fs + r0, self.step_fs)
        idx = q + k0
        n = self.x.size
        at_end = (idx == n - 1) & (r == 0)
        if rel_fs.size and (idx.min() < 0 or np.any((idx >= n - 1) & ~at_end)):
            raise ValueError("requested time outside the simulated clock span")
        idx = np.where(at_end, n - 2, idx)
        w = np.where(at_end, 1.0, r / self.step_fs)
        return self.x[idx] * (1.0 - w) + self.x[idx + 1] * w

    def initial_error(self) -> float:
        return float(self.x[0])


def white_fm_coefficient(adev: float, tau: float) -> float:
    """``h_wfm`` giving white-FM Allan deviation ``adev`` at ``tau``."""
    return 2.0 * tau * adev**2


def simulate_clock(model: ClockModel, duration: float, step: float, seed=None, start_s: int = 0) -> ClockPhaseSeries:
    """Sample ``x(t)`` over ``[0, duration]`` every ``step`` seconds."""
    if not (step > 0 and math.isfinite(step) and math.isfinite(duration)):
        raise ValueError("step must be positive and finite")
    if duration < 2 * step:
        raise ValueError("duration must cover at least two steps")
    step_fs = round(step * FS_PER_S)
    n = int(round(duration * FS_PER_S)) // step_fs + 1
    dt = step_fs / FS_PER_S
    t = np.arange(n) * dt

    x = model.x0 + FS_PER_S * (model.y0 * t + 0.5 * model.d * t * t)
    if model.env_amp:
        p = model.env_period
        x = x + FS_PER_S * model.env_amp * p / (2 * math.pi) * np.sin(2 * math.pi * t / p)

    rng = np.random.default_rng(seed)
    y = np.zeros(n - 1)
    if model.h_wfm > 0:
        y += rng.normal(0.0, math.sqrt(model.h_wfm / (2 * dt)), n - 1)
    if model.h_rwfm > 0:
        steps = rng.normal(0.0, math.sqrt(2 * math.pi**2 * model.h_rwfm * dt), n - 1)
        y += np.cumsum(steps) - steps  # frequency at the start of each step
    if model.h_wfm > 0 or model.h_rwfm > 0:
        x = x + FS_PER_S * np.concatenate(([0.0], np.cumsum(y * dt)))
    else:
        x = np.asarray(x, dtype=float) + np.zeros(n)
    return ClockPhaseSeries(step_fs, x, seed, int(start_s), float(model.pps_offset))


def clock_error_at(series: ClockPhaseSeries, t: TimeTag) -> int:
    """Time error at ``t`` (fs, rounded), linearly interpolated."""
    rel = tag_sub(t, TimeTag(series.start_s))
    if rel < 0 or rel > series.span_fs:
        raise ValueError("requested time outside the simulated clock span")
    k, r = divmod(rel, series.step_fs)
    if r == 0:
        return round(series.x[k])
    w = r / series.step_fs
    return round(series.x[k] * (1 - w) + series.x[k + 1] * w)


# Rb relative to an ideal H-maser.  White FM sets ADEV(30 s) = 2.2e-12; the
# random-walk term is kept two orders below it so long-term ADEV still falls.
RB_ADEV_30S = 2.2e-12
TRANSFER_ADEV_30S = 3.7e-15

PRESETS = {
    "hmaser": ClockModel(),
    "rb": ClockModel(
        y0=1e-11,
        d=5e-16,
        h_wfm=white_fm_coefficient(RB_ADEV_30S, 30.0),
        h_rwfm=(5e-15) ** 2 / (2 * math.pi**2 * 30.0 / 3.0),
        env_amp=3e-13,
        env_period=2000.0,
    ),
    "transferred_ref": ClockModel(h_wfm=white_fm_coefficient(TRANSFER_ADEV_30S, 30.0)),
}


def preset(name: str) -> ClockModel:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown clock preset {name!r}; known: {sorted(PRESETS)}") from None
