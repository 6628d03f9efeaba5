"""Entangled pair source and single-photon detector surrogates.

Pairs are a Poisson process of emission instants; each photon of a pair
gets an independent ``N(0, correlation_sigma/sqrt(2))`` offset so the
signal-idler difference has spread ``correlation_sigma``.  Detectors thin,
smear and dead-time filter a photon stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timebase import FS_PER_S, NS, PS, TagStream


@dataclass(frozen=True, eq=False)
class PairStream:
    """Pair emissions on ``origin_s`` + int64 fs offsets (emission order)."""

    origin_s: int
    emission: np.ndarray
    signal: np.ndarray
    idler: np.ndarray
    pair_rate: float
    correlation_sigma: float

    def __len__(self):
        return int(self.emission.size)

    def emission_stream(self, channel: int = 0) -> TagStream:
        return TagStream.from_relative(self.origin_s, self.emission, channel)

    def arm(self, which: str, channel: int = 0) -> TagStream:
        """Sorted photon times of the ``"signal"`` or ``"idler"`` arm."""
        rel = {"signal": self.signal, "idler": self.idler}[which]
        return TagStream.from_relative(self.origin_s, np.sort(rel), channel)


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.65
    jitter_sigma: float = 51 * PS  # fs
    dark_rate: float = 0.0  # Hz
    dead_time: int = 20 * NS  # fs

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.jitter_sigma < 0 or self.dark_rate < 0 or self.dead_time < 0:
            raise ValueError("jitter, dark rate and dead time must be non-negative")


def poisson_times(rng: np.random.Generator, rate: float, duration_fs: int) -> np.ndarray:
    """Sorted, strictly increasing Poisson arrival offsets in ``[0, duration_fs)``."""
    if rate <= 0 or duration_fs <= 0:
        return np.zeros(0, np.int64)
    n = rng.poisson(rate * duration_fs / FS_PER_S)
    # coincident draws at fs resolution are dropped to keep times strictly increasing
    return np.unique(rng.integers(0, duration_fs, n, dtype=np.int64))


def generate_pairs(pair_rate: float, duration: float, correlation_sigma: float = 1.0, seed=None, origin_s: int = 0) -> PairStream:
    """Poisson pair emissions over ``duration`` seconds starting at ``origin_s``."""
    if not pair_rate > 0:
        raise ValueError("pair_rate must be positive")
    if duration < 0 or correlation_sigma < 0:
        raise ValueError("duration and correlation_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    t = poisson_times(rng, pair_rate, round(duration * FS_PER_S))
    if correlation_sigma > 0:
        half = correlation_sigma / math.sqrt(2.0)
        sig = t + np.rint(rng.normal(0.0, half, t.size)).astype(np.int64)
        idl = t + np.rint(rng.normal(0.0, half, t.size)).astype(np.int64)
    else:
        sig, idl = t.copy(), t.copy()
    return PairStream(int(origin_s), t, sig, idl, float(pair_rate), float(correlation_sigma))


def deadtime_keep(t: np.ndarray, dead_fs: int) -> np.ndarray:
    """Indices of a sorted int64 array surviving a non-paralyzable dead time.

    An event is dropped when it falls less than ``dead_fs`` after the last
    kept event.  ``dead_fs`` is at least 1 so output is strictly increasing.
    """
    n = t.size
    if n == 0:
        return np.zeros(0, np.int64)
    dead_fs = max(int(dead_fs), 1)
    nxt = np.searchsorted(t, t + dead_fs, side="left").tolist()
    keep = []
    i = 0
    while i < n:
        keep.append(i)
        i = nxt[i]
    return np.asarray(keep, dtype=np.int64)


def detect(photons: TagStream, det: DetectorModel, seed=None, span: tuple[int, float] | None = None) -> TagStream:
    """Detection events produced by ``det`` for a sorted photon stream.

    ``span`` is ``(origin_s, duration_s)`` over which dark counts are drawn;
    it defaults to the interval covered by the photons.
    """
    rng = np.random.default_rng(seed)
    if span is None:
        origin = int(photons.seconds[0]) if len(photons) else 0
    else:
        origin = int(span[0])
    rel = photons.relative_fs(origin)
    kept = rel[rng.random(rel.size) < det.efficiency] if det.efficiency < 1 else rel.copy()
    if det.jitter_sigma > 0 and kept.size:
        kept = kept + np.rint(rng.normal(0.0, det.jitter_sigma, kept.size)).astype(np.int64)
    if det.dark_rate > 0:
        if span is None:
            lo = int(rel[0]) if rel.size else 0
            width = int(rel[-1]) - lo if rel.size else 0
        else:
            lo, width = 0, round(span[1] * FS_PER_S)
        kept = np.concatenate((kept, lo + poisson_times(rng, det.dark_rate, width)))
    kept.sort(kind="stable")
    kept = kept[deadtime_keep(kept, det.dead_time)]
    return TagStream.from_relative(origin, kept, photons.channel)
