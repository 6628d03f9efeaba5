"""Nonlocal coincidence identification and two-way offset extraction.

Per direction the pipeline is

1. :func:`coarse_offset` -- fold both tag streams modulo a period longer
   than twice the search range, bin them, and locate the cross-correlation
   peak with an FFT;
2. :func:`coincidence_histogram` -- greedy one-to-one nearest matching
   inside ``coarse +/- half_window`` and a histogram centred on ``coarse``;
3. :func:`fit_peak` -- Gaussian plus flat background, fitted by
   iteratively reweighted least squares (weights from the current model,
   which converges to the Poisson likelihood solution).

The two directions then give the clock offset through
:func:`extract_time_offset`.  Sign convention: ``t0 > 0`` means the remote
(LSO) clock reads ahead of the local (NTSC) one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from .timebase import NS, PS, US, TagStream, TimeTag, half_even

MIN_FIT_COUNT = 50
FIT_SIGNIFICANCE = 5.0
COARSE_SIGMAS = 6.0


class NoPeak(RuntimeError):
    """No significant cross-correlation peak inside the search range."""


class EmptyWindow(RuntimeError):
    """No tag pairs fell inside the matching window."""


class FitDiverged(RuntimeError):
    """The peak fit failed or found no significant peak."""


class CoarseLock(NamedTuple):
    offset: int  # fs, t_b - t_a
    significance: float  # (peak - background) / sqrt(background)
    peak: float
    background: float
    threshold: float


@dataclass(frozen=True, eq=False)
class CoincidenceResult:
    """Matched differences ``t_b - t_a`` around ``coarse`` and their histogram.

    ``centroid``/``sigma`` stay ``None`` until :func:`fit_peak`; ``method``
    records how they were obtained (``"gaussian"``, ``"exact"`` for a
    zero-width peak, ``"moments"`` for the flagged fallback).
    """

    coarse: int
    differences: np.ndarray  # int64 fs
    edges: np.ndarray  # fs
    counts: np.ndarray
    window: tuple[TimeTag, TimeTag]
    centroid: int | None = None
    sigma: float | None = None
    uncertainty: float | None = None
    method: str = "unfitted"

    @property
    def count(self) -> int:
        return int(self.differences.size)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def fitted(self) -> bool:
        return self.centroid is not None


def _common_origin(a: TagStream, b: TagStream) -> int:
    return int(min(a.seconds[0], b.seconds[0]))


def _overlap(ra: np.ndarray, rb: np.ndarray):
    lo, hi = max(ra[0], rb[0]), min(ra[-1], rb[-1])
    return lo, hi


def coarse_offset(a: TagStream, b: TagStream, bin_width: int = NS, search_range: int = 100 * US, false_alarm: float = 1e-6) -> CoarseLock:
    """Lag ``t_b - t_a`` of the strongest correlation within ``+/-search_range``.

    Both streams are folded modulo ``P = nbins * bin_width`` (``nbins`` a
    power of two, ``P > 2*search_range``) so the circular correlation of the
    folded histograms is exactly the lag histogram modulo ``P``.  The peak
    must exceed both ``mean + 6*sqrt(mean)`` and the Poisson level whose
    probability, summed over all searched lags, is ``false_alarm``.
    """
    if not len(a) or not len(b):
        raise NoPeak("empty stream")
    origin = _common_origin(a, b)
    ra, rb = a.relative_fs(origin), b.relative_fs(origin)
    lo, hi = _overlap(ra, rb)
    ra = ra[(ra >= lo - search_range) & (ra <= hi + search_range)]
    rb = rb[(rb >= lo - search_range) & (rb <= hi + search_range)]
    if not ra.size or not rb.size:
        raise NoPeak("streams do not overlap")

    half = math.ceil(search_range / bin_width)
    nbins = max(16, 1 << (2 * half + 2).bit_length())
    fa = np.bincount((ra // bin_width) % nbins, minlength=nbins).astype(float)
    fb = np.bincount((rb // bin_width) % nbins, minlength=nbins).astype(float)
    corr = np.fft.irfft(np.conj(np.fft.rfft(fa)) * np.fft.rfft(fb), nbins)
    corr = np.rint(corr)

    lags = np.arange(nbins)
    lags = np.where(lags >= nbins // 2, lags - nbins, lags)
    allowed = np.abs(lags) <= half
    idx = np.flatnonzero(allowed)
    k = int(idx[np.argmax(corr[idx])])
    peak = float(corr[k])
    background = (float(corr.sum()) - peak) / (nbins - 1)
    gauss_level = background + COARSE_SIGMAS * math.sqrt(max(background, 1e-12))
    poisson_level = float(stats.poisson.isf(false_alarm / idx.size, max(background, 1e-12)))
    threshold = max(gauss_level, poisson_level)
    significance = (peak - background) / math.sqrt(max(background, 1e-12))
    if peak <= threshold:
        raise NoPeak(f"peak {peak:.0f} below threshold {threshold:.1f}")

    # refine with the background-subtracted centroid of the peak bin and its neighbours
    nb = [(k + j) % nbins for j in (-1, 0, 1)]
    w = np.clip(corr[nb] - background, 0.0, None)
    frac = float(np.dot(w, [-1, 0, 1]) / w.sum()) if w.sum() > 0 else 0.0
    offset = round((lags[k] + frac) * bin_width)
    return CoarseLock(int(offset), significance, peak, background, threshold)


def _match(ra: np.ndarray, rb: np.ndarray, coarse: int, half_window: int):
    """Greedy one-to-one matching by ``|t_b - t_a - coarse|``; returns differences."""
    lo = np.searchsorted(rb, ra + (coarse - half_window), side="left")
    hi = np.searchsorted(rb, ra + (coarse + half_window), side="right")
    cnt = hi - lo
    total = int(cnt.sum())
    if total == 0:
        return np.zeros(0, np.int64)
    ia = np.repeat(np.arange(ra.size), cnt)
    starts = np.repeat(np.cumsum(cnt) - cnt, cnt)
    ib = np.repeat(lo, cnt) + (np.arange(total) - starts)
    d = rb[ib] - ra[ia]
    if np.unique(ia).size == total and np.unique(ib).size == total:
        return d
    # tie-break on pair sum keeps the result invariant under swapping a and b
    order = np.lexsort((ra[ia] + rb[ib], np.abs(d - coarse)))
    used_a, used_b, keep = set(), set(), []
    for i in order.tolist():
        x, y = int(ia[i]), int(ib[i])
        if x in used_a or y in used_b:
            continue
        used_a.add(x)
        used_b.add(y)
        keep.append(i)
    keep.sort()
    return d[np.asarray(keep, dtype=np.int64)]


def coincidence_histogram(a: TagStream, b: TagStream, coarse: int, half_window: int = 2 * NS, bin: int = 10 * PS) -> CoincidenceResult:
    """Match ``a`` to ``b`` around ``coarse`` and histogram ``t_b - t_a``.

    Bins are centred on ``coarse`` (an odd number of them) and each
    difference goes to the nearest centre with ties away from the middle,
    so the histogram of the swapped pair is the exact mirror image.
    """
    if not len(a) or not len(b):
        raise EmptyWindow("empty stream")
    origin = _common_origin(a, b)
    ra, rb = a.relative_fs(origin), b.relative_fs(origin)
    d = _match(ra, rb, int(coarse), int(half_window))
    if not d.size:
        raise EmptyWindow("no coincidences inside the matching window")
    half_bins = int(half_window // bin)
    r = d - int(coarse)
    j = np.sign(r) * ((np.abs(r) + bin // 2) // bin)
    j = np.clip(j, -half_bins, half_bins)
    counts = np.bincount(j + half_bins, minlength=2 * half_bins + 1)
    edges = coarse + (np.arange(-half_bins, half_bins + 2) - 0.5) * bin
    lo, hi = _overlap(ra, rb)
    window = (TimeTag.from_fs(origin * 10**15 + int(lo)), TimeTag.from_fs(origin * 10**15 + int(hi)))
    return CoincidenceResult(int(coarse), d, edges.astype(float), counts, window)


def _gauss(u, amp, mu, sig, bg):
    return amp * np.exp(-0.5 * ((u - mu) / sig) ** 2) + bg


def _poisson_refine(u, c, p, lower, upper):
    """Maximize the Poisson likelihood of the binned counts, starting from ``p``.

    The weighted fit above floors its weights, which costs efficiency when
    only a few counts fall in each bin; the likelihood step removes that.
    """

    def nll(q):
        amp, mu, sig, bg = q
        z = (u - mu) / sig
        e = np.exp(-0.5 * z * z)
        m = np.maximum(amp * e + bg, 1e-300)
        r = 1.0 - c / m
        grad = np.array([np.dot(r, e), np.dot(r, amp * e * z / sig), np.dot(r, amp * e * z * z / sig), r.sum()])
        return float(np.sum(m - c * np.log(m))), grad

    res = optimize.minimize(nll, p, jac=True, method="L-BFGS-B", bounds=list(zip(lower, upper)))
    if not np.all(np.isfinite(res.x)) or nll(res.x)[0] > nll(p)[0]:
        return p
    return res.x


def _fit_gaussian(u: np.ndarray, c: np.ndarray, bin_ps: float, half_ps: float):
    outer = np.abs(u) > 0.6 * half_ps
    bg0 = float(c[outer].mean()) if outer.any() else 0.0
    w = np.clip(c - bg0, 0.0, None)
    if w.sum() <= 0:
        raise FitDiverged("no excess over background")
    mu0 = float(np.dot(u, w) / w.sum())
    sig0 = float(np.sqrt(np.dot((u - mu0) ** 2, w) / w.sum()))
    sig0 = min(max(sig0, bin_ps), half_ps / 2)
    p = np.array([max(float(c.max()) - bg0, 1.0), mu0, sig0, bg0])
    lower = [0.0, -half_ps, 0.1 * bin_ps, 0.0]
    upper = [np.inf, half_ps, 2 * half_ps, np.inf]
    p = np.clip(p, np.array(lower) + 1e-9, upper)
    try:
        for _ in range(4):
            err = np.sqrt(np.maximum(_gauss(u, *p), 0.5))
            p, _cov = optimize.curve_fit(_gauss, u, c, p0=p, sigma=err, absolute_sigma=True, bounds=(lower, upper), method="trf")
    except (RuntimeError, ValueError) as exc:
        raise FitDiverged(str(exc)) from exc
    p = _poisson_refine(u, c, p, lower, upper)
    amp, mu, sig, bg = (float(v) for v in p)
    if not all(map(math.isfinite, (amp, mu, sig, bg))) or sig >= half_ps or abs(mu) >= half_ps:
        raise FitDiverged("fit left the matching window")
    area = amp * sig * math.sqrt(2 * math.pi) / bin_ps
    under = bg * 4 * sig / bin_ps
    if area <= 0 or area / math.sqrt(area + under) < FIT_SIGNIFICANCE:
        raise FitDiverged("peak not significant above background")
    return mu, sig


def fit_peak(h: CoincidenceResult, fallback: bool = False) -> CoincidenceResult:
    """Fitted centroid, width and centroid uncertainty ``sigma/sqrt(count)``.

    A peak narrower than one bin is reduced exactly (integer mean of the
    raw differences).  With ``fallback=True`` a failed fit returns the raw
    mean and SD flagged ``method="moments"`` instead of raising.
    """
    n = h.count
    d = h.differences
    if n < MIN_FIT_COUNT:
        raise FitDiverged(f"{n} coincidences, need {MIN_FIT_COUNT}")
    bin_fs = float(h.edges[1] - h.edges[0])
    if int(d.max() - d.min()) < bin_fs:
        centroid = half_even(int(d.sum()), n)
        sigma = float(np.std(d.astype(float)))
        return replace(h, centroid=centroid, sigma=sigma, uncertainty=sigma / math.sqrt(n), method="exact")

    c = h.counts.astype(float)
    u = (h.centers - h.coarse) / PS
    # fit a canonical orientation so mirrored histograms give mirrored results
    flip = tuple(c[::-1]) < tuple(c)
    if flip:
        c = c[::-1]
    try:
        mu, sig = _fit_gaussian(u, c, bin_fs / PS, (h.edges[-1] - h.coarse) / PS)
    except FitDiverged:
        if not fallback:
            raise
        centroid = half_even(int(d.sum()), n)
        sigma = float(np.std(d.astype(float), ddof=1))
        return replace(h, centroid=centroid, sigma=sigma, uncertainty=sigma / math.sqrt(n), method="moments")
    if np.array_equal(c, c[::-1]):
        mu = 0.0  # a mirror-symmetric histogram is centred on its axis by symmetry of the likelihood
    mu_fs = -mu * PS if flip else mu * PS
    sigma = sig * PS
    return replace(h, centroid=h.coarse + round(mu_fs), sigma=sigma, uncertainty=sigma / math.sqrt(n), method="gaussian")


def extract_time_offset(fwd: CoincidenceResult, bwd: CoincidenceResult) -> int:
    """``t0 = (centroid_fwd - centroid_bwd) / 2`` in fs, ties to even."""
    if not (fwd.fitted and bwd.fitted):
        raise ValueError("both directions must be fitted")
    return half_even(fwd.centroid - bwd.centroid, 2)


def offset_uncertainty(fwd: CoincidenceResult, bwd: CoincidenceResult) -> float:
    return 0.5 * math.hypot(fwd.uncertainty, bwd.uncertainty)


def precision_estimate(sigma: float, n: int) -> float:
    """Expected spread of a timing estimate from ``n`` pairs of width ``sigma``."""
    if n < 1 or not sigma > 0:
        raise ValueError("need n >= 1 and sigma > 0")
    return sigma / math.sqrt(n)


SYNC_CSV_HEADER = ("elapsed_s", "t0_fs", "sigma_fwd_fs", "sigma_bwd_fs", "n_fwd", "n_bwd")


@dataclass(eq=False)
class SyncSeries:
    """Per-window offsets; windows listed in ``gaps`` produced no value."""

    window_s: float
    elapsed_s: np.ndarray
    t0_fs: np.ndarray
    sigma_fwd: np.ndarray
    sigma_bwd: np.ndarray
    n_fwd: np.ndarray
    n_bwd: np.ndarray
    gaps: list = field(default_factory=list)  # (window index, reason)

    def __len__(self):
        return int(self.elapsed_s.size)

    @classmethod
    def from_rows(cls, window_s: float, rows, gaps=()) -> "SyncSeries":
        rows = list(rows)
        cols = list(zip(*rows)) if rows else [()] * 6
        return cls(
            float(window_s),
            np.asarray(cols[0], dtype=float),
            np.asarray(cols[1], dtype=np.int64),
            np.asarray(cols[2], dtype=float),
            np.asarray(cols[3], dtype=float),
            np.asarray(cols[4], dtype=np.int64),
            np.asarray(cols[5], dtype=np.int64),
            list(gaps),
        )

    @property
    def t0_seconds(self) -> np.ndarray:
        return self.t0_fs.astype(float) * 1e-15

    def window_index(self) -> np.ndarray:
        return np.rint(self.elapsed_s / self.window_s - 0.5).astype(np.int64)

    def longest_run(self) -> "SyncSeries":
        """Longest stretch of consecutive windows without a gap."""
        if len(self) < 2:
            return self
        idx = self.window_index()
        breaks = np.flatnonzero(np.diff(idx) != 1) + 1
        bounds = np.concatenate(([0], breaks, [idx.size]))
        k = int(np.argmax(np.diff(bounds)))
        sl = slice(int(bounds[k]), int(bounds[k + 1]))
        return SyncSeries(
            self.window_s, self.elapsed_s[sl], self.t0_fs[sl], self.sigma_fwd[sl], self.sigma_bwd[sl],
            self.n_fwd[sl], self.n_bwd[sl], list(self.gaps),
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SYNC_CSV_HEADER)
            for row in zip(
                self.elapsed_s.tolist(), self.t0_fs.tolist(), self.sigma_fwd.tolist(),
                self.sigma_bwd.tolist(), self.n_fwd.tolist(), self.n_bwd.tolist(),
            ):
                e, t0, sf, sb, nf, nb = row
                w.writerow((f"{e:.3f}", t0, round(sf), round(sb), nf, nb))

    @classmethod
    def read_csv(cls, path, window_s: float | None = None) -> "SyncSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if tuple(next(reader)) != SYNC_CSV_HEADER:
                raise ValueError(f"{path}: unexpected header")
            rows = [(float(r[0]), int(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5])) for r in reader if r]
        if window_s is None:
            window_s = rows[1][0] - rows[0][0] if len(rows) > 1 else 1.0
        return cls.from_rows(window_s, rows)


def write_histogram(path, h: CoincidenceResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_center_fs", "count"))
        for c, n in zip(h.centers.tolist(), h.counts.tolist()):
            w.writerow((round(c), n))
