"""Drift fitting and time-domain stability statistics.

Phase data ``x`` are in seconds at a uniform spacing ``tau0``; averaging
times are integer multiples ``m * tau0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .timebase import FS_PER_S


class RankDeficient(ValueError):
    """Fewer than three distinct abscissae for a quadratic fit."""


@dataclass(frozen=True, eq=False)
class DriftFit:
    """``x(t) = a0 + a1*t + (a2/2)*t**2``; a0 and residuals in fs."""

    a0: float
    a1: float
    a2: float
    t: np.ndarray
    residuals: np.ndarray

    @property
    def residual_sd(self) -> float:
        return float(np.std(self.residuals, ddof=3)) if self.residuals.size > 3 else 0.0

    def model(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a0 + FS_PER_S * (self.a1 * t + 0.5 * self.a2 * t * t)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("# a0_fs", repr(self.a0)))
            w.writerow(("# a1", repr(self.a1)))
            w.writerow(("# a2_per_s", repr(self.a2)))
            w.writerow(("# residual_sd_fs", repr(self.residual_sd)))
            w.writerow(("elapsed_s", "residual_fs"))
            for t, r in zip(self.t.tolist(), self.residuals.tolist()):
                w.writerow((f"{t:.3f}", f"{r:.1f}"))


def fit_quadratic(t, x_fs=None) -> DriftFit:
    """Ordinary least squares quadratic through ``x_fs(t)``.

    ``t`` may also be a :class:`~qclocksync.sync.SyncSeries`, in which case
    its window midpoints and offsets are used.
    """
    if x_fs is None:
        t, x_fs = t.elapsed_s, t.t0_fs
    t = np.asarray(t, dtype=float)
    x = np.asarray(x_fs, dtype=float)
    if np.unique(t).size < 3:
        raise RankDeficient("need at least three distinct times")
    # centred and scaled abscissa keeps the normal equations well conditioned
    c, s = t.mean(), max(np.ptp(t) / 2, 1e-300)
    u = (t - c) / s
    coef, *_ = np.linalg.lstsq(np.vander(u, 3, increasing=True), x, rcond=None)
    b0, b1, b2 = coef.tolist()
    # expand b0 + b1*(t-c)/s + b2*((t-c)/s)**2 back into powers of t
    q2 = b2 / s**2
    q1 = b1 / s - 2 * b2 * c / s**2
    q0 = b0 - b1 * c / s + b2 * c * c / s**2
    resid = x - (b0 + b1 * u + b2 * u * u)
    return DriftFit(q0, q1 / FS_PER_S, 2 * q2 / FS_PER_S, t, resid)


def _ms(taus, tau0: float) -> np.ndarray:
    m = np.rint(np.asarray(taus, dtype=float) / tau0).astype(np.int64)
    if np.any(m < 1) or not np.allclose(m * tau0, taus, rtol=1e-9, atol=0):
        raise ValueError("taus must be positive integer multiples of tau0")
    return m


def overlapping_adev(x, tau0: float, taus):
    """Overlapping Allan deviation.

    Returns ``(taus, adev, adev_err, n_terms)`` for the rows with at least
    three second-difference terms; ``adev_err = adev / sqrt(n/m)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    out = []
    for m in _ms(taus, tau0).tolist():
        terms = n - 2 * m
        if terms < 3:
            continue
        d2 = x[2 * m :] - 2 * x[m:-m] + x[: n - 2 * m]
        tau = m * tau0
        sigma = math.sqrt(float(np.dot(d2, d2)) / (2 * terms * tau * tau))
        out.append((tau, sigma, sigma / math.sqrt(n / m), terms))
    return _columns(out, 4)


def modified_adev(x, tau0: float, taus):
    """Modified Allan deviation; returns ``(taus, mdev, n_terms)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = []
    for m in _ms(taus, tau0).tolist():
        terms = n - 3 * m + 1
        if terms < 3:
            continue
        d2 = x[2 * m :] - 2 * x[m:-m] + x[: n - 2 * m]
        cs = np.concatenate(([0.0], np.cumsum(d2)))
        inner = cs[m:] - cs[:-m]
        tau = m * tau0
        out.append((tau, math.sqrt(float(np.dot(inner, inner)) / (2 * m * m * tau * tau * terms)), terms))
    return _columns(out, 3)


def tdev(x, tau0: float, taus):
    """Time deviation ``tau * mdev / sqrt(3)`` (units of ``x``)."""
    t, md, terms = modified_adev(x, tau0, taus)
    return t, t * md / math.sqrt(3.0), terms


def _columns(rows, k):
    if not rows:
        return tuple(np.zeros(0) for _ in range(k))
    return tuple(np.asarray(c) for c in zip(*rows))


def default_taus(n: int, tau0: float) -> np.ndarray:
    """Octave grid from ``tau0`` up to ``n*tau0/4``."""
    m, ms = 1, []
    while 4 * m <= n:
        ms.append(m)
        m *= 2
    return np.asarray(ms, dtype=float) * tau0


STABILITY_CSV_HEADER = ("tau_s", "adev", "adev_err", "tdev_fs", "n")


@dataclass(frozen=True, eq=False)
class StabilitySeries:
    tau: np.ndarray
    adev: np.ndarray
    adev_err: np.ndarray
    tdev_fs: np.ndarray
    n_samples: np.ndarray

    def __len__(self):
        return int(self.tau.size)

    def at(self, tau: float) -> dict:
        k = int(np.argmin(np.abs(self.tau - tau)))
        if not math.isclose(self.tau[k], tau, rel_tol=1e-9):
            raise KeyError(f"no row at tau={tau}")
        return {"tau": float(self.tau[k]), "adev": float(self.adev[k]), "adev_err": float(self.adev_err[k]),
                "tdev_fs": float(self.tdev_fs[k]), "n": int(self.n_samples[k])}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STABILITY_CSV_HEADER)
            for row in zip(self.tau.tolist(), self.adev.tolist(), self.adev_err.tolist(), self.tdev_fs.tolist(), self.n_samples.tolist()):
                t, a, e, td, n = row
                w.writerow((f"{t:g}", f"{a:.6e}", f"{e:.6e}", f"{td:.6e}", n))


def stability(x, tau0: float, taus=None) -> StabilitySeries:
    """ADEV and TDEV table for phase ``x`` (seconds); rows need both statistics."""
    x = np.asarray(x, dtype=float)
    if taus is None:
        taus = default_taus(x.size, tau0)
    ta, ad, ae, _ = overlapping_adev(x, tau0, taus)
    tt, td, nt = tdev(x, tau0, taus)
    keep = np.isin(ta, tt)
    sel = np.isin(tt, ta)
    return StabilitySeries(ta[keep], ad[keep], ae[keep], td[sel] * FS_PER_S, nt[sel].astype(np.int64))


def analyze(series, remove_drift: bool = True, taus=None):
    """Drift fit and stability table for a :class:`SyncSeries`.

    Stability uses the longest gap-free run; with ``remove_drift`` it is
    computed on the residuals of the quadratic fit.
    """
    run = series.longest_run()
    fit = fit_quadratic(run) if len(run) >= 3 else None
    if remove_drift and fit is not None:
        x = fit.residuals * 1e-15
    else:
        x = run.t0_fs.astype(float) * 1e-15
    return fit, stability(x, run.window_s, taus)


def summary_sd(values) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    return float(v.mean()), float(v.std(ddof=1))
