"""End-to-end synchronization session: clocks -> source -> channel -> timers -> sync.

Each analysis window is simulated independently from a seed derived from
the master seed and the window index, so windows can be generated in any
order or in parallel.  Analysis then runs in window order: the first
window (or any window after a loss of lock) is located with the FFT coarse
search, later ones reuse the previous fitted centroid.

Site layout: at NTSC the source's signal photon goes to D1 (timer 1 port A)
and its idler crosses the fiber to D2 (timer 2 port A); at LSO the signal
goes to D4 (timer 2 port B) and the idler returns to D3 (timer 1 port B).
Forward differences are ``t2 - t1`` and backward ``t3 - t4``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import apply_attack, propagate
from .clocks import simulate_clock
from .source import detect, generate_pairs
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
    offset_uncertainty,
)
from .timers import tag_events

log = logging.getLogger(__name__)

CHANNELS = {"t1": 1, "t2": 2, "t3": 3, "t4": 4}


@dataclass(eq=False)
class WindowTags:
    index: int
    t1: object
    t2: object
    t3: object
    t4: object


@dataclass(eq=False)
class SessionResult:
    series: SyncSeries
    fwd: list = field(default_factory=list)  # CoincidenceResult or None per window
    bwd: list = field(default_factory=list)
    uncertainty: list = field(default_factory=list)  # fs per valid window
    relocks: int = 0

    def mean_width(self, direction: str) -> float:
        return float(np.mean(self.series.sigma_fwd if direction == "fwd" else self.series.sigma_bwd))


def simulate_clocks(scenario):
    """Phase series for every clock some timer references (``None`` if ideal)."""
    s = scenario.session
    used = sorted({scenario.et1.freq_ref, scenario.et1.pps_ref, scenario.et2.freq_ref, scenario.et2.pps_ref})
    out = {}
    for i, name in enumerate(sorted(scenario.clocks)):
        if name not in used:
            continue
        model = scenario.clocks[name]
        if model == type(model)():
            out[name] = None
            continue
        seed = np.random.SeedSequence(s.seed, spawn_key=(0, i))
        out[name] = simulate_clock(model, s.duration_s + 2, s.clock_step_s, seed, start_s=s.start_s)
    return out


def _link_for(scenario, origin_s: int):
    link = scenario.link
    att = scenario.attack_spec()
    if att is not None and origin_s >= att.start.seconds:
        link = apply_attack(link, att)
    return link


def simulate_window(scenario, clocks: dict, w: int) -> WindowTags:
    """Tag streams t1..t4 for window ``w`` (true emission times in the window)."""
    s = scenario.session
    origin = s.start_s + w * s.window_s
    rng = [np.random.default_rng(c) for c in np.random.SeedSequence(s.seed, spawn_key=(1, w)).spawn(12)]
    src, det, link = scenario.source, scenario.detector, _link_for(scenario, origin)
    span = (origin, s.window_s)

    ntsc = generate_pairs(src.pair_rate_hz, s.window_s, src.correlation_sigma_fs, rng[0], origin)
    lso = generate_pairs(src.pair_rate_hz, s.window_s, src.correlation_sigma_fs, rng[1], origin)
    d1 = detect(ntsc.arm("signal", 1), det, rng[2], span)
    d2 = detect(propagate(ntsc.arm("idler", 2), link, "fwd", rng[3], s.start_s), det, rng[4], span)
    d4 = detect(lso.arm("signal", 4), det, rng[5], span)
    d3 = detect(propagate(lso.arm("idler", 3), link, "bwd", rng[6], s.start_s), det, rng[7], span)

    e1, e2 = scenario.et1, scenario.et2
    c1 = (clocks.get(e1.freq_ref), clocks.get(e1.pps_ref))
    c2 = (clocks.get(e2.freq_ref), clocks.get(e2.pps_ref))
    return WindowTags(
        w,
        tag_events(d1, e1, "A", *c1, seed=rng[8]),
        tag_events(d2, e2, "A", *c2, seed=rng[9]),
        tag_events(d3, e1, "B", *c1, seed=rng[10]),
        tag_events(d4, e2, "B", *c2, seed=rng[11]),
    )


def _direction(a, b, guess, cfg):
    """Fitted coincidence result; tries the tracked guess first, then a fresh FFT lock.

    Returns ``(result, relocked)``.
    """
    attempts = ([guess] if guess is not None else []) + [None]
    err = None
    for g in attempts:
        try:
            if g is None:
                g = coarse_offset(a, b, cfg.coarse_bin_fs, cfg.search_range_fs, cfg.false_alarm).offset
                fresh = True
            else:
                fresh = False
            h = coincidence_histogram(a, b, g, cfg.half_window_fs, cfg.fine_bin_fs)
            return fit_peak(h), fresh
        except (NoPeak, EmptyWindow, FitDiverged) as exc:
            err = exc
    raise err


def _ordered(job, n: int, workers: int):
    """``map(job, range(n))`` evaluated by a thread pool a few items ahead."""
    if workers <= 1:
        yield from map(job, range(n))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, n, 2 * workers):
            yield from pool.map(job, range(lo, min(n, lo + 2 * workers)))


def run_session(scenario, workers: int = 1, keep_results: bool = False) -> SessionResult:
    """Run every window of a session scenario and collect the offset series.

    Windows whose coincidences cannot be located or fitted become gaps;
    the session never aborts on them.
    """
    s = scenario.session
    n_windows = s.duration_s // s.window_s
    clocks = simulate_clocks(scenario)
    cfg = scenario.sync

    def job(w):
        return simulate_window(scenario, clocks, w)

    rows, gaps, fwds, bwds, unc = [], [], [], [], []
    guess = {"fwd": None, "bwd": None}
    relocks = 0
    for tags in _ordered(job, n_windows, workers):
        w = tags.index
        try:
            fwd, r1 = _direction(tags.t1, tags.t2, guess["fwd"], cfg)
            bwd, r2 = _direction(tags.t4, tags.t3, guess["bwd"], cfg)
        except (NoPeak, EmptyWindow, FitDiverged) as exc:
            log.info("window %d: %s", w, exc)
            gaps.append((w, f"{type(exc).__name__}: {exc}"))
            guess = {"fwd": None, "bwd": None}
            fwds.append(None)
            bwds.append(None)
            continue
        relocks += int(r1) + int(r2)
        guess = {"fwd": fwd.centroid, "bwd": bwd.centroid}
        t0 = extract_time_offset(fwd, bwd)
        rows.append(((w + 0.5) * s.window_s, t0, fwd.sigma, bwd.sigma, fwd.count, bwd.count))
        unc.append(offset_uncertainty(fwd, bwd))
        fwds.append(_light(fwd, keep_results))
        bwds.append(_light(bwd, keep_results))
    series = SyncSeries.from_rows(s.window_s, rows, gaps)
    return SessionResult(series, fwds, bwds, unc, relocks)


def _light(h: CoincidenceResult, keep: bool):
    return h if keep else None
