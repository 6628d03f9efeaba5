import math

import numpy as np
import pytest

from qclocksync.source import DetectorModel, deadtime_keep, detect, generate_pairs
from qclocksync.timebase import NS, PS, TagStream


def test_pair_count_poisson_band():
    p = generate_pairs(1e6, 1.0, seed=1)
    assert abs(len(p) - 1e6) < 4 * math.sqrt(1e6)
    assert np.all(np.diff(p.emission) > 0)


def test_zero_correlation_identical_arms():
    p = generate_pairs(1e4, 0.5, correlation_sigma=0, seed=2)
    assert np.array_equal(p.signal, p.idler)
    assert p.arm("signal", 1) == p.arm("idler", 1)


def test_empty_duration():
    assert len(generate_pairs(1e4, 0, seed=3)) == 0


def test_correlation_spread():
    sigma = 10 * PS
    p = generate_pairs(2e5, 1.0, correlation_sigma=sigma, seed=4)
    sd = np.std((p.signal - p.idler).astype(float))
    assert sd == pytest.approx(sigma, rel=0.02)


def test_seed_determinism():
    a = generate_pairs(1e4, 1.0, 5.0, seed=7)
    b = generate_pairs(1e4, 1.0, 5.0, seed=7)
    assert np.array_equal(a.signal, b.signal) and np.array_equal(a.idler, b.idler)


def _photons(n, spacing=10 * 1000 * NS):
    return TagStream.from_relative(0, np.arange(n, dtype=np.int64) * spacing, 1)


def test_ideal_detector_is_identity():
    ph = _photons(1000)
    out = detect(ph, DetectorModel(efficiency=1.0, jitter_sigma=0, dark_rate=0, dead_time=0), seed=1)
    assert out == ph


def test_efficiency_binomial_band():
    n = 100_000
    out = detect(_photons(n), DetectorModel(efficiency=0.65, jitter_sigma=0, dead_time=0), seed=2)
    assert abs(len(out) - 0.65 * n) < 4 * math.sqrt(0.65 * 0.35 * n)


def test_kept_counts_binomial_chisquare():
    from scipy import stats

    n, e = 2000, 0.65
    det = DetectorModel(efficiency=e, jitter_sigma=0, dead_time=0)
    ph = _photons(n)
    counts = np.array([len(detect(ph, det, seed=s)) for s in range(100)])
    z = (counts - n * e) / math.sqrt(n * e * (1 - e))
    chi2 = float(np.sum(z * z))
    assert stats.chi2.sf(chi2, 100) > 0.01


def test_jitter_unbiased_and_output_sorted():
    n, sigma = 20_000, 51 * PS
    ph = _photons(n)
    out = detect(ph, DetectorModel(efficiency=1.0, jitter_sigma=sigma, dead_time=0), seed=3)
    assert out.is_strictly_increasing()
    shift = (out.relative_fs(0) - ph.relative_fs(0)).astype(float)
    assert abs(shift.mean()) < 4 * sigma / math.sqrt(n)


def test_two_detector_jitter_width():
    sigma = 51 * PS
    p = generate_pairs(2e4, 1.0, correlation_sigma=0, seed=5)
    det = DetectorModel(efficiency=1.0, jitter_sigma=sigma, dead_time=0)
    a = detect(p.arm("signal", 1), det, seed=6).relative_fs(0)
    b = detect(p.arm("idler", 2), det, seed=7).relative_fs(0)
    # with sparse pairs, sorted order matches between arms
    sd = np.std((b - a).astype(float))
    assert sd == pytest.approx(math.sqrt(2) * sigma, rel=0.03)


def test_dark_counts_rate():
    det = DetectorModel(efficiency=1.0, jitter_sigma=0, dark_rate=1e4, dead_time=0)
    out = detect(TagStream.empty(1), det, seed=8, span=(0, 2.0))
    assert abs(len(out) - 2e4) < 4 * math.sqrt(2e4)
    assert out.is_strictly_increasing()


def test_deadtime_keep_nonparalyzable():
    t = np.array([0, 5, 9, 10, 25, 26, 40], dtype=np.int64)
    assert t[deadtime_keep(t, 10)].tolist() == [0, 10, 25, 40]
    assert deadtime_keep(np.zeros(0, np.int64), 10).size == 0


def test_dead_time_spacing_holds():
    det = DetectorModel(efficiency=1.0, jitter_sigma=0, dark_rate=5e6, dead_time=20 * NS)
    out = detect(TagStream.empty(1), det, seed=9, span=(0, 0.01)).relative_fs(0)
    assert np.diff(out).min() >= 20 * NS


@pytest.mark.parametrize("kw", [dict(efficiency=1.5), dict(jitter_sigma=-1.0)])
def test_detector_validation(kw):
    with pytest.raises(ValueError):
        DetectorModel(**kw)


def test_pair_rate_validation():
    with pytest.raises(ValueError):
        generate_pairs(0, 1.0)
