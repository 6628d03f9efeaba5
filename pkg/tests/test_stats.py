import math

import numpy as np
import pytest

from qclocksync.stats import (
    RankDeficient,
    default_taus,
    fit_quadratic,
    modified_adev,
    overlapping_adev,
    stability,
    tdev,
)


def test_constant_and_linear_phase():
    x = np.full(200, 3.0e-9)
    _, a, _, _ = overlapping_adev(x, 1.0, [1, 2, 4])
    _, t, _ = tdev(x, 1.0, [1, 2, 4])
    assert np.all(a == 0) and np.all(t == 0)
    ramp = 1e-12 * np.arange(200.0)
    _, a, _, _ = overlapping_adev(ramp, 1.0, [1, 2, 4, 8])
    assert np.all(a < 1e-25)


def test_rows_without_enough_terms_dropped():
    x = np.random.default_rng(0).normal(size=20)
    t, _, _, n = overlapping_adev(x, 1.0, [1, 8, 9, 16])
    assert t.tolist() == [1.0, 8.0]
    assert np.all(n >= 3)
    with pytest.raises(ValueError):
        overlapping_adev(x, 1.0, [1.5])


def test_white_fm_ensemble():
    rng = np.random.default_rng(1)
    h, tau0, n = 2e-24, 1.0, 4096
    taus = [1.0, 4.0, 16.0, 64.0]
    est = []
    for _ in range(40):
        y = rng.normal(0, math.sqrt(h / (2 * tau0)), n)
        x = np.concatenate(([0.0], np.cumsum(y) * tau0))
        est.append(overlapping_adev(x, tau0, taus)[1])
    est = np.array(est)
    expected = np.sqrt(h / (2 * np.asarray(taus)))
    mean, se = est.mean(0), est.std(0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(mean - expected) < 3 * se + 0.01 * expected)
    ratio = mean[1:] / mean[:-1]
    np.testing.assert_allclose(ratio, 0.5, rtol=0.05)  # 4x tau -> 1/2


def test_white_fm_octave_ratio():
    rng = np.random.default_rng(2)
    y = rng.normal(0, 1e-12, 100_000)
    x = np.concatenate(([0.0], np.cumsum(y)))
    _, a, err, _ = overlapping_adev(x, 1.0, [8.0, 16.0])
    assert a[1] / a[0] == pytest.approx(1 / math.sqrt(2), abs=3 * math.hypot(err[0], err[1]) / a[0])


def test_white_pm_tdev_scaling():
    rng = np.random.default_rng(3)
    s, n = 10e-12, 2000
    taus = [1.0, 2.0, 4.0, 8.0, 16.0]
    est = np.array([tdev(rng.normal(0, s, n), 1.0, taus)[1] for _ in range(60)])
    var = est**2
    expected = s**2 / np.asarray(taus)
    mean, se = var.mean(0), var.std(0, ddof=1) / math.sqrt(len(var))
    assert np.all(np.abs(mean - expected) < 3 * se + 0.02 * expected)


def test_invariances_and_homogeneity():
    rng = np.random.default_rng(4)
    x = rng.normal(0, 1e-10, 500)
    taus = [1.0, 2.0, 4.0]
    a0 = overlapping_adev(x, 1.0, taus)[1]
    t0 = tdev(x, 1.0, taus)[1]
    np.testing.assert_allclose(overlapping_adev(x + 5e-9, 1.0, taus)[1], a0, rtol=1e-6)
    np.testing.assert_allclose(tdev(x + 5e-9, 1.0, taus)[1], t0, rtol=1e-6)
    np.testing.assert_allclose(overlapping_adev(x + 1e-11 * np.arange(500), 1.0, taus)[1], a0, rtol=1e-6)
    np.testing.assert_allclose(overlapping_adev(-3 * x, 1.0, taus)[1], 3 * a0, rtol=1e-12)
    np.testing.assert_allclose(tdev(-3 * x, 1.0, taus)[1], 3 * t0, rtol=1e-12)


def test_mdev_matches_direct_sum():
    rng = np.random.default_rng(5)
    x = rng.normal(size=60)
    m, tau0 = 3, 2.0
    n = x.size
    acc = 0.0
    for j in range(n - 3 * m + 1):
        acc += sum(x[i + 2 * m] - 2 * x[i + m] + x[i] for i in range(j, j + m)) ** 2
    direct = math.sqrt(acc / (2 * m**2 * (m * tau0) ** 2 * (n - 3 * m + 1)))
    assert modified_adev(x, tau0, [m * tau0])[1][0] == pytest.approx(direct)


def test_fit_quadratic_exact_and_orthogonal():
    t = np.arange(0, 3600, 30.0) + 15
    x = 2e6 + 1e-11 * 1e15 * t + 0.5 * 7.1e-11 * 1e15 * t**2
    fit = fit_quadratic(t, x)
    assert fit.a1 == pytest.approx(1e-11, rel=1e-9)
    assert fit.a2 == pytest.approx(7.1e-11, rel=1e-9)
    assert fit.a0 == pytest.approx(2e6, rel=1e-6)
    noisy = x + np.random.default_rng(6).normal(0, 1e5, t.size)
    f2 = fit_quadratic(t, noisy)
    v = np.vander(t / t.max(), 3)
    assert np.max(np.abs(v.T @ f2.residuals)) < 1e-6 * np.abs(f2.residuals).sum()
    assert abs(f2.residuals.mean()) < f2.residual_sd / math.sqrt(t.size)
    np.testing.assert_allclose(f2.model(t) + f2.residuals, noisy, rtol=1e-9)


def test_fit_quadratic_rank_deficient():
    with pytest.raises(RankDeficient):
        fit_quadratic([1.0, 1.0, 2.0], [0, 1, 2])


def test_default_taus():
    assert default_taus(240, 30).tolist() == [30, 60, 120, 240, 480, 960]
    assert default_taus(3, 1).size == 0


def test_stability_table_csv(tmp_path):
    x = np.random.default_rng(7).normal(0, 1e-11, 256)
    s = stability(x, 30.0)
    assert np.all(np.diff(s.tau) > 0) and np.all(s.n_samples >= 3)
    s.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "tau_s,adev,adev_err,tdev_fs,n"
    row = s.at(30.0)
    assert row["tdev_fs"] == pytest.approx(tdev(x, 30.0, [30.0])[1][0] * 1e15)
    with pytest.raises(KeyError):
        s.at(45.0)
