import math
from dataclasses import replace

import numpy as np
import pytest

from qclocksync.channel import (
    DETECTOR_JITTER,
    FIELD_WIDTH,
    AttackSpec,
    FiberLink,
    apply_attack,
    dispersion_for_width,
    fiber_delay_fs,
    ndc_configuration,
    propagate,
)
from qclocksync.timebase import NS, PS, US, TagStream

ZERO = FiberLink(base_delay=0, dispersion_sigma_fwd=0, dispersion_sigma_bwd=0)


def _stream(n, spacing=US):
    return TagStream.from_relative(10, np.arange(n, dtype=np.int64) * spacing, 2)


def test_zero_link_identity():
    s = _stream(1000)
    assert propagate(s, ZERO, "fwd", seed=1) == s
    assert propagate(s, ZERO, "bwd", seed=1) == s


def test_loss_binomial_band():
    n = 100_000
    out = propagate(_stream(n), replace(ZERO, loss_db_fwd=10.0), "fwd", seed=2)
    assert abs(len(out) - 0.1 * n) < 4 * math.sqrt(0.1 * 0.9 * n)


def test_delays_per_direction():
    link = replace(ZERO, base_delay=5 * US, asym_delay=3 * NS)
    s = _stream(10)
    fwd = propagate(s, link, "fwd").relative_fs(10) - s.relative_fs(10)
    bwd = propagate(s, link, "bwd").relative_fs(10) - s.relative_fs(10)
    assert set(fwd.tolist()) == {5 * US + 3 * NS}
    assert set(bwd.tolist()) == {5 * US}


def test_drift_grows_with_session_elapsed_time():
    link = replace(ZERO, drift_rate=1000.0)  # 1 ps per second
    s = TagStream.from_relative(110, np.array([0], np.int64))
    out = propagate(s, link, "fwd", session_start_s=100)
    assert out.relative_fs(110)[0] == 10 * PS


def test_dispersion_width_and_resort():
    sigma = 276 * PS
    s = _stream(50_000, spacing=10 * NS)
    out = propagate(s, replace(ZERO, dispersion_sigma_fwd=sigma), "fwd", seed=3)
    assert out.is_strictly_increasing() or np.all(np.diff(out.relative_fs(10)) >= 0)
    # spacing 10 ns >> sigma, so sorted order still pairs inputs with outputs
    sd = np.std((out.relative_fs(10) - s.relative_fs(10)).astype(float))
    assert sd == pytest.approx(sigma, rel=0.02)


def test_quadrature_decomposition():
    disp = dispersion_for_width(FIELD_WIDTH)
    assert disp == pytest.approx(math.sqrt(285**2 - 2 * 51**2) * PS)
    assert math.sqrt(disp**2 + 2 * DETECTOR_JITTER**2) == pytest.approx(FIELD_WIDTH)
    with pytest.raises(ValueError):
        dispersion_for_width(50 * PS)


def test_default_link_numbers():
    link = FiberLink()
    assert link.base_delay == fiber_delay_fs(7.0)
    assert 34.2 * US < link.base_delay < 34.4 * US
    # NDC width target closes 121 ps to about 132 ps
    ndc_width = math.sqrt(link.ndc_sigma**2 + 2 * DETECTOR_JITTER**2)
    assert ndc_width == pytest.approx(math.hypot(121, 52) * PS)


def test_attack_algebra():
    link = FiberLink()
    sym = apply_attack(link, AttackSpec("symmetric", NS))
    assert sym.one_way_delay("fwd") == link.one_way_delay("fwd") + NS
    assert sym.one_way_delay("bwd") == link.one_way_delay("bwd") + NS
    asym = apply_attack(link, AttackSpec("asymmetric", NS))
    assert asym.one_way_delay("fwd") - asym.one_way_delay("bwd") == NS
    assert apply_attack(link, AttackSpec("symmetric", 0)) == link
    with pytest.raises(ValueError):
        AttackSpec("sideways", NS)


def test_ndc_toggle():
    link = FiberLink()
    on = ndc_configuration(link, True)
    assert on.dispersion("fwd") == on.dispersion("bwd") == link.ndc_sigma
    assert ndc_configuration(on, False) == link


@pytest.mark.parametrize("kw", [dict(length_km=0), dict(loss_db_fwd=-1), dict(dispersion_sigma_bwd=-1)])
def test_link_validation(kw):
    with pytest.raises(ValueError):
        FiberLink(**kw)


def test_bad_direction():
    with pytest.raises(ValueError):
        propagate(_stream(3), ZERO, "up")
