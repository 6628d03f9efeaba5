import numpy as np
import pytest

from qclocksync.scenarios import apply_items, get_scenario


def configured(name, **kv):
    """Registered scenario with dotted-key overrides (``link__ndc=True`` style keys)."""
    items = [(k.replace("__", "."), str(v), "test") for k, v in kv.items()]
    return apply_items(get_scenario(name), items)


NOISELESS = dict(
    detector__jitter_sigma=0,
    detector__dead_time=0,
    source__correlation_sigma_fs=0,
    link__dispersion_sigma_fwd=0,
    link__dispersion_sigma_bwd=0,
    link__loss_db_fwd=0,
    link__loss_db_bwd=0,
    et1__meas_jitter_sigma=0,
    et2__meas_jitter_sigma=0,
    et1__quantization=1,
    et2__quantization=1,
    et1__max_rate_per_port=1e9,
    et2__max_rate_per_port=1e9,
    source__pair_rate_hz=200,
    session__duration_s=20,
    session__window_s=5,
)


def noiseless(name="field-test", **kv):
    """Ideal detectors, timers and link; LSO clock reduced to a pure offset ``x0``."""
    items = dict(NOISELESS)
    items.update({"clock__lso__preset": "hmaser", "et2__freq_ref": "lso", "et2__pps_ref": "lso"})
    items.update(kv)
    return configured(name, **items)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
