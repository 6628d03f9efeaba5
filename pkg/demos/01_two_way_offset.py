"""Two-way offset extraction on an ideal link, and why symmetric delays cancel.

Both sites run a pair source.  The forward coincidence peak sits at
``delay + t0`` and the backward one at ``delay - t0``, so half their
difference is the clock offset whatever the fiber delay is.  The script
runs a noiseless session with the LSO clock 10 ns ahead, then repeats it
with a symmetric and an asymmetric delay attack.
"""

from qclocksync.scenarios import apply_items, get_scenario
from qclocksync.session import run_session
from qclocksync.timebase import NS, US

ideal = {
    "detector.jitter_sigma": 0, "detector.dead_time": 0, "source.correlation_sigma_fs": 0,
    "link.dispersion_sigma_fwd": 0, "link.dispersion_sigma_bwd": 0, "link.loss_db_fwd": 0, "link.loss_db_bwd": 0,
    "et1.meas_jitter_sigma": 0, "et2.meas_jitter_sigma": 0, "et1.quantization": 1, "et2.quantization": 1,
    "et1.max_rate_per_port": 1e9, "et2.max_rate_per_port": 1e9,
    "source.pair_rate_hz": 200, "session.duration_s": 20, "session.window_s": 5,
    "clock.lso.preset": "hmaser", "clock.lso.x0": 10 * NS,
}


def scenario(**extra):
    kv = dict(ideal, **extra)
    return apply_items(get_scenario("field-test"), [(k, str(v), "demo") for k, v in kv.items()])


for label, extra in [
    ("no attack", {}),
    ("symmetric +1 us", {"attack.kind": "symmetric", "attack.magnitude_fs": US}),
    ("asymmetric +1 ns", {"attack.kind": "asymmetric", "attack.magnitude_fs": NS}),
]:
    series = run_session(scenario(**extra)).series
    print(f"{label:18s} t0 per window (ns): {[t / NS for t in series.t0_fs.tolist()]}")

print("The symmetric attack leaves t0 untouched; the asymmetric one shifts it by half its size.")
