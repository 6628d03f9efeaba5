"""Event-timer calibration: linearity scan and the six start/stop pairings.

Port biases are fitted to the six measured configuration means, then the
timers are simulated with those biases and about 8 ps of jitter per
measurement.
"""

from qclocksync.timebase import NS, PS
from qclocksync.timers import REPORTED_MEANS_NS, calibration_scan, fit_port_biases, reported_timers, six_config_homogeneity

biases, residuals = fit_port_biases()
print("fitted port biases (ps):", {k: round(v / PS, 1) for k, v in biases.items()})

t1, t2 = reported_timers()
scan = calibration_scan(t1, t2, [0, 50 * NS, 100 * NS, 150 * NS], pulses=200, seed=1)
for p in scan:
    print(f"preset {p.delay / NS:6.1f} ns: ET1 {p.mean1 / NS:8.3f} ns, ET2 {p.mean2 / NS:8.3f} ns")

h = six_config_homogeneity(t1, t2, pulses=200, seed=2)
for name, (m, sd) in h.configs.items():
    print(f"{name}: {m / NS:8.3f} ns +/- {sd / PS:4.1f} ps  (measured {REPORTED_MEANS_NS[name]:.3f} ns)")
print(f"mean cross-timer bias {h.mean_cross_bias / PS:.0f} ps, max-min spread {h.max_spread / PS:.0f} ps")
