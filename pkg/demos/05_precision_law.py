"""How the offset precision scales with the number of coincidences.

Each window's t0 averages N pairs per direction with a 132 ps width.  The
window-to-window spread follows sigma/sqrt(2N): one 1/sqrt(N) from each
centroid, then the halving in t0 = (fwd - bwd)/2.
"""

import math

import numpy as np

from qclocksync.scenarios import sweep
from qclocksync.sync import precision_estimate
from qclocksync.timebase import PS

values = [100, 400, 1440, 6400]
reports, path = sweep("precision-law", "source.pair_rate_hz", values, out_dir="demo-out/precision",
                      overrides=["session.duration_s=200"])
for n, rep in zip(values, reports):
    s = rep.result.series
    sd = np.std(s.t0_fs.astype(float), ddof=1)
    sigma = s.sigma_fwd.mean()
    print(f"N={n:5d}  SD(t0) {sd / PS:6.2f} ps   sigma/sqrt(N) {precision_estimate(sigma, n) / PS:6.2f} ps   "
          f"sigma/sqrt(2N) {sigma / math.sqrt(2 * n) / PS:6.2f} ps")
print(f"combined table: {path}")
