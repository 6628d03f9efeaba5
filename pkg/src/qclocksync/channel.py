"""Bidirectional fiber link: delay, Gaussian dispersion broadening, loss,
asymmetry and delay attacks.

Dispersion is parametric: each photon picks up ``N(0, dispersion_sigma)``
for its direction.  Nonlocal dispersion cancellation is a configuration
that swaps the dispersion term for ``ndc_sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .timebase import FS_PER_S, PS, TagStream, TimeTag

LIGHT_SPEED = 299_792_458.0  # m/s
GROUP_INDEX = 1.468

DETECTOR_JITTER = 51 * PS
FIELD_WIDTH = 285 * PS  # measured coincidence width without compensation
NDC_EXPECTED_WIDTH = 121 * PS
NDC_RESIDUAL = 52 * PS  # closes 121 ps -> ~132 ps measured


def fiber_delay_fs(length_km: float, group_index: float = GROUP_INDEX) -> int:
    return round(length_km * 1e3 * group_index / LIGHT_SPEED * FS_PER_S)


def dispersion_for_width(width: float, jitter: float = DETECTOR_JITTER, residual: float = 0.0) -> float:
    """Per-direction dispersion sigma giving total coincidence ``width``.

    Two detectors contribute ``jitter`` each in quadrature; ``residual`` is
    extra broadening added on top of ``width``.
    """
    var = width**2 + residual**2 - 2 * jitter**2
    if var < 0:
        raise ValueError("width is narrower than the detector jitter allows")
    return math.sqrt(var)


@dataclass(frozen=True)
class FiberLink:
    length_km: float = 7.0
    base_delay: int = fiber_delay_fs(7.0)  # fs, one way
    dispersion_sigma_fwd: float = dispersion_for_width(FIELD_WIDTH)  # fs
    dispersion_sigma_bwd: float = dispersion_for_width(FIELD_WIDTH)
    loss_db_fwd: float = 0.0
    loss_db_bwd: float = 0.0
    asym_delay: int = 0  # fs, forward only
    drift_rate: float = 0.0  # fs/s, both directions
    ndc: bool = False
    ndc_sigma: float = dispersion_for_width(NDC_EXPECTED_WIDTH, residual=NDC_RESIDUAL)

    def __post_init__(self):
        if self.length_km <= 0:
            raise ValueError("length_km must be positive")
        if min(self.loss_db_fwd, self.loss_db_bwd) < 0:
            raise ValueError("loss must be non-negative")
        if min(self.dispersion_sigma_fwd, self.dispersion_sigma_bwd, self.ndc_sigma) < 0:
            raise ValueError("dispersion sigmas must be non-negative")

    def dispersion(self, direction: str) -> float:
        if self.ndc:
            return self.ndc_sigma
        return self.dispersion_sigma_fwd if direction == "fwd" else self.dispersion_sigma_bwd

    def loss_db(self, direction: str) -> float:
        return self.loss_db_fwd if direction == "fwd" else self.loss_db_bwd

    def one_way_delay(self, direction: str, elapsed_s: float = 0.0) -> float:
        d = self.base_delay + self.drift_rate * elapsed_s
        return d + self.asym_delay if direction == "fwd" else d


@dataclass(frozen=True)
class AttackSpec:
    kind: Literal["symmetric", "asymmetric"]
    magnitude: int  # fs
    start: TimeTag = TimeTag(0)

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown attack kind {self.kind!r}")


def survival(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def propagate(stream: TagStream, link: FiberLink, direction: str, seed=None, session_start_s: int = 0) -> TagStream:
    """Send a sorted photon stream through one direction of the link.

    The symmetric drift term grows with time elapsed since ``session_start_s``.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError("direction must be 'fwd' or 'bwd'")
    rng = np.random.default_rng(seed)
    if not len(stream):
        return TagStream.empty(stream.channel)
    origin = int(stream.seconds[0])
    rel = stream.relative_fs(origin)
    p = survival(link.loss_db(direction))
    if p < 1:
        rel = rel[rng.random(rel.size) < p]
    delay = link.base_delay + (link.asym_delay if direction == "fwd" else 0)
    out = rel + int(delay)
    if link.drift_rate:
        elapsed = (origin - session_start_s) + rel / FS_PER_S
        out = out + np.rint(link.drift_rate * elapsed).astype(np.int64)
    sigma = link.dispersion(direction)
    if sigma > 0 and out.size:
        out = out + np.rint(rng.normal(0.0, sigma, out.size)).astype(np.int64)
    out.sort(kind="stable")
    return TagStream.from_relative(origin, out, stream.channel)


def apply_attack(link: FiberLink, attack: AttackSpec) -> FiberLink:
    if attack.kind == "symmetric":
        return replace(link, base_delay=link.base_delay + int(attack.magnitude))
    return replace(link, asym_delay=link.asym_delay + int(attack.magnitude))


def ndc_configuration(link: FiberLink, enabled: bool) -> FiberLink:
    """Link with nonlocal dispersion cancellation switched on or off."""
    return replace(link, ndc=bool(enabled))
