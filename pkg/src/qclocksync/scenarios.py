"""Named experiment presets, the key-value config grammar, and run/sweep.

Config files are flat ``key = value`` lines with dotted keys, ``#``
comments and blank lines, e.g.::

    base = field-test          # start from a registered scenario
    session.duration_s = 600
    link.ndc = true
    clock.lso.preset = rb      # preset first, then field overrides
    clock.lso.y0 = 1.2e-11

All durations are integer femtoseconds unless the key says otherwise
(``*_s`` seconds, ``*_hz`` hertz, ``*_km``, ``*_db``).  The echoed
``scenario.cfg`` of a run lists every key fully resolved and parses back
to the same scenario.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import AttackSpec, FiberLink, fiber_delay_fs
from .clocks import ClockModel, preset
from .session import run_session
from .source import DetectorModel
from .stats import analyze
from .sync import write_histogram
from .timebase import NS, PS, US, TimeTag
from .timers import EventTimer, calibration_scan, fit_port_biases, six_config_homogeneity

OUT_ENV = "QCLOCKSYNC_OUT"
CLOCK_NAMES = ("lso", "ntsc", "ref")


class ConfigError(ValueError):
    """Invalid scenario configuration (carries line/key context in the message)."""


@dataclass(frozen=True)
class SessionConfig:
    duration_s: int = 3600
    window_s: int = 30
    seed: int = 1
    start_s: int = 0
    remove_drift: bool = True
    clock_step_s: float = 0.1


@dataclass(frozen=True)
class SourceConfig:
    pair_rate_hz: float = 10_000.0
    correlation_sigma_fs: float = 1.0


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    magnitude_fs: int = 0
    start_s: int = 0


@dataclass(frozen=True)
class SyncConfig:
    coarse_bin_fs: int = NS
    fine_bin_fs: int = 10 * PS
    half_window_fs: int = 2 * NS
    search_range_fs: int = 100 * US
    false_alarm: float = 1e-6


@dataclass(frozen=True)
class CalibrationConfig:
    delay_start_fs: int = 0
    delay_stop_fs: int = 200 * NS
    delay_points: int = 21
    pulses: int = 200
    fixed_delay_fs: int = 100_147_000


def _default_clocks():
    return {"ntsc": preset("hmaser"), "lso": preset("rb"), "ref": preset("transferred_ref")}


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    description: str = ""
    kind: str = "session"
    session: SessionConfig = SessionConfig()
    source: SourceConfig = SourceConfig()
    detector: DetectorModel = DetectorModel()
    link: FiberLink = FiberLink()
    et1: EventTimer = EventTimer(freq_ref="ntsc", pps_ref="ntsc")
    et2: EventTimer = EventTimer(freq_ref="lso", pps_ref="lso")
    clocks: dict = field(default_factory=_default_clocks)
    attack: AttackConfig = AttackConfig()
    sync: SyncConfig = SyncConfig()
    calibration: CalibrationConfig = CalibrationConfig()

    def attack_spec(self) -> AttackSpec | None:
        if self.attack.kind == "none" or not self.attack.magnitude_fs:
            return None
        return AttackSpec(self.attack.kind, self.attack.magnitude_fs, TimeTag(self.attack.start_s))

    def validate(self) -> "Scenario":
        if self.kind not in ("session", "calibration"):
            raise ConfigError(f"scenario.kind: unknown kind {self.kind!r}")
        for et in ("et1", "et2"):
            t = getattr(self, et)
            for ref in ("freq_ref", "pps_ref"):
                if getattr(t, ref) not in self.clocks:
                    raise ConfigError(f"{et}.{ref}: unknown clock {getattr(t, ref)!r}")
        s = self.session
        if s.window_s < 1:
            raise ConfigError("session.window_s: must be at least 1 s")
        if self.kind == "session" and s.duration_s < 2 * s.window_s:
            raise ConfigError("session.duration_s: must cover at least two windows")
        if self.attack.kind not in ("none", "symmetric", "asymmetric"):
            raise ConfigError(f"attack.kind: unknown kind {self.attack.kind!r}")
        return self


# --- flat key-value representation -------------------------------------------

_SECTIONS = ("session", "source", "detector", "link", "et1", "et2", "attack", "sync", "calibration")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_items(sc: Scenario) -> list[tuple[str, str]]:
    items = [("scenario.name", sc.name), ("scenario.description", sc.description), ("scenario.kind", sc.kind)]
    for sec in _SECTIONS:
        obj = getattr(sc, sec)
        items += [(f"{sec}.{f.name}", _fmt(getattr(obj, f.name))) for f in fields(obj)]
    for name in sorted(sc.clocks):
        m = sc.clocks[name]
        items += [(f"clock.{name}.{f.name}", _fmt(getattr(m, f.name))) for f in fields(m)]
    return items


def to_config_text(sc: Scenario) -> str:
    head = f"# qclocksync {__version__} resolved scenario\n"
    return head + "".join(f"{k} = {v}\n" for k, v in to_items(sc))


def _coerce(raw: str, like, key: str):
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            v = float(raw) if any(c in raw for c in ".eE") else int(raw)
            if isinstance(v, float):
                if not v.is_integer():
                    raise ValueError(raw)
                v = int(v)
            return v
        if isinstance(like, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(like).__name__}") from None


def parse_lines(text: str, source: str = "<config>") -> list[tuple[str, str, str]]:
    """``(key, value, where)`` triples from config text."""
    out = []
    for no, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip() if not line.lstrip().startswith("scenario.description") else line.strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {line.strip()!r}")
        k, v = body.split("=", 1)
        out.append((k.strip(), v.strip(), f"{source}:{no}"))
    return out


def apply_items(sc: Scenario, items) -> Scenario:
    """Apply ``(key, value, where)`` overrides; clock presets go before clock fields."""
    items = list(items)
    items.sort(key=lambda it: 0 if it[0].endswith(".preset") else 1)
    sections = {sec: {} for sec in _SECTIONS}
    top = {}
    clocks = dict(sc.clocks)
    clock_fields = {}
    for key, raw, where in items:
        parts = key.split(".")
        ctx = f"{where}: {key}"
        if key == "base":
            continue
        if parts[0] == "scenario" and len(parts) == 2 and parts[1] in ("name", "description", "kind"):
            top[parts[1]] = raw
        elif parts[0] == "clock" and len(parts) == 3:
            name, attr = parts[1], parts[2]
            if attr == "preset":
                try:
                    clocks[name] = preset(raw)
                except ValueError as exc:
                    raise ConfigError(f"{ctx}: {exc}") from None
                continue
            names = {f.name for f in fields(ClockModel)}
            if attr not in names:
                raise ConfigError(f"{ctx}: unknown clock field {attr!r}")
            clock_fields.setdefault(name, {})[attr] = (raw, ctx)
        elif parts[0] in sections and len(parts) == 2:
            obj = getattr(sc, parts[0])
            names = {f.name: getattr(obj, f.name) for f in fields(obj)}
            if parts[1] not in names:
                raise ConfigError(f"{ctx}: unknown key")
            sections[parts[0]][parts[1]] = _coerce(raw, names[parts[1]], ctx)
        else:
            raise ConfigError(f"{ctx}: unknown key")
    for name, kv in clock_fields.items():
        base = clocks.get(name, ClockModel())
        upd = {a: _coerce(raw, getattr(base, a), ctx) for a, (raw, ctx) in kv.items()}
        try:
            clocks[name] = replace(base, **upd)
        except ValueError as exc:
            raise ConfigError(f"clock.{name}: {exc}") from None
    changes = dict(top)
    changes["clocks"] = clocks
    for sec, kv in sections.items():
        if kv:
            try:
                changes[sec] = replace(getattr(sc, sec), **kv)
            except ValueError as exc:
                raise ConfigError(f"{sec}: {exc}") from None
    return replace(sc, **changes).validate()


def parse_config(text: str, source: str = "<config>") -> Scenario:
    items = parse_lines(text, source)
    base = next((v for k, v, _ in items if k == "base"), None)
    sc = get_scenario(base) if base else Scenario()
    return apply_items(sc, items)


def parse_overrides(pairs) -> list[tuple[str, str, str]]:
    out = []
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"--set {p!r}: expected key=value")
        k, v = p.split("=", 1)
        out.append((k.strip(), v.strip(), "--set"))
    return out


# --- calibrated defaults ------------------------------------------------------

TARGET_COINCIDENCES_PER_S = 1440 / 30  # per direction


def backsolve_loss_db(target_rate: float, pair_rate: float, efficiency: float, max_rate: float) -> float:
    """Link loss giving ``target_rate`` coincidences/s per direction.

    Pairs are detected with ``efficiency`` on both arms, the remote arm also
    survives the link with probability ``T``, and each timer port keeps a
    Poisson input of rate ``r`` with probability ``1/(1 + r/max_rate)``:

        C = R e^2 T / ((1 + e R / M) (1 + e T R / M))

    solved for ``T``.
    """
    r, e, m, c = pair_rate, efficiency, max_rate, target_rate
    k1 = 1 + e * r / m
    denom = r * e * e - c * k1 * e * r / m
    if denom <= 0:
        raise ValueError("target rate unreachable with this source and timer")
    t = c * k1 / denom
    if not 0 < t <= 1:
        raise ValueError("target rate unreachable with this source and timer")
    return -10 * math.log10(t)


DEFAULT_LOSS_DB = round(backsolve_loss_db(TARGET_COINCIDENCES_PER_S, 10_000.0, 0.65, 6e3), 3)

_FIELD_LINK = FiberLink(loss_db_fwd=DEFAULT_LOSS_DB, loss_db_bwd=DEFAULT_LOSS_DB)
_LOCAL_LINK = FiberLink(
    length_km=0.003,
    base_delay=fiber_delay_fs(0.003),
    dispersion_sigma_fwd=0.0,
    dispersion_sigma_bwd=0.0,
    loss_db_fwd=DEFAULT_LOSS_DB,
    loss_db_bwd=DEFAULT_LOSS_DB,
)
# lso clock: Rb; its 1 PPS epoch sits 25 ns from the H-maser's
_CLOCKS = {"ntsc": preset("hmaser"), "lso": replace(preset("rb"), pps_offset=25.0 * NS), "ref": preset("transferred_ref")}

_WIRING = {
    1: ("ntsc", "ntsc"),
    2: ("ntsc", "lso"),
    3: ("lso", "ntsc"),
    4: ("lso", "lso"),
}


def _local_case(k: int) -> Scenario:
    f, p = _WIRING[k]
    what = {
        1: "both timers on the H-maser 10 MHz and 1 PPS",
        2: "shared H-maser 10 MHz, separate 1 PPS (H-maser / Rb)",
        3: "shared H-maser 1 PPS, separate 10 MHz (H-maser / Rb)",
        4: "timers fully referenced to H-maser and Rb respectively",
    }[k]
    return Scenario(
        name=f"local-case{k}",
        description=f"clock-wiring case {k}: 3 m link, {what}; ~190 s offset series",
        session=SessionConfig(duration_s=190, window_s=10, seed=100 + k),
        link=_LOCAL_LINK,
        et2=EventTimer(freq_ref=f, pps_ref=p),
        clocks=dict(_CLOCKS),
    )


def _precision_law() -> Scenario:
    return Scenario(
        name="precision-law",
        description="sigma/sqrt(N) check: ideal clocks and detectors, 132 ps width, 1 s windows (sweep source.pair_rate_hz)",
        session=SessionConfig(duration_s=400, window_s=1, seed=7, remove_drift=False),
        source=SourceConfig(pair_rate_hz=1440.0),
        detector=DetectorModel(efficiency=1.0, jitter_sigma=0.0, dead_time=0),
        link=replace(_FIELD_LINK, dispersion_sigma_fwd=132.0 * PS, dispersion_sigma_bwd=132.0 * PS, loss_db_fwd=0.0, loss_db_bwd=0.0),
        et1=EventTimer(freq_ref="ntsc", pps_ref="ntsc", meas_jitter_sigma=0.0, max_rate_per_port=1e9),
        et2=EventTimer(freq_ref="ntsc", pps_ref="ntsc", meas_jitter_sigma=0.0, max_rate_per_port=1e9),
        clocks=dict(_CLOCKS),
    )


def _et_calibration() -> Scenario:
    b, _ = fit_port_biases()
    return Scenario(
        name="et-calibration",
        description="timer calibration: linearity scan and six start/stop configurations, both timers on the H-maser",
        kind="calibration",
        session=SessionConfig(seed=42),
        et1=EventTimer(port_bias_a=b["1A"], port_bias_b=b["1B"], freq_ref="ntsc", pps_ref="ntsc"),
        et2=EventTimer(port_bias_a=b["2A"], port_bias_b=b["2B"], freq_ref="ntsc", pps_ref="ntsc"),
        clocks=dict(_CLOCKS),
    )


def _registry() -> dict:
    reg = {f"local-case{k}": (lambda k=k: _local_case(k)) for k in (1, 2, 3, 4)}
    reg["colocated"] = lambda: replace(
        _local_case(4),
        name="colocated",
        description="co-located drift and stability run: 3 m link, H-maser vs Rb, 2 h",
        session=SessionConfig(duration_s=7200, window_s=30, seed=11),
    )
    reg["field-test"] = lambda: Scenario(
        name="field-test",
        description="field offset series and TDEV: 7 km deployed fiber, H-maser vs Rb, no dispersion compensation",
        session=SessionConfig(duration_s=3600, window_s=30, seed=21),
        link=_FIELD_LINK,
        clocks=dict(_CLOCKS),
    )
    reg["field-test-ndc"] = lambda: Scenario(
        name="field-test-ndc",
        description="field TDEV: 7 km fiber with dispersion compensation (NDC), H-maser vs Rb",
        session=SessionConfig(duration_s=3600, window_s=30, seed=22),
        link=replace(_FIELD_LINK, ndc=True),
        clocks=dict(_CLOCKS),
    )
    reg["freq-transfer"] = lambda: Scenario(
        name="freq-transfer",
        description="frequency-transfer TDEV: NDC link, LSO timer on the fiber-transferred H-maser 10 MHz, Rb 1 PPS",
        session=SessionConfig(duration_s=7200, window_s=30, seed=23),
        link=replace(_FIELD_LINK, ndc=True),
        et2=EventTimer(freq_ref="ref", pps_ref="lso"),
        clocks=dict(_CLOCKS),
    )
    reg["et-calibration"] = _et_calibration
    reg["precision-law"] = _precision_law
    return reg


REGISTRY = _registry()


def list_scenarios() -> list[tuple[str, str]]:
    return [(name, REGISTRY[name]().description) for name in sorted(REGISTRY)]


def get_scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]().validate()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; try one of {sorted(REGISTRY)}") from None


def load(name_or_path, overrides=(), seed: int | None = None) -> Scenario:
    """Scenario from a registry name or config file, with ``key=value`` overrides."""
    p = Path(str(name_or_path))
    if str(name_or_path) in REGISTRY:
        sc = get_scenario(str(name_or_path))
    elif p.is_file():
        sc = parse_config(p.read_text(), str(p))
    else:
        raise ConfigError(f"{name_or_path}: neither a scenario name nor a config file")
    items = parse_overrides(overrides)
    if seed is not None:
        items.append(("session.seed", str(seed), "--seed"))
    return apply_items(sc, items) if items else sc


# --- running --------------------------------------------------------------------


@dataclass
class RunReport:
    scenario: Scenario
    out_dir: Path
    sync_csv: Path | None = None
    stability_csv: Path | None = None
    drift_csv: Path | None = None
    config_path: Path | None = None
    summary_path: Path | None = None
    extra: dict = field(default_factory=dict)
    gaps: list = field(default_factory=list)
    version: str = __version__
    result: object = None
    fit: object = None
    stability: object = None

    @property
    def seed(self) -> int:
        return self.scenario.session.seed

    @property
    def degraded(self) -> bool:
        return bool(self.gaps)


def default_out_dir(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / name


def _summary_lines(sc, result, fit, stab) -> list[str]:
    ser = result.series
    lines = [f"scenario: {sc.name}", f"description: {sc.description}", f"seed: {sc.session.seed}",
             f"windows: {len(ser)} valid, {len(ser.gaps)} gaps"]
    if len(ser):
        lines.append(f"coincidences per window: fwd {ser.n_fwd.mean():.1f}, bwd {ser.n_bwd.mean():.1f}")
        lines.append(f"coincidence width: fwd {ser.sigma_fwd.mean() / PS:.1f} ps, bwd {ser.sigma_bwd.mean() / PS:.1f} ps")
    if fit is not None:
        lines.append(f"drift fit: a1 = {fit.a1:.4e}, a2 = {fit.a2:.4e} /s, residual SD = {fit.residual_sd / PS:.1f} ps")
    for k in range(len(stab)):
        lines.append(f"tau {stab.tau[k]:8g} s  ADEV {stab.adev[k]:.3e}  TDEV {stab.tdev_fs[k] / PS:8.3f} ps")
    for w, why in ser.gaps:
        lines.append(f"gap: window {w}: {why}")
    return lines


def run(name_or_path, overrides=(), out_dir=None, seed: int | None = None, workers: int = 1, histograms: bool = False) -> RunReport:
    """Execute a scenario and write its CSVs, resolved config and summary."""
    sc = name_or_path if isinstance(name_or_path, Scenario) else load(name_or_path, overrides, seed)
    out = Path(out_dir) if out_dir is not None else default_out_dir(sc.name)
    out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(sc, out)
    rep.config_path = out / "scenario.cfg"
    rep.config_path.write_text(to_config_text(sc))
    if sc.kind == "calibration":
        return _run_calibration(sc, rep)

    result = run_session(sc, workers=workers, keep_results=histograms)
    ser = result.series
    rep.result, rep.gaps = result, list(ser.gaps)
    rep.sync_csv = out / "sync.csv"
    ser.write_csv(rep.sync_csv)
    fit, stab = analyze(ser, sc.session.remove_drift) if len(ser.longest_run()) >= 3 else (None, None)
    rep.fit, rep.stability = fit, stab
    if stab is not None:
        rep.stability_csv = out / "stability.csv"
        stab.write_csv(rep.stability_csv)
    if fit is not None:
        rep.drift_csv = out / "drift.csv"
        fit.write_csv(rep.drift_csv)
    if histograms:
        hdir = out / "histograms"
        hdir.mkdir(exist_ok=True)
        for w, (hf, hb) in enumerate(zip(result.fwd, result.bwd)):
            if hf is not None:
                write_histogram(hdir / f"w{w:05d}_fwd.csv", hf)
                write_histogram(hdir / f"w{w:05d}_bwd.csv", hb)
    rep.summary_path = out / "summary.txt"
    empty = type("E", (), {"__len__": lambda self: 0})()
    rep.summary_path.write_text("\n".join(_summary_lines(sc, result, fit, stab if stab is not None else empty)) + "\n")
    return rep


def calibration_delays(cal: CalibrationConfig) -> list[int]:
    return np.linspace(cal.delay_start_fs, cal.delay_stop_fs, cal.delay_points).round().astype(np.int64).tolist()


def _run_calibration(sc: Scenario, rep: RunReport) -> RunReport:
    cal = sc.calibration
    ss = np.random.SeedSequence(sc.session.seed)
    s1, s2 = ss.spawn(2)
    scan = calibration_scan(sc.et1, sc.et2, calibration_delays(cal), cal.pulses, np.random.default_rng(s1))
    homo = six_config_homogeneity(sc.et1, sc.et2, cal.fixed_delay_fs, cal.pulses, np.random.default_rng(s2))
    scan_path = rep.out_dir / "scan.csv"
    with open(scan_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("delay_ns", "et1_mean_ns", "et1_sd_ns", "et2_mean_ns", "et2_sd_ns"))
        for p in scan:
            w.writerow((f"{p.delay / NS:.6f}", f"{p.mean1 / NS:.6f}", f"{p.sd1 / NS:.6f}", f"{p.mean2 / NS:.6f}", f"{p.sd2 / NS:.6f}"))
    cal_path = rep.out_dir / "calibration.csv"
    homo.write_csv(cal_path)
    sep = float(np.mean([p.mean2 - p.mean1 for p in scan]))
    lines = [
        f"scenario: {sc.name}",
        f"inter-timer separation (ET2 - ET1): {sep / PS:.2f} ps",
        f"mean cross-timer bias: {homo.mean_cross_bias / PS:.1f} ps (reported: 893 ps)",
        f"max - min of configuration means: {homo.max_spread / PS:.1f} ps",
    ]
    lines += [f"{k}: {m / NS:.4f} ns +/- {s / PS:.1f} ps" for k, (m, s) in homo.configs.items()]
    rep.summary_path = rep.out_dir / "summary.txt"
    rep.summary_path.write_text("\n".join(lines) + "\n")
    rep.extra = {"scan": scan, "homogeneity": homo, "scan_csv": scan_path, "calibration_csv": cal_path, "separation": sep}
    return rep


SWEEP_CSV_HEADER = ("value", "windows", "n_fwd_mean", "n_bwd_mean", "t0_sd_fs", "tdev_tau0_fs")


def sweep(name_or_path, param: str, values, out_dir=None, overrides=(), workers: int = 1) -> tuple[list[RunReport], Path]:
    """One seeded run per value of ``param``; writes ``sweep.csv`` of summary metrics."""
    values = list(values)
    if not values:
        raise ConfigError("sweep: empty value list")
    base = name_or_path if isinstance(name_or_path, Scenario) else load(name_or_path, overrides)
    out = Path(out_dir) if out_dir is not None else default_out_dir(base.name + "-sweep")
    out.mkdir(parents=True, exist_ok=True)
    reports, rows = [], []
    for i, v in enumerate(values):
        sc = apply_items(base, [(param, str(v), f"--values[{i}]")])
        rep = run(sc, out_dir=out / f"{i:03d}_{v}", workers=workers)
        reports.append(rep)
        ser = rep.result.series
        resid = rep.fit.residuals if (rep.fit is not None and sc.session.remove_drift) else ser.t0_fs.astype(float)
        tdev0 = rep.stability.tdev_fs[0] if rep.stability is not None and len(rep.stability) else float("nan")
        rows.append((v, len(ser), ser.n_fwd.mean(), ser.n_bwd.mean(), float(np.std(resid, ddof=1)), tdev0))
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_CSV_HEADER)
        for v, n, nf, nb, sd, td in rows:
            w.writerow((v, n, f"{nf:.2f}", f"{nb:.2f}", f"{sd:.1f}", f"{td:.1f}"))
    return reports, path


__all__ = [
    "AttackConfig", "CalibrationConfig", "ConfigError", "RunReport", "Scenario", "SessionConfig", "SourceConfig",
    "SyncConfig", "apply_items", "backsolve_loss_db", "get_scenario", "list_scenarios", "load", "parse_config",
    "run", "sweep", "to_config_text",
]
