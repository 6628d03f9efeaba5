"""Exact time representation shared by every stage of the pipeline.

Scalar instants are :class:`TimeTag` values (whole seconds plus integer
femtoseconds); durations are plain Python ints in femtoseconds.  Streams of
tags are held as two parallel ``int64`` arrays so that arithmetic inside an
analysis window can be done in ``int64`` femtoseconds relative to a whole
second origin without rounding.

Tag files
---------
Binary: little-endian packed records ``(channel: u8, seconds: i64, frac_fs: u64)``,
17 bytes per record, no header.  CSV: header ``channel,seconds,frac_fs`` then
one record per line.  Both formats are lossless.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

FS_PER_S = 10**15
PS = 10**3
NS = 10**6
US = 10**9

# Largest |Duration| accepted; ~11.6 days, far beyond any session length.
MAX_DURATION_FS = 10**6 * FS_PER_S

_INT64_MAX = 2**63 - 1

TAG_DTYPE = np.dtype([("channel", "<u1"), ("seconds", "<i8"), ("frac_fs", "<u8")])
CSV_HEADER = ("channel", "seconds", "frac_fs")


@dataclass(frozen=True, order=True)
class TimeTag:
    """An instant as ``seconds * 10**15 + frac_fs`` femtoseconds."""

    seconds: int
    frac_fs: int = 0

    def __post_init__(self):
        if not 0 <= self.frac_fs < FS_PER_S:
            raise ValueError(f"frac_fs out of range: {self.frac_fs}")
        if abs(self.seconds) > _INT64_MAX:
            raise OverflowError("seconds does not fit in int64")

    @classmethod
    def from_fs(cls, total_fs: int) -> "TimeTag":
        s, f = divmod(int(total_fs), FS_PER_S)
        return cls(s, f)

    @classmethod
    def from_seconds(cls, t: float | Fraction | int) -> "TimeTag":
        """Nearest tag to ``t`` seconds (exact for ints and Fractions)."""
        return cls.from_fs(round(Fraction(t) * FS_PER_S))

    def total_fs(self) -> int:
        return self.seconds * FS_PER_S + self.frac_fs

    def __float__(self) -> float:
        return self.seconds + self.frac_fs / FS_PER_S


def _check_duration(d: int) -> int:
    if abs(d) > MAX_DURATION_FS:
        raise OverflowError(f"duration {d} fs exceeds the representable span")
    return d


def tag_sub(a: TimeTag, b: TimeTag) -> int:
    """Exact ``a - b`` in femtoseconds."""
    return _check_duration((a.seconds - b.seconds) * FS_PER_S + (a.frac_fs - b.frac_fs))


def tag_add(a: TimeTag, d: int) -> TimeTag:
    """``a + d`` with ``d`` in femtoseconds, normalized so frac stays in range."""
    _check_duration(int(d))
    return TimeTag.from_fs(a.total_fs() + int(d))


def half_even(num: int, den: int) -> int:
    """``num / den`` rounded to the nearest integer, ties to even."""
    return round(Fraction(num, den))


class TagStream:
    """Sorted timestamps of one channel, stored as (seconds, frac_fs) arrays.

    The same container carries true-time detection streams (before an event
    timer) and local-clock tag streams (after one); ``channel`` identifies
    the detector/port.
    """

    __slots__ = ("seconds", "frac_fs", "channel")

    def __init__(self, seconds, frac_fs, channel: int = 0):
        seconds = np.asarray(seconds, dtype=np.int64)
        frac_fs = np.asarray(frac_fs, dtype=np.int64)
        if seconds.shape != frac_fs.shape or seconds.ndim != 1:
            raise ValueError("seconds and frac_fs must be 1-D arrays of equal length")
        if frac_fs.size and (frac_fs.min() < 0 or frac_fs.max() >= FS_PER_S):
            raise ValueError("frac_fs out of range")
        self.seconds = seconds
        self.frac_fs = frac_fs
        self.channel = int(channel)

    @classmethod
    def empty(cls, channel: int = 0) -> "TagStream":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), channel)

    @classmethod
    def from_relative(cls, origin_s: int, rel_fs, channel: int = 0) -> "TagStream":
        """Build from int64 offsets (fs) relative to the whole second ``origin_s``."""
        rel_fs = np.asarray(rel_fs, dtype=np.int64)
        s, f = np.divmod(rel_fs, FS_PER_S)
        return cls(s + int(origin_s), f, channel)

    @classmethod
    def from_tags(cls, tags: Iterable[TimeTag], channel: int = 0) -> "TagStream":
        tags = list(tags)
        return cls([t.seconds for t in tags], [t.frac_fs for t in tags], channel)

    def relative_fs(self, origin_s: int) -> np.ndarray:
        """int64 femtoseconds relative to ``origin_s``; raises if that overflows."""
        ds = self.seconds - int(origin_s)
        if ds.size and np.abs(ds).max() >= _INT64_MAX // FS_PER_S:
            raise OverflowError("stream span too large for int64 relative offsets")
        return ds * FS_PER_S + self.frac_fs

    def __len__(self) -> int:
        return int(self.seconds.size)

    def __getitem__(self, i) -> TimeTag | "TagStream":
        if isinstance(i, (int, np.integer)):
            return TimeTag(int(self.seconds[i]), int(self.frac_fs[i]))
        return TagStream(self.seconds[i], self.frac_fs[i], self.channel)

    def __iter__(self):
        for s, f in zip(self.seconds.tolist(), self.frac_fs.tolist()):
            yield TimeTag(s, f)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.channel == other.channel
            and np.array_equal(self.seconds, other.seconds)
            and np.array_equal(self.frac_fs, other.frac_fs)
        )

    def __repr__(self) -> str:
        return f"TagStream(channel={self.channel}, n={len(self)})"

    def order(self) -> np.ndarray:
        return np.lexsort((self.frac_fs, self.seconds))

    def sorted(self) -> "TagStream":
        idx = self.order()
        return TagStream(self.seconds[idx], self.frac_fs[idx], self.channel)

    def is_strictly_increasing(self) -> bool:
        if len(self) < 2:
            return True
        ds = np.diff(self.seconds)
        df = np.diff(self.frac_fs)
        return bool(np.all((ds > 0) | ((ds == 0) & (df > 0))))


# --- tag files -------------------------------------------------------------


def _records(streams: Iterable[TagStream]) -> np.ndarray:
    parts = []
    for st in streams:
        rec = np.empty(len(st), dtype=TAG_DTYPE)
        rec["channel"] = st.channel
        rec["seconds"] = st.seconds
        rec["frac_fs"] = st.frac_fs
        parts.append(rec)
    if not parts:
        return np.empty(0, dtype=TAG_DTYPE)
    rec = np.concatenate(parts)
    return rec[np.lexsort((rec["channel"], rec["frac_fs"], rec["seconds"]))]


def _split(rec: np.ndarray) -> dict[int, TagStream]:
    out = {}
    for ch in np.unique(rec["channel"]).tolist():
        sel = rec[rec["channel"] == ch]
        out[ch] = TagStream(sel["seconds"].astype(np.int64), sel["frac_fs"].astype(np.int64), ch)
    return out


def write_tags(path, streams: Iterable[TagStream]) -> None:
    """Write streams to ``path``; ``.csv`` selects the text variant."""
    path = Path(path)
    rec = _records(streams)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for ch, s, f in zip(rec["channel"].tolist(), rec["seconds"].tolist(), rec["frac_fs"].tolist()):
                w.writerow((ch, s, f))
    else:
        path.write_bytes(rec.tobytes())


def read_tags(path) -> dict[int, TagStream]:
    """Read a tag file back into per-channel streams (time ordered)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CSV_HEADER:
                raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
            rows = [tuple(int(v) for v in row) for row in reader if row]
        rec = np.array(rows, dtype=TAG_DTYPE) if rows else np.empty(0, dtype=TAG_DTYPE)
    else:
        raw = path.read_bytes()
        if len(raw) % TAG_DTYPE.itemsize:
            raise ValueError(f"{path}: truncated record")
        rec = np.frombuffer(raw, dtype=TAG_DTYPE)
    return _split(rec)
