"""Static-to-dynamic views of a dataset: frequency, time spent, sequences, occupancy grid.

Location ``l`` occupies column ``l - 1`` of the N x L matrices.  Cells of the
time-oriented matrix hold location ids directly, with 0 meaning "absent".
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import BinOutOfRange
from .ingest import Dataset

DEFAULT_SESSION_TIMEOUT = 7200
DEFAULT_BIN_SECONDS = 3600


@dataclass(frozen=True)
class TimeBinning:
    start: int
    bin_seconds: int
    n_bins: int

    def __post_init__(self):
        if self.bin_seconds < 1 or self.n_bins < 1:
            raise ValueError("bin_seconds and n_bins must be positive")

    @property
    def end(self) -> int:
        return self.start + self.bin_seconds * self.n_bins

    def index(self, t: int) -> int | None:
        i = (t - self.start) // self.bin_seconds
        return i if 0 <= i < self.n_bins else None

    def to_dict(self) -> dict:
        return {"start": self.start, "bin_seconds": self.bin_seconds, "n_bins": self.n_bins}

    @classmethod
    def covering(cls, d: Dataset, bin_seconds: int = DEFAULT_BIN_SECONDS) -> "TimeBinning":
        """Bins aligned to multiples of ``bin_seconds`` spanning every record."""
        t0, t1 = d.time_span()
        start = (t0 // bin_seconds) * bin_seconds
        n = max(1, math.ceil((t1 + 1 - start) / bin_seconds))
        return cls(start, bin_seconds, n)


@dataclass(frozen=True)
class StayInterval:
    obj: int
    location_id: int
    t_start: int
    t_end: int


@dataclass
class VisitFrequencyMatrix:
    counts: np.ndarray  # N x L int


@dataclass
class TimeSpentMatrix:
    seconds: np.ndarray  # N x L float


@dataclass
class TimeOrientedMatrix:
    cells: np.ndarray  # N x T int
    binning: TimeBinning

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


def derive_stays(
    d: Dataset,
    session_timeout: int = DEFAULT_SESSION_TIMEOUT,
    window_end: int | None = None,
) -> list[StayInterval]:
    """Turn point check-ins into stays.

    Each record holds its location until the object's next record or until
    ``session_timeout`` seconds pass, whichever comes first.  Ends are capped
    at ``window_end`` when given.
    """
    if session_timeout <= 0:
        raise ValueError("session_timeout must be positive")
    by_obj: dict[int, list] = defaultdict(list)
    for r in d.records:
        by_obj[d.objects[r.object_id]].append(r)
    stays = []
    for obj in sorted(by_obj):
        recs = by_obj[obj]
        for k, r in enumerate(recs):
            end = r.timestamp + session_timeout
            if k + 1 < len(recs):
                end = min(end, recs[k + 1].timestamp)
            if window_end is not None:
                end = min(end, window_end)
            end = max(end, r.timestamp)
            stays.append(StayInterval(obj, r.location_id, r.timestamp, end))
    return stays


def build_frequency_matrix(d: Dataset, window: tuple[int, int] | None = None) -> VisitFrequencyMatrix:
    """Raw record counts per (object, location) with ``t0 <= t < t1``."""
    counts = np.zeros((d.n_objects, d.n_locations), dtype=np.int64)
    if window is not None and window[1] <= window[0]:
        raise ValueError("window must satisfy t1 > t0")
    for r in d.records:
        if window is None or window[0] <= r.timestamp < window[1]:
            counts[d.objects[r.object_id], r.location_id - 1] += 1
    return VisitFrequencyMatrix(counts)


def build_timespent_matrix(
    stays: list[StayInterval],
    window: tuple[int, int] | None,
    n_objects: int,
    n_locations: int,
) -> TimeSpentMatrix:
    seconds = np.zeros((n_objects, n_locations), dtype=np.float64)
    for s in stays:
        lo, hi = s.t_start, s.t_end
        if window is not None:
            lo, hi = max(lo, window[0]), min(hi, window[1])
        if hi > lo:
            seconds[s.obj, s.location_id - 1] += hi - lo
    return TimeSpentMatrix(seconds)


def build_sequence_vectors(d: Dataset) -> dict[str, list[int]]:
    seqs: dict[str, list[int]] = {oid: [] for oid in d.object_ids}
    for r in d.records:
        seq = seqs[r.object_id]
        if not seq or seq[-1] != r.location_id:
            seq.append(r.location_id)
    return seqs


def build_time_oriented_matrix(
    stays: list[StayInterval],
    binning: TimeBinning,
    n_objects: int,
) -> TimeOrientedMatrix:
    """Fill each (object, bin) with the location holding the most overlap.

    Overlap is summed over all of the object's stays at a location within the
    bin.  Ties go to the location whose stay started first.
    """
    # (obj, bin) -> {location: [overlap, earliest start]}
    acc: dict[tuple[int, int], dict[int, list[int]]] = defaultdict(dict)
    bs = binning.bin_seconds
    for s in stays:
        lo, hi = max(s.t_start, binning.start), min(s.t_end, binning.end)
        if hi <= lo:
            continue
        first = (lo - binning.start) // bs
        last = (hi - 1 - binning.start) // bs
        for b in range(first, last + 1):
            b0 = binning.start + b * bs
            ov = min(hi, b0 + bs) - max(lo, b0)
            if ov <= 0:
                continue
            slot = acc[(s.obj, b)].setdefault(s.location_id, [0, s.t_start])
            slot[0] += ov
            slot[1] = min(slot[1], s.t_start)
    cells = np.zeros((n_objects, binning.n_bins), dtype=np.int64)
    for (obj, b), locs in acc.items():
        best = min(locs.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))
        cells[obj, b] = best[0]
    return TimeOrientedMatrix(cells, binning)


def decompose_supervised(tom: TimeOrientedMatrix, target_bin: int) -> tuple[np.ndarray, np.ndarray]:
    """Split the grid into history columns ``[0, target_bin)`` and the label column."""
    n_bins = tom.cells.shape[1]
    if not 1 <= target_bin < n_bins:
        raise BinOutOfRange(f"target_bin {target_bin} outside [1, {n_bins})")
    return tom.cells[:, :target_bin].copy(), tom.cells[:, target_bin].copy()


def build_all(
    d: Dataset,
    binning: TimeBinning,
    session_timeout: int = DEFAULT_SESSION_TIMEOUT,
) -> tuple[VisitFrequencyMatrix, TimeSpentMatrix, TimeOrientedMatrix, list[StayInterval]]:
    """Frequency, time-spent and occupancy views over the binning's window."""
    window = (binning.start, binning.end)
    stays = derive_stays(d, session_timeout, window_end=binning.end)
    freq = build_frequency_matrix(d, window)
    spent = build_timespent_matrix(stays, window, d.n_objects, d.n_locations)
    tom = build_time_oriented_matrix(stays, binning, d.n_objects)
    return freq, spent, tom, stays


# -- serialization -----------------------------------------------------------


def matrix_to_csv(data: np.ndarray, row_labels: list[str], col_labels: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object", *col_labels])
    for label, row in zip(row_labels, data):
        w.writerow([label, *(_cell(v) for v in row)])
    return buf.getvalue()


def matrix_envelope(
    kind: str,
    data: np.ndarray,
    row_labels: list[str],
    col_labels: list[str],
    binning: TimeBinning | None = None,
) -> dict:
    return {
        "kind": kind,
        "shape": list(data.shape),
        "binning": binning.to_dict() if binning is not None else None,
        "row_labels": list(row_labels),
        "col_labels": list(col_labels),
        "data": [[_cell(v) for v in row] for row in data],
    }


def envelope_to_json(env: dict) -> str:
    return json.dumps(env, indent=1, sort_keys=True) + "\n"


def _cell(v):
    if isinstance(v, (np.integer, int)):
        return int(v)
    f = float(v)
    return int(f) if f.is_integer() else round(f, 6)


def bin_labels(binning: TimeBinning) -> list[str]:
    return [str(binning.start + k * binning.bin_seconds) for k in range(binning.n_bins)]
