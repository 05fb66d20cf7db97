from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import WindowTooLong
from ..matrices import TimeOrientedMatrix


@dataclass
class WindowedSet:
    """Fixed-width history windows cut from an occupancy grid.

    ``objects`` and ``label_bins`` record where each example came from.
    """

    inputs: np.ndarray  # M x W
    labels: np.ndarray  # M
    objects: np.ndarray  # M
    label_bins: np.ndarray  # M
    n_classes: int

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def width(self) -> int:
        return self.inputs.shape[1]

    def subset(self, mask) -> "WindowedSet":
        return WindowedSet(
            self.inputs[mask],
            self.labels[mask],
            self.objects[mask],
            self.label_bins[mask],
            self.n_classes,
        )


def _cells(tom) -> np.ndarray:
    return tom.cells if isinstance(tom, TimeOrientedMatrix) else np.asarray(tom)


def make_windows(
    tom: TimeOrientedMatrix | np.ndarray,
    width: int = 8,
    stride: int = 1,
    drop_all_absent: bool = False,
    n_classes: int | None = None,
    first_label: int | None = None,
    last_label: int | None = None,
) -> WindowedSet:
    """Slide a ``width``-bin window over every object's row.

    The label is the bin right after the window.  ``first_label`` and
    ``last_label`` (exclusive) restrict which bins may serve as labels.
    """
    cells = _cells(tom)
    n_obj, n_bins = cells.shape
    if width < 1:
        raise ValueError("window width must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if width + 1 > n_bins:
        raise WindowTooLong(f"window {width} needs at least {width + 1} bins, have {n_bins}")
    if n_classes is None:
        n_classes = int(cells.max(initial=0)) + 1
    lo = width if first_label is None else max(width, first_label)
    hi = n_bins if last_label is None else min(n_bins, last_label)
    label_bins = np.arange(lo, hi, stride)
    # windows are taken from starts lo-width, lo-width+stride, ...
    if len(label_bins) == 0 or n_obj == 0:
        empty = np.zeros((0, width), dtype=np.int64)
        z = np.zeros(0, dtype=np.int64)
        return WindowedSet(empty, z, z.copy(), z.copy(), n_classes)
    idx = label_bins[:, None] - width + np.arange(width)[None, :]
    inputs = cells[:, idx].reshape(-1, width)
    labels = cells[:, label_bins].reshape(-1)
    objects = np.repeat(np.arange(n_obj), len(label_bins))
    bins = np.tile(label_bins, n_obj)
    ws = WindowedSet(inputs.astype(np.int64), labels.astype(np.int64), objects, bins, n_classes)
    if drop_all_absent:
        keep = (ws.inputs != 0).any(axis=1) | (ws.labels != 0)
        ws = ws.subset(keep)
    return ws


def one_hot(inputs: np.ndarray, n_classes: int) -> np.ndarray:
    """M x W ids -> M x (W * n_classes) indicator matrix (position-major)."""
    inputs = np.asarray(inputs, dtype=np.int64)
    m, w = inputs.shape
    out = np.zeros((m, w * n_classes), dtype=np.float64)
    cols = inputs + np.arange(w)[None, :] * n_classes
    out[np.arange(m)[:, None], cols] = 1.0
    return out
