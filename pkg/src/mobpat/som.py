"""Self-organizing map over per-object visiting profiles.

Nodes sit on a rectangular lattice and are stored row-major, so node ``k``
lives at ``(k // cols, k % cols)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyFeatures
from .matrices import TimeSpentMatrix, VisitFrequencyMatrix

NORMALIZATIONS = ("zscore", "minmax", "none")


@dataclass
class SomGrid:
    rows: int
    cols: int
    weights: np.ndarray  # (rows*cols) x dim

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def coords(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_nodes), self.cols)
        return np.stack([r, c], axis=1).astype(np.float64)

    def node(self, r: int, c: int) -> np.ndarray:
        return self.weights[r * self.cols + c]

    def copy(self) -> "SomGrid":
        return SomGrid(self.rows, self.cols, self.weights.copy())


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 50
    lr0: float = 0.5
    lr1: float = 0.05
    sigma0: float = 3.0
    sigma1: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not (0 <= self.lr1 <= self.lr0 <= 1):
            raise ValueError("need 0 <= lr1 <= lr0 <= 1")
        if not (self.sigma0 >= self.sigma1 > 0):
            raise ValueError("need sigma0 >= sigma1 > 0")

    def at(self, epoch: int) -> tuple[float, float]:
        """Learning rate and radius for a 0-based epoch (geometric interpolation)."""
        frac = epoch / (self.epochs - 1) if self.epochs > 1 else 0.0
        return _geom(self.lr0, self.lr1, frac), _geom(self.sigma0, self.sigma1, frac)


def _geom(a: float, b: float, frac: float) -> float:
    if a == 0 or b == 0:
        return a + (b - a) * frac
    return a * (b / a) ** frac


@dataclass
class UMatrix:
    values: np.ndarray  # rows x cols


@dataclass
class ClusterAssignment:
    bmus: np.ndarray  # N x 2 (row, col)
    hits: np.ndarray  # rows x cols


@dataclass
class TrainResult:
    grid: SomGrid
    qe_trace: list[float] = field(default_factory=list)  # one entry per epoch
    initial_qe: float = 0.0


def default_grid_side(n: int) -> int:
    return max(2, math.ceil(math.sqrt(5 * math.sqrt(max(n, 1)))))


def build_features(
    freq: VisitFrequencyMatrix,
    spent: TimeSpentMatrix,
    normalize: str = "zscore",
) -> np.ndarray:
    """Concatenate frequency and time-spent rows, then normalize per column.

    Constant columns (including every column when N == 1) become 0 under
    ``zscore`` and ``minmax``.
    """
    if normalize not in NORMALIZATIONS:
        raise ValueError(f"normalize must be one of {NORMALIZATIONS}")
    if freq.counts.shape != spent.seconds.shape:
        raise ValueError("frequency and time-spent matrices disagree in shape")
    x = np.concatenate([freq.counts.astype(np.float64), spent.seconds.astype(np.float64)], axis=1)
    if normalize == "none" or x.shape[0] == 0:
        return x
    if normalize == "zscore":
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        out = np.zeros_like(x)
        ok = sd > 0
        out[:, ok] = (x[:, ok] - mu[ok]) / sd[ok]
        return out
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    out = np.zeros_like(x)
    ok = span > 0
    out[:, ok] = (x[:, ok] - lo[ok]) / span[ok]
    return out


def init_grid(rows: int, cols: int, features: np.ndarray, seed: int = 0) -> SomGrid:
    """Seed every node with a feature row drawn uniformly with replacement."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyFeatures("cannot initialize a map from zero feature rows")
    if rows * cols < 4:
        raise ValueError("grid needs at least 4 nodes")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, features.shape[0], size=rows * cols)
    return SomGrid(rows, cols, features[pick].copy())


def best_matching_unit(grid: SomGrid, x: np.ndarray) -> tuple[int, int]:
    d2 = ((grid.weights - x) ** 2).sum(axis=1)
    k = int(np.argmin(d2))  # first minimum == smallest row-major index
    return divmod(k, grid.cols)


def _bmu_indices(grid: SomGrid, features: np.ndarray) -> np.ndarray:
    # ||x - w||^2 expanded would be faster but loses the exact tie behaviour
    step = max(1, 2_000_000 // max(1, grid.n_nodes * grid.dim))
    out = np.empty(len(features), dtype=np.int64)
    for s in range(0, len(features), step):
        chunk = features[s : s + step]
        d2 = ((chunk[:, None, :] - grid.weights[None, :, :]) ** 2).sum(axis=2)
        out[s : s + step] = np.argmin(d2, axis=1)
    return out


def quantization_error(grid: SomGrid, features: np.ndarray) -> float:
    if len(features) == 0:
        return 0.0
    k = _bmu_indices(grid, features)
    return float(np.linalg.norm(features - grid.weights[k], axis=1).mean())


def neighborhood_weight(dist, sigma: float):
    """Gaussian lattice kernel ``exp(-d^2 / (2 sigma^2))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-np.square(dist) / (2.0 * sigma * sigma))


def train(grid: SomGrid, features: np.ndarray, schedule: TrainSchedule) -> TrainResult:
    """Online training; returns a new grid and its quantization-error history.

    ``qe_trace[e]`` is the error after epoch ``e`` (0-based); the error of
    the untouched grid is kept in ``initial_qe``.
    """
    features = np.asarray(features, dtype=np.float64)
    out = grid.copy()
    w = out.weights
    coords = out.coords()
    rng = np.random.default_rng(schedule.seed)
    initial = quantization_error(out, features)
    trace = []
    for epoch in range(schedule.epochs):
        lr, sigma = schedule.at(epoch)
        for i in rng.permutation(len(features)):
            x = features[i]
            k = int(np.argmin(((w - x) ** 2).sum(axis=1)))
            lattice = np.sqrt(((coords - coords[k]) ** 2).sum(axis=1))
            h = neighborhood_weight(lattice, sigma)
            w += (lr * h)[:, None] * (x - w)
        trace.append(quantization_error(out, features))
    return TrainResult(out, trace, initial)


def compute_umatrix(grid: SomGrid) -> UMatrix:
    """Mean distance from each node to its existing 4-neighbours."""
    w = grid.weights.reshape(grid.rows, grid.cols, grid.dim)
    total = np.zeros((grid.rows, grid.cols))
    count = np.zeros((grid.rows, grid.cols))
    if grid.rows > 1:
        dv = np.linalg.norm(w[1:] - w[:-1], axis=2)
        total[1:] += dv
        total[:-1] += dv
        count[1:] += 1
        count[:-1] += 1
    if grid.cols > 1:
        dh = np.linalg.norm(w[:, 1:] - w[:, :-1], axis=2)
        total[:, 1:] += dh
        total[:, :-1] += dh
        count[:, 1:] += 1
        count[:, :-1] += 1
    values = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return UMatrix(values)


def assign_and_aggregate(grid: SomGrid, features: np.ndarray) -> ClusterAssignment:
    features = np.asarray(features, dtype=np.float64).reshape(-1, grid.dim)
    hits = np.zeros((grid.rows, grid.cols), dtype=np.int64)
    if len(features) == 0:
        return ClusterAssignment(np.zeros((0, 2), dtype=np.int64), hits)
    k = _bmu_indices(grid, features)
    bmus = np.stack(np.divmod(k, grid.cols), axis=1)
    np.add.at(hits, (bmus[:, 0], bmus[:, 1]), 1)
    return ClusterAssignment(bmus, hits)


def detect_outstanding(
    umatrix: UMatrix,
    assignment: ClusterAssignment,
    k: float = 2.0,
) -> list[tuple[int, tuple[int, int], float]]:
    """Flag objects whose BMU's U-value exceeds ``mean + k * std`` of the map.

    Returns ``(object_index, (row, col), u_value)`` sorted by descending U-value.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    u = umatrix.values
    threshold = u.mean() + k * u.std()
    flagged = []
    for obj, (r, c) in enumerate(assignment.bmus):
        val = float(u[r, c])
        if val > threshold:
            flagged.append((obj, (int(r), int(c)), val))
    flagged.sort(key=lambda f: (-f[2], f[0]))
    return flagged


def grid_to_json(grid: SomGrid, schedule: TrainSchedule) -> str:
    doc = {
        "rows": grid.rows,
        "cols": grid.cols,
        "dim": grid.dim,
        "weights": grid.weights.tolist(),
        "schedule": asdict(schedule),
        "seed": schedule.seed,
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def grid_from_json(text: str) -> tuple[SomGrid, TrainSchedule]:
    doc = json.loads(text)
    weights = np.asarray(doc["weights"], dtype=np.float64).reshape(doc["rows"] * doc["cols"], doc["dim"])
    return SomGrid(doc["rows"], doc["cols"], weights), TrainSchedule(**doc["schedule"])


def cluster_purity(bmus: np.ndarray, labels: np.ndarray) -> float:
    """Share of objects matching the majority label of their BMU."""
    if len(labels) == 0:
        return 1.0
    groups: dict[tuple[int, int], list[int]] = {}
    for (r, c), lab in zip(bmus.tolist(), labels.tolist()):
        groups.setdefault((r, c), []).append(lab)
    agree = sum(max(np.bincount(v)) for v in groups.values())
    return agree / len(labels)
