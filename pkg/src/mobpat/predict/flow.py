from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..matrices import TimeOrientedMatrix


@dataclass
class FlowMap:
    """Directed transition counts; ``weights[a-1, b-1]`` counts moves a -> b."""

    weights: np.ndarray  # L x L
    label: str = ""

    @property
    def n_locations(self) -> int:
        return self.weights.shape[0]

    @property
    def total(self) -> int:
        return int(self.weights.sum())

    def edges(self) -> list[tuple[int, int, int]]:
        """Nonzero edges as ``(origin, destination, weight)``, heaviest first."""
        a, b = np.nonzero(self.weights)
        out = [(int(i) + 1, int(j) + 1, int(self.weights[i, j])) for i, j in zip(a, b)]
        out.sort(key=lambda e: (-e[2], e[0], e[1]))
        return out

    def top_edges(self, k: int) -> list[tuple[int, int, int]]:
        return self.edges()[:k]

    def to_json(self) -> str:
        doc = {
            "label": self.label,
            "n_locations": self.n_locations,
            "weights": self.weights.astype(int).tolist(),
            "edges": [list(e) for e in self.edges()],
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FlowMap":
        doc = json.loads(text)
        return cls(np.asarray(doc["weights"], dtype=np.int64).reshape(doc["n_locations"], -1), doc["label"])


def build_flow_map(
    tom: TimeOrientedMatrix | np.ndarray,
    bin_t: int,
    predictions: np.ndarray | None = None,
    n_locations: int | None = None,
    label: str = "",
) -> FlowMap:
    """Count moves between bin ``bin_t`` and the next one.

    Destinations come from bin ``bin_t + 1`` of the grid, or from
    ``predictions`` (one id per object) when given.  Objects absent at either
    end are skipped; staying put counts as a self-edge.
    """
    cells = tom.cells if isinstance(tom, TimeOrientedMatrix) else np.asarray(tom)
    n_bins = cells.shape[1]
    if not 0 <= bin_t < n_bins:
        raise IndexError(f"bin {bin_t} outside grid of {n_bins} bins")
    origin = cells[:, bin_t]
    if predictions is None:
        if bin_t + 1 >= n_bins:
            raise IndexError(f"bin {bin_t} has no successor in a grid of {n_bins} bins")
        dest = cells[:, bin_t + 1]
    else:
        dest = np.asarray(predictions, dtype=np.int64)
        if dest.shape != origin.shape:
            raise ValueError("need exactly one prediction per object")
    if n_locations is None:
        n_locations = int(max(cells.max(initial=0), dest.max(initial=0)))
    w = np.zeros((n_locations, n_locations), dtype=np.int64)
    present = (origin > 0) & (dest > 0)
    np.add.at(w, (origin[present] - 1, dest[present] - 1), 1)
    return FlowMap(w, label)
