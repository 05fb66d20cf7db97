"""Seeded synthetic movers with ground truth.

Three populations share one calendar of ``days`` x ``86400 / bin_seconds`` bins:

* regular objects walk an order-1 Markov chain over ``0..L`` (0 = absent),
  checking in once at the start of every occupied bin;
* outstanding objects stay present for a long run of days, dwell on a couple
  of favourite locations and check in several times per bin;
* route objects (a share of the regulars) appear at an origin shortly before
  the evening bin and move to their destination right after it, every day.

With ``session_timeout == bin_seconds`` the occupancy grid of regular and
route objects reproduces the generated states exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidConfig
from .ingest import Dataset, LocationTree, build_location_tree, make_dataset

DEFAULT_START = 1430438400  # 2015-05-01T00:00:00Z


def structured_markov(
    n_locations: int,
    self_p: float = 0.5,
    forward_p: float = 0.2,
    popularity: float = 1.0,
) -> np.ndarray:
    """Row-stochastic chain over ``0..L``.

    Each state stays with ``self_p``, steps to the next id (cyclically) with
    ``forward_p``, and spreads the rest over the other states in proportion
    to ``1 / (id + 1) ** popularity``, so low ids are visited most.
    """
    n = n_locations + 1
    if n < 3:
        m = np.full((n, n), (1.0 - self_p) / max(n - 1, 1))
        np.fill_diagonal(m, self_p if n > 1 else 1.0)
        return m
    pop = 1.0 / np.arange(1, n + 1) ** popularity
    m = np.zeros((n, n))
    for s in range(n):
        w = pop.copy()
        w[s] = 0.0
        w[(s + 1) % n] = 0.0
        m[s] = (1.0 - self_p - forward_p) * w / w.sum()
        m[s, s] = self_p
        m[s, (s + 1) % n] += forward_p
    return m


@dataclass
class SynthConfig:
    n_regular: int = 200
    n_outstanding: int = 0
    n_locations: int = 12
    days: int = 10
    bin_seconds: int = 3600
    start: int = DEFAULT_START
    self_transition: float = 0.5
    forward_transition: float = 0.2
    popularity_exponent: float = 1.0
    markov: np.ndarray | None = None
    dwell_multiplier: float = 4.0
    frequency_multiplier: int = 3
    outstanding_active_days: int = 9
    outstanding_favorites: int = 2
    routes: tuple = ()
    evening_bin: int = 19
    route_lead: int = 2
    route_tail: int = 2
    seed: int = 0

    @property
    def bins_per_day(self) -> int:
        return 86400 // self.bin_seconds

    @property
    def n_bins(self) -> int:
        return self.days * self.bins_per_day

    def transition_matrix(self) -> np.ndarray:
        if self.markov is not None:
            return np.asarray(self.markov, dtype=np.float64)
        return structured_markov(
            self.n_locations, self.self_transition, self.forward_transition, self.popularity_exponent
        )

    def validate(self) -> None:
        def bad(msg):
            raise InvalidConfig(msg)

        if self.n_regular < 0 or self.n_outstanding < 0:
            bad("object counts must be non-negative")
        if self.n_locations < 1:
            bad("need at least one location")
        if self.days < 1:
            bad("days must be >= 1")
        if self.bin_seconds < 1 or 86400 % self.bin_seconds:
            bad("bin_seconds must divide a day")
        if self.start < 0:
            bad("start must be non-negative")
        m = self.transition_matrix()
        n = self.n_locations + 1
        if m.shape != (n, n):
            bad(f"markov must be {n}x{n}")
        if (m < 0).any() or np.abs(m.sum(axis=1) - 1.0).max() > 1e-9:
            bad("markov rows must be non-negative and sum to 1")
        if not 0 <= self.self_transition <= 1 or not 0 <= self.forward_transition <= 1 - self.self_transition:
            bad("need 0 <= self_transition and self_transition + forward_transition <= 1")
        if self.dwell_multiplier < 1:
            bad("dwell_multiplier must be >= 1")
        if self.frequency_multiplier < 1:
            bad("frequency_multiplier must be >= 1")
        if self.n_outstanding:
            if not 1 <= self.outstanding_active_days <= self.days:
                bad("outstanding_active_days must lie in 1..days")
            if not 1 <= self.outstanding_favorites <= self.n_locations:
                bad("outstanding_favorites must lie in 1..n_locations")
        share = 0.0
        for r in self.routes:
            if len(r) != 3:
                bad("routes are (origin, destination, share) triples")
            o, d, s = r
            if not (1 <= o <= self.n_locations and 1 <= d <= self.n_locations):
                bad(f"route {o}->{d} references an unknown location")
            if s < 0:
                bad("route shares must be non-negative")
            share += s
        if share > 1 + 1e-12:
            bad("route shares sum above 1")
        if self.routes:
            if self.evening_bin - self.route_lead < 0 or self.evening_bin + self.route_tail >= self.bins_per_day:
                bad("route schedule does not fit inside one day")
            if self.route_lead < 0 or self.route_tail < 1:
                bad("route_lead must be >= 0 and route_tail >= 1")


@dataclass
class GroundTruth:
    object_class: dict[str, str]
    route: dict[str, int | None]
    markov: np.ndarray
    routes: list[tuple[int, int, float]] = field(default_factory=list)
    start: int = DEFAULT_START
    bin_seconds: int = 3600
    n_bins: int = 240
    evening_bin: int = 19

    @property
    def outstanding(self) -> list[str]:
        return sorted(k for k, v in self.object_class.items() if v == "outstanding")

    def to_json(self) -> str:
        doc = {
            "object_class": self.object_class,
            "route": self.route,
            "routes": [list(r) for r in self.routes],
            "markov": self.markov.tolist(),
            "binning": {"start": self.start, "bin_seconds": self.bin_seconds, "n_bins": self.n_bins},
            "evening_bin": self.evening_bin,
            "session_timeout": self.bin_seconds,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def synth_locations(n: int) -> LocationTree:
    """Sites on a circle, ids in angular order."""
    spec = []
    for k in range(n):
        ang = 2 * math.pi * k / max(n, 1)
        spec.append((f"loc{k + 1:02d}", "site", None, (round(100 + 80 * math.cos(ang), 3), round(100 + 80 * math.sin(ang), 3))))
    return build_location_tree(spec)


def _walk(rng, cum: np.ndarray, state: np.ndarray, steps: int) -> np.ndarray:
    """Advance many chains in lockstep; returns objects x steps states."""
    out = np.empty((len(state), steps), dtype=np.int64)
    s = state.copy()
    for t in range(steps):
        out[:, t] = s
        u = rng.random(len(s))
        s = np.minimum((cum[s] <= u[:, None]).sum(axis=1), cum.shape[1] - 1)
    return out


def generate(config: SynthConfig) -> tuple[Dataset, GroundTruth]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    L = config.n_locations
    T = config.n_bins
    bs = config.bin_seconds
    per_day = config.bins_per_day
    markov = config.transition_matrix()
    cum = np.cumsum(markov, axis=1)
    tree = synth_locations(L)
    names = tree.names

    records: list[tuple[int, str, str | None, str]] = []
    object_class: dict[str, str] = {}
    route_of: dict[str, int | None] = {}

    reg_ids = [f"r{k:04d}" for k in range(config.n_regular)]
    states = _walk(rng, cum, rng.integers(0, L + 1, size=config.n_regular), T) if reg_ids else np.zeros((0, T), int)

    # route assignment over a seeded permutation of the regulars
    order = rng.permutation(config.n_regular)
    pos = 0
    for r_idx, (o, d, share) in enumerate(config.routes):
        count = int(round(share * config.n_regular))
        for k in order[pos : pos + count]:
            route_of[reg_ids[k]] = r_idx
            row = np.zeros(T, dtype=np.int64)
            for day in range(config.days):
                base = day * per_day + config.evening_bin
                row[base - config.route_lead : base + 1] = o
                row[base + 1 : base + 1 + config.route_tail] = d
            states[k] = row
        pos += count

    for k, oid in enumerate(reg_ids):
        object_class[oid] = "regular"
        route_of.setdefault(oid, None)
        for t in np.nonzero(states[k])[0]:
            records.append((config.start + int(t) * bs, oid, None, names[states[k, t] - 1]))

    stay_p = 1.0 - (1.0 - config.self_transition) / config.dwell_multiplier
    f = config.frequency_multiplier
    for k in range(config.n_outstanding):
        oid = f"o{k:03d}"
        object_class[oid] = "outstanding"
        route_of[oid] = None
        favs = np.sort(rng.choice(L, size=config.outstanding_favorites, replace=False)) + 1
        first_day = int(rng.integers(0, config.days - config.outstanding_active_days + 1))
        lo = first_day * per_day
        hi = lo + config.outstanding_active_days * per_day
        cur = int(rng.integers(0, len(favs)))
        for t in range(lo, hi):
            for j in range(f):
                ts = config.start + t * bs + (j * bs) // f
                records.append((ts, oid, None, names[favs[cur] - 1]))
            if len(favs) > 1 and rng.random() >= stay_p:
                cur = (cur + 1 + int(rng.integers(0, len(favs) - 1))) % len(favs)

    dataset = make_dataset(records, tree)
    # objects that never checked in still belong to the population
    for oid in sorted(object_class):
        if oid not in dataset.objects:
            dataset.objects[oid] = -1
    ordered = sorted(dataset.objects)
    dataset.objects = {oid: i for i, oid in enumerate(ordered)}

    truth = GroundTruth(
        object_class=object_class,
        route=route_of,
        markov=markov,
        routes=[tuple(r) for r in config.routes],
        start=config.start,
        bin_seconds=bs,
        n_bins=T,
        evening_bin=config.evening_bin,
    )
    return dataset, truth


def bayes_optimal_accuracy(markov: np.ndarray, label_distribution: np.ndarray) -> float:
    """Accuracy of always predicting the most likely successor of the current state.

    ``label_distribution`` is the (empirical) distribution of current states.
    """
    markov = np.asarray(markov, dtype=np.float64)
    pi = np.asarray(label_distribution, dtype=np.float64)
    pi = pi / pi.sum()
    return float(pi @ markov.max(axis=1))


def state_distribution(states: np.ndarray, n_states: int) -> np.ndarray:
    counts = np.bincount(np.asarray(states, dtype=np.int64).reshape(-1), minlength=n_states)
    return counts / max(counts.sum(), 1)


def make_blobs(
    n_per_blob: int = 60,
    n_blobs: int = 3,
    dim: int = 3,
    spread: float = 0.5,
    separation: float = 5.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters centred on scaled coordinate axes."""
    if dim < n_blobs:
        raise ValueError("dim must be >= n_blobs so centres stay equidistant")
    rng = np.random.default_rng(seed)
    centres = separation * np.eye(n_blobs, dim)
    x = np.concatenate([c + spread * rng.standard_normal((n_per_blob, dim)) for c in centres])
    y = np.repeat(np.arange(n_blobs), n_per_blob)
    perm = rng.permutation(len(y))
    return x[perm], y[perm]


# -- flat config files ---------------------------------------------------------

_INT_KEYS = {
    "n_regular",
    "n_outstanding",
    "n_locations",
    "days",
    "bin_seconds",
    "start",
    "frequency_multiplier",
    "outstanding_active_days",
    "outstanding_favorites",
    "evening_bin",
    "route_lead",
    "route_tail",
    "seed",
}
_FLOAT_KEYS = {"self_transition", "forward_transition", "popularity_exponent", "dwell_multiplier"}


def parse_routes(value: str) -> tuple:
    """``"1>5:0.1, 2>6:0.1"`` -> ((1, 5, 0.1), (2, 6, 0.1))."""
    out = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            pair, share = part.split(":")
            o, d = pair.split(">")
            out.append((int(o), int(d), float(share)))
        except ValueError:
            raise InvalidConfig(f"cannot read route {part!r}; expected origin>destination:share") from None
    return tuple(out)


def load_config(text: str) -> SynthConfig:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(SynthConfig)} - {"markov"}
    kwargs = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise InvalidConfig(f"config line {n}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            else:
                kwargs[key] = parse_routes(value)
        except ValueError:
            raise InvalidConfig(f"config line {n}: bad value for {key}") from None
    cfg = SynthConfig(**kwargs)
    cfg.validate()
    return cfg
