"""Record parsing, the location tree, and dataset validation.

Three CSV dialects are understood, each with a header row:

* ``canonical``: ``timestamp,object_id,object_type,location``
* ``mobile``:    ``userId,TimeStamp,Station,position,IP``
* ``vast``:      ``Timestamp,car-id,car-type,gate-name``

Timestamps may be integer epoch seconds or ISO-8601; naive ISO times are read
as UTC and fractional seconds are truncated.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import (
    BadTimestamp,
    CycleDetected,
    DuplicateName,
    MalformedLine,
    UnknownLocation,
    UnknownParent,
)

FORMATS = ("canonical", "mobile", "vast")
CANONICAL_HEADER = ("timestamp", "object_id", "object_type", "location")
TREE_HEADER = ("name", "category", "parent", "x", "y")
DISCOVERED = "discovered"

_COLUMNS = {"canonical": 4, "mobile": 5, "vast": 4}


@dataclass(frozen=True)
class CheckInRecord:
    timestamp: int
    object_id: str
    object_type: str | None
    location_id: int
    raw_location: str


@dataclass(frozen=True)
class Location:
    location_id: int
    name: str
    category: str
    parent_id: int | None = None
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class LocationTree:
    """Stay points and their generalizations; ids are dense from 1."""

    nodes: tuple[Location, ...] = ()

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def id_of(self, name: str) -> int:
        for node in self.nodes:
            if node.name == name:
                return node.location_id
        raise UnknownLocation(name)

    def get(self, location_id: int) -> Location:
        return self.nodes[location_id - 1]

    def ancestors(self, location_id: int) -> list[int]:
        """Parent chain of a node, nearest first."""
        chain = []
        seen = {location_id}
        parent = self.get(location_id).parent_id
        while parent is not None:
            if parent in seen:
                raise CycleDetected(f"cycle through location {parent}")
            seen.add(parent)
            chain.append(parent)
            parent = self.get(parent).parent_id
        return chain

    def has_coordinates(self) -> bool:
        return bool(self.nodes) and all(n.x is not None and n.y is not None for n in self.nodes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TREE_HEADER)
        for n in self.nodes:
            parent = self.get(n.parent_id).name if n.parent_id is not None else ""
            w.writerow([n.name, n.category, parent, _fmt_coord(n.x), _fmt_coord(n.y)])
        return buf.getvalue()


@dataclass
class Dataset:
    records: list[CheckInRecord]
    locations: LocationTree
    objects: dict[str, int]
    # record index -> auxiliary fields (mobile position/IP); unused downstream
    attributes: dict[int, dict[str, str]] = field(default_factory=dict)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def object_ids(self) -> list[str]:
        return sorted(self.objects, key=self.objects.__getitem__)

    def time_span(self) -> tuple[int, int]:
        if not self.records:
            return (0, 0)
        return (self.records[0].timestamp, self.records[-1].timestamp)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.records == other.records
            and self.locations == other.locations
            and self.objects == other.objects
        )


def _fmt_coord(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def parse_timestamp(value: str, line_no: int = 0) -> int:
    s = value.strip()
    if not s:
        raise BadTimestamp(line_no, value)
    try:
        ts = int(float(s)) if _looks_numeric(s) else _parse_iso(s)
    except (ValueError, OverflowError):
        raise BadTimestamp(line_no, value) from None
    if ts < 0:
        raise BadTimestamp(line_no, value)
    return ts


def _looks_numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_iso(s: str) -> int:
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() // 1)


def _decode(text: str | bytes | io.IOBase) -> str:
    if isinstance(text, bytes):
        return text.decode("utf-8-sig")
    if isinstance(text, str):
        return text.lstrip("﻿")
    data = text.read()
    return _decode(data)


def parse_records(
    fmt: str,
    text: str | bytes | io.IOBase,
    locations: LocationTree | None = None,
) -> Dataset:
    """Parse one CSV dialect into a time-sorted :class:`Dataset`.

    With ``locations=None`` unseen names are registered in order of first
    appearance in the sorted record stream, so a re-parse of the canonical
    serialization reproduces the same ids.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    ncols = _COLUMNS[fmt]
    fixed = _name_index(locations) if locations is not None else None
    rows = []
    reader = csv.reader(io.StringIO(_decode(text)))
    for line_no, row in enumerate(reader, start=1):
        if line_no == 1 or not row:
            continue
        if len(row) != ncols:
            raise MalformedLine(line_no, f"expected {ncols} columns, got {len(row)}")
        if fmt in ("canonical", "vast"):
            ts_raw, obj, otype, loc = row
            extra = None
        else:
            obj, ts_raw, loc, position, ip = row
            otype = ""
            extra = {"position": position, "ip": ip}
        ts = parse_timestamp(ts_raw, line_no)
        loc = loc.strip()
        if fixed is not None and loc not in fixed:
            raise UnknownLocation(loc)
        rows.append((ts, obj.strip(), otype.strip() or None, loc, extra))

    rows.sort(key=lambda r: (r[0], r[1]))

    if locations is None:
        names: list[str] = []
        seen: set[str] = set()
        for r in rows:
            if r[3] not in seen:
                seen.add(r[3])
                names.append(r[3])
        tree = build_location_tree([(n, DISCOVERED, None) for n in names])
    else:
        tree = locations
    index = _name_index(tree)

    records = []
    attributes = {}
    for i, (ts, obj, otype, loc, extra) in enumerate(rows):
        records.append(CheckInRecord(ts, obj, otype, index[loc], loc))
        if extra is not None:
            attributes[i] = extra
    objects = {oid: k for k, oid in enumerate(sorted({r.object_id for r in records}))}
    return Dataset(records, tree, objects, attributes)


def _name_index(tree: LocationTree) -> dict[str, int]:
    return {n.name: n.location_id for n in tree.nodes}


def build_location_tree(spec: Iterable[Sequence]) -> LocationTree:
    """Assign dense ids in input order.

    Each entry is ``(name, category, parent_name_or_None[, (x, y)])`` or
    ``(name, category, parent, x, y)``.
    """
    nodes: list[Location] = []
    ids: dict[str, int] = {}
    for entry in spec:
        name, category, parent = entry[0], entry[1], entry[2]
        x = y = None
        if len(entry) == 4 and entry[3] is not None:
            x, y = entry[3]
        elif len(entry) >= 5:
            x, y = entry[3], entry[4]
        if name in ids:
            raise DuplicateName(f"duplicate location name {name!r}")
        if parent is not None and parent == name:
            raise CycleDetected(f"location {name!r} is its own parent")
        if parent is not None and parent not in ids:
            raise UnknownParent(f"parent {parent!r} of {name!r} is not defined before it")
        lid = len(nodes) + 1
        ids[name] = lid
        nodes.append(
            Location(
                lid,
                name,
                category,
                ids[parent] if parent is not None else None,
                None if x is None else float(x),
                None if y is None else float(y),
            )
        )
    return LocationTree(tuple(nodes))


def parse_location_tree(text: str | bytes | io.IOBase) -> LocationTree:
    """Read a ``name,category,parent,x,y`` file; an empty parent marks a root."""
    spec = []
    reader = csv.reader(io.StringIO(_decode(text)))
    for line_no, row in enumerate(reader, start=1):
        if line_no == 1 or not row:
            continue
        if len(row) != 5:
            raise MalformedLine(line_no, "expected name,category,parent,x,y")
        name, category, parent, x, y = (c.strip() for c in row)
        try:
            coords = (float(x), float(y)) if x and y else None
        except ValueError:
            raise MalformedLine(line_no, "non-numeric coordinate") from None
        spec.append((name, category, parent or None, coords))
    return build_location_tree(spec)


def validate_dataset(d: Dataset) -> list[str]:
    """Return one message per broken invariant; empty when the dataset is sound."""
    out = []
    n_loc = len(d.locations)
    for i, node in enumerate(d.locations.nodes):
        if node.location_id != i + 1:
            out.append(f"NonDenseLocationId@{i}")
    for i, node in enumerate(d.locations.nodes):
        try:
            d.locations.ancestors(node.location_id)
        except (CycleDetected, IndexError):
            out.append(f"BrokenParentChain@{i}")
    prev = None
    for i, r in enumerate(d.records):
        if r.timestamp < 0:
            out.append(f"NegativeTimestamp@{i}")
        if not 1 <= r.location_id <= n_loc:
            out.append(f"UnknownLocation@{i}")
        if r.object_id not in d.objects:
            out.append(f"UnregisteredObject@{i}")
        key = (r.timestamp, r.object_id)
        if prev is not None and key < prev:
            out.append(f"NotSorted@{i}")
        prev = key
    if sorted(d.objects.values()) != list(range(len(d.objects))):
        out.append("NonDenseObjectIndex")
    return out


def to_canonical_csv(d: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANONICAL_HEADER)
    for r in d.records:
        w.writerow([r.timestamp, r.object_id, r.object_type or "", r.raw_location])
    return buf.getvalue()


def make_dataset(
    records: Iterable[tuple[int, str, str | None, str]],
    locations: LocationTree,
) -> Dataset:
    """Build a dataset from ``(timestamp, object_id, object_type, location_name)`` tuples."""
    index = _name_index(locations)
    rows = sorted(records, key=lambda r: (r[0], r[1]))
    recs = []
    for ts, obj, otype, loc in rows:
        if loc not in index:
            raise UnknownLocation(loc)
        recs.append(CheckInRecord(int(ts), obj, otype, index[loc], loc))
    objects = {oid: k for k, oid in enumerate(sorted({r.object_id for r in recs}))}
    return Dataset(recs, locations, objects)
