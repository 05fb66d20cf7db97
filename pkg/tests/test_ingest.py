import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobpat.errors import (
    BadTimestamp,
    CycleDetected,
    DuplicateName,
    MalformedLine,
    UnknownLocation,
    UnknownParent,
)
from mobpat.ingest import (
    CheckInRecord,
    Dataset,
    build_location_tree,
    make_dataset,
    parse_location_tree,
    parse_records,
    parse_timestamp,
    to_canonical_csv,
    validate_dataset,
)


class TestParseRecords:
    def test_vast_line(self):
        text = "Timestamp,car-id,car-type,gate-name\n2015-05-01 00:43:28,20154301124328-262,4,entrance3\n"
        d = parse_records("vast", text)
        assert len(d.records) == 1
        r = d.records[0]
        assert r.object_id == "20154301124328-262"
        assert r.object_type == "4"
        assert r.raw_location == "entrance3"
        assert r.timestamp == 1430441008  # 2015-05-01T00:43:28Z
        assert r.location_id == 1

    def test_empty_body(self):
        d = parse_records("canonical", "timestamp,object_id,object_type,location\n")
        assert d.records == []
        assert d.n_objects == 0

    def test_unsorted_lines_come_out_sorted(self):
        text = "timestamp,object_id,object_type,location\n100,a,,x\n50,a,,y\n"
        d = parse_records("canonical", text)
        assert [r.timestamp for r in d.records] == [50, 100]
        assert [r.raw_location for r in d.records] == ["y", "x"]

    def test_mobile_keeps_position_and_ip_aside(self):
        text = "userId,TimeStamp,Station,position,IP\nu1,2015-05-01T01:00:00Z,st9,12.5;3.1,10.0.0.1\nu2,1430438400,st2,,\n"
        d = parse_records("mobile", text)
        assert [r.object_id for r in d.records] == ["u2", "u1"]
        assert d.records[1].raw_location == "st9"
        assert d.attributes[1] == {"position": "12.5;3.1", "ip": "10.0.0.1"}
        assert d.records[0].object_type is None

    def test_bytes_with_bom(self):
        d = parse_records("canonical", "﻿timestamp,object_id,object_type,location\n5,a,,x\n".encode())
        assert len(d.records) == 1

    def test_file_like_input(self):
        d = parse_records("canonical", io.StringIO("h,h,h,h\n5,a,,x\n"))
        assert d.records[0].timestamp == 5

    def test_wrong_column_count(self):
        with pytest.raises(MalformedLine) as exc:
            parse_records("canonical", "timestamp,object_id,object_type,location\n1,a,x\n")
        assert exc.value.line_no == 2

    def test_bad_timestamp(self):
        with pytest.raises(BadTimestamp) as exc:
            parse_records("vast", "h,h,h,h\n1,a,,x\nyesterday,b,,y\n")
        assert exc.value.line_no == 3

    def test_negative_timestamp_rejected(self):
        with pytest.raises(BadTimestamp):
            parse_timestamp("-5")

    def test_unknown_location_with_fixed_tree(self, five_sites):
        with pytest.raises(UnknownLocation):
            parse_records("canonical", "h,h,h,h\n1,a,,nowhere\n", five_sites)

    def test_fixed_tree_assigns_its_ids(self, five_sites):
        d = parse_records("canonical", "h,h,h,h\n1,a,,s4\n2,a,,s2\n", five_sites)
        assert [r.location_id for r in d.records] == [4, 2]

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_records("xml", "")

    def test_iso_with_offset(self):
        assert parse_timestamp("1970-01-01T01:00:00+01:00") == 0
        assert parse_timestamp("12.9") == 12


class TestLocationTree:
    def test_two_node_tree(self):
        tree = build_location_tree([("park", "area", None), ("gate1", "gate", "park")])
        assert tree.id_of("park") == 1
        assert tree.id_of("gate1") == 2
        assert tree.get(2).parent_id == 1

    def test_empty(self):
        assert len(build_location_tree([])) == 0

    def test_three_levels_reach_root_within_two_hops(self):
        spec = [
            ("city", "area", None),
            ("north", "district", "city"),
            ("south", "district", "city"),
            ("n1", "gate", "north"),
            ("n2", "gate", "north"),
            ("s1", "gate", "south"),
            ("s2", "gate", "south"),
        ]
        tree = build_location_tree(spec)
        parent_name = {name: parent for name, _, parent in spec}
        for leaf in ("n1", "n2", "s1", "s2"):
            # independent walk over the tree's names
            walk, cur = [], parent_name[leaf]
            while cur is not None:
                walk.append(tree.id_of(cur))
                cur = parent_name[cur]
            chain = tree.ancestors(tree.id_of(leaf))
            assert chain == walk
            assert len(chain) <= 2
            assert tree.get(chain[-1]).parent_id is None

    def test_duplicate_name(self):
        with pytest.raises(DuplicateName):
            build_location_tree([("a", "c", None), ("a", "c", None)])

    def test_unknown_parent(self):
        with pytest.raises(UnknownParent):
            build_location_tree([("b", "c", "a"), ("a", "c", None)])

    def test_self_parent_is_a_cycle(self):
        with pytest.raises(CycleDetected):
            build_location_tree([("a", "c", "a")])

    def test_ids_deterministic(self):
        spec = [("x", "c", None), ("y", "c", "x"), ("z", "c", None)]
        assert build_location_tree(spec) == build_location_tree(list(spec))

    def test_csv_round_trip(self):
        tree = build_location_tree([("a", "c", None, (1.5, 2.0)), ("b", "g", "a", (0.0, -1.0))])
        assert parse_location_tree(tree.to_csv()) == tree
        assert tree.has_coordinates()


class TestValidate:
    def test_sound_dataset(self, five_sites):
        d = make_dataset([(1, "a", None, "s1"), (2, "a", None, "s2"), (3, "b", None, "s3")], five_sites)
        assert validate_dataset(d) == []

    def test_unknown_location(self, five_sites):
        d = make_dataset([(1, "a", None, "s1"), (2, "a", None, "s2")], five_sites)
        d.records[1] = CheckInRecord(2, "a", None, 99, "ghost")
        assert validate_dataset(d) == ["UnknownLocation@1"]

    def test_not_sorted(self, five_sites):
        d = make_dataset([(1, "a", None, "s1"), (2, "a", None, "s2")], five_sites)
        d.records.reverse()
        assert validate_dataset(d) == ["NotSorted@1"]


names = st.sampled_from(["gate1", "gate2", "camp", "exit", "ranger-base"])
objects = st.sampled_from(["o1", "o2", "car-7", "u99"])
rows = st.lists(st.tuples(st.integers(0, 2_000_000_000), objects, st.sampled_from(["", "1", "2P"]), names), max_size=40)


def _csv(header, body):
    return header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in body)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(rows)
    def test_canonical_round_trip(self, body):
        d = parse_records("canonical", _csv("timestamp,object_id,object_type,location", body))
        again = parse_records("canonical", to_canonical_csv(d))
        assert isinstance(again, Dataset)
        assert again == d
        assert validate_dataset(d) == []

    @settings(max_examples=60, deadline=None)
    @given(rows)
    def test_record_count_preserved_in_every_format(self, body):
        assert len(parse_records("canonical", _csv("h,h,h,h", body)).records) == len(body)
        assert len(parse_records("vast", _csv("h,h,h,h", body)).records) == len(body)
        mobile = [(o, t, loc, "", "") for t, o, _, loc in body]
        assert len(parse_records("mobile", _csv("h,h,h,h,h", mobile)).records) == len(body)

    @settings(max_examples=60, deadline=None)
    @given(rows)
    def test_sort_matches_stable_sort_oracle(self, body):
        d = parse_records("canonical", _csv("h,h,h,h", body))
        expected = sorted(((t, o) for t, o, _, _ in body))
        assert [(r.timestamp, r.object_id) for r in d.records] == expected
