import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobpat import viz
from mobpat.ingest import build_location_tree
from mobpat.matrices import StayInterval
from mobpat.predict import FlowMap

NS = {"s": "http://www.w3.org/2000/svg"}
TREE = build_location_tree([(f"g{k}", "gate", None, (float(k % 3), float(k // 3))) for k in range(1, 7)])


def parse(svg):
    root = ET.fromstring(svg.encode())
    assert root.tag == "{http://www.w3.org/2000/svg}svg"
    return root


def by_class(root, tag, cls):
    return [e for e in root.iter(f"{{{NS['s']}}}{tag}") if e.get("class") == cls]


def points(elem):
    return [tuple(map(float, p.split(","))) for p in elem.get("points").split()]


class TestRamp:
    def test_endpoints(self):
        assert viz.ramp_color(0.0) == "#440154"
        assert viz.ramp_color(1.0) == "#fde725"
        assert viz.ramp_color(-3) == viz.ramp_color(0)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone_position(self, a, b):
        # viridis brightens along the ramp: green channel never falls
        lo, hi = sorted((a, b))
        g = lambda t: int(viz.ramp_color(t)[3:5], 16)
        assert g(lo) <= g(hi)

    def test_render_spec_bounds(self):
        with pytest.raises(ValueError):
            viz.RenderSpec(width=63)
        with pytest.raises(ValueError):
            viz.RenderSpec(ramp="rainbow")


class TestUMatrix:
    def test_zero_matrix_is_minimum_colour(self):
        root = parse(viz.render_umatrix(np.zeros((3, 4))))
        fills = {e.get("fill") for e in by_class(root, "rect", "cell")}
        assert fills == {viz.ramp_color(0.0)}

    def test_single_cell(self):
        root = parse(viz.render_umatrix(np.array([[0.3]])))
        assert len(by_class(root, "rect", "cell")) == 1

    def test_deterministic(self):
        u = np.random.default_rng(0).random((3, 3))
        a = viz.render_umatrix(u, np.arange(9).reshape(3, 3), [(1, 1)])
        assert a == viz.render_umatrix(u, np.arange(9).reshape(3, 3), [(1, 1)])

    def test_flags_and_hits(self):
        u = np.random.default_rng(1).random((2, 3))
        root = parse(viz.render_umatrix(u, np.array([[0, 4, 0], [1, 0, 0]]), [(7, (0, 1), 0.9)]))
        flags = by_class(root, "rect", "flag")
        assert [(f.get("data-row"), f.get("data-col")) for f in flags] == [("0", "1")]
        labels = [t.text for t in root.iter(f"{{{NS['s']}}}text")]
        assert "4" in labels and "1" in labels

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            viz.render_umatrix(np.zeros((0, 0)))


class TestHeatmap:
    def test_zero_matrix(self):
        root = parse(viz.render_heatmap(np.zeros((4, 3))))
        assert {e.get("fill") for e in by_class(root, "rect", "cell")} == {viz.ramp_color(0.0)}

    def test_single_nonzero_hits_maximum(self):
        m = np.zeros((3, 3))
        m[2, 1] = 17
        cells = by_class(parse(viz.render_heatmap(m, row_labels=["a", "b", "c"], col_labels=["x", "y", "z"])), "rect", "cell")
        top = [c for c in cells if c.get("fill") == viz.ramp_color(1.0)]
        assert [(c.get("data-row"), c.get("data-col")) for c in top] == [("2", "1")]

    def test_deterministic_and_escaped(self):
        m = np.arange(6.0).reshape(2, 3)
        a = viz.render_heatmap(m, viz.RenderSpec(ramp="diverging"), ["<o1>", "o&2"], ["a", "b", "c"], "t")
        assert a == viz.render_heatmap(m, viz.RenderSpec(ramp="diverging"), ["<o1>", "o&2"], ["a", "b", "c"], "t")
        parse(a)


class TestFlowmap:
    def test_empty_flow_nodes_only(self):
        root = parse(viz.render_flowmap(FlowMap(np.zeros((6, 6), dtype=int)), TREE))
        assert len(by_class(root, "circle", "node")) == 6
        assert by_class(root, "path", "edge") == []

    def test_stroke_proportional(self):
        w = np.zeros((6, 6), dtype=int)
        w[0, 1], w[2, 3], w[4, 4] = 3, 6, 12
        edges = {(e.get("data-from"), e.get("data-to")): float(e.get("stroke-width"))
                 for e in by_class(parse(viz.render_flowmap(FlowMap(w), TREE)), "path", "edge")}
        assert edges[("1", "2")] * 2 == pytest.approx(edges[("3", "4")])
        assert edges[("5", "5")] == pytest.approx(viz.MAX_STROKE)

    def test_minimum_stroke(self):
        assert viz.stroke_width(1, 10_000) == viz.MIN_STROKE
        assert viz.stroke_width(0, 0) == viz.MIN_STROKE

    def test_dominant_edges_are_heaviest(self):
        rng = np.random.default_rng(4)
        w = rng.integers(0, 5, size=(6, 6))
        planted = [(0, 3), (1, 4), (2, 5), (5, 0)]
        for a, b in planted:
            w[a, b] = 40
        edges = by_class(parse(viz.render_flowmap(FlowMap(w), TREE)), "path", "edge")
        widest = sorted(edges, key=lambda e: -float(e.get("stroke-width")))[:4]
        assert {(int(e.get("data-from")) - 1, int(e.get("data-to")) - 1) for e in widest} == set(planted)

    def test_circular_fallback(self):
        tree = build_location_tree([("a", "c", None), ("b", "c", None), ("c", "c", None)])
        pos = viz.layout(tree, viz.RenderSpec())
        assert len(set(pos.values())) == 3
        parse(viz.render_flowmap(FlowMap(np.ones((3, 3), dtype=int)), tree))


class TestTimecube:
    def test_stationary_is_vertical(self):
        root = parse(viz.render_timecube({"o": [StayInterval(0, 2, 0, 3600)]}, TREE))
        (line,) = by_class(root, "polyline", "trajectory")
        (x0, y0), (x1, y1) = points(line)
        assert x0 == x1 and y1 < y0

    def test_no_objects_axes_only(self):
        root = parse(viz.render_timecube({}, TREE))
        assert by_class(root, "polyline", "trajectory") == []
        assert len(by_class(root, "line", "axis")) == 3

    def test_two_hop_has_three_vertices(self):
        stays = [StayInterval(0, 1, 0, 600), StayInterval(0, 4, 600, 1800)]
        assert viz.trajectory_vertices(stays) == [(1, 0), (4, 600), (4, 1800)]
        (line,) = by_class(parse(viz.render_timecube({"o": stays}, TREE)), "polyline", "trajectory")
        assert len(points(line)) == 3

    def test_repeat_stays_merge(self):
        stays = [StayInterval(0, 1, 0, 100), StayInterval(0, 1, 100, 200), StayInterval(0, 2, 200, 300)]
        assert viz.trajectory_vertices(stays) == [(1, 0), (2, 200), (2, 300)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_every_artifact_is_well_formed_and_pure(seed, rows, cols):
    rng = np.random.default_rng(seed)
    u = rng.random((rows, cols))
    flow = FlowMap(rng.integers(0, 4, size=(6, 6)))
    hits = np.ones((rows, cols), dtype=int)
    stays = {f"o{k}": [StayInterval(k, int(rng.integers(1, 7)), 100 * j, 100 * j + 100) for j in range(3)] for k in range(3)}
    for make in (
        lambda: viz.render_umatrix(u, hits, [(0, 0)]),
        lambda: viz.render_heatmap(u * 100),
        lambda: viz.render_flowmap(flow, TREE),
        lambda: viz.render_timecube(stays, TREE),
    ):
        first = make()
        parse(first)
        assert make() == first
