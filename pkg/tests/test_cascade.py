import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_pde.cascade import (
    Cascade,
    density_field,
    hop_distances,
    interest_distance,
    load_graph,
    read_cascade_csv,
    read_graph_csv,
    read_sources,
)
from cascade_pde.errors import ParseError, ValidationError


def floyd_warshall(n, edges):
    """All-pairs shortest content-flow hops; edge (f, g) lets content go g -> f."""
    inf = float("inf")
    dist = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for f, g in edges:
        dist[g][f] = min(dist[g][f], 1)
    for k, i, j in itertools.product(range(n), repeat=3):
        if dist[i][k] + dist[k][j] < dist[i][j]:
            dist[i][j] = dist[i][k] + dist[k][j]
    return dist


@st.composite
def random_graph(draw, max_nodes=50):
    n = draw(st.integers(1, max_nodes))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1])
    edges = draw(st.lists(pairs, max_size=3 * n))
    sources = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=4))
    return n, edges, sources


class TestLoadGraph:
    def test_empty(self):
        g = load_graph([])
        assert g.edges == () or len(g.edges) == 0

    def test_duplicates_collapse(self):
        g = load_graph([(1, 0), (1, 0)])
        assert len(g.edges) == 1

    def test_self_loop_rejected(self):
        with pytest.raises(ValidationError):
            load_graph([(2, 2)])

    def test_malformed_record_reports_line(self):
        text = "follower,followee\n1,0\nx,2\n"
        with pytest.raises(ParseError) as info:
            read_graph_csv(io.StringIO(text))
        assert info.value.line == 3

    def test_negative_id_rejected(self):
        with pytest.raises(ParseError):
            load_graph([(-1, 0)])

    def test_csv_round(self):
        g = read_graph_csv(io.StringIO("follower,followee\n1,0\n2,1\n"))
        assert g.user_count == 3
        assert sorted(g.edges) == [(1, 0), (2, 1)]


class TestHopDistances:
    def test_chain(self):
        g = load_graph([(1, 0), (2, 1)])
        d = hop_distances(g, {0})
        assert d.distances == {0: 0, 1: 1, 2: 2}

    def test_min_over_sources(self):
        g = load_graph([(1, 0), (2, 1)])
        d = hop_distances(g, {0, 2})
        assert d.distances[1] == 1 and d.distances[2] == 0

    def test_disconnected(self):
        g = load_graph([(1, 0)], user_count=3)
        d = hop_distances(g, {0})
        assert d.unreachable_count == 1
        assert 2 not in d.distances

    def test_unknown_source(self):
        with pytest.raises(ValidationError):
            hop_distances(load_graph([(1, 0)]), {7})

    def test_direction_follows_content_flow(self):
        # 0 follows 1: content flows 1 -> 0, so 0 is not reachable from itself... but 1 is not reachable from 0
        g = load_graph([(0, 1)])
        assert hop_distances(g, {0}).distances == {0: 0}
        assert hop_distances(g, {1}).distances == {0: 1, 1: 0}

    @settings(max_examples=60, deadline=None)
    @given(random_graph())
    def test_matches_floyd_warshall(self, case):
        n, edges, sources = case
        g = load_graph(edges, user_count=n)
        got = hop_distances(g, sources)
        fw = floyd_warshall(n, set(edges))
        expected = {}
        for v in range(n):
            best = min(fw[s][v] for s in sources)
            if best < float("inf"):
                expected[v] = int(best)
        assert got.distances == expected
        assert got.unreachable_count == n - len(expected)

    @settings(max_examples=40, deadline=None)
    @given(random_graph())
    def test_multi_source_is_elementwise_min(self, case):
        n, edges, sources = case
        g = load_graph(edges, user_count=n)
        multi = hop_distances(g, sources).distances
        singles = [hop_distances(g, {s}).distances for s in sources]
        for v in range(n):
            vals = [m[v] for m in singles if v in m]
            assert multi.get(v) == (min(vals) if vals else None)

    @settings(max_examples=40, deadline=None)
    @given(random_graph())
    def test_predecessor_property(self, case):
        n, edges, sources = case
        g = load_graph(edges, user_count=n)
        dist = hop_distances(g, sources).distances
        for v, k in dist.items():
            if k >= 1:
                assert any(dist.get(g2) == k - 1 for f, g2 in g.edges if f == v)


class TestInterestDistance:
    def test_formula(self):
        assert interest_distance({1, 2}, {2, 3}) == pytest.approx(2 / 3)

    def test_identity(self):
        assert interest_distance({4, 5}, {4, 5}) == 0.0

    def test_disjoint(self):
        assert interest_distance({1}, {2}) == 1.0

    def test_both_empty(self):
        with pytest.raises(ValidationError):
            interest_distance(set(), set())

    @given(st.sets(st.integers(0, 20)), st.sets(st.integers(0, 20)))
    def test_properties(self, a, b):
        if not (a or b):
            return
        d = interest_distance(a, b)
        assert 0.0 <= d <= 1.0
        assert d == interest_distance(b, a)
        if a:
            assert interest_distance(a, a) == 0.0


class TestCascade:
    def test_earliest_adoption_kept(self):
        c = Cascade.from_records([0], [(1, 3.0), (1, 1.0), (2, 2.0)])
        assert dict(c.events)[1] == 1.0

    def test_sources_at_time_zero(self):
        c = Cascade.from_records([0], [(1, 3.0)])
        assert c.events[0] == (0, 0.0)

    def test_csv(self):
        srcs = read_sources(io.StringIO("0\n"))
        c = read_cascade_csv(io.StringIO("user_id,time_hours\n1,0.5\n2,1.5\n"), srcs)
        assert [u for u, _ in c.events] == [0, 1, 2]

    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError):
            Cascade.from_records([0], [(1, -1.0)])


def star_graph():
    # source 0 with four direct followers 1..4, and 5 following 1
    return load_graph([(1, 0), (2, 0), (3, 0), (4, 0), (5, 1)])


class TestDensityField:
    def test_ratio(self):
        c = Cascade.from_records([0], [(2, 1.0)])
        f = density_field(star_graph(), c, [1.0, 2.0], mode="ratio")
        assert f.row(1)[0] == 0.25

    def test_count(self):
        c = Cascade.from_records([0], [(2, 1.0)])
        f = density_field(star_graph(), c, [1.0, 2.0], mode="count")
        assert f.row(1)[0] == 1.0

    def test_empty_cell(self):
        c = Cascade.from_records([0], [(2, 1.0)])
        f = density_field(star_graph(), c, [1.0, 2.0], mode="ratio")
        assert np.all(f.row(2) == 0.0)

    def test_sources_excluded(self):
        c = Cascade.from_records([0], [])
        f = density_field(star_graph(), c, [1.0])
        assert 0 not in f.distances
        assert f.group_sizes == {1: 4, 2: 1}

    def test_unreachable_adopter_skipped(self):
        g = load_graph([(1, 0)], user_count=3)
        c = Cascade.from_records([0], [(1, 1.0), (2, 1.0)])
        f = density_field(g, c, [2.0])
        assert f.skipped_adopters == 1

    def test_adopters_population(self):
        c = Cascade.from_records([0], [(2, 1.0), (3, 3.0)])
        f = density_field(star_graph(), c, [1.0, 3.0], population="adopters")
        assert f.group_sizes == {1: 2}
        assert list(f.row(1)) == [0.5, 1.0]

    @settings(max_examples=50, deadline=None)
    @given(random_graph(), st.data())
    def test_matches_exhaustive_count(self, case, data):
        n, edges, sources = case
        g = load_graph(edges, user_count=n)
        adopters = data.draw(st.lists(
            st.tuples(st.integers(0, n - 1), st.floats(0, 10, allow_nan=False)), max_size=2 * n))
        c = Cascade.from_records(sources, adopters)
        times = [0.5, 2.0, 5.0, 10.0]
        fw = floyd_warshall(n, set(edges))
        dist = {v: int(min(fw[s][v] for s in sources)) for v in range(n)
                if min(fw[s][v] for s in sources) < float("inf")}
        for mode in ("ratio", "count"):
            f = density_field(g, c, times, mode=mode)
            f.check_invariants()
            first = dict(c.events)
            for x in f.distances:
                group = [v for v, k in dist.items() if k == x and v not in c.source_ids]
                for t, got in zip(times, f.row(x)):
                    hits = sum(1 for v in group if v in first and first[v] <= t)
                    want = hits / len(group) if mode == "ratio" else hits
                    assert got == want
