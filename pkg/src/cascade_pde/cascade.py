"""Social graphs, adoption cascades and observed density fields.

Edges are stored as ``(follower, followee)``: the follower sees whatever the
followee posts, so information travels followee -> follower and hop
distances are breadth-first distances over the reversed follow edges.
"""
from __future__ import annotations

import csv
import io
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "SocialGraph",
    "Cascade",
    "DistanceMap",
    "DensityField",
    "load_graph",
    "read_graph_csv",
    "read_cascade_csv",
    "read_sources",
    "hop_distances",
    "interest_distance",
    "density_field",
]


def _parse_id(token, line=None):
    try:
        value = int(str(token).strip())
    except (TypeError, ValueError):
        raise ParseError(f"user id {token!r} is not an integer", line) from None
    if value < 0:
        raise ParseError(f"user id {value} is negative", line)
    return value


@dataclass(frozen=True)
class SocialGraph:
    """Directed follower graph over user ids ``0 .. user_count - 1``."""

    user_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for follower, followee in self.edges:
            if follower == followee:
                raise ValidationError(f"self-loop on user {follower}")
            if not (0 <= follower < self.user_count and 0 <= followee < self.user_count):
                raise ValidationError(
                    f"edge ({follower}, {followee}) outside 0..{self.user_count - 1}"
                )

    def followers(self):
        """Adjacency list in the content-flow direction: followee -> followers."""
        adj = [[] for _ in range(self.user_count)]
        for follower, followee in self.edges:
            adj[followee].append(follower)
        return adj


def load_graph(edge_records: Iterable[Sequence], user_count: int | None = None) -> SocialGraph:
    """Build a graph from ``(follower, followee)`` records.

    Duplicate edges are collapsed; self-loops raise :class:`ValidationError`.
    When ``user_count`` is omitted it is one more than the largest id seen.
    Record numbers in parse errors are 1-based.
    """
    seen = set()
    edges = []
    max_id = -1
    for lineno, record in enumerate(edge_records, start=1):
        if len(record) != 2:
            raise ParseError(f"expected 2 fields, got {len(record)}", lineno)
        follower, followee = (_parse_id(tok, lineno) for tok in record)
        if follower == followee:
            raise ValidationError(f"line {lineno}: self-loop on user {follower}")
        max_id = max(max_id, follower, followee)
        if (follower, followee) not in seen:
            seen.add((follower, followee))
            edges.append((follower, followee))
    if user_count is None:
        user_count = max_id + 1
    elif user_count <= max_id:
        raise ValidationError(f"user_count {user_count} too small for id {max_id}")
    return SocialGraph(user_count=int(user_count), edges=tuple(edges))


def _read_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return fh.read()
    return source.read()


def _csv_rows(source, header):
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("empty file, missing header", 1) from None
    if [c.strip() for c in first] != header:
        raise ParseError(f"expected header {','.join(header)}", 1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        yield lineno, row


def read_graph_csv(source, user_count=None) -> SocialGraph:
    """Read a ``follower,followee`` CSV from a path or text file object."""
    records = []
    for lineno, (a, b) in _csv_rows(source, ["follower", "followee"]):
        follower, followee = _parse_id(a, lineno), _parse_id(b, lineno)
        if follower == followee:
            raise ValidationError(f"line {lineno}: self-loop on user {follower}")
        records.append((follower, followee))
    return load_graph(records, user_count)


@dataclass(frozen=True)
class Cascade:
    """Adoption events sorted by time; every source adopts at hour 0.

    Use :meth:`from_records` to build one from raw events: it keeps the
    earliest adoption per user and inserts missing sources at time 0.
    """

    source_ids: frozenset[int]
    events: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.source_ids:
            raise ValidationError("a cascade needs at least one source")
        users = [u for u, _ in self.events]
        if len(set(users)) != len(users):
            raise ValidationError("each user may appear at most once in a cascade")
        times = [t for _, t in self.events]
        if any(t < 0 or not np.isfinite(t) for t in times):
            raise ValidationError("adoption times must be finite and >= 0")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValidationError("cascade events must be sorted by time")
        first = dict(self.events)
        for s in self.source_ids:
            if first.get(s) != 0:
                raise ValidationError(f"source {s} must adopt at time 0")

    @classmethod
    def from_records(cls, sources: Iterable[int], events: Iterable[tuple[int, float]]):
        sources = frozenset(int(s) for s in sources)
        earliest: dict[int, float] = {s: 0.0 for s in sources}
        for user, t in events:
            user, t = int(user), float(t)
            if user in sources and t != 0.0:
                # a source's own later re-vote does not move its origin time
                continue
            if user not in earliest or t < earliest[user]:
                earliest[user] = t
        ordered = sorted(earliest.items(), key=lambda item: (item[1], item[0]))
        return cls(source_ids=sources, events=tuple(ordered))

    @property
    def adopters(self):
        return {u for u, _ in self.events}


def read_sources(source) -> list[int]:
    """Read a sources file: one integer id per line, blank lines ignored."""
    lines = _read_text(source).splitlines()
    ids = []
    for lineno, line in enumerate(lines, start=1):
        if line.strip():
            ids.append(_parse_id(line, lineno))
    if not ids:
        raise ParseError("sources file lists no ids")
    return ids


def read_cascade_csv(source, sources: Iterable[int]) -> Cascade:
    """Read a ``user_id,time_hours`` CSV and attach the given sources."""
    events = []
    for lineno, (uid, t) in _csv_rows(source, ["user_id", "time_hours"]):
        user = _parse_id(uid, lineno)
        try:
            hours = float(t)
        except ValueError:
            raise ParseError(f"time {t!r} is not a number", lineno) from None
        if not np.isfinite(hours) or hours < 0:
            raise ParseError(f"time {t!r} must be finite and >= 0", lineno)
        events.append((user, hours))
    return Cascade.from_records(sources, events)


@dataclass(frozen=True)
class DistanceMap:
    distances: Mapping[int, int]
    unreachable_count: int

    def group_sizes(self, exclude=()):
        """Number of users per distance ``x >= 1``, skipping ``exclude`` ids."""
        sizes: dict[int, int] = {}
        excluded = set(exclude)
        for user, x in self.distances.items():
            if x >= 1 and user not in excluded:
                sizes[x] = sizes.get(x, 0) + 1
        return dict(sorted(sizes.items()))


def hop_distances(graph: SocialGraph, sources: Iterable[int]) -> DistanceMap:
    """Multi-source BFS along content flow (followee -> follower)."""
    sources = set(int(s) for s in sources)
    if not sources:
        raise ValidationError("at least one source is required")
    for s in sources:
        if not 0 <= s < graph.user_count:
            raise ValidationError(f"unknown source id {s}")
    adj = graph.followers()
    dist = {s: 0 for s in sources}
    queue = deque(sorted(sources))
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return DistanceMap(
        distances=dict(sorted(dist.items())),
        unreachable_count=graph.user_count - len(dist),
    )


def interest_distance(contents_a, contents_b) -> float:
    """Jaccard distance between two users' sets of shared contents."""
    a, b = set(contents_a), set(contents_b)
    union = a | b
    if not union:
        raise ValidationError("interest distance is undefined for two empty sets")
    return 1.0 - len(a & b) / len(union)


@dataclass(frozen=True)
class DensityField:
    """Influence density ``I(x, t)``: one row per distance, one column per time.

    ``group_sizes`` may be ``None`` for fields that do not come from a graph
    (model output, synthetic data); the count-mode upper bound is then not
    checked.
    """

    distances: tuple[int, ...]
    times: tuple[float, ...]
    values: np.ndarray
    mode: str = "ratio"
    group_sizes: Mapping[int, int] | None = None
    skipped_adopters: int = 0
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "distances", tuple(int(x) for x in self.distances))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.mode not in ("ratio", "count"):
            raise ValidationError(f"unknown density mode {self.mode!r}")
        if values.shape != (len(self.distances), len(self.times)):
            raise ValidationError(
                f"values shape {values.shape} does not match "
                f"{len(self.distances)} distances x {len(self.times)} times"
            )
        if list(self.distances) != sorted(set(self.distances)):
            raise ValidationError("distances must be strictly increasing")
        if list(self.times) != sorted(self.times):
            raise ValidationError("times must be sorted")

    def row(self, x):
        return self.values[self.distances.index(int(x))]

    def column(self, t):
        return self.values[:, self.times.index(float(t))]

    def check_invariants(self, tol=0.0):
        """Raise if a ratio/count bound or row cumulativity is violated."""
        v = self.values
        if np.any(v < -tol):
            raise ValidationError("density values must be non-negative")
        if self.mode == "ratio" and np.any(v > 1 + tol):
            raise ValidationError("ratio-mode density exceeds 1")
        if self.mode == "count" and self.group_sizes is not None:
            caps = np.array([self.group_sizes[x] for x in self.distances], dtype=float)
            if np.any(v > caps[:, None] + tol):
                raise ValidationError("count-mode density exceeds its group size")
        if v.shape[1] > 1 and np.any(np.diff(v, axis=1) < -tol):
            raise ValidationError("density rows must be non-decreasing in time")


def density_field(
    graph: SocialGraph,
    cascade: Cascade,
    time_grid: Sequence[float],
    mode: str = "ratio",
    population: str = "reachable",
) -> DensityField:
    """Cumulative adopters per distance group over ``time_grid``.

    ``population="reachable"`` sizes each group ``U_x`` by every reachable
    user at distance ``x``; ``"adopters"`` counts only eventual adopters.
    Sources (distance 0) are excluded. Adopters unreachable from every
    source are dropped and tallied in ``skipped_adopters``.
    """
    times = [float(t) for t in time_grid]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("time grid must be strictly increasing")
    if mode not in ("ratio", "count"):
        raise ValidationError(f"unknown density mode {mode!r}")
    if population not in ("reachable", "adopters"):
        raise ValidationError(f"unknown population {population!r}")
    for user, _ in cascade.events:
        if not 0 <= user < graph.user_count:
            raise ValidationError(f"cascade user {user} is not in the graph")

    dmap = hop_distances(graph, cascade.source_ids)
    dist = dmap.distances
    skipped = 0
    adopt_at: dict[int, list[float]] = {}
    adopter_ids = set()
    for user, t in cascade.events:
        if user in cascade.source_ids:
            continue
        x = dist.get(user)
        if x is None:
            skipped += 1
            continue
        adopter_ids.add(user)
        adopt_at.setdefault(x, []).append(t)

    if population == "reachable":
        sizes = dmap.group_sizes(exclude=cascade.source_ids)
    else:
        sizes = {x: len(ts) for x, ts in sorted(adopt_at.items())}
    distances = [x for x, n in sizes.items() if n > 0]

    grid = np.asarray(times)
    values = np.zeros((len(distances), len(times)))
    for i, x in enumerate(distances):
        ts = np.sort(np.asarray(adopt_at.get(x, []), dtype=float))
        counts = np.searchsorted(ts, grid, side="right").astype(float)
        values[i] = counts / sizes[x] if mode == "ratio" else counts

    return DensityField(
        distances=tuple(distances),
        times=tuple(times),
        values=values,
        mode=mode,
        group_sizes={x: sizes[x] for x in distances},
        skipped_adopters=skipped,
        meta={"unreachable_users": dmap.unreachable_count},
    )
