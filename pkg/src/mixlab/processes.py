"""Seeded continuous-time simulators for the interchange, exclusion and random-walk processes.

All processes run as an exponential race: a global clock of rate ``|E|``
rings, and a uniformly chosen edge fires.  Replica ``r`` of master seed ``s``
draws from a Philox stream keyed by ``SeedSequence([s, r])``, so results do
not depend on how replicas are spread over workers.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .graphs import Graph

__all__ = [
    "CHUNK",
    "replica_rng",
    "Permutation",
    "Trajectory",
    "simulate_ip",
    "simulate_ip_trajectory",
    "simulate_ip_snapshots",
    "simulate_ex",
    "simulate_rw",
    "cycle_lengths",
    "max_cycle_fraction",
    "has_long_cycle",
    "run_replicas",
    "default_workers",
]

CHUNK = 4096
_RECORD = np.dtype([("time", "<f8"), ("edge", "<u4")])


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


@dataclass
class Permutation:
    """Labels carried by the vertices: ``images[v]`` is the label sitting at ``v``."""

    images: np.ndarray
    event_count: int = 0

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.int64)
        m = len(self.images)
        if m and not np.array_equal(np.sort(self.images), np.arange(m)):
            raise ValueError("images do not form a bijection")

    @classmethod
    def identity(cls, m: int) -> "Permutation":
        return cls(np.arange(m), 0)

    @property
    def m(self) -> int:
        return len(self.images)

    @property
    def sign(self) -> int:
        return -1 if self.event_count % 2 else 1

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.images)
        inv[self.images] = np.arange(self.m)
        return inv

    def preimage(self, labels: Iterable[int]) -> frozenset[int]:
        """Vertices whose label lies in ``labels``."""
        return frozenset(np.flatnonzero(np.isin(self.images, list(labels))).tolist())

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.images, other.images) and self.event_count == other.event_count


@dataclass
class Trajectory:
    graph: Graph
    seed: int
    replica: int
    t_end: float
    times: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)

    def replay(self, until: float | None = None) -> Permutation:
        until = self.t_end if until is None else until
        count = int(np.searchsorted(self.times, until, side="right"))
        img = list(range(self.graph.vertex_count))
        ends = self.graph.edges
        for e in self.edges[:count].tolist():
            u, v = ends[e]
            img[u], img[v] = img[v], img[u]
        return Permutation(np.array(img), count)

    def dump(self, path: str | Path) -> None:
        header = {
            "graph": self.graph.to_dict(),
            "seed": self.seed,
            "replica": self.replica,
            "t_end": self.t_end,
            "events": int(len(self.times)),
        }
        rec = np.empty(len(self.times), dtype=_RECORD)
        rec["time"] = self.times
        rec["edge"] = self.edges
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "Trajectory":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            rec = np.frombuffer(fh.read(), dtype=_RECORD)
        if len(rec) != header["events"]:
            raise ValueError("truncated trajectory file")
        return cls(
            Graph.from_dict(header["graph"]),
            header["seed"],
            header["replica"],
            header["t_end"],
            rec["time"].astype(float),
            rec["edge"].astype(np.int64),
        )


def _events(edge_count: int, t_end: float, rng: np.random.Generator):
    """Yield ``(times, edges)`` chunks of the rate-``|E|`` race up to ``t_end``."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if edge_count == 0 or t_end == 0:
        return
    now = 0.0
    while True:
        gaps = rng.exponential(1.0 / edge_count, size=CHUNK)
        edges = rng.integers(0, edge_count, size=CHUNK)
        times = now + np.cumsum(gaps)
        stop = int(np.searchsorted(times, t_end, side="right"))
        yield times[:stop], edges[:stop]
        if stop < CHUNK:
            return
        now = float(times[-1])


def _apply(img: list, ends: np.ndarray, edges: np.ndarray) -> None:
    us = ends[edges, 0].tolist()
    vs = ends[edges, 1].tolist()
    for u, v in zip(us, vs):
        img[u], img[v] = img[v], img[u]


def simulate_ip(G: Graph, t_end: float, seed: int, replica: int = 0) -> Permutation:
    """Interchange process from the identity, observed at ``t_end``."""
    rng = replica_rng(seed, replica)
    img = list(range(G.vertex_count))
    count = 0
    for _, edges in _events(G.edge_count, t_end, rng):
        _apply(img, G.edges, edges)
        count += len(edges)
    return Permutation(np.array(img, dtype=np.int64), count)


def simulate_ip_trajectory(G: Graph, t_end: float, seed: int, replica: int = 0) -> Trajectory:
    rng = replica_rng(seed, replica)
    chunks = list(_events(G.edge_count, t_end, rng))
    times = np.concatenate([c[0] for c in chunks]) if chunks else np.zeros(0)
    edges = np.concatenate([c[1] for c in chunks]) if chunks else np.zeros(0, dtype=np.int64)
    return Trajectory(G, seed, replica, float(t_end), times, edges)


def simulate_ip_snapshots(G: Graph, times: Sequence[float], seed: int, replica: int = 0) -> list[Permutation]:
    """States of one trajectory at each of the increasing ``times``."""
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be nondecreasing")
    rng = replica_rng(seed, replica)
    img = list(range(G.vertex_count))
    out: list[Permutation] = []
    count = 0
    k = 0
    for ts, edges in _events(G.edge_count, times[-1] if times else 0.0, rng):
        start = 0
        while k < len(times) and (len(ts) == 0 or times[k] < ts[-1]):
            stop = int(np.searchsorted(ts, times[k], side="right"))
            _apply(img, G.edges, edges[start:stop])
            count += stop - start
            start = stop
            out.append(Permutation(np.array(img, dtype=np.int64), count))
            k += 1
        _apply(img, G.edges, edges[start:])
        count += len(edges) - start
    while k < len(times):
        out.append(Permutation(np.array(img, dtype=np.int64), count))
        k += 1
    return out


def simulate_ex(G: Graph, S0: Iterable[int], t_end: float, seed: int, mode: str = "direct", replica: int = 0) -> frozenset[int]:
    """Exclusion process from ``S0``; ``projected`` reads it off the interchange process."""
    S0 = frozenset(int(x) for x in S0)
    if any(not 0 <= x < G.vertex_count for x in S0):
        raise ValueError(f"S0 contains vertices outside 0..{G.vertex_count - 1}")
    if mode == "projected":
        return simulate_ip(G, t_end, seed, replica).preimage(S0)
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    occ = [x in S0 for x in range(G.vertex_count)]
    rng = replica_rng(seed, replica)
    for _, edges in _events(G.edge_count, t_end, rng):
        _apply(occ, G.edges, edges)
    return frozenset(i for i, o in enumerate(occ) if o)


def simulate_rw(G: Graph, x0: int, t_end: float, seed: int, replica: int = 0) -> int:
    """Single particle crossing each incident edge at unit rate."""
    if not 0 <= x0 < G.vertex_count:
        raise ValueError("x0 out of range")
    rng = replica_rng(seed, replica)
    nbrs = [G.neighbors(x) for x in range(G.vertex_count)]
    x, now = int(x0), 0.0
    while True:
        deg = len(nbrs[x])
        if deg == 0:
            return x
        now += rng.exponential(1.0 / deg)
        if now > t_end:
            return x
        x = int(nbrs[x][rng.integers(deg)])


def cycle_lengths(p: Permutation | np.ndarray) -> list[int]:
    """Cycle lengths in decreasing order, by index-following."""
    img = (p.images if isinstance(p, Permutation) else np.asarray(p)).tolist()
    seen = bytearray(len(img))
    out = []
    for start in range(len(img)):
        if seen[start]:
            continue
        length, x = 0, start
        while not seen[x]:
            seen[x] = 1
            x = img[x]
            length += 1
        out.append(length)
    return sorted(out, reverse=True)


def max_cycle_fraction(p: Permutation | np.ndarray) -> float:
    lengths = cycle_lengths(p)
    return lengths[0] / sum(lengths) if lengths else 0.0


def has_long_cycle(p: Permutation | np.ndarray, fraction: float = 0.5) -> bool:
    """Whether some cycle has length ``>= fraction * m``; stops once decided."""
    img = (p.images if isinstance(p, Permutation) else np.asarray(p)).tolist()
    m = len(img)
    need = fraction * m
    seen = bytearray(m)
    left = m
    for start in range(m):
        if left < need:
            return False
        if seen[start]:
            continue
        length, x = 0, start
        while not seen[x]:
            seen[x] = 1
            x = img[x]
            length += 1
        if length >= need:
            return True
        left -= length
    return False


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _run_block(fn: Callable, seed: int, replicas: range, kwargs: dict) -> list:
    return [fn(seed=seed, replica=r, **kwargs) for r in replicas]


def run_replicas(fn: Callable, replicas: int, seed: int, workers: int = 1, **kwargs) -> list:
    """``[fn(seed=seed, replica=r, **kwargs) for r in range(replicas)]``, optionally in parallel.

    Replica ``r`` always uses stream ``(seed, r)`` and results come back in
    replica order, so the output does not depend on ``workers``.
    """
    workers = max(1, min(int(workers), replicas))
    if workers == 1:
        return _run_block(fn, seed, range(replicas), kwargs)
    bounds = np.linspace(0, replicas, workers + 1).astype(int)
    blocks = [range(a, b) for a, b in zip(bounds, bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(partial(_run_block, fn, seed, kwargs=kwargs), blocks)
        return [x for part in parts for x in part]
