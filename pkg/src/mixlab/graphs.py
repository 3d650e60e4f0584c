"""Finite graphs, cartesian products, Hamming graphs and Cayley graphs of Z_l^n.

Vertices of a product are enumerated in mixed radix with coordinate 0 varying
fastest, so vertex ``x`` of ``Z_l^n`` has index ``sum(x[i] * l**i)``.  Every
module that touches group elements relies on this enumeration.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "DEFAULT_VERTEX_CAP",
    "CapExceeded",
    "Graph",
    "GroupPoint",
    "complete_graph",
    "path_graph",
    "cycle_graph",
    "star_graph",
    "cartesian_product",
    "hamming_graph",
    "hypercube",
    "sphere_size",
    "sphere",
    "support_sizes",
    "group_coords",
    "point_index",
    "cayley_graph",
    "connected_graphs",
    "parse_graph",
]

DEFAULT_VERTEX_CAP = 2**20


class CapExceeded(ValueError):
    """Raised when a state space would exceed its configured size cap."""

    def __init__(self, what: str, size: int, cap: int):
        super().__init__(f"{what}: size {size} exceeds cap {cap}")
        self.what = what
        self.size = size
        self.cap = cap


class Graph:
    """Immutable undirected simple graph with unit edge rates.

    ``edges`` is an ``(E, 2)`` integer array of pairs ``u < v`` in
    lexicographic order.  Products carry per-vertex coordinate ``labels`` and
    the tuple of ``factors`` they were built from.
    """

    __slots__ = ("vertex_count", "edges", "labels", "factors", "name", "_adj")

    def __init__(
        self,
        vertex_count: int,
        edges: Iterable[Sequence[int]] | np.ndarray,
        labels: Sequence[tuple[int, ...]] | None = None,
        factors: Sequence["Graph"] | None = None,
        name: str | None = None,
    ):
        if vertex_count < 1:
            raise ValueError("vertex_count must be positive")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size:
            if np.any(arr[:, 0] == arr[:, 1]):
                raise ValueError("self-loops are not allowed")
            if arr.min() < 0 or arr.max() >= vertex_count:
                raise ValueError("edge endpoint out of range")
            arr = np.sort(arr, axis=1)
            order = np.lexsort((arr[:, 1], arr[:, 0]))
            arr = arr[order]
            if np.any(np.all(arr[1:] == arr[:-1], axis=1)):
                raise ValueError("duplicate edge")
        arr.setflags(write=False)
        object.__setattr__(self, "vertex_count", int(vertex_count))
        object.__setattr__(self, "edges", arr)
        if labels is not None:
            labels = tuple(tuple(int(c) for c in lab) for lab in labels)
            if len(labels) != vertex_count or len(set(labels)) != vertex_count:
                raise ValueError("labels must be distinct, one per vertex")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "factors", tuple(factors) if factors is not None else None)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_adj", None)
        if labels is not None and factors is not None:
            self._check_product_labels()

    def __setattr__(self, key, value):
        raise AttributeError("Graph is immutable")

    def __reduce__(self):
        return (Graph, (self.vertex_count, np.array(self.edges), self.labels, self.factors, self.name))

    def _check_product_labels(self) -> None:
        flat = _flatten_factors(self.factors)
        if len(flat) != len(self.labels[0]):
            raise ValueError("label length does not match number of factors")
        factor_edges = [set(map(tuple, f.edges.tolist())) for f in flat]
        for u, v in self.edges.tolist():
            a, b = self.labels[u], self.labels[v]
            diff = [i for i in range(len(a)) if a[i] != b[i]]
            if len(diff) != 1:
                raise ValueError(f"edge {u}-{v} changes {len(diff)} coordinates")
            i = diff[0]
            if (min(a[i], b[i]), max(a[i], b[i])) not in factor_edges[i]:
                raise ValueError(f"edge {u}-{v} is not a factor edge")

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.vertex_count)

    def adjacency(self) -> sp.csr_matrix:
        if self._adj is None:
            m = self.vertex_count
            u, v = self.edges[:, 0], self.edges[:, 1]
            data = np.ones(2 * len(u))
            adj = sp.csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(m, m))
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def laplacian(self) -> sp.csr_matrix:
        adj = self.adjacency()
        return (sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj).tocsr()

    def neighbors(self, x: int) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[x] : adj.indptr[x + 1]]

    def is_connected(self) -> bool:
        if self.vertex_count == 1:
            return True
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def component_count(self) -> int:
        return int(connected_components(self.adjacency(), directed=False)[0])

    def edge_list(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in self.edges.tolist()]

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edge_list())}

    def to_dict(self) -> dict:
        d = {"vertex_count": self.vertex_count, "edges": self.edges.tolist()}
        if self.labels is not None:
            d["labels"] = [list(lab) for lab in self.labels]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        labels = d.get("labels")
        return cls(d["vertex_count"], d["edges"], labels=[tuple(x) for x in labels] if labels else None)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.vertex_count == other.vertex_count
            and self.edges.shape == other.edges.shape
            and bool(np.all(self.edges == other.edges))
        )

    def __hash__(self) -> int:
        return hash((self.vertex_count, self.edges.tobytes()))

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Graph({self.vertex_count} vertices, {self.edge_count} edges{tag})"


def _flatten_factors(factors) -> list[Graph]:
    out = []
    for f in factors:
        if f.factors is not None:
            out.extend(_flatten_factors(f.factors))
        else:
            out.append(f)
    return out


def complete_graph(m: int) -> Graph:
    edges = [(u, v) for u in range(m) for v in range(u + 1, m)]
    return Graph(m, edges, name=f"complete{m}")


def path_graph(m: int) -> Graph:
    return Graph(m, [(i, i + 1) for i in range(m - 1)], name=f"path{m}")


def cycle_graph(m: int) -> Graph:
    if m < 3:
        raise ValueError("cycle needs at least 3 vertices")
    return Graph(m, [(i, (i + 1) % m) for i in range(m)], name=f"cycle{m}")


def star_graph(m: int) -> Graph:
    """Star on ``m`` vertices with centre 0."""
    return Graph(m, [(0, i) for i in range(1, m)], name=f"star{m}")


def cartesian_product(factors: Sequence[Graph], cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """Cartesian product, first factor varying fastest.

    Nested products are flattened, so ``product([product([A, B]), C])`` and
    ``product([A, B, C])`` coincide vertex-for-vertex.
    """
    if not factors:
        raise ValueError("empty factor list")
    flat = _flatten_factors(factors)
    sizes = [f.vertex_count for f in flat]
    total = math.prod(sizes)
    if total > cap:
        raise CapExceeded("product graph", total, cap)
    strides = np.cumprod([1] + sizes[:-1])
    coords = _mixed_radix_coords(sizes)
    chunks = []
    for i, f in enumerate(flat):
        if f.edge_count == 0:
            continue
        # all vertices whose i-th coordinate is 0, then shift along factor edges
        base = np.flatnonzero(coords[:, i] == 0)
        fu, fv = f.edges[:, 0], f.edges[:, 1]
        u = (base[:, None] + fu[None, :] * strides[i]).ravel()
        v = (base[:, None] + fv[None, :] * strides[i]).ravel()
        chunks.append(np.stack([u, v], axis=1))
    edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    labels = [tuple(row) for row in coords.tolist()]
    name = " x ".join(f.name or f"G{f.vertex_count}" for f in flat)
    return Graph(total, edges, labels=labels, factors=flat, name=name)


def _mixed_radix_coords(sizes: Sequence[int]) -> np.ndarray:
    total = math.prod(sizes)
    idx = np.arange(total)
    cols = []
    for s in sizes:
        cols.append(idx % s)
        idx = idx // s
    return np.stack(cols, axis=1) if cols else np.zeros((1, 0), dtype=np.int64)


def hamming_graph(n: int, ell: int, cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """``K_ell x ... x K_ell`` (n times); regular of degree ``n(ell-1)``."""
    if n < 1 or ell < 2:
        raise ValueError("need n >= 1 and ell >= 2")
    if ell**n > cap:
        raise CapExceeded("hamming graph", ell**n, cap)
    g = cartesian_product([complete_graph(ell)] * n, cap=cap)
    object.__setattr__(g, "name", f"hamming:n={n},l={ell}")
    return g


def hypercube(n: int) -> Graph:
    return hamming_graph(n, 2)


def sphere_size(n: int, ell: int, k: int) -> int:
    """Number of points of ``Z_ell^n`` with exactly ``k`` nonzero coordinates."""
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range 0..{n}")
    return math.comb(n, k) * (ell - 1) ** k


@lru_cache(maxsize=64)
def _coords_cached(n: int, ell: int) -> np.ndarray:
    c = _mixed_radix_coords([ell] * n)
    c.setflags(write=False)
    return c


def group_coords(n: int, ell: int) -> np.ndarray:
    """``(ell**n, n)`` coordinate table in canonical enumeration order."""
    return _coords_cached(n, ell)


def support_sizes(n: int, ell: int) -> np.ndarray:
    return np.count_nonzero(group_coords(n, ell), axis=1)


def point_index(coords: Sequence[int], ell: int) -> int:
    return int(sum(int(c) * ell**i for i, c in enumerate(coords)))


def sphere(n: int, ell: int, k: int) -> np.ndarray:
    """Indices of the support sphere ``G_k``."""
    return np.flatnonzero(support_sizes(n, ell) == k)


@dataclass(frozen=True)
class GroupPoint:
    """Element of ``Z_ell^n`` under coordinate-wise addition mod ``ell``."""

    ell: int
    coords: tuple[int, ...]

    def __post_init__(self):
        if self.ell < 2:
            raise ValueError("ell must be at least 2")
        if any(not 0 <= c < self.ell for c in self.coords):
            raise ValueError("coordinates must lie in 0..ell-1")

    @property
    def n(self) -> int:
        return len(self.coords)

    @classmethod
    def zero(cls, n: int, ell: int) -> "GroupPoint":
        return cls(ell, (0,) * n)

    @classmethod
    def from_index(cls, index: int, n: int, ell: int) -> "GroupPoint":
        coords = []
        for _ in range(n):
            coords.append(index % ell)
            index //= ell
        return cls(ell, tuple(coords))

    def index(self) -> int:
        return point_index(self.coords, self.ell)

    def support(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.coords) if c)

    def __add__(self, other: "GroupPoint") -> "GroupPoint":
        if other.ell != self.ell or other.n != self.n:
            raise ValueError("mismatched groups")
        return GroupPoint(self.ell, tuple((a + b) % self.ell for a, b in zip(self.coords, other.coords)))

    def __neg__(self) -> "GroupPoint":
        return GroupPoint(self.ell, tuple((-a) % self.ell for a in self.coords))

    def __sub__(self, other: "GroupPoint") -> "GroupPoint":
        return self + (-other)


def cayley_graph(n: int, ell: int, generators: Iterable, cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """Cayley graph of ``Z_ell^n``; ``x ~ y`` iff ``y - x`` is a generator.

    ``generators`` may be GroupPoints, coordinate tuples or canonical indices.
    """
    size = ell**n
    if size > cap:
        raise CapExceeded("cayley graph", size, cap)
    gens = set()
    for g in generators:
        if isinstance(g, GroupPoint):
            gens.add(g.coords)
        elif isinstance(g, (int, np.integer)):
            gens.add(GroupPoint.from_index(int(g), n, ell).coords)
        else:
            gens.add(tuple(int(c) % ell for c in g))
    zero = (0,) * n
    if zero in gens:
        raise ValueError("generator set must exclude the identity")
    for g in gens:
        if tuple((-c) % ell for c in g) not in gens:
            raise ValueError(f"generator set is not symmetric: missing -{g}")
    coords = group_coords(n, ell)
    powers = ell ** np.arange(n)
    chunks = []
    for g in sorted(gens):
        target = ((coords + np.asarray(g)) % ell) @ powers
        src = np.arange(size)
        keep = src < target
        chunks.append(np.stack([src[keep], target[keep]], axis=1))
    edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    return Graph(size, edges, labels=[tuple(r) for r in coords.tolist()], name=f"cayley:n={n},l={ell}")


def connected_graphs(m: int) -> list[Graph]:
    """All connected graphs on ``m <= 7`` vertices up to isomorphism."""
    import networkx as nx

    if not 1 <= m <= 7:
        raise ValueError("catalog covers 1..7 vertices")
    out = []
    for g in nx.graph_atlas_g():
        if g.number_of_nodes() == m and nx.is_connected(g):
            out.append(Graph(m, list(g.edges()), name=f"atlas:{m}:{len(out)}"))
    return out


_ATOM = re.compile(r"^(path|cycle|complete|k|star|hypercube|q)[:]?(\d+)$")


def _parse_atom(text: str) -> Graph:
    t = text.strip().lower()
    m = _ATOM.match(t)
    if not m:
        raise ValueError(f"unknown graph atom {text!r}")
    kind, size = m.group(1), int(m.group(2))
    if kind == "path":
        return path_graph(size)
    if kind == "cycle":
        return cycle_graph(size)
    if kind in ("complete", "k"):
        return complete_graph(size)
    if kind == "star":
        return star_graph(size)
    return hypercube(size)


def _parse_params(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        out[key.strip().lower()] = int(val)
    return out


def parse_graph(spec: str, cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """Build a graph from a compact spec string or a JSON object.

    Accepted forms: ``hamming:n=3,l=2``, ``product:path3 x cycle4``,
    ``path:3``, ``cycle4``, ``complete:5``, ``star:4``, ``hypercube:3`` and
    ``{"vertex_count": ..., "edges": [...]}``.
    """
    s = spec.strip()
    if s.startswith("{"):
        return Graph.from_dict(json.loads(s))
    kind, _, rest = s.partition(":")
    kind = kind.strip().lower()
    if kind == "hamming":
        p = _parse_params(rest)
        return hamming_graph(p["n"], p.get("l", p.get("ell", 2)), cap=cap)
    if kind == "product":
        parts = re.split(r"\s+x\s+|\s*\*\s*", rest.strip())
        return cartesian_product([_parse_atom(p) for p in parts], cap=cap)
    return _parse_atom(s)
