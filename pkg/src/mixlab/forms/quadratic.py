"""Dirichlet forms as sparse symmetric rate matrices."""

from __future__ import annotations

import warnings
from itertools import combinations
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from ..graphs import Graph, group_coords
from ..measures import RadialMeasure
from .spaces import (
    DEFAULT_STATE_CAP,
    StateSpace,
    _subset_table,
    permutation_space,
    subset_space,
    swap_neighbors,
    vertex_space,
)

__all__ = [
    "QuadraticForm",
    "rw_form",
    "ip_form",
    "ex_form",
    "ip_form_from_pairs",
    "ip_form_from_measure",
    "measure_pair_weights",
]


class QuadraticForm:
    """``E(f) = norm * sum_{s, s'} rates[s, s'] (f(s') - f(s))^2`` over ordered pairs.

    ``rates`` is symmetric with zero diagonal and holds the jump rate between
    two states.  ``norm`` defaults to ``1 / (2 * size)``, which makes
    ``E(f) = <f, -L f>`` under the uniform law.
    """

    __slots__ = ("space", "rates", "norm", "label")

    def __init__(self, space: StateSpace, rates: sp.spmatrix, norm: float | None = None, label: str = ""):
        rates = sp.csr_matrix(rates, dtype=float)
        rates.sum_duplicates()
        rates.eliminate_zeros()
        if rates.shape != (space.size, space.size):
            raise ValueError("rate matrix does not match state space")
        if rates.nnz and rates.data.min() < 0:
            raise ValueError("rates must be nonnegative")
        if rates.diagonal().any():
            raise ValueError("rates must have zero diagonal")
        if rates.nnz and abs(rates - rates.T).max() > 1e-12 * abs(rates).max():
            raise ValueError("rates must be symmetric")
        self.space = space
        self.rates = rates
        self.norm = float(norm) if norm is not None else 1.0 / (2 * space.size)
        self.label = label

    @property
    def size(self) -> int:
        return self.space.size

    def laplacian(self) -> sp.csr_matrix:
        """``D - W`` scaled so that ``E(f) = f^T L f / size``."""
        w = self.rates
        lap = sp.diags(np.asarray(w.sum(axis=1)).ravel()) - w
        return (lap * (2 * self.norm * self.size)).tocsr()

    def value(self, f: np.ndarray) -> float:
        f = np.asarray(f, dtype=float)
        coo = self.rates.tocoo()
        return float(self.norm * np.sum(coo.data * (f[coo.col] - f[coo.row]) ** 2))

    def max_diagonal(self) -> float:
        return float(self.laplacian().diagonal().max()) if self.size else 0.0

    def _aligned(self, other: "QuadraticForm") -> sp.csr_matrix:
        if other.space != self.space:
            raise ValueError("forms live on different state spaces")
        return other.rates * (other.norm / self.norm)

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        return QuadraticForm(self.space, self.rates + self._aligned(other), self.norm, f"({self.label}+{other.label})")

    def __mul__(self, c: float) -> "QuadraticForm":
        if c < 0:
            raise ValueError("forms can only be scaled by nonnegative constants")
        return QuadraticForm(self.space, self.rates * float(c), self.norm, f"{c:g}*{self.label}")

    __rmul__ = __mul__

    def same_rates(self, other: "QuadraticForm", atol: float = 0.0) -> bool:
        diff = self.rates * self.norm - other.rates * other.norm
        return other.space == self.space and (diff.nnz == 0 or abs(diff).max() <= atol * self.norm)

    def __repr__(self) -> str:
        return f"QuadraticForm({self.space.describe()}, nnz={self.rates.nnz}, label={self.label!r})"


def _symmetric(rows, cols, vals, size) -> sp.csr_matrix:
    w = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return (w + w.T).tocsr()


def _warn_disconnected(G: Graph) -> None:
    if not G.is_connected():
        warnings.warn(f"{G!r} is disconnected", stacklevel=3)


def rw_form(G: Graph) -> QuadraticForm:
    _warn_disconnected(G)
    space = vertex_space(G.vertex_count)
    u, v = G.edges[:, 0], G.edges[:, 1]
    return QuadraticForm(space, _symmetric(u, v, np.ones(len(u)), space.size), label=f"RW[{G.name or ''}]")


def ip_form_from_pairs(m: int, pairs: Iterable[tuple[int, int, float]], cap: int = DEFAULT_STATE_CAP, label: str = "") -> QuadraticForm:
    """IP-type form on ``S_m``: rate ``w`` between ``sigma`` and ``sigma tau_{x,y}``."""
    space = permutation_space(m, cap)
    n = space.size
    idx = np.arange(n)
    w = sp.csr_matrix((n, n))
    rows, cols, vals = [], [], []
    for x, y, weight in pairs:
        if weight == 0 or x == y:
            continue
        nb = swap_neighbors(m, min(x, y), max(x, y))
        keep = idx < nb  # each unordered state pair once
        rows.append(idx[keep])
        cols.append(nb[keep])
        vals.append(np.full(int(keep.sum()), float(weight)))
    if rows:
        w = _symmetric(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)
    return QuadraticForm(space, w, label=label)


def ip_form(G: Graph, cap: int = DEFAULT_STATE_CAP) -> QuadraticForm:
    """Interchange-process form: ``sigma <-> sigma tau_e`` at rate 1 per edge."""
    _warn_disconnected(G)
    return ip_form_from_pairs(
        G.vertex_count, ((u, v, 1.0) for u, v in G.edge_list()), cap=cap, label=f"IP[{G.name or ''}]"
    )


def ex_form(G: Graph, k: int, cap: int = DEFAULT_STATE_CAP) -> QuadraticForm:
    """Exclusion-process form on k-subsets: ``S <-> S xor e`` per boundary edge."""
    _warn_disconnected(G)
    space = subset_space(G.vertex_count, k, cap)
    table = _subset_table(G.vertex_count, k)
    masks = np.array([sum(1 << v for v in s) for s in table], dtype=np.int64)
    lookup = {int(mk): i for i, mk in enumerate(masks)}
    rows, cols = [], []
    for u, v in G.edge_list():
        bu = (masks >> u) & 1
        bv = (masks >> v) & 1
        src = np.flatnonzero((bu == 1) & (bv == 0))
        moved = masks[src] ^ ((1 << u) | (1 << v))
        rows.append(src)
        cols.append(np.array([lookup[int(x)] for x in moved], dtype=np.int64))
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    return QuadraticForm(space, _symmetric(r, c, np.ones(len(r)), space.size), label=f"EX[{G.name or ''},k={k}]")


def measure_pair_weights(density: np.ndarray, n: int, ell: int) -> list[tuple[int, int, float]]:
    """Unordered group pairs ``{x, x+z}`` weighted by ``mu(z)`` (``mu`` symmetric)."""
    density = np.asarray(density, dtype=float)
    size = ell**n
    if density.shape != (size,):
        raise ValueError("density has the wrong length")
    coords = group_coords(n, ell)
    powers = ell ** np.arange(n)
    neg = ((-coords) % ell) @ powers
    if not np.allclose(density, density[neg], atol=1e-15, rtol=1e-12):
        raise ValueError("measure must be symmetric")
    out = []
    for x, y in combinations(range(size), 2):
        z = int(((coords[y] - coords[x]) % ell) @ powers)
        if density[z] > 0:
            out.append((x, y, float(density[z])))
    return out


def ip_form_from_measure(mu, n: int | None = None, ell: int | None = None, cap: int = DEFAULT_STATE_CAP) -> QuadraticForm:
    """IP form on ``S(Z_ell^n)`` driven by a symmetric increment law.

    ``mu`` is a RadialMeasure or a density array (then ``n`` and ``ell`` are
    required).  The rate between ``sigma`` and ``sigma tau_{x,x+z}`` is
    ``mu(z)`` per unordered pair; mass at ``z = 0`` contributes nothing.
    """
    if isinstance(mu, RadialMeasure):
        n, ell, density = mu.n, mu.ell, mu.density()
        label = f"IP[mu={np.round(mu.class_weights, 6).tolist()}]"
    else:
        if n is None or ell is None:
            raise ValueError("n and ell are required for a raw density")
        density = np.asarray(mu, dtype=float)
        label = "IP[mu]"
    return ip_form_from_pairs(ell**n, measure_pair_weights(density, n, ell), cap=cap, label=label)
