"""Enumerated state spaces: vertices, k-subsets and permutations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

from ..graphs import CapExceeded

__all__ = [
    "DEFAULT_STATE_CAP",
    "StateSpace",
    "vertex_space",
    "subset_space",
    "permutation_space",
    "all_permutations",
    "rank_permutations",
    "swap_neighbors",
]

DEFAULT_STATE_CAP = 45_000


@lru_cache(maxsize=16)
def all_permutations(m: int) -> np.ndarray:
    """All permutations of ``range(m)`` in lexicographic (= Lehmer rank) order."""
    arr = np.array(list(permutations(range(m))), dtype=np.int8).reshape(-1, m)
    arr.setflags(write=False)
    return arr


def rank_permutations(perms: np.ndarray) -> np.ndarray:
    """Lehmer-code rank of each row of ``perms``."""
    perms = np.asarray(perms)
    m = perms.shape[1]
    rank = np.zeros(perms.shape[0], dtype=np.int64)
    for i in range(m):
        digit = np.sum(perms[:, i + 1 :] < perms[:, i : i + 1], axis=1)
        rank += digit * math.factorial(m - 1 - i)
    return rank


@lru_cache(maxsize=256)
def swap_neighbors(m: int, x: int, y: int) -> np.ndarray:
    """``rank(sigma tau_{x,y})`` for every permutation ``sigma`` in rank order.

    ``sigma`` is stored as its image array, so right-multiplying by a
    transposition swaps two positions.
    """
    p = np.array(all_permutations(m))
    p[:, [x, y]] = p[:, [y, x]]
    out = rank_permutations(p)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateSpace:
    """Finite state space with index <-> state codecs.

    kind is ``"vertices"``, ``"subsets"`` or ``"permutations"``; ``m`` is the
    number of underlying sites and ``k`` the particle count for subsets.
    """

    kind: str
    m: int
    k: int = 0
    size: int = field(default=0)

    def __post_init__(self):
        if self.kind == "vertices":
            size = self.m
        elif self.kind == "subsets":
            size = math.comb(self.m, self.k)
        elif self.kind == "permutations":
            size = math.factorial(self.m)
        else:
            raise ValueError(f"unknown state space kind {self.kind!r}")
        object.__setattr__(self, "size", size)

    def decode(self, index: int):
        if not 0 <= index < self.size:
            raise IndexError(index)
        if self.kind == "vertices":
            return index
        if self.kind == "subsets":
            return _subset_table(self.m, self.k)[index]
        return tuple(int(v) for v in all_permutations(self.m)[index])

    def encode(self, state) -> int:
        if self.kind == "vertices":
            return int(state)
        if self.kind == "subsets":
            return _subset_ranks(self.m, self.k)[frozenset(state)]
        return int(rank_permutations(np.asarray(state).reshape(1, -1))[0])

    def describe(self) -> str:
        if self.kind == "subsets":
            return f"subsets(m={self.m},k={self.k})"
        return f"{self.kind}(m={self.m})"


@lru_cache(maxsize=64)
def _subset_table(m: int, k: int) -> tuple[frozenset, ...]:
    return tuple(frozenset(c) for c in combinations(range(m), k))


@lru_cache(maxsize=64)
def _subset_ranks(m: int, k: int) -> dict:
    return {s: i for i, s in enumerate(_subset_table(m, k))}


def vertex_space(m: int) -> StateSpace:
    return StateSpace("vertices", m)


def subset_space(m: int, k: int, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    if not 0 < k < m:
        raise ValueError(f"k={k} must lie strictly between 0 and {m}")
    space = StateSpace("subsets", m, k)
    if space.size > cap:
        raise CapExceeded("exclusion state space", space.size, cap)
    return space


def permutation_space(m: int, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    size = math.factorial(m)
    if size > cap:
        raise CapExceeded("permutation state space", size, cap)
    return StateSpace("permutations", m)
