"""Structural checks: Aldous' spectral-gap identity and the IP -> EX lumping."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .. import measures
from ..graphs import Graph, group_coords
from .quadratic import ex_form, ip_form, ip_form_from_measure, rw_form
from .spaces import DEFAULT_STATE_CAP, _subset_ranks, all_permutations
from .spectral import Certificate, psd_dominates, spectral_gap

__all__ = ["aldous_check", "lumping_check", "projection_indices", "random_symmetric_density", "octopus_certificates"]


def aldous_check(G: Graph, tol: float = 1e-8, cap: int = DEFAULT_STATE_CAP) -> dict:
    """Compare the IP and RW spectral gaps of ``G``."""
    ip = spectral_gap(ip_form(G, cap=cap))
    rw = spectral_gap(rw_form(G))
    diff = abs(ip.gap - rw.gap)
    return {
        "graph": G.to_dict(),
        "gap_ip": ip.gap,
        "gap_rw": rw.gap,
        "abs_diff": diff,
        "method_ip": ip.method,
        "tol": tol,
        "passed": bool(diff <= tol),
    }


def projection_indices(m: int, S) -> np.ndarray:
    """Index of ``sigma^{-1}(S)`` in the k-subset space, for every permutation."""
    S = frozenset(S)
    perms = all_permutations(m)
    member = np.isin(perms, sorted(S))
    ranks = _subset_ranks(m, len(S))
    weights = 1 << np.arange(m, dtype=np.int64)
    masks = member.astype(np.int64) @ weights
    by_mask = {sum(1 << v for v in s): i for s, i in ranks.items()}
    return np.array([by_mask[int(x)] for x in masks], dtype=np.int64)


def lumping_check(G: Graph, k: int, cap: int = DEFAULT_STATE_CAP, all_sets: bool = True) -> dict:
    """Verify that ``sigma -> sigma^{-1}(S)`` maps the IP generator onto the EX generator.

    For every permutation and every target subset different from its image,
    the aggregated IP rate must equal the EX rate exactly.
    """
    m = G.vertex_count
    ip = ip_form(G, cap=cap)
    ex = ex_form(G, k, cap=cap)
    wex = ex.rates.toarray()
    sets = list(combinations(range(m), k)) if all_sets else [tuple(range(k))]
    worst = 0.0
    for S in sets:
        proj = projection_indices(m, S)
        P = sp.csr_matrix((np.ones(len(proj)), (np.arange(len(proj)), proj)), shape=(len(proj), ex.size))
        agg = (ip.rates @ P).toarray()
        agg[np.arange(len(proj)), proj] = 0.0
        expected = wex[proj]
        worst = max(worst, float(np.abs(agg - expected).max()))
    return {
        "graph": G.to_dict(),
        "k": k,
        "ip_states": ip.size,
        "ex_states": ex.size,
        "subsets_checked": len(sets),
        "max_abs_error": worst,
        "passed": worst == 0.0,
    }


def random_symmetric_density(n: int, ell: int, rng: np.random.Generator, radial: bool = True) -> np.ndarray:
    """Random symmetric probability density on ``Z_ell^n`` (radial by default)."""
    if radial:
        return measures.RadialMeasure(n, ell, rng.dirichlet(np.ones(n + 1))).density()
    size = ell**n
    coords = group_coords(n, ell)
    neg = ((-coords) % ell) @ (ell ** np.arange(n))
    w = rng.dirichlet(np.ones(size))
    w = 0.5 * (w + w[neg])
    return w / w.sum()


def octopus_certificates(
    n: int,
    ell: int,
    samples: int,
    seed: int,
    radial: bool = True,
    cap: int = DEFAULT_STATE_CAP,
    rel_tol: float = 1e-8,
) -> list[Certificate]:
    """``E_{mu * mu} <= 2 E_mu`` for ``samples`` seeded random symmetric measures."""
    rng = np.random.default_rng(seed)
    out = []
    for s in range(samples):
        mu = random_symmetric_density(n, ell, rng, radial)
        sq = measures.group_convolve(mu, mu, n, ell)
        q_mu = ip_form_from_measure(mu, n, ell, cap=cap)
        q_sq = ip_form_from_measure(sq, n, ell, cap=cap)
        out.append(psd_dominates(q_sq, q_mu, 2.0, "octopus", rel_tol, extra={"sample": s, "radial": radial}))
    return out
