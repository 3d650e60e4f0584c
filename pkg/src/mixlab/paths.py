"""Canonical paths: congestion of path and word families, and the certificates built on them.

Congestion counts traversals with multiplicity, ``E[|gamma| N(e, gamma)]``,
which coincides with the indicator form for simple paths and is the quantity
the Cauchy-Schwarz argument actually needs for non-simple ones.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict, deque
from itertools import combinations, product
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from . import measures
from .forms import (
    DEFAULT_STATE_CAP,
    QuadraticForm,
    comparison_constant,
    ip_form,
    ip_form_from_measure,
    psd_dominates,
)
from .graphs import (
    CapExceeded,
    Graph,
    cartesian_product,
    complete_graph,
    hamming_graph,
    sphere_size,
)

__all__ = [
    "ENUMERATION_LIMIT",
    "PathFamily",
    "WordFamily",
    "CongestionReport",
    "InvalidPath",
    "congestion",
    "spanning_tree_family",
    "identity_family",
    "product_family",
    "lift_rw_word",
    "evaluate_transpositions",
    "lift_family",
    "hamming_reduction_certificate",
    "two_letter_family",
    "sample_two_letter",
    "lemma_final_coefficients",
    "final_comparison_certificate",
    "proof_chain",
]

ENUMERATION_LIMIT = 10**6

Edge = tuple[int, int]


class InvalidPath(ValueError):
    pass


@dataclass
class CongestionReport:
    kappa: float
    mode: str
    argmax: Hashable
    n_samples: int = 0
    std_err: float = 0.0
    loads: dict = field(default_factory=dict, repr=False)


@dataclass
class PathFamily:
    """Random paths in ``source`` routing each edge of ``target``.

    ``routes`` maps a target edge ``(u, v)`` (``u < v``) to a list of
    ``(path, probability)`` pairs; alternatively ``sampler(edge, rng)``
    returns one random path and congestion is estimated by sampling.
    """

    source: Graph
    target: Graph
    routes: dict[Edge, list[tuple[tuple[int, ...], float]]] | None = None
    sampler: Callable[[Edge, np.random.Generator], Sequence[int]] | None = None
    name: str = ""

    def __post_init__(self):
        if self.source.vertex_count != self.target.vertex_count:
            raise ValueError("source and target must share the vertex set")
        if self.routes is None and self.sampler is None:
            raise ValueError("need routes or a sampler")
        if self.routes is not None:
            edges = set(self.source.edge_list())
            for f, dist in self.routes.items():
                for path, _ in dist:
                    _check_path(path, f, edges)

    def support_size(self) -> int:
        if self.routes is None:
            return math.inf
        return sum(len(p) * len(dist) for dist in self.routes.values() for p, _ in dist)


def _check_path(path, f: Edge, edges: set) -> None:
    if {path[0], path[-1]} != set(f):
        raise InvalidPath(f"path {path} does not join {f}")
    for a, b in zip(path, path[1:]):
        if (min(a, b), max(a, b)) not in edges:
            raise InvalidPath(f"path {path} leaves the source graph at {a}-{b}")


def _path_edges(path) -> list[Edge]:
    return [(min(a, b), max(a, b)) for a, b in zip(path, path[1:])]


@dataclass
class WordFamily:
    """Random words over ``generators`` evaluating to each target element.

    ``words`` maps target ``b`` to ``[(word, probability), ...]``;
    ``evaluate(word)`` returns the group element a word evaluates to.
    """

    group: str
    generators: tuple
    words: dict | None
    evaluate: Callable[[tuple], Hashable]
    sampler: Callable | None = None
    name: str = ""

    def check(self) -> None:
        gens = set(self.generators)
        for b, dist in (self.words or {}).items():
            for w, _ in dist:
                if any(a not in gens for a in w):
                    raise InvalidPath(f"word {w} uses a letter outside the generator set")
                if self.evaluate(w) != b:
                    raise InvalidPath(f"word {w} does not evaluate to {b}")


def congestion(family, n_samples: int = 2_000, rng: np.random.Generator | None = None) -> CongestionReport:
    """``max_e sum_f E[|gamma_f| N(e, gamma_f)]`` (or the word analogue)."""
    if isinstance(family, WordFamily):
        return _word_congestion(family, n_samples, rng)
    if family.routes is not None and family.support_size() <= ENUMERATION_LIMIT:
        loads: dict[Edge, float] = defaultdict(float)
        for f, dist in family.routes.items():
            for path, prob in dist:
                length = len(path) - 1
                for e in _path_edges(path):
                    loads[e] += prob * length
        return _report(loads, "exact")
    if family.sampler is None:
        raise ValueError("family too large to enumerate and has no sampler")
    rng = rng or np.random.default_rng(0)
    edges = set(family.source.edge_list())
    sums: dict[Edge, float] = defaultdict(float)
    sq: dict[Edge, float] = defaultdict(float)
    for f in family.target.edge_list():
        per_edge: dict[Edge, np.ndarray] = defaultdict(lambda: np.zeros(n_samples))
        for s in range(n_samples):
            path = tuple(family.sampler(f, rng))
            _check_path(path, f, edges)
            length = len(path) - 1
            for e in _path_edges(path):
                per_edge[e][s] += length
        for e, vals in per_edge.items():
            sums[e] += vals.mean()
            sq[e] += vals.var(ddof=1) / n_samples if n_samples > 1 else 0.0
    rep = _report(sums, "sampled")
    rep.n_samples = n_samples
    rep.std_err = math.sqrt(sq[rep.argmax]) if rep.argmax is not None else 0.0
    return rep


def _report(loads: dict, mode: str) -> CongestionReport:
    if not loads:
        return CongestionReport(0.0, mode, None, loads={})
    best = max(sorted(loads), key=lambda e: loads[e])
    return CongestionReport(float(loads[best]), mode, best, loads=dict(loads))


def _word_congestion(family: WordFamily, n_samples: int, rng) -> CongestionReport:
    loads: dict = defaultdict(float)
    if family.words is not None:
        for b, dist in family.words.items():
            for w, prob in dist:
                for a in w:
                    loads[a] += prob * len(w)
        rep = _report(loads, "exact")
        return rep
    if family.sampler is None:
        raise ValueError("word family has neither words nor a sampler")
    rng = rng or np.random.default_rng(0)
    return family.sampler(n_samples, rng)


# ----------------------------------------------------------------- path families


def _bfs_tree(G: Graph, root: int = 0) -> tuple[list[int], list[int]]:
    """Parents and depths of the BFS tree (neighbours visited in increasing order)."""
    parent = [-1] * G.vertex_count
    depth = [0] * G.vertex_count
    parent[root] = root
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in sorted(int(v) for v in G.neighbors(x)):
            if parent[y] < 0:
                parent[y] = x
                depth[y] = depth[x] + 1
                queue.append(y)
    if min(parent) < 0:
        raise ValueError(f"{G!r} is disconnected")
    return parent, depth


def _tree_path(parent: list[int], depth: list[int], x: int, y: int) -> tuple[int, ...]:
    left, right = [x], [y]
    while left[-1] != right[-1]:
        if depth[left[-1]] >= depth[right[-1]]:
            left.append(parent[left[-1]])
        else:
            right.append(parent[right[-1]])
    return tuple(left + right[-2::-1])


def spanning_tree_family(G: Graph, H: Graph | None = None) -> PathFamily:
    """Route every edge of ``H`` along the BFS tree of ``G`` rooted at 0."""
    H = H if H is not None else complete_graph(G.vertex_count)
    parent, depth = _bfs_tree(G)
    routes = {f: [(_tree_path(parent, depth, *f), 1.0)] for f in H.edge_list()}
    return PathFamily(G, H, routes=routes, name=f"tree[{G.name or ''}->{H.name or ''}]")


def identity_family(G: Graph) -> PathFamily:
    return PathFamily(G, G, routes={f: [(f, 1.0)] for f in G.edge_list()}, name="identity")


def product_family(per_factor: Sequence[PathFamily]) -> PathFamily:
    """Product of factor families; each target edge moves along one coordinate only."""
    if not per_factor:
        raise ValueError("empty factor list")
    for fam in per_factor:
        if fam.routes is None:
            raise ValueError("product_family needs enumerable factor families")
    src = cartesian_product([f.source for f in per_factor])
    tgt = cartesian_product([f.target for f in per_factor])
    if src.labels != tgt.labels:
        raise ValueError("factor mismatch between sources and targets")
    sizes = [f.source.vertex_count for f in per_factor]
    strides = np.cumprod([1] + sizes[:-1]).tolist()
    routes = {}
    for u, v in tgt.edge_list():
        lu, lv = src.labels[u], src.labels[v]
        i = next(c for c in range(len(lu)) if lu[c] != lv[c])
        base = u - lu[i] * strides[i]
        dist = per_factor[i].routes[(lu[i], lv[i])]
        routes[(u, v)] = [(tuple(base + a * strides[i] for a in path), p) for path, p in dist]
    return PathFamily(src, tgt, routes=routes, name="product")


# ----------------------------------------------------------------- word lifting


def lift_rw_word(path: Sequence[int]) -> tuple[Edge, ...]:
    """Palindromic transposition word ``(t_e1, ..., t_ek, ..., t_e1)`` for a path."""
    if len(path) < 2:
        raise InvalidPath("empty path for distinct endpoints")
    edges = _path_edges(path)
    return tuple(edges + edges[-2::-1])


def evaluate_transpositions(word: Sequence[Edge], m: int) -> tuple[int, ...]:
    """Image array of ``w_1 w_2 ... w_k`` (right multiplication swaps positions)."""
    img = list(range(m))
    for x, y in word:
        img[x], img[y] = img[y], img[x]
    return tuple(img)


def _transposition(m: int, x: int, y: int) -> tuple[int, ...]:
    return evaluate_transpositions([(x, y)], m)


def lift_family(family: PathFamily) -> WordFamily:
    """Interchange-process word family obtained by lifting every path."""
    if family.routes is None:
        raise ValueError("lift_family needs an enumerable family")
    m = family.source.vertex_count
    words = {}
    for f, dist in family.routes.items():
        agg: dict = defaultdict(float)
        for path, p in dist:
            agg[lift_rw_word(path)] += p
        words[_transposition(m, *f)] = sorted(agg.items())
    return WordFamily(
        group=f"S({m})",
        generators=tuple(family.source.edge_list()),
        words=words,
        evaluate=lambda w, m=m: evaluate_transpositions(w, m),
        name=f"lift[{family.name}]",
    )


def hamming_reduction_certificate(G: Graph, cap: int = DEFAULT_STATE_CAP, rel_tol: float = 1e-8) -> dict:
    """``E^IP_{K_l^n} <= l^3 E^IP_G`` for a product ``G`` of side ``l``.

    Builds BFS-tree families per factor, takes their product, lifts to the
    interchange process and checks ``kappa_IP <= 4 kappa <= l^3``; when the
    permutation space fits under ``cap`` the inequality is also certified
    spectrally.
    """
    start = time.perf_counter()
    factors = G.factors if G.factors is not None else (G,)
    ell = factors[0].vertex_count
    if any(f.vertex_count != ell for f in factors):
        raise ValueError("all factors must have the same side length")
    n = len(factors)
    fams = [spanning_tree_family(f, complete_graph(ell)) for f in factors]
    fam = product_family(fams)
    kappa = congestion(fam)
    kappa_ip = congestion(lift_family(fam))
    out = {
        "lemma_id": "hamming_reduction",
        "n": n,
        "ell": ell,
        "kappa": kappa.kappa,
        "factor_kappas": [congestion(f).kappa for f in fams],
        "kappa_ip": kappa_ip.kappa,
        "bound": ell**3,
        "path_level_passed": bool(kappa_ip.kappa <= 4 * kappa.kappa + 1e-12 and 4 * kappa.kappa <= ell**3 + 1e-12),
        "psd": None,
    }
    size = math.factorial(G.vertex_count)
    if size <= cap:
        hamming = hamming_graph(n, ell)
        cert = psd_dominates(ip_form(hamming, cap=cap), ip_form(G, cap=cap), ell**3, "hamming_reduction", rel_tol)
        out["psd"] = cert.to_dict()
    out["passed"] = out["path_level_passed"] and (out["psd"] is None or out["psd"]["passed"])
    out["wall_time"] = time.perf_counter() - start
    return out


# ----------------------------------------------------------------- two-letter words on Z_l^n


def _group_add(n: int, ell: int):
    powers = [ell**k for k in range(n)]

    def add(*xs):
        return sum(powers[k] * (sum(x // powers[k] for x in xs) % ell) for k in range(n))

    return add


def two_letter_family(n: int, ell: int, i: int, j: int) -> WordFamily:
    """Words ``(X, Y)`` with ``(X, Y)`` uniform over disjoint-support pairs in ``G_i x G_j``.

    For each ``b`` in ``G_{i+j}`` the word law is that of ``(X, Y)`` given
    ``X + Y = b``; group elements are canonical indices.
    """
    if i < 0 or j < 0 or i + j > n:
        raise ValueError(f"need i, j >= 0 and i + j <= n, got i={i}, j={j}, n={n}")
    pairs = sphere_size(n, ell, i) * math.comb(n - i, j) * (ell - 1) ** j
    add = _group_add(n, ell)
    if pairs > ENUMERATION_LIMIT:
        def sampler(n_samples, rng, n=n, ell=ell, i=i, j=j):
            return _sampled_two_letter_congestion(n, ell, i, j, n_samples, rng)

        # letters range over G_i and G_j; too many to list
        return WordFamily(f"Z_{ell}^{n}", (), None, evaluate=lambda w: add(*w), sampler=sampler, name=f"two_letter({i},{j})")
    xs, xmask = _sphere_points(n, ell, i)
    ys, ymask = _sphere_points(n, ell, j)
    gens = tuple(sorted(set(xs.tolist()) | set(ys.tolist())))
    by_target: dict[int, list] = defaultdict(list)
    for x, mx in zip(xs.tolist(), xmask.tolist()):
        # disjoint supports: the sum has no wrap-around, so indices simply add
        for y in ys[(ymask & mx) == 0].tolist():
            by_target[x + y].append((x, y))
    words = {b: [(w, 1.0 / len(ws)) for w in ws] for b, ws in sorted(by_target.items())}
    return WordFamily(f"Z_{ell}^{n}", gens, words, evaluate=lambda w: add(*w), name=f"two_letter({i},{j})")


def _sphere_points(n: int, ell: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of ``G_k`` with their support bitmasks, without the full coordinate table."""
    idx, masks = [], []
    powers = [ell**c for c in range(n)]
    for supp in combinations(range(n), k):
        mask = sum(1 << c for c in supp)
        for vals in product(range(1, ell), repeat=k):
            idx.append(sum(v * powers[c] for v, c in zip(vals, supp)))
            masks.append(mask)
    return np.array(idx, dtype=np.int64), np.array(masks, dtype=np.int64)


def sample_two_letter(n: int, ell: int, i: int, j: int, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` pairs ``(X, Y)``: supports first, then uniform nonzero values."""
    powers = ell ** np.arange(n)
    X = np.zeros((size, n), dtype=np.int64)
    Y = np.zeros((size, n), dtype=np.int64)
    for s in range(size):
        perm = rng.permutation(n)
        X[s, perm[:i]] = rng.integers(1, ell, size=i)
        Y[s, perm[i : i + j]] = rng.integers(1, ell, size=j)
    return X @ powers, Y @ powers


def _sampled_two_letter_congestion(n, ell, i, j, n_samples, rng) -> CongestionReport:
    X, Y = sample_two_letter(n, ell, i, j, n_samples, rng)
    target = sphere_size(n, ell, i + j)
    # kappa = 2 |G_{i+j}| max_a (P(X=a) + P(Y=a)); the letter law is radial, so
    # estimate the mass of each Hamming class and spread it over its sphere
    letters = np.r_[X, Y]
    weights = np.count_nonzero((letters[:, None] // ell ** np.arange(n)) % ell, axis=1)
    mass = np.bincount(weights, minlength=n + 1) / n_samples
    per_letter = np.array([mass[k] / sphere_size(n, ell, k) for k in range(n + 1)])
    best = int(np.argmax(per_letter))
    kappa = 2 * target * per_letter[best]
    p_hat = min(mass[best] / 2, 1.0)
    se = 2 * target * 2 * math.sqrt(p_hat * (1 - p_hat) / n_samples) / sphere_size(n, ell, best)
    return CongestionReport(float(kappa), "sampled", best, n_samples=n_samples, std_err=float(se))


def lemma_final_coefficients(n: int, ell: int, i: int, j: int) -> tuple[float, float]:
    """Coefficients of ``E_{rho_i}`` and ``E_{rho_j}`` bounding ``E_{rho_{i+j}}``."""
    gi, gj = sphere_size(n, ell, i), sphere_size(n, ell, j)
    m = min(gi, gj)
    return 8 * gi / m, 8 * gj / m


class _MeasureForms:
    """Caches measure-driven IP forms ``E_{rho_k}`` on ``S(Z_l^n)``."""

    def __init__(self, n: int, ell: int, cap: int):
        self.n, self.ell, self.cap = n, ell, cap
        self._cache: dict = {}

    def rho(self, k: int) -> QuadraticForm:
        if k not in self._cache:
            self._cache[k] = ip_form_from_measure(measures.rho(self.n, self.ell, k), cap=self.cap)
        return self._cache[k]

    def of(self, mu: measures.RadialMeasure) -> QuadraticForm:
        w = mu.class_weights
        out = None
        for k in np.flatnonzero(w):
            term = float(w[k]) * self.rho(int(k))
            out = term if out is None else out + term
        return out if out is not None else 0.0 * self.rho(0)


def final_comparison_certificate(n: int, ell: int, cap: int = DEFAULT_STATE_CAP, rel_tol: float = 1e-8) -> dict:
    """Spectral check of the two-letter comparison for every ``i + j <= n``."""
    start = time.perf_counter()
    size = math.factorial(ell**n)
    if size > cap:
        raise CapExceeded("final comparison permutation space", size, cap)
    forms = _MeasureForms(n, ell, cap)
    certs = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            a, b = lemma_final_coefficients(n, ell, i, j)
            rhs = a * forms.rho(i) + b * forms.rho(j)
            lhs = forms.rho(i + j)
            fam = two_letter_family(n, ell, i, j)
            kap = congestion(fam)
            gi, gj, gij = (sphere_size(n, ell, x) for x in (i, j, i + j))
            expected = 2 * gij / min(gi, gj) * (2 if i == j else 1)
            cert = psd_dominates(
                lhs, rhs, 1.0, f"final_comparison(i={i},j={j})", rel_tol,
                extra={"i": i, "j": j, "coef_i": a, "coef_j": b, "kappa": kap.kappa, "kappa_formula": expected},
            )
            certs.append(cert.to_dict())
    p = (ell - 1) / ell
    ratios = {}
    try:
        J = measures.interval_J(n, p)
        ratios = {str(i): (ell - 1) * (n - i) / (i + 1) for i in J.grid}
    except ValueError:
        J = None
    return {
        "lemma_id": "final_comparison",
        "n": n,
        "ell": ell,
        "certificates": certs,
        "sphere_ratios_over_J": ratios,
        "passed": all(c["passed"] for c in certs),
        "wall_time": time.perf_counter() - start,
    }


# ----------------------------------------------------------------- proof chain


def _link2_constant(n: int, ell: int, I, J) -> tuple[float, bool]:
    """Constant ``c`` in ``E_{rho_I} <= c E_{rho_J}`` assembled from the two-letter bound."""
    jset = set(J.grid)
    weights: dict[int, float] = defaultdict(float)
    covered = True
    for s in I.grid:
        if s == 0:
            continue  # E_{rho_0} vanishes
        i, j = s // 2, s - s // 2
        if i not in jset or j not in jset:
            covered = False
            continue
        a, b = lemma_final_coefficients(n, ell, i, j)
        weights[i] += a / len(I.grid)
        weights[j] += b / len(I.grid)
    if not covered:
        return math.inf, False
    useful = [w for k, w in weights.items() if k > 0]
    return (len(J.grid) * max(useful) if useful else 0.0), True


def proof_chain(n: int, ell: int, exact: bool | None = None, cap: int = DEFAULT_STATE_CAP) -> dict:
    """Numerical constants for ``E_pi <= c1 E_I <= c1 c2 E_J <= c1 c2 c3 E_{mu^t} <= c1 c2 c3 c4 E_{rho_1}``.

    ``exact`` additionally computes every link as a true comparison constant
    (default: when ``(ell^n)!`` fits under ``cap``).
    """
    p = (ell - 1) / ell
    params = measures.convolution_params(n, ell)
    I = measures.interval_I(n, p)
    J = measures.interval_J(n, p)
    b = measures.pi(n, ell).class_weights
    nu, q = measures.truncated_pi(n, ell)
    quarter = measures.pointwise_quarter_check(nu)
    c1 = 8.0 / q * len(I) * max(b[k] for k in I.grid) if quarter else math.inf
    c2, covered = _link2_constant(n, ell, I, J)
    plateau = measures.plateau_constant(n, ell)
    c3 = 1.0 / plateau if plateau > 0 else math.inf
    c4 = params.theta * params.p * params.t
    chain = c1 * c2 * c3 * c4
    out = {
        "n": n,
        "ell": ell,
        "t": params.t,
        "theta": params.theta,
        "I": list(I.grid),
        "J": list(J.grid),
        "q": q,
        "quarter_check": quarter,
        "I_covered_by_pairs": covered,
        "links": {"pi<=I": c1, "I<=J": c2, "J<=mu_t": c3, "mu_t<=rho1": c4},
        "link1_wide_constant": 32.0 / 3.0 * len(I) * max(b[k] for k in I.grid),
        "chain": chain,
        # rates: complete graph = ell^n * pi, Hamming graph = n(ell-1) * rho_1
        "chi_bound_hamming": ell**n * chain / (n * (ell - 1)),
        "c4_le_2n": c4 <= 2 * n,
    }
    if exact is None:
        exact = math.factorial(ell**n) <= cap
    if exact:
        forms = _MeasureForms(n, ell, cap)
        q_pi = forms.of(measures.pi(n, ell))
        q_i = forms.of(measures.rho_interval(n, ell, I))
        q_j = forms.of(measures.rho_interval(n, ell, J))
        mu, _ = measures.mu_base(n, ell)
        q_mu = forms.of(measures.power_convolve(mu, params.t))
        q_1 = forms.rho(1)
        out["exact_links"] = {
            "pi<=I": comparison_constant(q_pi, q_i).chi,
            "I<=J": comparison_constant(q_i, q_j).chi,
            "J<=mu_t": comparison_constant(q_j, q_mu).chi,
            "mu_t<=rho1": comparison_constant(q_mu, q_1).chi,
        }
        out["exact_pi_rho1"] = comparison_constant(q_pi, q_1).chi
        out["exact_chi_hamming"] = comparison_constant(
            ip_form(complete_graph(ell**n), cap=cap), ip_form(hamming_graph(n, ell), cap=cap)
        ).chi
    return out
