"""Radial probability measures on Z_l^n.

A radial measure is ``sum_k a_k rho_k`` where ``rho_k`` is uniform on the
support sphere ``G_k``.  Convolution is diagonalised by the Hamming scheme:
``rho_k`` acts on the weight-``w`` character space by ``K_k(w) / |G_k|``
with ``K_k`` the Krawtchouk polynomial.  That transform cancels badly once
spheres get large, so an all-positive route through the scheme's
intersection numbers is used past a size threshold.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .graphs import group_coords, sphere_size, support_sizes

__all__ = [
    "RadialMeasure",
    "ConvolutionParams",
    "IntervalSpec",
    "rho",
    "pi",
    "uniform_nonzero",
    "sphere_sizes",
    "krawtchouk_matrix",
    "eigenvalues",
    "from_eigenvalues",
    "convolve",
    "convolve_exact",
    "group_convolve",
    "power_convolve",
    "convolution_params",
    "mu_base",
    "occupancy_law",
    "distinct_count_distribution",
    "support_size_distribution",
    "binomial_class_weights",
    "dml_error_constant",
    "interval_I",
    "interval_J",
    "rho_interval",
    "plateau_min_mass",
    "plateau_constant",
    "tv_distance",
    "truncated_pi",
    "pointwise_quarter_check",
    "sample_power_support",
]

# Krawtchouk inversion error grows like (largest sphere) * eps
KRAWTCHOUK_SPHERE_LIMIT = 2**20


def sphere_sizes(n: int, ell: int) -> list[int]:
    return [sphere_size(n, ell, k) for k in range(n + 1)]


class RadialMeasure:
    """Probability measure on ``Z_ell^n`` that is constant on support spheres."""

    __slots__ = ("n", "ell", "class_weights")

    def __init__(self, n: int, ell: int, class_weights: Sequence[float]):
        w = np.asarray(class_weights, dtype=float).copy()
        if n < 1 or ell < 2:
            raise ValueError("need n >= 1 and ell >= 2")
        if w.shape != (n + 1,):
            raise ValueError(f"expected {n + 1} class weights, got {w.shape}")
        if np.any(w < -1e-12):
            raise ValueError("class weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"class weights sum to {w.sum()!r}, not 1")
        w[w < 0] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "ell", int(ell))
        object.__setattr__(self, "class_weights", w)

    def __setattr__(self, key, value):
        raise AttributeError("RadialMeasure is immutable")

    def __reduce__(self):
        return (RadialMeasure, (self.n, self.ell, np.array(self.class_weights)))

    def density(self) -> np.ndarray:
        """Pointwise mass over the group in canonical enumeration order."""
        sizes = np.array(sphere_sizes(self.n, self.ell), dtype=float)
        return (self.class_weights / sizes)[support_sizes(self.n, self.ell)]

    def to_dict(self) -> dict:
        return {"n": self.n, "ell": self.ell, "class_weights": self.class_weights.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RadialMeasure":
        return cls(d["n"], d["ell"], d["class_weights"])

    @classmethod
    def from_json(cls, text: str) -> "RadialMeasure":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"RadialMeasure(n={self.n}, ell={self.ell}, class_weights={self.class_weights.tolist()})"


def rho(n: int, ell: int, k: int) -> RadialMeasure:
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range 0..{n}")
    w = np.zeros(n + 1)
    w[k] = 1.0
    return RadialMeasure(n, ell, w)


def binomial_class_weights(n: int, p: float) -> np.ndarray:
    """``b_k = C(n,k) p^k (1-p)^(n-k)``, the class weights of the uniform law."""
    return stats.binom.pmf(np.arange(n + 1), n, p)


def pi(n: int, ell: int) -> RadialMeasure:
    """Uniform law; class weights ``|G_k| / ell^n``."""
    if n <= 60:
        total = ell**n
        w = [Fraction(s, total) for s in sphere_sizes(n, ell)]
        return RadialMeasure(n, ell, [float(x) for x in w])
    return RadialMeasure(n, ell, _renorm(binomial_class_weights(n, (ell - 1) / ell)))


def uniform_nonzero(n: int, ell: int) -> RadialMeasure:
    """Uniform law on the nonzero elements."""
    sizes = sphere_sizes(n, ell)
    total = ell**n - 1
    w = [0.0] + [s / total for s in sizes[1:]]
    return RadialMeasure(n, ell, w)


def _renorm(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, None)
    return w / w.sum()


@lru_cache(maxsize=128)
def krawtchouk_matrix(n: int, ell: int) -> tuple[tuple[int, ...], ...]:
    """Exact ``K[k][w] = sum_j (-1)^j (ell-1)^(k-j) C(w,j) C(n-w,k-j)``."""
    rows = []
    for k in range(n + 1):
        row = []
        for w in range(n + 1):
            row.append(
                sum(
                    (-1) ** j * (ell - 1) ** (k - j) * math.comb(w, j) * math.comb(n - w, k - j)
                    for j in range(k + 1)
                )
            )
        rows.append(tuple(row))
    return tuple(rows)


@lru_cache(maxsize=128)
def _transform_matrices(n: int, ell: int) -> tuple[np.ndarray, np.ndarray]:
    K = krawtchouk_matrix(n, ell)
    sizes = sphere_sizes(n, ell)
    total = ell**n
    # forward[w, k] = K_k(w) / |G_k| ; inverse[k, w] = |G_w| K_k(w) / ell^n
    fwd = np.array([[float(Fraction(K[k][w], sizes[k])) for k in range(n + 1)] for w in range(n + 1)])
    inv = np.array([[float(Fraction(sizes[w] * K[k][w], total)) for w in range(n + 1)] for k in range(n + 1)])
    fwd.setflags(write=False)
    inv.setflags(write=False)
    return fwd, inv


def eigenvalues(mu: RadialMeasure) -> np.ndarray:
    """Eigenvalue of convolution by ``mu`` on each weight-``w`` character space."""
    fwd, _ = _transform_matrices(mu.n, mu.ell)
    return fwd @ mu.class_weights


def from_eigenvalues(n: int, ell: int, lam: np.ndarray) -> np.ndarray:
    _, inv = _transform_matrices(n, ell)
    return inv @ np.asarray(lam, dtype=float)


def _check_same(mu: RadialMeasure, nu: RadialMeasure) -> None:
    if (mu.n, mu.ell) != (nu.n, nu.ell):
        raise ValueError(f"mismatched groups: (n={mu.n}, l={mu.ell}) vs (n={nu.n}, l={nu.ell})")


def _pick_method(n: int, ell: int, method: str) -> str:
    if method != "auto":
        if method not in ("krawtchouk", "intersection"):
            raise ValueError(f"unknown convolution method {method!r}")
        return method
    return "krawtchouk" if max(sphere_sizes(n, ell)) <= KRAWTCHOUK_SPHERE_LIMIT else "intersection"


def _clean(w: np.ndarray) -> np.ndarray:
    w = np.where((w < 0) & (w > -1e-12), 0.0, w)
    s = w.sum()
    if abs(s - 1.0) <= 1e-12:
        return w
    return w / s


@lru_cache(maxsize=512)
def _step_kernel(n: int, ell: int, j: int) -> np.ndarray:
    """``T[i, k] = P(|supp(x + z)| = k)`` for fixed ``x`` in ``G_i``, ``z`` uniform on ``G_j``."""
    T = np.zeros((n + 1, n + 1))
    i = np.arange(n + 1)
    q = 1.0 / (ell - 1)
    for s in range(0, min(j, n) + 1):
        # s = overlap of the two supports; r of those s coordinates cancel
        h = stats.hypergeom.pmf(s, n, i, j)
        r = np.arange(s + 1)
        b = stats.binom.pmf(r, s, q) if s else np.ones(1)
        k = i[:, None] + j - s - r[None, :]
        w = h[:, None] * b[None, :]
        ok = (k >= 0) & (k <= n) & (w > 0)
        np.add.at(T, (np.broadcast_to(i[:, None], k.shape)[ok], k[ok]), w[ok])
    T.setflags(write=False)
    return T


def _convolve_intersection(a: np.ndarray, b: np.ndarray, n: int, ell: int) -> np.ndarray:
    out = np.zeros(n + 1)
    for j in np.flatnonzero(b > 0):
        out += b[j] * (a @ _step_kernel(n, ell, int(j)))
    return out


def convolve(mu: RadialMeasure, nu: RadialMeasure, method: str = "auto") -> RadialMeasure:
    """Group convolution of two radial measures (result is radial)."""
    _check_same(mu, nu)
    n, ell = mu.n, mu.ell
    if _pick_method(n, ell, method) == "krawtchouk":
        w = from_eigenvalues(n, ell, eigenvalues(mu) * eigenvalues(nu))
    else:
        w = _convolve_intersection(mu.class_weights, nu.class_weights, n, ell)
    return RadialMeasure(n, ell, _clean(w))


def convolve_exact(a: Sequence, b: Sequence, n: int, ell: int) -> list[Fraction]:
    """Rational-arithmetic convolution of class-weight vectors."""
    K = krawtchouk_matrix(n, ell)
    sizes = sphere_sizes(n, ell)
    total = ell**n
    a = [Fraction(x) for x in a]
    b = [Fraction(x) for x in b]
    lam = []
    for w in range(n + 1):
        la = sum(a[k] * Fraction(K[k][w], sizes[k]) for k in range(n + 1))
        lb = sum(b[k] * Fraction(K[k][w], sizes[k]) for k in range(n + 1))
        lam.append(la * lb)
    return [sum(Fraction(sizes[w] * K[k][w], total) * lam[w] for w in range(n + 1)) for k in range(n + 1)]


def group_convolve(f: np.ndarray, g: np.ndarray, n: int, ell: int) -> np.ndarray:
    """Convolution of arbitrary densities on ``Z_ell^n`` by direct summation."""
    coords = group_coords(n, ell)
    powers = ell ** np.arange(n)
    size = ell**n
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    out = np.zeros(size)
    for z in np.flatnonzero(f):
        shifted = ((coords + coords[z]) % ell) @ powers  # x + z
        out[shifted] += f[z] * g
    return out


def power_convolve(
    mu: RadialMeasure, t: int, method: str = "auto", allow_general: bool = False
) -> RadialMeasure:
    """``t``-fold convolution power by repeated squaring.

    ``t`` must be a power of two unless ``allow_general`` is set, in which
    case the binary decomposition is used and a warning is issued.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    if t & (t - 1):
        if not allow_general:
            raise ValueError(f"t={t} is not a power of 2")
        warnings.warn(f"power_convolve with t={t} (not a power of 2)", stacklevel=2)
    if t == 1:
        return mu
    n, ell = mu.n, mu.ell
    if _pick_method(n, ell, method) == "krawtchouk":
        lam = eigenvalues(mu)
        acc = np.ones_like(lam)
        sq = lam.copy()
        e = t
        while e:
            if e & 1:
                acc = acc * sq
            sq = sq * sq
            e >>= 1
        return RadialMeasure(n, ell, _clean(from_eigenvalues(n, ell, acc)))
    result = None
    sq = mu
    e = t
    while e:
        if e & 1:
            result = sq if result is None else convolve(result, sq, method="intersection")
        e >>= 1
        if e:
            sq = convolve(sq, sq, method="intersection")
    return result


@dataclass(frozen=True)
class ConvolutionParams:
    """Step count ``t``, refresh probability ``theta`` and ``p = (l-1)/l``."""

    n: int
    ell: int
    t: int
    theta: float
    p: float

    def rho1_weight(self) -> float:
        return self.theta * self.p


def convolution_params(n: int, ell: int) -> ConvolutionParams:
    if n < 1:
        raise ValueError("n must be positive")
    t = 1 << (n - 1).bit_length()  # 2^ceil(log2 n)
    theta = -n * math.expm1(-math.log(2.0) / t)
    return ConvolutionParams(n=n, ell=ell, t=t, theta=theta, p=(ell - 1) / ell)


def mu_base(n: int, ell: int) -> tuple[RadialMeasure, ConvolutionParams]:
    """``(1 - theta p) rho_0 + theta p rho_1`` with its parameters."""
    params = convolution_params(n, ell)
    w = np.zeros(n + 1)
    w[1] = params.theta * params.p
    w[0] = 1.0 - w[1]
    return RadialMeasure(n, ell, w), params


def occupancy_law(n: int, draws: int, exact: bool = False):
    """Law of the number of distinct values among ``draws`` uniform picks from ``n``.

    ``exact=True`` evaluates the inclusion-exclusion formula in rationals;
    the float path runs the one-draw-at-a-time recursion.
    """
    if exact:
        out = []
        for r in range(n + 1):
            s = sum((-1) ** j * math.comb(r, j) * Fraction(r - j, n) ** draws for j in range(r + 1))
            out.append(math.comb(n, r) * s)
        return out
    p = np.zeros(n + 1)
    p[0] = 1.0
    stay = np.arange(n + 1) / n
    move = 1.0 - stay
    for _ in range(draws):
        p = p * stay + np.r_[0.0, p[:-1] * move[:-1]]
    return p


def distinct_count_distribution(n: int, t: int, theta: float) -> np.ndarray:
    """Law of ``R``, the distinct coordinates among ``N ~ Bin(t, theta)`` picks."""
    if t == 0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    weights = stats.binom.pmf(np.arange(t + 1), t, theta)
    p = np.zeros(n + 1)
    p[0] = 1.0
    stay = np.arange(n + 1) / n
    move = 1.0 - stay
    out = weights[0] * p
    for draws in range(1, t + 1):
        p = p * stay + np.r_[0.0, p[:-1] * move[:-1]]
        out += weights[draws] * p
    return out


def support_size_distribution(n: int, ell: int, t: int, theta: float) -> np.ndarray:
    """Exact law of ``S = |supp X|`` for ``X ~ mu^{*t}``; ``S | R ~ Bin(R, p)``."""
    p = (ell - 1) / ell
    law_r = distinct_count_distribution(n, t, theta)
    k = np.arange(n + 1)
    out = np.zeros(n + 1)
    for r in np.flatnonzero(law_r > 0):
        out[: r + 1] += law_r[r] * stats.binom.pmf(k[: r + 1], r, p)
    return out


def sample_power_support(n: int, ell: int, t: int, theta: float, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo support sizes of ``mu^{*t}``: ``t`` coordinate picks, each refreshed w.p. ``theta``."""
    x = np.zeros((samples, n), dtype=np.int64)
    rows = np.arange(samples)
    for _ in range(t):
        c = rng.integers(0, n, size=samples)
        refresh = rng.random(samples) < theta
        v = rng.integers(0, ell, size=samples)
        x[rows, c] = np.where(refresh, v, x[rows, c])
    return np.count_nonzero(x, axis=1)


def dml_error_constant(n: int, p: float) -> float:
    """``n^{3/2} max_k |b_k - phi(x_k) / sqrt(2 pi n p (1-p))|``."""
    if n < 1 or not 0 < p < 1:
        raise ValueError("need n >= 1 and 0 < p < 1")
    k = np.arange(n + 1)
    sd = math.sqrt(n * p * (1 - p))
    x = (k - n * p) / sd
    gauss = np.exp(-x * x / 2) / (math.sqrt(2 * math.pi) * sd)
    return float(n**1.5 * np.max(np.abs(binomial_class_weights(n, p) - gauss)))


@dataclass(frozen=True)
class IntervalSpec:
    """Open real interval intersected with ``{0, ..., n}``."""

    n: int
    center: float
    halfwidth: float
    grid: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.grid)


def _interval(n: int, center: float, halfwidth: float, name: str, p: float) -> IntervalSpec:
    lo, hi = center - halfwidth, center + halfwidth
    grid = tuple(k for k in range(n + 1) if lo < k < hi)
    if not grid:
        raise ValueError(f"interval {name} is empty for n={n}, p={p}; minimum valid n is {_min_valid_n(p)}")
    return IntervalSpec(n=n, center=center, halfwidth=halfwidth, grid=grid)


def _min_valid_n(p: float) -> int:
    for n in range(1, 10_000):
        hw = 2 * math.sqrt(n * p * (1 - p))
        if any(n * p / 2 - hw < k < n * p / 2 + hw for k in range(n + 1)):
            return n
    return -1


def interval_I(n: int, p: float) -> IntervalSpec:
    return _interval(n, n * p, 2 * math.sqrt(n * p * (1 - p)), "I", p)


def interval_J(n: int, p: float) -> IntervalSpec:
    return _interval(n, n * p / 2, 2 * math.sqrt(n * p * (1 - p)), "J", p)


def rho_interval(n: int, ell: int, spec: IntervalSpec) -> RadialMeasure:
    w = np.zeros(n + 1)
    w[list(spec.grid)] = 1.0 / len(spec.grid)
    return RadialMeasure(n, ell, w)


def plateau_min_mass(n: int, ell: int) -> float:
    """``min_{k in J} P(S = k)`` for ``S`` the support size under ``mu^{*t}``."""
    params = convolution_params(n, ell)
    law = support_size_distribution(n, ell, params.t, params.theta)
    J = interval_J(n, params.p)
    return float(law[list(J.grid)].min())


def plateau_constant(n: int, ell: int) -> float:
    """Largest ``c`` with ``mu^{*t} >= c rho_J`` pointwise."""
    params = convolution_params(n, ell)
    return plateau_min_mass(n, ell) * len(interval_J(n, params.p))


def tv_distance(mu: RadialMeasure, nu: RadialMeasure) -> float:
    _check_same(mu, nu)
    return 0.5 * float(np.abs(mu.class_weights - nu.class_weights).sum())


def truncated_pi(n: int, ell: int) -> tuple[RadialMeasure, float]:
    """Uniform law restricted to spheres with index in ``I``; returns ``(nu, q)``."""
    p = (ell - 1) / ell
    b = pi(n, ell).class_weights
    grid = list(interval_I(n, p).grid)
    w = np.zeros(n + 1)
    w[grid] = b[grid]
    q = float(w.sum())
    return RadialMeasure(n, ell, w / q), q


def pointwise_quarter_check(nu: RadialMeasure) -> bool:
    """True iff ``(nu * nu)(x) >= pi(x) / 4`` everywhere (checked classwise)."""
    sq = convolve(nu, nu)
    b = pi(nu.n, nu.ell).class_weights
    return bool(np.all(sq.class_weights >= b / 4))
