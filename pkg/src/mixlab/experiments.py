"""Experiments on top of the forms, paths and processes layers.

Exact mixing times come from uniformization of the interchange generator;
Monte Carlo quantities (Wilson-type TV lower bounds, ``t_cyc``) carry
explicit confidence statements.  Results are packaged as
:class:`ExperimentRecord` directories that replay from their stored config.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import optimize, stats

from .forms import (
    DEFAULT_STATE_CAP,
    QuadraticForm,
    comparison_constant,
    ex_form,
    ip_form,
    rw_form,
    spectral_gap,
)
from .graphs import CapExceeded, Graph, complete_graph, hamming_graph
from .paths import proof_chain
from .processes import has_long_cycle, run_replicas, simulate_ip, simulate_ip_snapshots

__all__ = [
    "POISSON_TAIL",
    "ExperimentRecord",
    "Uniformized",
    "ip_distribution",
    "exact_mixing_time",
    "WilsonStatistic",
    "wilson_statistic",
    "tv_lower_bound",
    "TcycResult",
    "default_time_grid",
    "t_cyc_estimate",
    "LSIResult",
    "lsi_ratio",
    "lsi_lower_bound",
    "comparison_pipeline",
]

POISSON_TAIL = 1e-12


# ----------------------------------------------------------------- records


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        o = float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def _strip_timing(o):
    if isinstance(o, dict):
        return {k: _strip_timing(v) for k, v in o.items() if k != "wall_time"}
    if isinstance(o, list):
        return [_strip_timing(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False)


@dataclass
class ExperimentRecord:
    """Config, seed and outputs of one run.

    Timings never enter ``record.json`` (they go to ``timing.json``), so a
    replayed exact run reproduces the record byte for byte.
    """

    experiment_id: str
    config: dict
    seed: int | None
    outputs: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def record_dict(self) -> dict:
        return _strip_timing(_jsonable(
            {
                "experiment_id": self.experiment_id,
                "seed": self.seed,
                "outputs": self.outputs,
                "tolerances": self.tolerances,
                "tables": sorted(self.tables),
            }
        ))

    def save(self, root: str | Path = "runs", run_dir: str | Path | None = None) -> Path:
        if run_dir is None:
            stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
            run_dir = Path(root) / f"{stamp}-{self.experiment_id}"
        run_dir = Path(run_dir)
        (run_dir / "tables").mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(dumps(self.config) + "\n", encoding="utf-8")
        (run_dir / "record.json").write_text(dumps(self.record_dict()) + "\n", encoding="utf-8")
        (run_dir / "timing.json").write_text(dumps({"wall_time": self.wall_time}) + "\n", encoding="utf-8")
        for name, (columns, rows) in self.tables.items():
            with open(run_dir / "tables" / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(columns)
                for row in rows:
                    w.writerow([_csv_cell(x) for x in row])
        return run_dir

    @classmethod
    def load(cls, run_dir: str | Path) -> "ExperimentRecord":
        run_dir = Path(run_dir)
        config = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        rec = json.loads((run_dir / "record.json").read_text(encoding="utf-8"))
        tables = {}
        for name in rec["tables"]:
            with open(run_dir / "tables" / f"{name}.csv", newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
            tables[name] = (rows[0], rows[1:])
        timing = run_dir / "timing.json"
        wall = json.loads(timing.read_text())["wall_time"] if timing.exists() else 0.0
        return cls(rec["experiment_id"], config, rec["seed"], rec["outputs"], tables, rec["tolerances"], wall)


def _csv_cell(x):
    x = _jsonable(x)
    return repr(x) if isinstance(x, float) else x


# ----------------------------------------------------------------- exact mixing


class Uniformized:
    """``exp(tL) e_0`` for the interchange generator via Poisson mixtures of ``P^k e_0``.

    ``P = I + L / Lambda`` with ``Lambda`` the largest total jump rate; the
    powers are cached so that many ``t`` values cost one sweep.
    """

    def __init__(self, Q: QuadraticForm, start: int = 0):
        rates = Q.rates
        out = np.asarray(rates.sum(axis=1)).ravel()
        self.rate = float(out.max()) if Q.size > 1 else 0.0
        self.size = Q.size
        if self.rate > 0:
            self.P = (rates / self.rate + sp.diags(1.0 - out / self.rate)).tocsr()
        else:
            self.P = sp.identity(self.size, format="csr")
        v = np.zeros(self.size)
        v[start] = 1.0
        self._powers = [v]

    def _power(self, k: int) -> np.ndarray:
        while len(self._powers) <= k:
            self._powers.append(self.P.T @ self._powers[-1])
        return self._powers[k]

    def distribution(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        lam = self.rate * t
        if lam == 0:
            return self._power(0).copy()
        hi = int(stats.poisson.isf(POISSON_TAIL, lam)) + 1
        lo = int(stats.poisson.ppf(POISSON_TAIL, lam))
        ks = np.arange(lo, hi + 1)
        w = stats.poisson.pmf(ks, lam)
        out = np.zeros(self.size)
        for k, wk in zip(ks.tolist(), w.tolist()):
            out += wk * self._power(k)
        return out / w.sum()

    def tv_to_uniform(self, t: float) -> float:
        return 0.5 * float(np.abs(self.distribution(t) - 1.0 / self.size).sum())


def ip_distribution(G: Graph, t: float, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Exact law of the interchange process at ``t`` from the identity (Lehmer order)."""
    return Uniformized(ip_form(G, cap=cap)).distribution(t)


def exact_mixing_time(G: Graph, epsilon: float = math.exp(-1), tol: float = 1e-4, cap: int = DEFAULT_STATE_CAP) -> float:
    """Smallest ``t`` (to ``tol``) with ``TV(xi_t, uniform) <= epsilon``.

    The identity start is worst case by transitivity; TV to stationarity is
    nonincreasing in ``t``, so bisection applies.  Returns the upper end of
    the final bracket.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    size = math.factorial(G.vertex_count)
    if size > cap:
        raise CapExceeded("exact mixing-time state space", size, cap)
    U = Uniformized(ip_form(G, cap=cap))
    if U.tv_to_uniform(0.0) <= epsilon:
        return 0.0
    if U.rate == 0:
        return math.inf
    hi = 1.0 / U.rate
    while U.tv_to_uniform(hi) > epsilon:
        hi *= 2
        if hi > 1e6:
            return math.inf
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if U.tv_to_uniform(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------- Wilson lower bound


def _first_eigenvector(G: Graph) -> np.ndarray:
    lap = G.laplacian().toarray()
    vals, vecs = np.linalg.eigh(lap)
    v = vecs[:, 1]
    return v * (1 if v[np.argmax(np.abs(v))] > 0 else -1)


class WilsonStatistic:
    """``W(sigma) = sum_x phi(x) phi(sigma(x))`` for a fixed vector ``phi``."""

    def __init__(self, phi: np.ndarray):
        self.phi = np.asarray(phi, dtype=float)

    def __call__(self, images: np.ndarray) -> float:
        return float(self.phi @ self.phi[np.asarray(images)])


def wilson_statistic(G: Graph) -> WilsonStatistic:
    """Wilson statistic with ``phi`` a slowest RW eigenvector of ``G``.

    For products ``phi`` is the sum over coordinates of the first factor's
    eigenvector, itself an eigenvector of the product walk.
    """
    if G.factors is not None and G.labels is not None:
        base = _first_eigenvector(G.factors[0])
        lab = np.asarray(G.labels)
        phi = sum(base[lab[:, i]] for i in range(lab.shape[1]) if G.factors[i].vertex_count == len(base))
    else:
        phi = _first_eigenvector(G)
    return WilsonStatistic(phi)


def _ip_statistic(G: Graph, t: float, seed: int, replica: int, statistic) -> float:
    return statistic(simulate_ip(G, t, seed, replica).images)


def tv_lower_bound(
    G: Graph,
    t: float,
    statistic: Callable[[np.ndarray], float] | None = None,
    replicas: int = 10_000,
    seed: int = 0,
    bins: int = 64,
    delta: float = 0.05,
    workers: int = 1,
) -> dict:
    """Binned two-sample lower bound on ``TV(xi_t, uniform)`` holding with prob. ``>= 1 - delta``.

    Bin edges are equal-probability quantiles of an independent uniform
    calibration sample.  Each empirical histogram deviates from its law by
    at most ``sqrt(B/r)/2 + sqrt(ln(2/delta)/(2r))`` in TV with probability
    ``>= 1 - delta/2``; both corrections are subtracted.
    """
    correction = 2 * (0.5 * math.sqrt(bins / replicas) + math.sqrt(math.log(2 / delta) / (2 * replicas)))
    if correction >= 1:
        raise ValueError(f"{replicas} replicas are too few for {bins} bins at delta={delta}")
    stat = statistic or wilson_statistic(G)
    m = G.vertex_count
    at_t = np.array(run_replicas(_ip_statistic, replicas, seed, workers, G=G, t=t, statistic=stat))
    rng_cal = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2**31, 1])))
    rng_uni = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2**31, 2])))
    calib = np.array([stat(rng_cal.permutation(m)) for _ in range(replicas)])
    uni = np.array([stat(rng_uni.permutation(m)) for _ in range(replicas)])
    edges = np.unique(np.quantile(calib, np.linspace(0, 1, bins + 1)[1:-1]))
    h_t = np.bincount(np.searchsorted(edges, at_t, side="right"), minlength=len(edges) + 1) / replicas
    h_u = np.bincount(np.searchsorted(edges, uni, side="right"), minlength=len(edges) + 1) / replicas
    empirical = 0.5 * float(np.abs(h_t - h_u).sum())
    return {
        "t": t,
        "replicas": replicas,
        "bins": bins,
        "delta": delta,
        "empirical_tv": empirical,
        "correction": correction,
        "lower_bound": max(0.0, empirical - correction),
    }


# ----------------------------------------------------------------- t_cyc


def default_time_grid() -> np.ndarray:
    return np.geomspace(0.05, 8.0, 30)


@dataclass
class TcycResult:
    t_cyc: float
    censored: bool
    t_lower: float
    t_upper: float
    grid: list
    success: list
    replicas: int
    confidence: float

    def rows(self) -> list[tuple]:
        out = []
        for t, k in zip(self.grid, self.success):
            lo, hi = _clopper_pearson(k, self.replicas, self.confidence)
            out.append((t, k, self.replicas, k / self.replicas, lo, hi))
        return out

    columns = ("t", "success_count", "replicas", "p_hat", "ci_lo", "ci_hi")


def _clopper_pearson(k: int, n: int, confidence: float) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="exact")
    return float(ci.low), float(ci.high)


def _cycle_indicators(G: Graph, times: Sequence[float], seed: int, replica: int, fraction: float) -> list[bool]:
    return [has_long_cycle(p, fraction) for p in simulate_ip_snapshots(G, times, seed, replica)]


def t_cyc_estimate(
    G: Graph,
    time_grid: Sequence[float] | None = None,
    replicas: int = 200,
    seed: int = 0,
    workers: int = 1,
    confidence: float = 0.95,
    fraction: float = 0.5,
    threshold: float = 0.25,
) -> TcycResult:
    """Earliest grid time where ``P(some cycle >= |V|/2) >= 1/4`` empirically.

    Each replica is one trajectory observed at every grid time, so refining
    the grid never moves the estimate later.  ``t_lower``/``t_upper`` are the
    earliest times where the upper/lower confidence limit reaches the threshold.
    """
    grid = [float(t) for t in (default_time_grid() if time_grid is None else time_grid)]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("time grid must be strictly increasing")
    ind = run_replicas(_cycle_indicators, replicas, seed, workers, G=G, times=grid, fraction=fraction)
    success = np.sum(np.array(ind, dtype=bool).reshape(replicas, len(grid)), axis=0).tolist()
    res = TcycResult(math.inf, True, math.inf, math.inf, grid, success, replicas, confidence)
    for t, k, _, p, lo, hi in res.rows():
        if hi >= threshold and res.t_lower == math.inf:
            res.t_lower = t
        if p >= threshold and res.t_cyc == math.inf:
            res.t_cyc, res.censored = t, False
        if lo >= threshold and res.t_upper == math.inf:
            res.t_upper = t
    return res


# ----------------------------------------------------------------- log-Sobolev


@dataclass
class LSIResult:
    lower_bound: float
    trel_rw: float
    sandwich_lower: float
    chi_ex: float
    rho_K_upper: float
    sandwich_upper: float
    lee_yau_order: float
    trials: int
    best: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("best")
        return d


def lsi_ratio(Q: QuadraticForm, g: np.ndarray) -> float:
    """``Ent(g^2) / E(g)`` under the uniform law (``0`` for constant ``g``)."""
    g = np.asarray(g, dtype=float)
    f = g * g
    mean = f.mean()
    if mean <= 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = float(np.mean(np.where(f > 0, f * np.log(f / mean), 0.0)))
    energy = Q.value(g)
    if energy <= 1e-14 * max(mean, 1e-300):
        return 0.0
    return ent / energy


def _neg_log_ratio(g, lap, size):
    f = g * g
    mean = f.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(f > 0, np.log(f / mean), 0.0)
    ent = float(np.mean(f * logs))
    lg = lap @ g
    energy = float(g @ lg) / size
    if ent <= 0 or energy <= 0:
        return 0.0, np.zeros_like(g)
    d_ent = 2 * g * logs / size
    d_en = 2 * lg / size
    val = -(math.log(ent) - math.log(energy))
    return val, -(d_ent / ent - d_en / energy)


def lsi_lower_bound(Q: QuadraticForm, trials: int = 20, seed: int = 0, maxiter: int = 500, G: Graph | None = None, k: int | None = None) -> LSIResult:
    """Best ``Ent(f)/E(sqrt f)`` over optimized test functions: a valid lower bound on ``rho``.

    Starts are the slowest eigenvector perturbation of the constant (which
    already certifies ``2 trel``) plus ``trials`` random log-normal vectors;
    each is polished with L-BFGS on ``log Ent - log E``.  When ``G`` and
    ``k`` are given the sandwich ``trel^RW / 2 <= rho <= chi^EX rho^EX_K`` is
    reported, with ``rho^EX_K`` bounded above by the spectral bound
    ``trel log(1/pi_* - 1) / (1 - 2 pi_*)``.
    """
    size = Q.size
    lap = Q.laplacian()
    rng = np.random.default_rng(seed)
    vals, vecs = np.linalg.eigh(lap.toarray()) if size <= 4_000 else (None, None)
    starts = []
    if vecs is not None and size > 1:
        v = vecs[:, 1]
        starts.append(1.0 + 1e-3 * v / np.abs(v).max())
    for _ in range(trials):
        starts.append(np.exp(rng.normal(scale=rng.uniform(0.1, 3.0), size=size)))
    best, best_g = 0.0, None
    for g0 in starts:
        r0 = lsi_ratio(Q, g0)
        if r0 > best:
            best, best_g = r0, g0
        sol = optimize.minimize(_neg_log_ratio, g0, args=(lap, size), jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
        r = lsi_ratio(Q, sol.x)
        if r > best:
            best, best_g = r, sol.x
    out = LSIResult(best, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, trials, best_g)
    if G is not None and k is not None:
        m = G.vertex_count
        out.trel_rw = spectral_gap(rw_form(G)).trel
        out.sandwich_lower = out.trel_rw / 2
        qk = ex_form(complete_graph(m), k)
        out.chi_ex = comparison_constant(qk, Q).chi
        trel_k = spectral_gap(qk).trel
        pstar = 1.0 / math.comb(m, k)
        factor = 2.0 if abs(1 - 2 * pstar) < 1e-15 else math.log(1 / pstar - 1) / (1 - 2 * pstar)
        out.rho_K_upper = trel_k * factor
        out.sandwich_upper = out.chi_ex * out.rho_K_upper
        out.lee_yau_order = math.log(m * m / (k * (m - k))) / m
    return out


# ----------------------------------------------------------------- pipeline


def _isomorphic(G: Graph, H: Graph) -> bool:
    """Relabelling leaves chi unchanged, so isomorphic graphs share the Hamming bound."""
    if G == H:
        return True
    if (G.vertex_count, G.edge_count) != (H.vertex_count, H.edge_count):
        return False
    import networkx as nx

    def as_nx(X):
        g = nx.Graph()
        g.add_nodes_from(range(X.vertex_count))
        g.add_edges_from(X.edge_list())
        return g

    return nx.is_isomorphic(as_nx(G), as_nx(H))


def comparison_pipeline(n: int, ell: int, G: Graph | None = None, cap: int = DEFAULT_STATE_CAP, exact: bool | None = None) -> dict:
    """Lower bound ``|V| trel^RW``, chain upper bound and (when small) the true ``chi``.

    ``G`` defaults to the Hamming graph; any other product of side ``ell``
    pays the extra ``ell^3`` of the Hamming reduction.
    """
    start = time.perf_counter()
    H = hamming_graph(n, ell)
    G = G if G is not None else H
    if G.vertex_count != ell**n:
        raise ValueError(f"graph has {G.vertex_count} vertices, expected {ell ** n}")
    rw = spectral_gap(rw_form(G))
    lower = G.vertex_count * rw.trel
    chain = proof_chain(n, ell, exact=exact, cap=cap)
    is_hamming = _isomorphic(G, H)
    upper = chain["chi_bound_hamming"] * (1 if is_hamming else ell**3)
    out = {
        "graph": G.to_dict(),
        "n": n,
        "ell": ell,
        "lower": lower,
        "upper": upper,
        "hamming_reduction_applied": not is_hamming,
        "chain": chain,
        "chi": None,
    }
    if math.factorial(G.vertex_count) <= cap:
        chi = comparison_constant(ip_form(complete_graph(G.vertex_count), cap=cap), ip_form(G, cap=cap)).chi
        out["chi"] = chi
        out["lower_ratio"] = chi / lower
        out["upper_ratio"] = upper / chi
        out["consistent"] = bool(lower <= chi * (1 + 1e-6) and chi <= upper)
    out["wall_time"] = time.perf_counter() - start
    return out
