"""Spectral gaps, comparison constants and PSD certificates for quadratic forms.

Every routine works on the orthocomplement of the constants, which all forms
annihilate.  Small problems are solved densely; larger ones go through
Krylov / block-Krylov iterations started from a fixed seeded vector so that
repeated runs are bit-identical.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadratic import QuadraticForm

__all__ = [
    "DENSE_LIMIT",
    "ConvergenceError",
    "PencilDegenerate",
    "SpectralReport",
    "ComparisonReport",
    "Certificate",
    "spectral_gap",
    "comparison_constant",
    "psd_dominates",
    "min_eigenvalue_perp",
]

DENSE_LIMIT = 2_000
ITER_TOL = 1e-10
START_SEED = 20_240_531


class ConvergenceError(RuntimeError):
    pass


class PencilDegenerate(ValueError):
    """The denominator form vanishes on more than the constants."""


@dataclass
class SpectralReport:
    gap: float
    trel: float
    method: str
    residual: float
    iterations: int


@dataclass
class ComparisonReport:
    chi: float
    method: str
    residual: float
    iterations: int


@dataclass
class Certificate:
    """Outcome of one ``E_a <= c E_b`` check."""

    lemma_id: str
    state_space: str
    sizes: dict
    constant_c: float
    min_eig: float
    tol: float
    method: str
    passed: bool
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _start_vectors(size: int, k: int = 1) -> np.ndarray:
    rng = np.random.default_rng(START_SEED)
    x = rng.standard_normal((size, k))
    x -= x.mean(axis=0)
    return x


def _perp_basis(size: int) -> np.ndarray:
    """Orthonormal basis of the complement of the constants (Helmert-style)."""
    q, _ = np.linalg.qr(np.c_[np.ones(size), np.eye(size)[:, : size - 1]])
    return q[:, 1:]


def _dense_perp(mat: sp.spmatrix) -> np.ndarray:
    b = _perp_basis(mat.shape[0])
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    return b.T @ dense @ b


def _lanczos_smallest(op: spla.LinearOperator, size: int, tol: float, maxiter: int) -> tuple[float, np.ndarray, int]:
    v0 = _start_vectors(size)[:, 0]
    counter = {"n": 0}

    def mv(x):
        counter["n"] += 1
        return op.matvec(x)

    lin = spla.LinearOperator((size, size), matvec=mv, dtype=float)
    try:
        vals, vecs = spla.eigsh(lin, k=1, which="SA", v0=v0, tol=tol, maxiter=maxiter, ncv=min(size, 40))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge after {counter['n']} products") from exc
    return float(vals[0]), vecs[:, 0], counter["n"]


def _deflated(lap: sp.csr_matrix, shift: float) -> spla.LinearOperator:
    """``lap + shift * J / size``; lifts the constant mode to ``shift``."""
    size = lap.shape[0]

    def mv(x):
        x = np.ravel(x)
        return lap @ x + shift * x.mean()

    return spla.LinearOperator((size, size), matvec=mv, dtype=float)


def _gershgorin(mat: sp.csr_matrix) -> float:
    return float(np.max(np.asarray(abs(mat).sum(axis=1)).ravel())) if mat.nnz else 0.0


def spectral_gap(Q: QuadraticForm, dense_limit: int = DENSE_LIMIT, tol: float = 1e-9, maxiter: int = 5_000) -> SpectralReport:
    """Smallest nonzero eigenvalue of the generator associated with ``Q``."""
    lap = Q.laplacian()
    size = Q.size
    if size == 1:
        return SpectralReport(math.inf, 0.0, "dense", 0.0, 0)
    if size <= dense_limit:
        vals, vecs = la.eigh(_dense_perp(lap))
        gap = float(vals[0])
        b = _perp_basis(size)
        v = b @ vecs[:, 0]
        res = float(np.linalg.norm(lap @ v - gap * v))
        return _gap_report(gap, "dense", res, 1)
    shift = 2 * _gershgorin(lap) + 1.0
    gap, v, its = _lanczos_smallest(_deflated(lap, shift), size, ITER_TOL, maxiter)
    v = v - v.mean()
    v /= np.linalg.norm(v)
    res = float(np.linalg.norm(lap @ v - gap * v))
    if res > tol * max(1.0, shift):
        raise ConvergenceError(f"spectral gap residual {res:.3e} above tolerance")
    return _gap_report(gap, "iterative", res, its)


def _gap_report(gap: float, method: str, res: float, its: int) -> SpectralReport:
    gap = max(gap, 0.0)
    trel = math.inf if gap <= 1e-12 else 1.0 / gap
    return SpectralReport(gap, trel, method, res, its)


def comparison_constant(
    Q_num: QuadraticForm,
    Q_den: QuadraticForm,
    dense_limit: int = DENSE_LIMIT,
    on_degenerate: str = "inf",
    tol: float = 1e-8,
    maxiter: int = 2_000,
) -> ComparisonReport:
    """Smallest ``chi`` with ``E_num(f) <= chi E_den(f)`` for all ``f``.

    Largest eigenvalue of the pencil ``(L_num, L_den)`` on the complement of
    the constants.  A denominator with extra kernel gives ``chi = inf`` (or
    raises :class:`PencilDegenerate` when ``on_degenerate="raise"``).
    """
    if Q_num.space != Q_den.space:
        raise ValueError("forms live on different state spaces")
    size = Q_num.size
    if size == 1:
        return ComparisonReport(0.0, "dense", 0.0, 0)
    ln = Q_num.laplacian()
    ld = Q_den.laplacian()
    if size <= dense_limit:
        a = _dense_perp(ln)
        c = _dense_perp(ld)
        cvals = la.eigvalsh(c)
        if cvals[0] <= 1e-10 * max(cvals[-1], 1e-300):
            return _degenerate(on_degenerate)
        vals, vecs = la.eigh(a, c)
        chi = float(vals[-1])
        x = vecs[:, -1]
        res = float(np.linalg.norm(a @ x - chi * (c @ x)) / max(np.linalg.norm(a @ x), 1e-300))
        return ComparisonReport(chi, "dense", res, 1)
    return _comparison_iterative(ln, ld, on_degenerate, tol, maxiter)


def _degenerate(mode: str) -> ComparisonReport:
    if mode == "raise":
        raise PencilDegenerate("denominator form has a kernel larger than the constants")
    return ComparisonReport(math.inf, "degenerate", 0.0, 0)


def _comparison_iterative(ln, ld, on_degenerate, tol, maxiter) -> ComparisonReport:
    size = ln.shape[0]
    gap = spectral_gap_from_laplacian(ld)
    if gap <= 1e-10:
        return _degenerate(on_degenerate)
    # M = L_den + gap * J / size is positive definite and agrees with L_den off constants
    shift = gap

    def m_mv(x):
        x = np.ravel(x)
        return ld @ x + shift * x.mean()

    m_op = spla.LinearOperator((size, size), matvec=m_mv, dtype=float)
    inner = {"n": 0}

    def minv(x):
        x = np.ravel(x)
        # constant part solves exactly; CG on the rest
        mean = x.mean()
        y, info = spla.cg(ld, x - mean, rtol=1e-13, atol=0.0, maxiter=10_000)
        inner["n"] += 1
        if info != 0:
            raise ConvergenceError("inner CG solve did not converge")
        y -= y.mean()
        return y + mean / shift

    minv_op = spla.LinearOperator((size, size), matvec=minv, dtype=float)
    v0 = _start_vectors(size)[:, 0]
    try:
        vals, vecs = spla.eigsh(ln, k=1, M=m_op, Minv=minv_op, which="LA", v0=v0, tol=1e-12, maxiter=maxiter, ncv=30)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("generalized Lanczos did not converge") from exc
    x = vecs[:, 0]
    x -= x.mean()
    num = float(x @ (ln @ x))
    den = float(x @ (ld @ x))
    chi = num / den
    res = float(np.linalg.norm(ln @ x - chi * (ld @ x)) / max(np.linalg.norm(ln @ x), 1e-300))
    if res > tol:
        raise ConvergenceError(f"pencil residual {res:.3e} above tolerance {tol:.1e}")
    return ComparisonReport(chi, "iterative", res, inner["n"])


def spectral_gap_from_laplacian(lap: sp.csr_matrix) -> float:
    size = lap.shape[0]
    if size <= DENSE_LIMIT:
        return float(la.eigvalsh(_dense_perp(lap))[0])
    shift = 2 * _gershgorin(lap) + 1.0
    return _lanczos_smallest(_deflated(lap, shift), size, ITER_TOL, 5_000)[0]


def min_eigenvalue_perp(mat: sp.csr_matrix, dense_limit: int = DENSE_LIMIT) -> tuple[float, str, int]:
    """Smallest eigenvalue of a symmetric matrix on the complement of the constants."""
    size = mat.shape[0]
    if size == 1:
        return 0.0, "dense", 0
    if size <= dense_limit:
        return float(la.eigvalsh(_dense_perp(mat))[0]), "dense", 1
    shift = 2 * _gershgorin(mat) + 1.0
    val, _, its = _lanczos_smallest(_deflated(mat, shift), size, ITER_TOL, 20_000)
    return val, "iterative", its


def psd_dominates(
    Q_a: QuadraticForm,
    Q_b: QuadraticForm,
    slack: float,
    lemma_id: str = "",
    rel_tol: float = 1e-8,
    dense_limit: int = DENSE_LIMIT,
    extra: dict | None = None,
) -> Certificate:
    """Certify ``E_a <= slack * E_b`` via ``min-eig(slack L_b - L_a) >= -tol``.

    ``tol`` is ``rel_tol`` times the largest diagonal entry of the two sides.
    """
    if Q_a.space != Q_b.space:
        raise ValueError("forms live on different state spaces")
    start = time.perf_counter()
    la_ = Q_a.laplacian()
    lb = Q_b.laplacian()
    diff = (slack * lb - la_).tocsr()
    scale = max(float(la_.diagonal().max(initial=0.0)), float(slack * lb.diagonal().max(initial=0.0)))
    tol = rel_tol * scale
    if scale == 0.0:
        lam, method = 0.0, "trivial"  # both sides vanish identically
    else:
        lam, method, _ = min_eigenvalue_perp(diff, dense_limit)
    min_eig = min(0.0, lam)
    return Certificate(
        lemma_id=lemma_id,
        state_space=Q_a.space.describe(),
        sizes={"states": Q_a.size},
        constant_c=float(slack),
        min_eig=min_eig,
        tol=tol,
        method=method,
        passed=bool(min_eig >= -tol),
        wall_time=time.perf_counter() - start,
        extra={"min_eig_perp": lam, **(extra or {})},
    )
