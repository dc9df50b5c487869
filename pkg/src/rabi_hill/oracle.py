"""Truncated number-state diagonalization of the Rabi Hamiltonian.

This is the independent check on the Hill-determinant roots: assemble
H = a^dag a + g sigma_z (a + a^dag) + delta sigma_x in the basis |n, s>
(index 2n + s, s = 0 for sigma_z = +1, s = 1 for sigma_z = -1), then
diagonalize with a cyclic Jacobi method.  Rotations are applied in
round-robin order so that each round is a batch of disjoint plane rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import NotConvergedError
from .recurrence import ModelParams
from .spectrum import NEAR_NEGATIVE_INTEGER, UNVALIDATED

__all__ = [
    "TruncatedHamiltonian",
    "OracleSpectrum",
    "ConvergenceStudy",
    "build_matrix",
    "jacobi_eigh",
    "eigenvalues",
    "trusted_eigenvalues",
    "oracle_spectrum",
    "oracle_gap",
    "levels_near",
    "convergence_study",
    "validate_records",
]

DEFAULT_N = 80
JACOBI_TOL = 1e-14


@dataclass(frozen=True)
class TruncatedHamiltonian:
    n_max: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)


@dataclass(frozen=True)
class OracleSpectrum:
    n_max: int
    eigenvalues: np.ndarray
    offdiag_norm_final: float
    sweeps: int = 0


@dataclass(frozen=True)
class ConvergenceStudy:
    n_list: tuple
    levels: np.ndarray  # shape (len(n_list), k)
    monotone: bool
    final_change: float


def build_matrix(params: ModelParams, n_max: int) -> TruncatedHamiltonian:
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    dim = 2 * (n_max + 1)
    h = np.zeros((dim, dim))
    n = np.arange(n_max + 1)
    up, down = 2 * n, 2 * n + 1
    h[up, up] = n
    h[down, down] = n
    h[up, down] = h[down, up] = params.delta
    hop = params.g * np.sqrt(n[:-1] + 1.0)
    h[up[1:], up[:-1]] = h[up[:-1], up[1:]] = hop
    h[down[1:], down[:-1]] = h[down[:-1], down[1:]] = -hop
    return TruncatedHamiltonian(n_max, h)


def _round_robin(n):
    """Pairings covering every (p, q) once per sweep; each round is disjoint."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if q < n and p < n]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _offdiag(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def jacobi_eigh(a, tol: float = JACOBI_TOL, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Returns ``(eigenvalues, eigenvectors, offdiag_norm, sweeps)`` with the
    eigenvalues ascending and eigenvectors as columns.  Iterates until the
    off-diagonal Frobenius norm is at most ``tol`` times the matrix norm.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    v = np.eye(n)
    norm = float(np.linalg.norm(a))
    rounds = _round_robin(n)
    off = _offdiag(a)
    sweeps = 0
    while off > tol * norm:
        if sweeps == max_sweeps:
            raise NotConvergedError(f"Jacobi: off-diagonal norm {off:.3e} after {sweeps} sweeps")
        for p, q in rounds:
            apq = a[p, q]
            if not np.any(apq):
                continue
            app, aqq = a[p, p], a[q, q]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                tau = (aqq - app) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(apq == 0, 0.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, q] = a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        sweeps += 1
        off = _offdiag(a)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], off, sweeps


def eigenvalues(h: TruncatedHamiltonian, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> OracleSpectrum:
    if not tol > 0:
        raise ValueError("tol must be positive")
    w, _, off, sweeps = jacobi_eigh(h.matrix, tol, max_sweeps)
    return OracleSpectrum(h.n_max, w, off, sweeps)


@lru_cache(maxsize=64)
def _cached_spectrum(g, delta, n_max, tol):
    return eigenvalues(build_matrix(ModelParams(g, delta), n_max), tol)


def oracle_spectrum(params: ModelParams, n_max: int = DEFAULT_N, tol: float = JACOBI_TOL) -> OracleSpectrum:
    """Memoized ``eigenvalues(build_matrix(params, n_max))``."""
    return _cached_spectrum(params.g, params.delta, int(n_max), float(tol))


def trusted_eigenvalues(spec: OracleSpectrum) -> np.ndarray:
    # upper part of a truncated spectrum is polluted by the cut
    dim = 2 * (spec.n_max + 1)
    return spec.eigenvalues[: max(dim // 3, 1)]


def oracle_gap(x: float, params: ModelParams, n_max: int = DEFAULT_N, tol: float = JACOBI_TOL) -> float:
    """Distance from x to the nearest trusted oracle level, shifted by g^2."""
    levels = trusted_eigenvalues(oracle_spectrum(params, n_max, tol)) + params.g**2
    return float(np.min(np.abs(x - levels)))


def levels_near(energy: float, params: ModelParams, window: float, n_max: int = DEFAULT_N):
    """Count trusted oracle levels within ``window`` of ``energy``.

    Also returns the distance to the nearest level outside the window.
    """
    levels = trusted_eigenvalues(oracle_spectrum(params, n_max))
    dist = np.abs(levels - energy)
    inside = dist <= window
    outside = dist[~inside]
    return int(inside.sum()), float(outside.min()) if outside.size else math.inf


def convergence_study(params: ModelParams, n_list, k: int) -> ConvergenceStudy:
    n_list = tuple(int(n) for n in n_list)
    if list(n_list) != sorted(n_list):
        raise ValueError("n_list must be ascending")
    if k > 2 * (n_list[0] + 1):
        raise ValueError("k exceeds the smallest truncated dimension")
    table = np.array([oracle_spectrum(params, n).eigenvalues[:k] for n in n_list])
    steps = np.diff(table, axis=0)
    monotone = bool(np.all(steps <= 1e-12))
    final = float(np.max(np.abs(steps[-1]))) if len(n_list) > 1 else math.nan
    return ConvergenceStudy(n_list, table, monotone, final)


def validate_records(records, params: ModelParams, n_max: int = DEFAULT_N, tol: float = 1e-6):
    """Attach oracle gaps to root records.

    A comparison within a factor 10 of ``tol`` is repeated at twice the
    truncation.  Candidates next to negative integers are kept only when the
    oracle confirms them.
    """
    out = []
    for rec in records:
        gap = oracle_gap(rec.x, params, n_max)
        if tol / 10 < gap <= 10 * tol:
            gap = oracle_gap(rec.x, params, 2 * n_max)
        if NEAR_NEGATIVE_INTEGER in rec.flags and gap > tol:
            continue
        flags = set(rec.flags)
        flags.discard(UNVALIDATED)
        out.append(replace(rec, oracle_gap=gap, flags=frozenset(flags)))
    return out
