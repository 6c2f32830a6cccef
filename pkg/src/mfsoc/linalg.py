"""Dense real-matrix kernels the solvers are built on.

Symmetric matrices travel as plain square ``float64`` arrays; ``svec``/``smat``
convert between the full form and the packed upper triangle (row-major,
length n(n+1)/2), which is the parameterization the least-squares solver
uses for its symmetric unknowns.

All functions are pure and hold no state, so they are safe to call
concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NotSchurError, RankDeficientError

__all__ = [
    "symmetrize",
    "svec",
    "smat",
    "duplication_matrix",
    "spectral_radius",
    "solve_stein",
    "min_eig_sym",
    "is_invertible",
    "lsq_solve",
]

# Relative skew above which an input claimed symmetric is rejected.
SYMMETRY_RTOL = 1e-10


def _as_square(m, who: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{who}: expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{who}: input contains NaN or Inf")
    return m


def _require_symmetric(m: np.ndarray, who: str) -> np.ndarray:
    skew = np.abs(m - m.T).max()
    if skew > SYMMETRY_RTOL * max(np.abs(m).max(), 0.0):
        raise ValueError(
            f"{who}: matrix is not symmetric (max skew {skew:.3e}); "
            "symmetrize it first if the asymmetry is roundoff"
        )
    return m


def symmetrize(m) -> np.ndarray:
    """Return (M + M')/2."""
    m = _as_square(m, "symmetrize")
    return 0.5 * (m + m.T)


def svec(m, symmetrize_input: bool = False) -> np.ndarray:
    """Pack a symmetric matrix into its upper triangle, row-major.

    Parameters
    ----------
    m : (n, n) array
        Symmetric up to relative skew 1e-10, unless ``symmetrize_input``.
    symmetrize_input : bool
        Replace m by (m + m')/2 before packing.

    Returns
    -------
    (n(n+1)/2,) array such that ``smat(svec(m)) == m`` exactly for
    symmetric input.
    """
    m = _as_square(m, "svec")
    if symmetrize_input:
        m = 0.5 * (m + m.T)
    else:
        _require_symmetric(m, "svec")
    iu = np.triu_indices(m.shape[0])
    return m[iu].copy()


def smat(v) -> np.ndarray:
    """Expand a packed upper triangle back to the full symmetric matrix."""
    v = np.asarray(v, dtype=float).ravel()
    length = v.size
    n = (math.isqrt(8 * length + 1) - 1) // 2
    if n * (n + 1) // 2 != length:
        raise ValueError(f"smat: packed length {length} is not triangular")
    m = np.zeros((n, n))
    iu = np.triu_indices(n)
    m[iu] = v
    m.T[iu] = v
    return m


def duplication_matrix(n: int) -> np.ndarray:
    """0/1 matrix D with ``vec_row(M) = D @ svec(M)`` for symmetric M.

    ``vec_row`` is the row-major flattening (numpy ``ravel`` order); folding D
    into a coefficient matrix turns columns acting on vec(M) into columns
    acting on the packed parameterization.
    """
    t = n * (n + 1) // 2
    d = np.zeros((n * n, t))
    packed = {}
    idx = 0
    for i in range(n):
        for j in range(i, n):
            packed[(i, j)] = idx
            idx += 1
    for i in range(n):
        for j in range(n):
            d[i * n + j, packed[(min(i, j), max(i, j))]] = 1.0
    return d


def spectral_radius(m) -> float:
    """Largest eigenvalue magnitude of a square matrix.

    Raises numpy's LinAlgError if the QR eigenvalue iteration fails to
    converge; that situation is reported, never masked.
    """
    m = _as_square(m, "spectral_radius")
    eigs = np.linalg.eigvals(m)
    return float(np.max(np.abs(eigs)))


def solve_stein(a, s) -> np.ndarray:
    """Solve the discrete Lyapunov (Stein) equation P = A'PA + S.

    Uses the n²-sized vectorized dense linear solve, exact at the problem
    sizes this package targets (n ≤ 10 or so).

    Parameters
    ----------
    a : (n, n) array with spectral radius < 1 (checked).
    s : (n, n) symmetric array.

    Returns
    -------
    P : (n, n) symmetric array with
        ``|P - A'PA - S|_max <= 1e-10 * max(1, |P|_max)`` (verified).

    Raises
    ------
    NotSchurError
        If a is not Schur: the defining series diverges and the linear
        system no longer characterizes a solution.
    """
    a = _as_square(a, "solve_stein")
    s = _require_symmetric(_as_square(s, "solve_stein"), "solve_stein")
    s = 0.5 * (s + s.T)
    rho = spectral_radius(a)
    if rho >= 1.0:
        raise NotSchurError(
            f"solve_stein: spectral radius {rho:.6f} >= 1, no bounded solution"
        )
    n = a.shape[0]
    lhs = np.eye(n * n) - np.kron(a.T, a.T)
    p = np.linalg.solve(lhs, s.ravel()).reshape(n, n)
    p = 0.5 * (p + p.T)
    resid = np.abs(p - a.T @ p @ a - s).max()
    if resid > 1e-10 * max(1.0, np.abs(p).max()):
        raise ArithmeticError(
            f"solve_stein: residual {resid:.3e} exceeds tolerance "
            f"(spectral radius {rho:.6f}; system too ill-conditioned)"
        )
    return p


def min_eig_sym(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = _require_symmetric(_as_square(m, "min_eig_sym"), "min_eig_sym")
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def is_invertible(m, tol: float = 1e-12) -> bool:
    """Singular-value gauge: smallest singular value > tol * largest."""
    m = _as_square(m, "is_invertible")
    sv = np.linalg.svd(m, compute_uv=False)
    return bool(sv[-1] > tol * sv[0])


def lsq_solve(a, b, rank_tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Least-squares solve of min |Ax - b| with an explicit column-rank gate.

    Parameters
    ----------
    a : (rows, p) array
    b : (rows,) array
    rank_tol : float
        Singular values below ``rank_tol * sigma_max`` count as zero.

    Returns
    -------
    (x, residual) where residual = |Ax - b|_2.

    Raises
    ------
    RankDeficientError
        If the numerical column rank is below p; carries the rank found.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if a.ndim != 2 or a.shape[0] != b.size:
        raise ValueError(f"lsq_solve: shape mismatch A {a.shape} vs b {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("lsq_solve: input contains NaN or Inf")
    p = a.shape[1]
    sv = np.linalg.svd(a, compute_uv=False) if min(a.shape) else np.zeros(0)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < p:
        raise RankDeficientError(
            f"lsq_solve: numerical column rank {rank} < {p} unknowns", rank, p
        )
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ x - b))
    return x, residual
