"""Complex dense linear algebra primitives.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``. The
heavy lifting is delegated to LAPACK through :mod:`numpy.linalg`
(tridiagonal reduction for ``eigh``, bidiagonalisation for ``svd``,
Householder ``qr``). This module adds the conventions the rest of the
package relies on: descending order, deterministic phases, and a hard
positive-definiteness floor instead of silent clamping.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import (
    NoConvergence,
    NonFinite,
    NotHermitian,
    NotPositiveDefinite,
    NotSquare,
    RankDeficient,
)

HERMITIAN_TOL = 1e-9
PD_FLOOR = 1e-12
PHASE_TOL = 1e-12


class HermitianEvd(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a) -> np.ndarray:
    """Return `a` as a finite 2-D complex128 array."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim == 0:
        out = out.reshape(1, 1)
    elif out.ndim == 1:
        out = out.reshape(1, -1)
    elif out.ndim != 2:
        raise ValueError(f"expected a matrix, got array with ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise NonFinite("matrix contains NaN or Inf entries")
    return out


def _check_square(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {a.shape}")


def hermitian_part(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Symmetrise `a` after checking its relative asymmetry is below `tol`."""
    a = as_matrix(a)
    _check_square(a)
    scale = np.linalg.norm(a)
    asym = np.linalg.norm(a - a.conj().T)
    if scale > 0 and asym > tol * scale:
        raise NotHermitian(f"relative asymmetry {asym / scale:.3e} exceeds {tol:g}")
    return 0.5 * (a + a.conj().T)


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real positive."""
    vectors = np.array(vectors, dtype=np.complex128, copy=True)
    return vectors * _column_phases(vectors).conj()


def _column_phases(vectors: np.ndarray) -> np.ndarray:
    mags = np.abs(vectors)
    significant = mags > PHASE_TOL
    first = np.argmax(significant, axis=0)
    cols = np.arange(vectors.shape[1])
    pivot = vectors[first, cols]
    phases = np.ones(vectors.shape[1], dtype=np.complex128)
    nz = significant[first, cols]
    phases[nz] = pivot[nz] / np.abs(pivot[nz])
    return phases


def hermitian_evd(a, tol: float = HERMITIAN_TOL) -> HermitianEvd:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Eigenvectors follow the package phase convention: the first entry of
    modulus above 1e-12 in each column is real and positive.
    """
    h = hermitian_part(a, tol)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return HermitianEvd(w[::-1].copy(), fix_phases(v[:, ::-1]))


def _check_pd(w: np.ndarray) -> None:
    top = w.max() if w.size else 0.0
    if top <= 0 or w.min() <= PD_FLOOR * top:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w.min():.3e} is not above {PD_FLOOR:g} x {top:.3e}"
        )


def hermitian_sqrt(a, inverse: bool = False) -> np.ndarray:
    """Hermitian square root of a positive definite matrix (or of its inverse)."""
    h = hermitian_part(a)
    w, v = np.linalg.eigh(h)
    _check_pd(w)
    f = w ** (-0.5 if inverse else 0.5)
    out = (v * f) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def batched_inv_sqrt(blocks: np.ndarray) -> np.ndarray:
    """Inverse Hermitian square roots of a stack of PD matrices, shape (k, n, n)."""
    blocks = 0.5 * (blocks + np.conj(np.swapaxes(blocks, -1, -2)))
    w, v = np.linalg.eigh(blocks)
    for wk in w:
        _check_pd(wk)
    out = (v * w[:, None, :] ** -0.5) @ np.conj(np.swapaxes(v, -1, -2))
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = u @ diag(sigma) @ v^H`` with descending `sigma`.

    The phase of each left singular vector is fixed by the package
    convention and the same phase is carried to the matching right vector,
    so the factorisation stays exact and deterministic.
    """
    a = as_matrix(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    v = vh.conj().T
    ph = _column_phases(u)
    return u * ph.conj(), s, v * ph.conj()


def lq(a, allow_rank_deficient: bool = False, rtol: float = 1e-12):
    """LQ factorisation ``a = l @ q`` for a wide or square matrix.

    `l` is lower triangular with a real non-negative diagonal and `q` has
    orthonormal rows. Computed from the QR factorisation of ``a^H``.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if rows > cols:
        raise RankDeficient(f"LQ needs rows <= cols, got shape {a.shape}")
    q, r = np.linalg.qr(a.conj().T, mode="reduced")
    d = np.diag(r)
    mag = np.abs(d)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    if not allow_rank_deficient and np.any(mag <= rtol * scale):
        raise RankDeficient("matrix does not have full row rank")
    ph = np.ones(rows, dtype=np.complex128)
    nz = mag > 0
    ph[nz] = d[nz] / mag[nz]
    r = ph.conj()[:, None] * r
    q = q * ph
    l_factor = np.tril(r.conj().T)
    l_factor[np.diag_indices(rows)] = np.abs(np.diag(l_factor))
    return l_factor, q.conj().T


def logdet_pd(a) -> float:
    """Log-determinant of a Hermitian positive definite matrix."""
    h = hermitian_part(a)
    w = np.linalg.eigvalsh(h)
    _check_pd(w)
    return float(np.sum(np.log(w)))


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def dft_matrix(l: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*j*k/l) / sqrt(l)``."""
    if l < 1:
        raise ValueError("DFT size must be at least 1")
    jk = np.outer(np.arange(l), np.arange(l)) % l
    return np.exp(-2j * np.pi * jk / l) / np.sqrt(l)


def frobenius_sq(a) -> float:
    a = np.asarray(a)
    return float(np.sum(a.real**2 + a.imag**2))


def block(a: np.ndarray, k: int, l: int, n: int) -> np.ndarray:
    """The (k, l) block of size n x n of `a` (zero-based indices)."""
    return a[k * n:(k + 1) * n, l * n:(l + 1) * n]


def diagonal_blocks(a: np.ndarray, n: int) -> np.ndarray:
    """Stack of the n x n diagonal blocks of `a`, shape (L, n, n)."""
    count = a.shape[0] // n
    return np.stack([block(a, k, k, n) for k in range(count)])
