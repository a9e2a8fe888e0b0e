"""Circular complex Gaussian sampling and the sufficient statistics.

Random streams are keyed by ``(seed, stream)`` through
:class:`numpy.random.SeedSequence` spawn keys, so trial ``t`` always sees
the same numbers no matter which worker evaluates it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .errors import GeometryMismatch, MalformedInput, NotPositiveDefinite
from .model import BlockGeometry


def stream_rng(seed: int, stream: int, attempt: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, stream) pair.

    ``attempt > 0`` selects a reserved sub-stream used to redraw a failed
    trial without touching any other trial's numbers.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    key = (int(stream),) if attempt == 0 else (int(stream), int(attempt))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """I.i.d. CN(0, 1): real and imaginary parts independent N(0, 1/2)."""
    z = rng.standard_normal((*np.atleast_1d(shape), 2))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """M observation vectors of length L*N, stored as rows of ``samples``."""

    geometry: BlockGeometry
    samples: np.ndarray
    seed: int | None = None
    stream: int | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.complex128)
        if x.ndim != 2 or x.shape[1] != self.geometry.dim:
            raise GeometryMismatch(
                f"samples must have shape (M, {self.geometry.dim}), got {np.shape(self.samples)}"
            )
        if x.shape[0] < 1:
            raise ValueError("a sample set needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def m(self) -> int:
        return self.samples.shape[0]


def draw(cov_sqrt: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Rows ``x[k] = cov_sqrt @ z[k]`` for a precomputed square root."""
    z = standard_complex_normal(rng, (m, cov_sqrt.shape[0]))
    return z @ cov_sqrt.T


def sample_gaussian(cov, m: int, seed: int, stream: int = 0,
                    geometry: BlockGeometry | None = None) -> SampleSet:
    """Draw M vectors from CN(0, cov) using the Hermitian square root of cov.

    The draw for a smaller `m` is a prefix of the draw for a larger one on
    the same (seed, stream).
    """
    root = linalg.hermitian_sqrt(cov)
    if geometry is None:
        geometry = BlockGeometry(1, root.shape[0])
    if geometry.dim != root.shape[0]:
        raise GeometryMismatch(f"covariance is {root.shape}, geometry expects {geometry.dim}")
    if m < 1:
        raise ValueError("m must be at least 1")
    x = draw(root, m, stream_rng(seed, stream))
    return SampleSet(geometry, x, seed, stream)


def covariance_of(x: np.ndarray) -> np.ndarray:
    """``(1/M) sum_k x[k] x[k]^H`` for samples stored as rows."""
    r = x.T @ x.conj() / x.shape[0]
    return 0.5 * (r + r.conj().T)


def sample_covariance(data: SampleSet) -> np.ndarray:
    return covariance_of(data.samples)


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    count, n, _ = blocks.shape
    out = np.zeros((count, n, count, n), dtype=np.complex128)
    idx = np.arange(count)
    out[idx, :, idx, :] = blocks
    return out.reshape(count * n, count * n)


def coherence(r_hat, geometry: BlockGeometry) -> np.ndarray:
    """Block-whiten R-hat by its own diagonal N x N blocks.

    Raises NotPositiveDefinite when a diagonal block is singular, which
    happens when M < N.
    """
    r_hat = np.asarray(r_hat, dtype=np.complex128)
    if r_hat.shape != (geometry.dim, geometry.dim):
        raise GeometryMismatch(f"R-hat is {r_hat.shape}, geometry expects {geometry.dim}")
    n = geometry.n
    w = _block_diag(linalg.batched_inv_sqrt(linalg.diagonal_blocks(r_hat, n)))
    c = w @ r_hat @ w
    return 0.5 * (c + c.conj().T)


def pooled_block(r_hat: np.ndarray, geometry: BlockGeometry) -> np.ndarray:
    """Average of the diagonal blocks: the ML estimate of R0 under sphericity."""
    return linalg.diagonal_blocks(r_hat, geometry.n).mean(axis=0)


def normalized_covariance(r_hat, geometry: BlockGeometry) -> np.ndarray:
    """R-hat whitened on both sides by ``I_L kron R0_hat^{1/2}``; trace L*N."""
    r_hat = np.asarray(r_hat, dtype=np.complex128)
    if r_hat.shape != (geometry.dim, geometry.dim):
        raise GeometryMismatch(f"R-hat is {r_hat.shape}, geometry expects {geometry.dim}")
    w = linalg.batched_inv_sqrt(pooled_block(r_hat, geometry)[None])[0]
    w = _block_diag(np.broadcast_to(w, (geometry.l, geometry.n, geometry.n)))
    out = w @ r_hat @ w
    return 0.5 * (out + out.conj().T)


def sample_stats(data: SampleSet) -> dict:
    """R-hat plus, when each block is invertible, C-hat and normalized R-hat."""
    r_hat = sample_covariance(data)
    out = {"r_hat": r_hat, "c_hat": None, "r_tilde": None, "geometry": data.geometry}
    try:
        out["c_hat"] = coherence(r_hat, data.geometry)
        out["r_tilde"] = normalized_covariance(r_hat, data.geometry)
    except NotPositiveDefinite:
        pass
    return out


def csv_header(dim: int) -> list[str]:
    cols = []
    for j in range(dim):
        cols += [f"re_{j}", f"im_{j}"]
    return cols


def write_csv(data: SampleSet, path: str | Path | None = None) -> str:
    """Serialise samples as CSV (``re_0,im_0,...``); returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(data.geometry.dim))
    for row in data.samples:
        flat = np.empty(2 * row.size)
        flat[0::2] = row.real
        flat[1::2] = row.imag
        writer.writerow([repr(float(v)) for v in flat])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path, geometry: BlockGeometry) -> SampleSet:
    """Parse a sample CSV; the header must match the geometry exactly."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedInput(f"{path}: empty file")
    expected = csv_header(geometry.dim)
    if [h.strip() for h in rows[0]] != expected:
        raise MalformedInput(
            f"{path}: header has {len(rows[0])} columns, expected {len(expected)} "
            f"(re_0,im_0,...,re_{geometry.dim - 1},im_{geometry.dim - 1})"
        )
    body = [r for r in rows[1:] if r]
    if not body:
        raise MalformedInput(f"{path}: no samples")
    for i, r in enumerate(body, start=2):
        if len(r) != len(expected):
            raise MalformedInput(f"{path}: line {i} has {len(r)} fields, expected {len(expected)}")
    try:
        values = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise MalformedInput(f"{path}: non-numeric entry ({exc})") from None
    if not np.all(np.isfinite(values)):
        raise MalformedInput(f"{path}: NaN or Inf entries")
    return SampleSet(geometry, values[:, 0::2] + 1j * values[:, 1::2])
