"""Invariance groups, a statistic-invariance checker and the maximal invariant.

Two groups act on the stacked observation ``x`` (length L*N):

* correlation group: ``x -> (P kron I_N) G x`` with ``P`` an L x L
  permutation and ``G`` block diagonal with invertible N x N blocks;
* sphericity group: ``x -> (Q kron G) x`` with ``Q`` an L x L unitary and
  ``G`` one invertible N x N matrix.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .detectors import DetectorId, check_applicable, evaluate
from .errors import DegenerateDraw, GeometryMismatch, RankDeficient, RankDeficientBlock
from .model import BlockGeometry
from .sampling import SampleSet, coherence, covariance_of, standard_complex_normal, stream_rng

MAX_DRAWS = 100
# datasets for invariance checks draw from here so they never share a stream
# with the group elements (which use streams 0, 1, ...)
DATA_STREAM = 2**62 + 1
MIN_ABS_DET = 1e-9


class GroupKind(str, enum.Enum):
    CORRELATION = "correlation"
    SPHERICITY = "sphericity"


def natural_group(det: DetectorId | str) -> GroupKind:
    return GroupKind(DetectorId.parse(det).family)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """One transformation from either group.

    ``outer`` is the L x L permutation (correlation) or unitary (sphericity);
    ``blocks`` holds the L per-vector transforms (correlation) or a single
    shared transform (sphericity), stacked as (count, N, N).
    """

    kind: GroupKind
    geometry: BlockGeometry
    outer: np.ndarray
    blocks: np.ndarray

    def matrix(self) -> np.ndarray:
        """The full L*N x L*N matrix of the transformation."""
        n = self.geometry.n
        if self.kind is GroupKind.SPHERICITY:
            return np.kron(self.outer, self.blocks[0])
        g = np.zeros((self.geometry.dim, self.geometry.dim), dtype=np.complex128)
        for k, b in enumerate(self.blocks):
            g[k * n:(k + 1) * n, k * n:(k + 1) * n] = b
        return np.kron(self.outer, np.eye(n)) @ g


def identity_element(kind: GroupKind | str, geometry: BlockGeometry) -> GroupElement:
    kind = GroupKind(kind)
    count = geometry.l if kind is GroupKind.CORRELATION else 1
    blocks = np.broadcast_to(np.eye(geometry.n, dtype=np.complex128), (count, geometry.n, geometry.n))
    return GroupElement(kind, geometry, np.eye(geometry.l, dtype=np.complex128), blocks.copy())


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR of a complex Ginibre matrix.

    The phases of R's diagonal are moved into Q; without that correction the
    distribution is not Haar.
    """
    z = standard_complex_normal(rng, (n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _invertible_block(n: int, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_DRAWS):
        g = standard_complex_normal(rng, (n, n))
        if abs(np.linalg.det(g)) > MIN_ABS_DET:
            return g
    raise DegenerateDraw(f"no invertible {n}x{n} block after {MAX_DRAWS} draws")


def random_group_element(kind: GroupKind | str, geometry: BlockGeometry,
                         seed: int, stream: int = 0) -> GroupElement:
    kind = GroupKind(kind)
    rng = stream_rng(seed, stream)
    if kind is GroupKind.CORRELATION:
        perm = np.eye(geometry.l, dtype=np.complex128)[rng.permutation(geometry.l)]
        blocks = np.stack([_invertible_block(geometry.n, rng) for _ in range(geometry.l)])
        return GroupElement(kind, geometry, perm, blocks)
    q = haar_unitary(geometry.l, rng)
    return GroupElement(kind, geometry, q, _invertible_block(geometry.n, rng)[None])


def apply_group(element: GroupElement, data: SampleSet) -> SampleSet:
    if element.geometry != data.geometry:
        raise GeometryMismatch("group element and data have different geometries")
    t = element.matrix()
    return SampleSet(data.geometry, data.samples @ t.T, data.seed, data.stream)


@dataclass(frozen=True)
class InvarianceReport:
    detector: str
    group: str
    trials: int
    max_rel_dev: float
    passed: bool
    rel_tol: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "group": self.group,
            "trials": self.trials,
            "max_rel_dev": self.max_rel_dev,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_invariance(det: DetectorId | str, data: SampleSet, kind: GroupKind | str | None = None,
                     trials: int = 20, seed: int = 0, rel_tol: float = 1e-8) -> InvarianceReport:
    """Largest relative change of a statistic over random group elements.

    Element ``t`` is drawn from stream ``t`` of `seed`.
    """
    det = DetectorId.parse(det)
    kind = natural_group(det) if kind is None else GroupKind(kind)
    check_applicable(det, data.geometry, data.m)
    base = evaluate(det, data).value
    scale = abs(base) if base != 0 else 1.0
    worst = 0.0
    for t in range(trials):
        g = random_group_element(kind, data.geometry, seed, t)
        moved = evaluate(det, apply_group(g, data)).value
        worst = max(worst, abs(moved - base) / scale)
    return InvarianceReport(det.value, kind.value, trials, worst, worst < rel_tol, rel_tol)


@dataclass(frozen=True, eq=False)
class MaximalInvariant:
    """Canonical form of a coherence matrix under the correlation group.

    ``order`` is the vector ordering used (original indices), ``xi12`` the
    canonical correlations of the first two vectors, ``l_blocks[j]`` the
    lower-triangular factor of the first-row block of vector ``j + 3`` and
    ``cross_blocks[(k, l)]`` (1-based) the transformed remaining blocks.
    ``matrix`` is the fully transformed coherence matrix.
    """

    order: tuple[int, ...]
    xi12: np.ndarray
    l_blocks: list[np.ndarray]
    cross_blocks: dict[tuple[int, int], np.ndarray]
    matrix: np.ndarray
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)

    def as_vector(self) -> np.ndarray:
        """All components flattened to one real vector (for distances)."""
        parts = [self.xi12]
        for lb in self.l_blocks:
            parts += [lb.real.ravel(), lb.imag.ravel()]
        for key in sorted(self.cross_blocks):
            cb = self.cross_blocks[key]
            parts += [cb.real.ravel(), cb.imag.ravel()]
        return np.concatenate(parts)


def vector_order(c_hat: np.ndarray, geometry: BlockGeometry, rtol: float = 1e-12):
    """Order vectors by cross-block determinant magnitudes.

    The first vector maximises ``sum_l |det C_kl|``; the rest follow by
    decreasing ``|det C_1l|``. Ties go to the lower original index. Returns
    the order and whether any tie occurred.
    """
    n, count = geometry.n, geometry.l
    dets = np.zeros((count, count))
    for k in range(count):
        for l in range(count):
            if k != l:
                dets[k, l] = abs(np.linalg.det(linalg.block(c_hat, k, l, n)))
    scores = dets.sum(axis=1)
    first = int(np.argmax(scores))
    rest = sorted((l for l in range(count) if l != first), key=lambda l: (-dets[first, l], l))
    order = [first] + rest

    def _tied(vals):
        vals = np.sort(vals)[::-1]
        gaps = np.abs(np.diff(vals))
        return bool(np.any(gaps <= rtol * max(vals.max(initial=0.0), 1.0)))

    tied = _tied(scores) or _tied(dets[first, rest])
    return tuple(order), tied


def maximal_invariant(c_hat, geometry: BlockGeometry, strict: bool = False) -> MaximalInvariant:
    """Reduce a coherence matrix to its canonical form under the correlation group.

    After fixing the vector order, the cross block of the first two vectors
    is diagonalised by its SVD, and the first-row blocks of vectors 3..L are
    triangularised by LQ factorisations whose unitary factors are absorbed
    into those vectors. The remaining diagonal-phase freedom shared by the
    first two vectors is removed by making the first column of the (1, 3)
    triangular factor real non-negative.

    With ``strict=True`` a rank-deficient first-row block raises
    RankDeficientBlock; otherwise the result is flagged ``degenerate``.
    """
    c_hat = linalg.hermitian_part(c_hat)
    if geometry.l < 2:
        raise GeometryMismatch("the maximal invariant needs at least two vectors")
    if c_hat.shape != (geometry.dim, geometry.dim):
        raise GeometryMismatch(f"coherence is {c_hat.shape}, geometry expects {geometry.dim}")
    n, count = geometry.n, geometry.l
    if np.abs(linalg.diagonal_blocks(c_hat, n) - np.eye(n)).max() > 1e-8:
        raise ValueError("input is not a coherence matrix (diagonal blocks must be I)")

    notes: list[str] = []
    order, tied = vector_order(c_hat, geometry)
    if tied:
        notes.append("tied ordering scores; original index order used")
    idx = np.concatenate([np.arange(k * n, (k + 1) * n) for k in order])
    c = c_hat[np.ix_(idx, idx)]

    u, xi, v = linalg.svd(linalg.block(c, 0, 1, n))
    xi = np.clip(xi, 0.0, 1.0)
    transforms = [u.conj().T, v.conj().T] + [np.eye(n, dtype=np.complex128)] * (count - 2)

    def _lq(mat, which):
        try:
            return linalg.lq(mat, allow_rank_deficient=not strict)
        except RankDeficient as exc:
            raise RankDeficientBlock(f"first-row block for vector {which} is rank deficient") from exc

    if count >= 3:
        l13, _ = _lq(transforms[0] @ linalg.block(c, 0, 2, n), 3)
        pivots = l13[1:, 0]
        phases = np.ones(n, dtype=np.complex128)
        big = np.abs(pivots) > linalg.PHASE_TOL
        phases[1:][big] = pivots[big] / np.abs(pivots[big])
        if n > 1 and not np.all(big):
            notes.append("zero entries in the first column of L_13; phases left unresolved")
        transforms[0] = phases.conj()[:, None] * transforms[0]
        transforms[1] = phases.conj()[:, None] * transforms[1]

    l_blocks = []
    for l in range(2, count):
        lf, qf = _lq(transforms[0] @ linalg.block(c, 0, l, n), l + 1)
        if np.any(np.diag(lf) <= linalg.PHASE_TOL):
            notes.append(f"rank-deficient first-row block for vector {l + 1}")
        transforms[l] = qf
        l_blocks.append(lf)

    w = np.zeros_like(c)
    for k, t in enumerate(transforms):
        w[k * n:(k + 1) * n, k * n:(k + 1) * n] = t
    r_ww = w @ c @ w.conj().T
    r_ww = 0.5 * (r_ww + r_ww.conj().T)
    for l, lf in enumerate(l_blocks, start=2):
        # exact triangular structure; round-off above the diagonal is dropped
        r_ww[0:n, l * n:(l + 1) * n] = lf
        r_ww[l * n:(l + 1) * n, 0:n] = lf.conj().T
    cross = {
        (k + 1, l + 1): linalg.block(r_ww, k, l, n).copy()
        for l in range(2, count) for k in range(1, l)
    }
    if np.any(xi <= linalg.PHASE_TOL):
        notes.append("zero canonical correlation between the first two vectors")
    return MaximalInvariant(order, xi, l_blocks, cross, r_ww, bool(notes), notes)


def maximal_invariant_of(data: SampleSet) -> MaximalInvariant:
    return maximal_invariant(coherence(covariance_of(data.samples), data.geometry), data.geometry)
