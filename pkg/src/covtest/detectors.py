"""Test statistics for block correlation and block sphericity.

Every statistic is oriented so that larger values favour H1. The two GLRTs
are therefore reported as ``-log det`` of the coherence or normalized
covariance; :attr:`DetectorStatistic.raw` gives back the conventional sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .errors import (
    InsufficientSamples,
    MalformedCoherence,
    MalformedNormalizedCovariance,
    WrongGeometry,
)
from .model import BlockGeometry
from .sampling import SampleSet, coherence, covariance_of, normalized_covariance


class DetectorId(str, enum.Enum):
    LMPIT_CORR = "lmpit-corr"
    GLRT_CORR = "glrt-corr"
    LMPIT_SPH = "lmpit-sph"
    GLRT_SPH = "glrt-sph"
    UMPIT_CORR = "umpit-corr"
    UMPIT_SPH = "umpit-sph"

    @classmethod
    def parse(cls, name: "str | DetectorId") -> "DetectorId":
        """Accept CLI names (``lmpit-corr``) and enum-style names (``lmpit_corr``)."""
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        key = {"umpit-corr-scalar": "umpit-corr", "umpit-sph-scalar": "umpit-sph"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown detector {name!r} (expected one of {valid})") from None

    @property
    def family(self) -> str:
        return "sphericity" if self.value.endswith("sph") else "correlation"

    @property
    def is_glrt(self) -> bool:
        return self.value.startswith("glrt")

    @property
    def is_lmpit(self) -> bool:
        return self.value.startswith("lmpit")

    @property
    def is_scalar(self) -> bool:
        return self.value.startswith("umpit")


@dataclass(frozen=True)
class DetectorStatistic:
    id: DetectorId
    value: float
    geometry: BlockGeometry
    m: int | None = None

    @property
    def raw(self) -> float:
        """Value in the conventional orientation (log det for the GLRTs)."""
        return -self.value if self.id.is_glrt else self.value


def _geometry_of(a: np.ndarray, geometry: BlockGeometry | None) -> BlockGeometry:
    if geometry is None:
        return BlockGeometry(a.shape[0], 1)
    if a.shape != (geometry.dim, geometry.dim):
        raise MalformedCoherence(f"matrix is {a.shape}, geometry expects {geometry.dim}")
    return geometry


def lmpit_correlation(c_hat, geometry: BlockGeometry | None = None,
                      m: int | None = None, tol: float = 1e-8) -> DetectorStatistic:
    """Squared Frobenius norm of the coherence matrix."""
    c_hat = linalg.as_matrix(c_hat)
    geometry = _geometry_of(c_hat, geometry)
    blocks = linalg.diagonal_blocks(c_hat, geometry.n)
    if np.abs(blocks - np.eye(geometry.n)).max() > tol:
        raise MalformedCoherence("diagonal blocks of a coherence matrix must be identities")
    return DetectorStatistic(DetectorId.LMPIT_CORR, linalg.frobenius_sq(c_hat), geometry, m)


def glrt_correlation(c_hat, geometry: BlockGeometry | None = None,
                     m: int | None = None) -> DetectorStatistic:
    """``-log det`` of the coherence matrix (non-negative by Fischer's inequality)."""
    c_hat = linalg.as_matrix(c_hat)
    geometry = _geometry_of(c_hat, geometry)
    return DetectorStatistic(DetectorId.GLRT_CORR, -linalg.logdet_pd(c_hat), geometry, m)


def _check_trace(r_tilde: np.ndarray, geometry: BlockGeometry, tol: float) -> None:
    tr = float(np.trace(r_tilde).real)
    if abs(tr - geometry.dim) > tol * geometry.dim:
        raise MalformedNormalizedCovariance(
            f"normalized covariance must have trace {geometry.dim}, got {tr:.12g}"
        )


def lmpit_sphericity(r_tilde, geometry: BlockGeometry | None = None,
                     m: int | None = None, tol: float = 1e-6) -> DetectorStatistic:
    """Squared Frobenius norm of the normalized sample covariance."""
    r_tilde = linalg.as_matrix(r_tilde)
    geometry = _geometry_of(r_tilde, geometry)
    _check_trace(r_tilde, geometry, tol)
    return DetectorStatistic(DetectorId.LMPIT_SPH, linalg.frobenius_sq(r_tilde), geometry, m)


def glrt_sphericity(r_tilde, geometry: BlockGeometry | None = None,
                    m: int | None = None) -> DetectorStatistic:
    r_tilde = linalg.as_matrix(r_tilde)
    geometry = _geometry_of(r_tilde, geometry)
    return DetectorStatistic(DetectorId.GLRT_SPH, -linalg.logdet_pd(r_tilde), geometry, m)


def _require_scalar_pair(geometry: BlockGeometry) -> None:
    if (geometry.l, geometry.n) != (2, 1):
        raise WrongGeometry(f"scalar UMPIT needs L=2, N=1; got L={geometry.l}, N={geometry.n}")


def umpit_scalar(data: SampleSet, which: str) -> DetectorStatistic:
    """Two scalar channels: |sample correlation| or top normalized eigenvalue."""
    _require_scalar_pair(data.geometry)
    r_hat = covariance_of(data.samples)
    if which == "correlation":
        c = coherence(r_hat, data.geometry)
        return DetectorStatistic(DetectorId.UMPIT_CORR, float(abs(c[0, 1])), data.geometry, data.m)
    if which == "sphericity":
        r_tilde = normalized_covariance(r_hat, data.geometry)
        top = float(np.linalg.eigvalsh(r_tilde)[-1])
        return DetectorStatistic(DetectorId.UMPIT_SPH, top, data.geometry, data.m)
    raise ValueError(f"which must be 'correlation' or 'sphericity', got {which!r}")


def required_samples(det: DetectorId, geometry: BlockGeometry) -> int:
    """Smallest M for which `det` is defined almost surely."""
    det = DetectorId.parse(det)
    return geometry.dim if det.is_glrt else geometry.n


def check_applicable(det: DetectorId, geometry: BlockGeometry, m: int) -> None:
    """Raise if `det` cannot be evaluated with M = `m` samples on `geometry`."""
    det = DetectorId.parse(det)
    if det.is_scalar:
        _require_scalar_pair(geometry)
    need = required_samples(det, geometry)
    if m < need:
        what = "L*N" if det.is_glrt else "N"
        raise InsufficientSamples(f"{det.value} needs M >= {what} = {need}, got M = {m}")


def statistics_from_samples(ids: Sequence[DetectorId], x: np.ndarray,
                            geometry: BlockGeometry) -> np.ndarray:
    """Oriented statistic values for several detectors on one data matrix.

    Shares R-hat, C-hat and the normalized covariance between detectors.
    """
    r_hat = covariance_of(x)
    c_hat = r_tilde = None
    out = np.empty(len(ids))
    for i, det in enumerate(ids):
        if det.family == "correlation":
            if c_hat is None:
                c_hat = coherence(r_hat, geometry)
            mat = c_hat
        else:
            if r_tilde is None:
                r_tilde = normalized_covariance(r_hat, geometry)
            mat = r_tilde
        if det.is_lmpit:
            out[i] = linalg.frobenius_sq(mat)
        elif det.is_glrt:
            out[i] = -linalg.logdet_pd(mat)
        elif det is DetectorId.UMPIT_CORR:
            out[i] = abs(mat[0, 1])
        else:
            out[i] = np.linalg.eigvalsh(mat)[-1]
    return out


def evaluate(det: DetectorId | str, data: SampleSet) -> DetectorStatistic:
    """Run the full pipeline R-hat -> C-hat / normalized R-hat -> statistic."""
    det = DetectorId.parse(det)
    check_applicable(det, data.geometry, data.m)
    g = data.geometry
    if det is DetectorId.UMPIT_CORR:
        return umpit_scalar(data, "correlation")
    if det is DetectorId.UMPIT_SPH:
        return umpit_scalar(data, "sphericity")
    r_hat = covariance_of(data.samples)
    if det.family == "correlation":
        c_hat = coherence(r_hat, g)
        fn = lmpit_correlation if det.is_lmpit else glrt_correlation
        return fn(c_hat, g, data.m)
    r_tilde = normalized_covariance(r_hat, g)
    fn = lmpit_sphericity if det.is_lmpit else glrt_sphericity
    return fn(r_tilde, g, data.m)


def evaluate_many(ids: Iterable[DetectorId | str], data: SampleSet) -> dict[DetectorId, DetectorStatistic]:
    ids = [DetectorId.parse(d) for d in ids]
    for det in ids:
        check_applicable(det, data.geometry, data.m)
    values = statistics_from_samples(ids, data.samples, data.geometry)
    return {d: DetectorStatistic(d, float(v), data.geometry, data.m) for d, v in zip(ids, values)}
