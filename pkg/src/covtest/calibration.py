"""Detection thresholds: empirical null quantiles and Wilks' chi-squared limit.

Because every statistic is invariant under its group, the null distribution
does not depend on the nuisance covariance, so thresholds are simulated at
``R = I``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .detectors import DetectorId, check_applicable
from .errors import InsufficientTrials, InvalidDof, InvalidProbability, UnsupportedDetector
from .model import BlockGeometry
from .montecarlo import run_trials


def _check_dof(k) -> float:
    k = float(k)
    if not math.isfinite(k) or k < 1:
        raise InvalidDof(f"degrees of freedom must be >= 1, got {k}")
    return k


def chi2_cdf(x, k) -> float | np.ndarray:
    """CDF of the chi-squared law with `k` dof (0 for negative `x`)."""
    k = _check_dof(k)
    x = np.asarray(x, dtype=float)
    out = special.gammainc(k / 2.0, np.maximum(x, 0.0) / 2.0)
    out = np.where(x < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(p: float, k) -> float:
    """Inverse of :func:`chi2_cdf`, refined by bracketed root finding."""
    k = _check_dof(k)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"p must lie in (0, 1), got {p}")
    guess = 2.0 * special.gammaincinv(k / 2.0, p)
    lo, hi = guess * 0.999, guess * 1.001 + 1e-300
    f = lambda x: chi2_cdf(x, k) - p  # noqa: E731
    while f(lo) > 0:
        lo /= 2.0
    while f(hi) < 0:
        hi = 2.0 * hi + 1.0
    if f(lo) == 0:
        return lo
    return optimize.brentq(f, lo, hi, xtol=np.finfo(float).tiny, rtol=4 * np.finfo(float).eps, maxiter=500)


def wilks_dof(det: DetectorId | str, geometry: BlockGeometry) -> int:
    """Degrees of freedom of the asymptotic null chi-squared law.

    ``(L^2 - L) N^2`` for the correlation tests and ``(L^2 - 1) N^2`` for
    the sphericity tests.
    """
    det = DetectorId.parse(det)
    l, n = geometry.l, geometry.n
    if det.family == "correlation":
        return (l * l - l) * n * n
    return (l * l - 1) * n * n


def wilks_scale(det: DetectorId | str, m: int) -> float:
    """Factor mapping an oriented statistic's excess over its null minimum to chi-squared.

    ``M (T - L N)`` for the LMPITs and ``2 M T`` for the GLRTs (twice the
    log likelihood ratio).
    """
    det = DetectorId.parse(det)
    if det.is_scalar:
        raise UnsupportedDetector(f"no chi-squared approximation for {det.value}")
    return 2.0 * m if det.is_glrt else float(m)


def wilks_transform(det: DetectorId | str, values, geometry: BlockGeometry, m: int) -> np.ndarray:
    det = DetectorId.parse(det)
    offset = 0.0 if det.is_glrt else geometry.dim
    return wilks_scale(det, m) * (np.asarray(values, dtype=float) - offset)


@dataclass(frozen=True)
class ThresholdRecord:
    detector: DetectorId
    l: int
    n: int
    m: int
    pfa: float
    method: str
    threshold: float
    trials: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.pfa < 1.0:
            raise InvalidProbability(f"pfa must lie in (0, 1), got {self.pfa}")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.method not in ("empirical", "wilks"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def geometry(self) -> BlockGeometry:
        return BlockGeometry(self.l, self.n)

    def to_dict(self) -> dict:
        out = {
            "detector": self.detector.value,
            "L": self.l,
            "N": self.n,
            "M": self.m,
            "pfa": self.pfa,
            "method": self.method,
            "threshold": self.threshold,
        }
        if self.method == "empirical":
            out["trials"] = self.trials
            out["seed"] = self.seed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRecord":
        missing = [k for k in ("detector", "L", "N", "M", "pfa", "method", "threshold") if k not in d]
        if missing:
            raise KeyError(f"threshold record is missing field(s): {', '.join(missing)}")
        return cls(DetectorId.parse(d["detector"]), int(d["L"]), int(d["N"]), int(d["M"]),
                   float(d["pfa"]), str(d["method"]), float(d["threshold"]),
                   d.get("trials"), d.get("seed"))


def wilks_threshold(det: DetectorId | str, geometry: BlockGeometry, m: int, pfa: float) -> ThresholdRecord:
    """Threshold ``L N + q_{1-pfa}(chi2_dof) / M`` on an LMPIT statistic."""
    det = DetectorId.parse(det)
    if not det.is_lmpit:
        raise UnsupportedDetector(f"Wilks thresholds are only provided for the LMPITs, not {det.value}")
    if not 0.0 < pfa < 1.0:
        raise InvalidProbability(f"pfa must lie in (0, 1), got {pfa}")
    check_applicable(det, geometry, m)
    if m < 10 * geometry.dim:
        warnings.warn(
            f"M = {m} < 10 L N = {10 * geometry.dim}; the chi-squared approximation may be poor",
            stacklevel=2,
        )
    dof = wilks_dof(det, geometry)
    thr = geometry.dim + chi2_quantile(1.0 - pfa, dof) / m
    return ThresholdRecord(det, geometry.l, geometry.n, m, pfa, "wilks", thr)


def null_statistics(det: DetectorId | str, geometry: BlockGeometry, m: int, trials: int,
                    seed: int, workers: int = 1) -> np.ndarray:
    """Oriented statistics of `trials` null datasets at R = I, in trial order."""
    det = DetectorId.parse(det)
    check_applicable(det, geometry, m)
    eye = np.eye(geometry.dim, dtype=np.complex128)
    values, _ = run_trials(geometry, [det], [m], [eye], trials, seed, stride=1, workers=workers)
    return values[:, 0, 0, 0]


def empirical_quantile(values, q: float) -> float:
    """Linear interpolation between order statistics at rank ``(n-1) q + 1``."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def empirical_threshold(det: DetectorId | str, geometry: BlockGeometry, m: int, pfa: float,
                        trials: int, seed: int, workers: int = 1) -> ThresholdRecord:
    """The (1 - pfa) quantile of the simulated null statistic."""
    det = DetectorId.parse(det)
    if not 0.0 < pfa < 1.0:
        raise InvalidProbability(f"pfa must lie in (0, 1), got {pfa}")
    if trials * pfa < 100 - 1e-9:
        raise InsufficientTrials(f"pfa = {pfa} needs at least {math.ceil(100 / pfa)} trials, got {trials}")
    stats = null_statistics(det, geometry, m, trials, seed, workers)
    thr = empirical_quantile(stats, 1.0 - pfa)
    return ThresholdRecord(det, geometry.l, geometry.n, m, pfa, "empirical", thr, trials, seed)
