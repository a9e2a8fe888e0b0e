"""Monte Carlo experiments: ROC curves, miss probability versus M, null CDFs.

All detectors in a run see the same datasets (trial ``t`` draws H0 data from
stream ``2t`` and H1 data from stream ``2t + 1``), so detector comparisons
are paired.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .calibration import chi2_cdf, empirical_quantile, wilks_dof, wilks_transform
from .detectors import DetectorId, check_applicable
from .errors import InsufficientTrials, InvalidProbability, UnsupportedDetector
from .model import Scenario, scenario_from_dict
from .montecarlo import Redraw, run_trials

DEFAULT_TRIALS = {"roc": 2000, "cdf": 2000, "pm": 100_000}
DEFAULT_M_VALUES = (40, 55, 70, 85, 100)


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: Scenario
    detectors: tuple[DetectorId, ...]
    m_values: tuple[int, ...]
    trials_per_hypothesis: int
    seed: int
    pfa: float | None = None
    scenario_source: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(DetectorId.parse(d) for d in self.detectors))
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        if not self.detectors:
            raise ValueError("at least one detector is required")
        if not self.m_values:
            raise ValueError("at least one value of M is required")
        if self.trials_per_hypothesis < 2:
            raise ValueError("trials_per_hypothesis must be at least 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for det in self.detectors:
            for m in self.m_values:
                check_applicable(det, self.scenario.geometry, m)
        if self.pfa is not None and not 0.0 < self.pfa <= 1.0:
            raise InvalidProbability(f"pfa must lie in (0, 1], got {self.pfa}")

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario_source or self.scenario.to_dict(),
            "detectors": [d.value for d in self.detectors],
            "m_values": list(self.m_values),
            "trials_per_hypothesis": self.trials_per_hypothesis,
            "seed": self.seed,
        }
        if self.pfa is not None:
            out["pfa"] = self.pfa
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any], seed: int | None = None, mode: str = "roc") -> "RunConfig":
        """Parse a JSON run configuration; a `seed` argument overrides the file's."""
        for name in ("scenario", "detectors"):
            if name not in d:
                raise KeyError(f"config is missing required field {name!r}")
        seed = d.get("seed") if seed is None else seed
        if seed is None:
            raise KeyError("config is missing required field 'seed'")
        source = dict(d["scenario"])
        scenario = scenario_from_dict(source, int(seed))
        return cls(
            scenario=scenario,
            detectors=tuple(d["detectors"]),
            m_values=tuple(d.get("m_values", DEFAULT_M_VALUES)),
            trials_per_hypothesis=int(d.get("trials_per_hypothesis", DEFAULT_TRIALS[mode])),
            seed=int(seed),
            pfa=d.get("pfa"),
            scenario_source=source,
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(eq=False)
class DetectorCurve:
    """Results for one (detector, M) pair; statistics are in trial order."""

    detector: DetectorId
    m: int
    h0: np.ndarray
    h1: np.ndarray | None = None
    roc: np.ndarray | None = None
    auc: float | None = None
    pfa: float | None = None
    pm: float | None = None
    threshold: float | None = None
    cdf: np.ndarray | None = None

    @property
    def h0_sorted(self) -> np.ndarray:
        return np.sort(self.h0)

    @property
    def h1_sorted(self) -> np.ndarray | None:
        return None if self.h1 is None else np.sort(self.h1)


@dataclass(eq=False)
class RunResult:
    kind: str
    config: RunConfig
    curves: dict[tuple[DetectorId, int], DetectorCurve]
    redraws: list[Redraw] = field(default_factory=list)

    def curve(self, det: DetectorId | str, m: int) -> DetectorCurve:
        return self.curves[(DetectorId.parse(det), int(m))]

    @property
    def provenance(self) -> dict:
        return {
            "kind": self.kind,
            "config_sha256": self.config.digest(),
            "seed": self.config.seed,
            "code_version": __version__,
            "redraws": [
                {"trial": r.trial, "hypothesis": r.hypothesis, "attempt": r.attempt, "reason": r.reason}
                for r in self.redraws
            ],
        }

    def sidecar(self) -> str:
        return json.dumps({"config": self.config.to_dict(), "provenance": self.provenance}, indent=2, sort_keys=True) + "\n"


def roc_points(h0, h1) -> np.ndarray:
    """Empirical ROC from a sweep over every pooled statistic value.

    H1 is declared when the statistic is >= the threshold. Rows are
    (pfa, pd), starting at (0, 0) and ending at (1, 1).
    """
    s0, s1 = np.sort(np.asarray(h0, float)), np.sort(np.asarray(h1, float))
    thresholds = np.unique(np.concatenate([s0, s1]))[::-1]
    pfa = (s0.size - np.searchsorted(s0, thresholds, side="left")) / s0.size
    pd = (s1.size - np.searchsorted(s1, thresholds, side="left")) / s1.size
    return np.column_stack([np.r_[0.0, pfa], np.r_[0.0, pd]])


def auc_from_roc(points: np.ndarray) -> float:
    return float(np.trapezoid(points[:, 1], points[:, 0]))


def auc_mann_whitney(h0, h1) -> float:
    """AUC as the Mann-Whitney probability P(T1 > T0) + P(T1 = T0) / 2."""
    h0, h1 = np.asarray(h0, float), np.asarray(h1, float)
    ranks = stats.rankdata(np.concatenate([h0, h1]))
    n0, n1 = h0.size, h1.size
    return float((ranks[n0:].sum() - n1 * (n1 + 1) / 2) / (n0 * n1))


def paired_auc_difference(result: RunResult, det_a, det_b, m: int,
                          n_boot: int = 300, seed: int = 0) -> tuple[float, float]:
    """AUC(det_a) - AUC(det_b) and its paired bootstrap standard error.

    H0 and H1 trials are resampled independently, but each resample is
    shared by both detectors.
    """
    a, b = result.curve(det_a, m), result.curve(det_b, m)
    diff = auc_mann_whitney(a.h0, a.h1) - auc_mann_whitney(b.h0, b.h1)
    rng = np.random.default_rng(seed)
    n0, n1 = a.h0.size, a.h1.size
    boots = np.empty(n_boot)
    for i in range(n_boot):
        i0 = rng.integers(0, n0, n0)
        i1 = rng.integers(0, n1, n1)
        boots[i] = auc_mann_whitney(a.h0[i0], a.h1[i1]) - auc_mann_whitney(b.h0[i0], b.h1[i1])
    return diff, float(boots.std(ddof=1))


def _simulate(config: RunConfig, hypotheses: int, workers: int):
    sc = config.scenario
    covs = [sc.r_h0, sc.r_h1][:hypotheses]
    return run_trials(sc.geometry, config.detectors, config.m_values, covs,
                      config.trials_per_hypothesis, config.seed, stride=2, workers=workers)


def run_roc(config: RunConfig, workers: int = 1) -> RunResult:
    values, redraws = _simulate(config, 2, workers)
    curves = {}
    for j, m in enumerate(config.m_values):
        for d, det in enumerate(config.detectors):
            h0, h1 = values[:, 0, j, d].copy(), values[:, 1, j, d].copy()
            roc = roc_points(h0, h1)
            curves[(det, m)] = DetectorCurve(det, m, h0, h1, roc=roc, auc=auc_from_roc(roc))
    return RunResult("roc", config, curves, redraws)


def run_pm_vs_m(config: RunConfig, pfa: float | None = None, workers: int = 1) -> RunResult:
    """Miss probability at a fixed false-alarm rate for each M.

    The threshold for each (detector, M) is the empirical (1 - pfa) quantile
    of that run's own H0 statistics; ``pfa = 1`` means always deciding H1.
    """
    pfa = config.pfa if pfa is None else pfa
    if pfa is None or not 0.0 < pfa <= 1.0:
        raise InvalidProbability(f"pfa must lie in (0, 1], got {pfa}")
    n = config.trials_per_hypothesis
    if pfa < 1.0 and n * pfa < 100 - 1e-9:
        raise InsufficientTrials(f"pfa = {pfa} needs at least {int(np.ceil(100 / pfa))} trials per hypothesis")
    values, redraws = _simulate(config, 2, workers)
    curves = {}
    for j, m in enumerate(config.m_values):
        for d, det in enumerate(config.detectors):
            h0, h1 = values[:, 0, j, d].copy(), values[:, 1, j, d].copy()
            thr = -np.inf if pfa >= 1.0 else empirical_quantile(h0, 1.0 - pfa)
            pm = float(np.mean(h1 <= thr))
            curves[(det, m)] = DetectorCurve(det, m, h0, h1, pfa=pfa, pm=pm, threshold=thr)
    return RunResult("pm", config, curves, redraws)


def empirical_cdf_table(values, dof: int) -> np.ndarray:
    """Rows (value, empirical CDF, chi-squared CDF) over the sorted values."""
    v = np.sort(np.asarray(values, float))
    ecdf = np.arange(1, v.size + 1) / v.size
    return np.column_stack([v, ecdf, chi2_cdf(v, dof)])


def ks_distance(values, dof: int) -> float:
    """Kolmogorov-Smirnov distance between a sample and the chi-squared law."""
    v = np.sort(np.asarray(values, float))
    f = chi2_cdf(v, dof)
    n = v.size
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def run_cdf(config: RunConfig, workers: int = 1) -> RunResult:
    """Null statistics mapped to the chi-squared scale, with Wilks' CDF alongside.

    LMPITs use ``M (T - L N)``; GLRTs use ``2 M T`` (T = -log det).
    """
    for det in config.detectors:
        if det.is_scalar:
            raise UnsupportedDetector(f"no chi-squared overlay for {det.value}")
    values, redraws = _simulate(config, 1, workers)
    g = config.scenario.geometry
    curves = {}
    for j, m in enumerate(config.m_values):
        for d, det in enumerate(config.detectors):
            h0 = values[:, 0, j, d].copy()
            table = empirical_cdf_table(wilks_transform(det, h0, g, m), wilks_dof(det, g))
            curves[(det, m)] = DetectorCurve(det, m, h0, cdf=table)
    return RunResult("cdf", config, curves, redraws)


def _fmt(x: float) -> str:
    return repr(float(x))


def _rows_to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


ROC_HEADER = ("detector", "m", "pfa", "pd")
PM_HEADER = ("detector", "m", "pfa", "pm", "threshold")
CDF_HEADER = ("detector", "m", "value", "empirical_cdf", "wilks_cdf")


def _ordered(result: RunResult):
    cfg = result.config
    for det in cfg.detectors:
        for m in cfg.m_values:
            yield result.curves[(det, m)]


def roc_csv(result: RunResult) -> str:
    rows = ((c.detector.value, c.m, _fmt(p), _fmt(q)) for c in _ordered(result) for p, q in c.roc)
    return _rows_to_csv(ROC_HEADER, rows)


def pm_csv(result: RunResult) -> str:
    rows = ((c.detector.value, c.m, _fmt(c.pfa), _fmt(c.pm), _fmt(c.threshold)) for c in _ordered(result))
    return _rows_to_csv(PM_HEADER, rows)


def cdf_csv(result: RunResult) -> str:
    rows = ((c.detector.value, c.m, _fmt(v), _fmt(e), _fmt(w)) for c in _ordered(result) for v, e, w in c.cdf)
    return _rows_to_csv(CDF_HEADER, rows)


RUNNERS = {"roc": (run_roc, roc_csv), "pm": (run_pm_vs_m, pm_csv), "cdf": (run_cdf, cdf_csv)}


def write_outputs(result: RunResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``<kind>.csv`` and the ``<kind>.json`` sidecar into `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{result.kind}.csv", out / f"{result.kind}.json"
    csv_path.write_text(RUNNERS[result.kind][1](result))
    json_path.write_text(result.sidecar())
    return csv_path, json_path
