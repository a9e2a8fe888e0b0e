"""Deterministic Monte Carlo trial engine shared by calibration and the harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg
from .detectors import DetectorId, statistics_from_samples
from .errors import NoConvergence, NotPositiveDefinite, SimulationAborted
from .model import BlockGeometry
from .parallel import map_chunks
from .sampling import draw, stream_rng

log = logging.getLogger(__name__)

MAX_REDRAW_RATE = 1e-3
MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class Redraw:
    trial: int
    hypothesis: int
    attempt: int
    reason: str


@dataclass(frozen=True, eq=False)
class TrialKernel:
    """Evaluates detectors on every trial of a chunk.

    Trial ``t`` under hypothesis ``h`` uses stream ``stride * t + h``. The
    sample matrix is drawn once at the largest M; smaller M values use its
    leading rows, which is exactly what a fresh draw of that size yields.
    """

    geometry: BlockGeometry
    ids: tuple[DetectorId, ...]
    m_values: tuple[int, ...]
    seed: int
    roots: tuple[np.ndarray, ...]
    stride: int

    def __call__(self, chunk: range):
        values = np.empty((len(chunk), len(self.roots), len(self.m_values), len(self.ids)))
        redraws: list[Redraw] = []
        m_max = max(self.m_values)
        for i, t in enumerate(chunk):
            for h, root in enumerate(self.roots):
                stream = self.stride * t + h
                for attempt in range(MAX_ATTEMPTS):
                    try:
                        x = draw(root, m_max, stream_rng(self.seed, stream, attempt))
                        for j, m in enumerate(self.m_values):
                            values[i, h, j] = statistics_from_samples(self.ids, x[:m], self.geometry)
                        break
                    except (NotPositiveDefinite, NoConvergence) as exc:
                        redraws.append(Redraw(t, h, attempt, str(exc)))
                else:
                    raise SimulationAborted(
                        f"trial {t} (hypothesis {h}) failed {MAX_ATTEMPTS} times", redraws
                    )
        return values, redraws


def run_trials(geometry: BlockGeometry, ids: Sequence[DetectorId], m_values: Sequence[int],
               covariances: Sequence[np.ndarray], trials: int, seed: int,
               stride: int | None = None, workers: int = 1):
    """Statistics for `trials` trials, shape (trials, hypotheses, len(m_values), len(ids)).

    Returns the array and the list of redrawn trials. Aborts when more than
    0.1% of the datasets had to be redrawn.
    """
    roots = tuple(linalg.hermitian_sqrt(c) for c in covariances)
    kernel = TrialKernel(geometry, tuple(ids), tuple(int(m) for m in m_values), int(seed),
                         roots, len(roots) if stride is None else stride)
    parts = map_chunks(kernel, trials, workers)
    values = np.concatenate([p[0] for p in parts]) if parts else np.empty((0, len(roots), len(m_values), len(ids)))
    redraws = [r for p in parts for r in p[1]]
    datasets = max(trials * len(roots), 1)
    if redraws:
        log.warning("%d dataset(s) redrawn out of %d", len(redraws), datasets)
    if len(redraws) > MAX_REDRAW_RATE * datasets:
        detail = "; ".join(f"trial {r.trial} hyp {r.hypothesis}: {r.reason}" for r in redraws[:10])
        raise SimulationAborted(
            f"{len(redraws)} of {datasets} datasets needed redraws (limit 0.1%): {detail}", redraws
        )
    return values, redraws
