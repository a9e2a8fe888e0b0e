"""Invariant tests for the covariance structure of complex Gaussian vectors.

Locally most powerful invariant tests (Frobenius norm of the sample
coherence matrix, and of the normalized sample covariance for sphericity),
their GLRT counterparts, the scalar UMPI special cases, threshold
calibration and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .model import BlockGeometry, Scenario, ScenarioKind, scenario_circulant, scenario_latent  # noqa: E402
from .sampling import (  # noqa: E402
    SampleSet,
    coherence,
    normalized_covariance,
    sample_covariance,
    sample_gaussian,
)
from .detectors import DetectorId, DetectorStatistic, evaluate, evaluate_many  # noqa: E402

__all__ = [
    "BlockGeometry",
    "DetectorId",
    "DetectorStatistic",
    "SampleSet",
    "Scenario",
    "ScenarioKind",
    "coherence",
    "evaluate",
    "evaluate_many",
    "normalized_covariance",
    "sample_covariance",
    "sample_gaussian",
    "scenario_circulant",
    "scenario_latent",
]
