"""True covariance models for the detection experiments."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import linalg
from .errors import GeometryMismatch, NonPositiveOmega


@dataclass(frozen=True)
class BlockGeometry:
    """L vectors of dimension N stacked into one vector of size L*N."""

    l: int
    n: int

    def __post_init__(self):
        if int(self.l) != self.l or int(self.n) != self.n or self.l < 1 or self.n < 1:
            raise ValueError(f"geometry needs integers L >= 1 and N >= 1, got L={self.l}, N={self.n}")

    @property
    def dim(self) -> int:
        return self.l * self.n

    def to_dict(self) -> dict:
        return {"L": self.l, "N": self.n}


class ScenarioKind(str, enum.Enum):
    CORRELATION = "correlation"
    SPHERICITY = "sphericity"
    LATENT_CORRELATION = "latent_correlation"
    LATENT_SPHERICITY = "latent_sphericity"

    @property
    def is_sphericity(self) -> bool:
        return self in (ScenarioKind.SPHERICITY, ScenarioKind.LATENT_SPHERICITY)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A pair of true covariances (H0, H1) on a common block geometry.

    ``params`` carries whatever is needed to rebuild the scenario from JSON
    (omega, or channel rank/SNR/seed and noise choice).
    """

    geometry: BlockGeometry
    r_h0: np.ndarray
    r_h1: np.ndarray
    kind: ScenarioKind
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, **self.geometry.to_dict(), **self.params}


def equispaced_omega(l: int, low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """L values equispaced from `low` to `high`, both ends included."""
    return np.linspace(low, high, l)


def scenario_circulant(geometry: BlockGeometry, omega=None,
                       kind: ScenarioKind | str = ScenarioKind.CORRELATION) -> Scenario:
    """H1: ``(F diag(omega) F^H) kron I_N``; H0: identity.

    With ``mean(omega) == 1`` the diagonal of the circulant factor is all
    ones, so H1 has unit variances and differs from H0 only in the
    cross-correlations.
    """
    kind = ScenarioKind(kind)
    if omega is None:
        omega = equispaced_omega(geometry.l)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (geometry.l,):
        raise GeometryMismatch(f"omega must have length L={geometry.l}, got {omega.shape}")
    if np.any(omega <= 0) or not np.all(np.isfinite(omega)):
        raise NonPositiveOmega("all omega values must be finite and positive")
    f = linalg.dft_matrix(geometry.l)
    circ = (f * omega) @ f.conj().T
    circ = 0.5 * (circ + circ.conj().T)
    r_h1 = np.kron(circ, np.eye(geometry.n))
    r_h0 = np.eye(geometry.dim, dtype=np.complex128)
    return Scenario(geometry, r_h0, r_h1, kind, {"omega": [float(w) for w in omega]})


def _is_block_diagonal(a: np.ndarray, n: int, tol: float = 1e-12) -> bool:
    mask = np.kron(np.eye(a.shape[0] // n), np.ones((n, n))) == 0
    return bool(np.all(np.abs(a[mask]) <= tol * max(np.abs(a).max(), 1.0)))


def _is_spherical(a: np.ndarray, n: int, tol: float = 1e-12) -> bool:
    if not _is_block_diagonal(a, n, tol):
        return False
    blocks = linalg.diagonal_blocks(a, n)
    return bool(np.all(np.abs(blocks - blocks[0]) <= tol * max(np.abs(a).max(), 1.0)))


def scenario_latent(geometry: BlockGeometry, h, noise,
                    kind: ScenarioKind | str = ScenarioKind.LATENT_CORRELATION,
                    params: dict | None = None) -> Scenario:
    """Signal-plus-noise model: H1 = h h^H + noise, H0 = noise.

    `noise` must be block diagonal for the correlation kind and of the form
    ``I_L kron R0`` for the sphericity kind.
    """
    kind = ScenarioKind(kind)
    if kind not in (ScenarioKind.LATENT_CORRELATION, ScenarioKind.LATENT_SPHERICITY):
        raise ValueError(f"latent scenario needs a latent kind, got {kind.value}")
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 1:
        h = h[:, None]
    noise = linalg.as_matrix(noise)
    if h.shape[0] != geometry.dim or noise.shape != (geometry.dim, geometry.dim):
        raise GeometryMismatch(
            f"channel has {h.shape[0]} rows and noise is {noise.shape}; expected {geometry.dim}"
        )
    noise = linalg.hermitian_part(noise)
    structured = (_is_spherical if kind.is_sphericity else _is_block_diagonal)(noise, geometry.n)
    if not structured:
        raise GeometryMismatch(f"noise covariance lacks the structure required by {kind.value}")
    linalg.hermitian_sqrt(noise)  # certifies PD
    r_h1 = h @ h.conj().T + noise
    extra = {"p": int(h.shape[1])}
    extra.update(params or {})
    return Scenario(geometry, noise, 0.5 * (r_h1 + r_h1.conj().T), kind, extra)


def random_pd(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random well-conditioned complex PD matrix ``A A^H / n + I / 2``."""
    a = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    out = a @ a.conj().T / n + 0.5 * np.eye(n)
    return 0.5 * (out + out.conj().T)


def random_null_covariance(geometry: BlockGeometry, kind: ScenarioKind | str,
                           rng: np.random.Generator) -> np.ndarray:
    """A random admissible H0 covariance: block diagonal D, or I kron R0."""
    kind = ScenarioKind(kind)
    if kind.is_sphericity:
        return np.kron(np.eye(geometry.l), random_pd(geometry.n, rng))
    out = np.zeros((geometry.dim, geometry.dim), dtype=np.complex128)
    n = geometry.n
    for k in range(geometry.l):
        out[k * n:(k + 1) * n, k * n:(k + 1) * n] = random_pd(n, rng)
    return out


def latent_channel(geometry: BlockGeometry, p: int, snr: float, noise,
                   rng: np.random.Generator) -> np.ndarray:
    """Circular Gaussian L*N x p channel with ``tr(H H^H) / tr(noise) = snr``."""
    if p < 1:
        raise ValueError("signal rank p must be at least 1")
    if snr < 0:
        raise ValueError("snr must be non-negative")
    h = (rng.standard_normal((geometry.dim, p)) + 1j * rng.standard_normal((geometry.dim, p))) / np.sqrt(2)
    target = snr * float(np.trace(np.asarray(noise)).real)
    power = linalg.frobenius_sq(h)
    return h * np.sqrt(target / power)


CHANNEL_STREAM = 2**62


def scenario_from_dict(cfg: dict[str, Any], seed: int | None = None) -> Scenario:
    """Build a scenario from its JSON description.

    Circulant kinds take ``{"kind", "L", "N", "omega"?}``; latent kinds take
    ``{"kind", "L", "N", "p", "snr", "noise": "identity"|"random"}`` and draw
    the channel (and a random noise, if requested) from `seed` on a reserved
    stream.
    """
    try:
        kind = ScenarioKind(cfg.get("kind", "correlation"))
        geometry = BlockGeometry(int(cfg["L"]), int(cfg["N"]))
    except KeyError as exc:
        raise KeyError(f"scenario is missing required field {exc.args[0]!r}") from None
    if kind in (ScenarioKind.CORRELATION, ScenarioKind.SPHERICITY):
        return scenario_circulant(geometry, cfg.get("omega"), kind)
    for name in ("p", "snr"):
        if name not in cfg:
            raise KeyError(f"latent scenario is missing required field {name!r}")
    if seed is None:
        raise ValueError("latent scenarios need a seed to draw the channel")
    from .sampling import stream_rng

    rng = stream_rng(seed, CHANNEL_STREAM)
    noise_choice = cfg.get("noise", "identity")
    if noise_choice == "identity":
        noise = np.eye(geometry.dim, dtype=np.complex128)
    elif noise_choice == "random":
        noise = random_null_covariance(geometry, kind, rng)
    else:
        raise ValueError(f"unknown noise choice {noise_choice!r}")
    h = latent_channel(geometry, int(cfg["p"]), float(cfg["snr"]), noise, rng)
    params = {"snr": float(cfg["snr"]), "noise": noise_choice, "noise_is_default": "noise" not in cfg}
    return scenario_latent(geometry, h, noise, kind, params)

