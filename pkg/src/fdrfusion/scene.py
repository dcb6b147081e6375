"""Sensor deployment, disc target model, observations and the Byzantine flip."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import ParameterError

G0 = "G0"
G1 = "G1"
HYPOTHESES = (G0, G1)


def _check_hypothesis(hypothesis: str) -> None:
    if hypothesis not in HYPOTHESES:
        raise ParameterError(f"hypothesis must be one of {HYPOTHESES}, got {hypothesis!r}")


@dataclass(frozen=True)
class TargetModel:
    """Disc target: power ``P0`` inside radius ``d0``, nothing outside.

    Sensors live in a disc of radius ``R`` centred on the target.
    """

    P0: float
    d0: float
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError(f"R must be > 0, got {self.R}")
        if self.P0 < 0:
            raise ParameterError(f"P0 must be >= 0, got {self.P0}")
        if not 0 <= self.d0 <= self.R:
            raise ParameterError(f"d0 must lie in [0, R], got {self.d0}")

    @property
    def phi(self) -> float:
        """Amplitude seen by a sensor inside the disc."""
        return math.sqrt(self.P0)

    @property
    def signal_fraction(self) -> float:
        """Probability a uniformly deployed sensor lies within ``d0``."""
        return (self.d0 / self.R) ** 2

    def amplitude(self, r):
        return np.where(np.asarray(r) <= self.d0, self.phi, 0.0)


SignalModel = Callable[[np.ndarray], np.ndarray]


@dataclass
class Deployment:
    radii: np.ndarray

    @property
    def N(self) -> int:
        return len(self.radii)


@dataclass
class ObservationVector:
    s: np.ndarray
    hypothesis: str


@dataclass
class ByzantineMask:
    flags: np.ndarray
    alpha: float

    @property
    def M(self) -> int:
        return int(np.count_nonzero(self.flags))


def byzantine_count(N: int, alpha: float) -> int:
    """Number of Byzantines, ``round(alpha * N)`` with halves rounded up."""
    if not 0 <= alpha <= 1:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    # the 1e-9 guards products like 0.7 * 20 = 13.999999999999998
    return int(math.floor(alpha * N + 0.5 + 1e-9))


def sample_deployment(N: int, R: float, rng: np.random.Generator) -> Deployment:
    """Radial distances with density ``2r/R^2`` via ``r = R*sqrt(u)``."""
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    if not R > 0:
        raise ParameterError(f"R must be > 0, got {R}")
    return Deployment(radii=radius_from_uniform(rng.random(N), R))


def radius_from_uniform(u, R: float):
    return R * np.sqrt(u)


def signal_amplitude(r, target: TargetModel, hypothesis: str):
    _check_hypothesis(hypothesis)
    if hypothesis == G0:
        return np.zeros_like(np.asarray(r, dtype=float))[()]
    return target.amplitude(r)[()]


def observe(amplitudes, rng: np.random.Generator, hypothesis: str = G1) -> ObservationVector:
    a = np.asarray(amplitudes, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ParameterError("amplitudes must be finite")
    return ObservationVector(s=a + rng.standard_normal(a.shape), hypothesis=hypothesis)


def p_value(s):
    """Upper standard-normal tail ``Q(s)``; ``ndtr`` keeps full relative accuracy in the tail."""
    return ndtr(-np.asarray(s, dtype=float))[()]


def sample_byzantine_mask(N: int, alpha: float, rng: np.random.Generator) -> ByzantineMask:
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    M = byzantine_count(N, alpha)
    flags = np.zeros(N, dtype=bool)
    flags[rng.choice(N, size=M, replace=False)] = True
    return ByzantineMask(flags=flags, alpha=alpha)


def apply_byzantine(p, mask) -> np.ndarray:
    """q-values: honest sensors keep ``p``, Byzantines report ``1 - p``."""
    p = np.asarray(p, dtype=float)
    flags = mask.flags if isinstance(mask, ByzantineMask) else np.asarray(mask, dtype=bool)
    if p.shape != flags.shape:
        raise ParameterError(f"length mismatch: {p.shape} vs {flags.shape}")
    return np.where(flags, 1.0 - p, p)


# -- batched trials ---------------------------------------------------------


def random_subset_masks(trials: int, N: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """``(trials, N)`` boolean masks, each with exactly ``M`` uniformly placed flags."""
    if M == 0:
        return np.zeros((trials, N), dtype=bool)
    if M == N:
        return np.ones((trials, N), dtype=bool)
    ranks = np.argsort(rng.random((trials, N)), axis=1)
    return ranks < M


def simulate_trials(
    trials: int,
    N: int,
    M: int,
    target: TargetModel,
    hypothesis: str,
    rng: np.random.Generator,
    signal_model: SignalModel | None = None,
):
    """End-to-end trials: deploy, observe, p-values, Byzantine flip.

    Returns ``(q, in_signal)`` where ``in_signal`` marks sensors whose local
    H1 is true (inside the disc under G1; none under G0).
    """
    _check_hypothesis(hypothesis)
    r = radius_from_uniform(rng.random((trials, N)), target.R)
    if hypothesis == G0:
        amp = np.zeros_like(r)
        in_signal = np.zeros(r.shape, dtype=bool)
    elif signal_model is None:
        amp = target.amplitude(r)
        in_signal = r <= target.d0
    else:
        amp = signal_model(r)
        in_signal = amp > 0
    s = amp + rng.standard_normal((trials, N))
    p = ndtr(-s)
    byz = random_subset_masks(trials, N, M, rng)
    return np.where(byz, 1.0 - p, p), in_signal
