"""Randomized count-threshold fusion rule, ROC curves and the choice of gamma."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binom

from .bh import check_gamma
from .errors import DegenerateModelError, ParameterError
from .pmf import (
    CountPmf,
    asymptotic_params,
    byzantine_q_cdf,
    honest_q_cdf,
    numerical_cost,
    pmf_g0_exact,
    pmf_g1_asymptotic,
    pmf_g1_exact,
    pmf_g1_numerical,
)
from .scene import G0, G1, TargetModel

DEFAULT_GAMMA_GRID = (0.005, 0.008, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)
MEASURES = ("roc", "deflection", "kl", "bhattacharyya", "ks")

# tail sums of an exact pmf carry ~1e-16 rounding; targets this close count as met
_TAIL_SLACK = 1e-12
# pmf sources beyond this many DP flops fall back to Monte Carlo
NUMERICAL_BUDGET = 2e9


@dataclass(frozen=True)
class GlobalDetector:
    """Declare G1 when ``Delta > T``; when ``Delta == T`` declare G1 with probability ``kappa``."""

    gamma: float
    T: int
    kappa: float

    def __post_init__(self):
        if self.T < 0:
            raise ParameterError(f"T must be >= 0, got {self.T}")
        if not 0 <= self.kappa <= 1:
            raise ParameterError(f"kappa must lie in [0, 1], got {self.kappa}")

    def decide(self, delta, u):
        """Vectorised decision given counts and uniforms ``u`` for the coin flip."""
        delta = np.asarray(delta)
        return (delta > self.T) | ((delta == self.T) & (np.asarray(u) < self.kappa))


@dataclass
class RocCurve:
    p_fa: np.ndarray
    p_d: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.p_fa.tolist(), self.p_d.tolist()))


def _check_support(pmf0: CountPmf, pmf1: CountPmf) -> None:
    if pmf0.probs.size != pmf1.probs.size:
        raise ParameterError("pmfs must share the support {0..N}")


def design_global_threshold(pmf0: CountPmf, p_fa_target: float, gamma: float = float("nan")) -> GlobalDetector:
    """Smallest ``T`` with ``P(Delta > T; G0) <= target``, then ``kappa`` to hit it exactly."""
    if not 0 < p_fa_target < 1:
        raise ParameterError(f"p_fa_target must lie in (0, 1), got {p_fa_target}")
    tail = pmf0.tail()
    T = int(np.argmax(tail <= p_fa_target + _TAIL_SLACK))
    at = pmf0.probs[T]
    kappa = (p_fa_target - tail[T]) / at if at > 0 else 0.0
    return GlobalDetector(gamma=gamma, T=T, kappa=float(min(max(kappa, 0.0), 1.0)))


def global_pd(pmf1: CountPmf, det: GlobalDetector) -> float:
    if det.T > pmf1.N:
        raise ParameterError(f"T={det.T} exceeds N={pmf1.N}")
    return float(pmf1.tail()[det.T] + det.kappa * pmf1.probs[det.T])


def global_pfa(pmf0: CountPmf, det: GlobalDetector) -> float:
    return global_pd(pmf0, det)


def roc(pmf0: CountPmf, pmf1: CountPmf, p_fa_grid: Sequence[float]) -> RocCurve:
    _check_support(pmf0, pmf1)
    grid = np.asarray(sorted(p_fa_grid), dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ParameterError("P_FA grid must lie inside (0, 1)")
    pd = np.array([global_pd(pmf1, design_global_threshold(pmf0, a)) for a in grid])
    return RocCurve(grid, pd)


# -- distance measures ------------------------------------------------------


def deflection(pmf0: CountPmf, pmf1: CountPmf) -> float:
    """Squared mean shift normalised by the G0 variance."""
    _check_support(pmf0, pmf1)
    v0 = pmf0.var()
    if v0 <= 0:
        raise DegenerateModelError("G0 count variance is zero")
    return (pmf1.mean() - pmf0.mean()) ** 2 / v0


def kl_divergence(pmf0: CountPmf, pmf1: CountPmf) -> float:
    """``sum pmf1 log(pmf1/pmf0)``; infinite if pmf1 puts mass where pmf0 has none."""
    _check_support(pmf0, pmf1)
    p0, p1 = pmf0.probs, pmf1.probs
    live = p1 > 0
    if np.any(p0[live] == 0):
        return math.inf
    return max(0.0, float(np.sum(p1[live] * np.log(p1[live] / p0[live]))))


def bhattacharyya(pmf0: CountPmf, pmf1: CountPmf) -> float:
    _check_support(pmf0, pmf1)
    bc = float(np.sum(np.sqrt(pmf0.probs * pmf1.probs)))
    if bc <= 0:
        return math.inf
    return max(0.0, -math.log(min(bc, 1.0)))


def ks_distance(pmf0: CountPmf, pmf1: CountPmf) -> float:
    """Largest gap between the two CDFs over the common support."""
    _check_support(pmf0, pmf1)
    return float(min(1.0, np.max(np.abs(pmf0.cdf() - pmf1.cdf()))))


DISTANCES = {
    "deflection": deflection,
    "kl": kl_divergence,
    "bhattacharyya": bhattacharyya,
    "ks": ks_distance,
}


# -- identical-threshold baseline -------------------------------------------


def identical_threshold_pmfs(N: int, M: int, p_fa: float, target: TargetModel) -> tuple[CountPmf, CountPmf]:
    """Count pmfs when every sensor compares its q-value with the same ``p_fa``.

    Under G0 every q-value is uniform, so the count is Binomial(N, p_fa); under
    G1 honest and Byzantine sensors form two binomial populations.
    """
    if not 0 < p_fa < 1:
        raise ParameterError(f"p_fa must lie in (0, 1), got {p_fa}")
    i = np.arange(N + 1)
    pmf0 = CountPmf(binom.pmf(i, N, p_fa), G0, "exact")
    ph = float(honest_q_cdf(p_fa, target))
    pb = float(byzantine_q_cdf(p_fa, target))
    probs = np.convolve(binom.pmf(np.arange(N - M + 1), N - M, ph), binom.pmf(np.arange(M + 1), M, pb))
    return pmf0, CountPmf(probs, G1, "exact")


# -- gamma optimisation -----------------------------------------------------


def g1_pmf(
    N: int,
    M: int,
    gamma: float,
    target: TargetModel,
    *,
    source: str = "auto",
    samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> CountPmf:
    """G1 count pmf from the requested source.

    ``"auto"`` uses the deterministic bin recursion when it is affordable and
    Monte Carlo otherwise.
    """
    if source == "auto":
        source = "numerical" if numerical_cost(N, M) <= NUMERICAL_BUDGET else "mc"
    if source == "numerical":
        return pmf_g1_numerical(N, M, gamma, target)
    if source == "mc":
        return pmf_g1_exact(N, M, gamma, target, samples=samples, seed=seed, workers=workers)
    if source == "asymptotic":
        return pmf_g1_asymptotic(N, M, asymptotic_params(gamma, M / N, target))
    raise ParameterError(f"unknown pmf source {source!r}")


@dataclass
class GammaScore:
    gamma: float
    measure: str
    score: float
    T: int
    kappa: float


@dataclass
class GammaSearch:
    measure: str
    best: float
    rows: list[GammaScore] = field(default_factory=list)


def score_gamma(measure: str, pmf0: CountPmf, pmf1: CountPmf, gamma: float, p_fa: float | None) -> GammaScore:
    det = design_global_threshold(pmf0, p_fa, gamma) if p_fa is not None else None
    if measure == "roc":
        if det is None:
            raise ParameterError("the ROC criterion needs a P_FA target")
        score = global_pd(pmf1, det)
    elif measure in DISTANCES:
        score = DISTANCES[measure](pmf0, pmf1)
    else:
        raise ParameterError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    T, kappa = (det.T, det.kappa) if det is not None else (-1, float("nan"))
    return GammaScore(gamma, measure, float(score), T, kappa)


def argmax_gamma(rows: Sequence[GammaScore]) -> float:
    """Grid argmax; the first (smallest) gamma wins ties."""
    best = None
    for row in sorted(rows, key=lambda r: r.gamma):
        if best is None or row.score > best.score:
            best = row
    return best.gamma


def optimize_gamma(
    measure: str,
    gamma_grid: Sequence[float],
    N: int,
    M: int,
    target: TargetModel,
    p_fa: float | None = None,
    *,
    source: str = "auto",
    samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> GammaSearch:
    """Brute-force search of ``gamma`` over a grid for one criterion."""
    return optimize_gamma_multi([measure], gamma_grid, N, M, target, p_fa,
                                source=source, samples=samples, seed=seed, workers=workers)[measure]


def optimize_gamma_multi(
    measures: Sequence[str],
    gamma_grid: Sequence[float],
    N: int,
    M: int,
    target: TargetModel,
    p_fa: float | None = None,
    *,
    source: str = "auto",
    samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, GammaSearch]:
    if len(gamma_grid) == 0:
        raise ParameterError("gamma grid is empty")
    rows: dict[str, list[GammaScore]] = {m: [] for m in measures}
    for gamma in sorted(gamma_grid):
        check_gamma(gamma)
        pmf0 = pmf_g0_exact(N, gamma)
        pmf1 = g1_pmf(N, M, gamma, target, source=source, samples=samples, seed=seed, workers=workers)
        for m in measures:
            rows[m].append(score_gamma(m, pmf0, pmf1, gamma, p_fa))
    return {m: GammaSearch(m, argmax_gamma(r), r) for m, r in rows.items()}


def design_detector(N: int, gamma: float, p_fa: float) -> GlobalDetector:
    return design_global_threshold(pmf_g0_exact(N, gamma), p_fa, gamma)
