"""Distribution of the BH count statistic under G0 and G1.

Exact forms, a Monte Carlo evaluator of the ordered-statistic integral, a
deterministic bin-recursion evaluator of the same integral for small networks,
and the large-N approximations built on the asymptotic BH threshold.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, xlogy
from scipy.stats import binom

from . import engine
from .bh import bh_count_batch, check_gamma
from .errors import DegenerateModelError, ParameterError
from .scene import G0, G1, TargetModel, random_subset_masks, simulate_trials

PROVENANCES = (
    "exact",
    "monte-carlo",
    "asymptotic-binomial",
    "asymptotic-gaussian",
    "asymptotic-poisson-like",
)


@dataclass(frozen=True)
class CountPmf:
    probs: np.ndarray
    hypothesis: str
    provenance: str

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ParameterError("probs must be a non-empty vector")
        if np.any(probs < 0):
            raise ParameterError("probabilities must be non-negative")
        if self.provenance not in PROVENANCES:
            raise ParameterError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "probs", probs)

    @property
    def N(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def tail(self) -> np.ndarray:
        """``P(Delta > i)`` for each ``i``, summed from the right."""
        rev = np.cumsum(self.probs[::-1])[::-1]
        return np.append(rev[1:], 0.0)

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def var(self) -> float:
        m = self.mean()
        return float(((self.support - m) ** 2) @ self.probs)

    def total_variation(self, other: "CountPmf") -> float:
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        buf.write("i,prob\n")
        for i, p in enumerate(self.probs):
            buf.write(f"{i},{p:.6g}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def q_tail(x):
    return ndtr(-np.asarray(x, dtype=float))[()]


def q_inv(u):
    """Inverse upper tail, ``Q^{-1}(u) = -Phi^{-1}(u)``."""
    return (-ndtri(np.asarray(u, dtype=float)))[()]


# -- G0 ---------------------------------------------------------------------


def pmf_g0_exact(N: int, gamma: float) -> CountPmf:
    """Closed-form count pmf under G0 (independent of the Byzantine fraction)."""
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    gamma = check_gamma(gamma)
    i = np.arange(N + 1)
    x = i * gamma / N
    log_p = (
        gammaln(N + 1)
        - gammaln(i + 1)
        - gammaln(N - i + 1)
        + math.log1p(-gamma)
        + xlogy(i, x)
        + (N - i - 1) * np.log1p(-x)
    )
    return CountPmf(np.exp(log_p), G0, "exact")


def pmf_g0_asymptotic(gamma: float, i_max: int) -> CountPmf:
    """Large-N limit ``(i^i/i!)(1-gamma) gamma^i e^{-i gamma}``, truncated at ``i_max``."""
    gamma = check_gamma(gamma)
    if i_max < 0:
        raise ParameterError("i_max must be >= 0")
    i = np.arange(i_max + 1)
    log_p = xlogy(i, i) - gammaln(i + 1) + math.log1p(-gamma) + i * math.log(gamma) - i * gamma
    return CountPmf(np.exp(log_p), G0, "asymptotic-poisson-like")


# -- G1: marginals ----------------------------------------------------------


def marginal_p_pdf_g1(u, target: TargetModel):
    """Density of one honest sensor's p-value under G1, averaged over its position."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ParameterError("u must lie in the open interval (0, 1)")
    s = target.signal_fraction
    return (s * np.exp(-target.P0 / 2 + target.phi * q_inv(u)) + (1 - s))[()]


def signal_p_cdf(v, phi: float):
    """CDF of a signal-bearing sensor's p-value, ``Q(Q^{-1}(v) - phi)``."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    return q_tail(q_inv(v) - phi)


def honest_q_cdf(v, target: TargetModel):
    s = target.signal_fraction
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    return ((1 - s) * v + s * signal_p_cdf(v, target.phi))[()]


def byzantine_q_cdf(v, target: TargetModel):
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    return (1.0 - honest_q_cdf(1.0 - v, target))[()]


def sample_marginal_q(trials: int, N: int, M: int, target: TargetModel, rng) -> np.ndarray:
    """q-vectors drawn straight from the position-averaged marginals.

    Each sensor is signal-bearing with probability ``d0^2/R^2``; its p-value is
    then ``Q(phi + z)``, otherwise uniform. ``M`` uniformly chosen sensors flip.
    """
    shape = (trials, N)
    signal = rng.random(shape) < target.signal_fraction
    p = np.where(signal, q_tail(target.phi + rng.standard_normal(shape)), rng.random(shape))
    byz = random_subset_masks(trials, N, M, rng)
    return np.where(byz, 1.0 - p, p)


def _check_counts(N: int, M: int) -> None:
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    if not 0 <= M <= N:
        raise ParameterError(f"M must lie in [0, N], got M={M}, N={N}")


def _marginal_hist(rng, n, *, N, M, gamma, target):
    q = sample_marginal_q(n, N, M, target, rng)
    return np.bincount(bh_count_batch(q, gamma), minlength=N + 1)


def _simulated_hist(rng, n, *, N, M, gamma, target, hypothesis):
    q, _ = simulate_trials(n, N, M, target, hypothesis, rng)
    return np.bincount(bh_count_batch(q, gamma), minlength=N + 1)


def pmf_g1_exact(
    N: int,
    M: int,
    gamma: float,
    target: TargetModel,
    *,
    samples: int = 500_000,
    seed: int = 0,
    workers: int = 1,
) -> CountPmf:
    """Monte Carlo evaluation of the subset-averaged ordered-statistic integral.

    Draws q-vectors from the marginal densities with a fresh random Byzantine
    subset per sample and histograms the step-up count; the event ``Delta = i``
    is exactly the integration region of the integral.
    """
    _check_counts(N, M)
    gamma = check_gamma(gamma)
    kernel = partial(_marginal_hist, N=N, M=M, gamma=gamma, target=target)
    tag = f"pmf_g1_exact/{N}/{M}/{gamma!r}/{target!r}"
    hist = engine.sum_chunks(
        engine.run_chunks(kernel, samples, seed, tag, chunk=engine.default_chunk(N), workers=workers)
    )
    return CountPmf(hist / samples, G1, "monte-carlo")


def pmf_simulated(
    N: int,
    M: int,
    gamma: float,
    target: TargetModel,
    hypothesis: str = G1,
    *,
    trials: int = 500_000,
    seed: int = 0,
    workers: int = 1,
) -> CountPmf:
    """Count histogram from end-to-end trials (deploy, observe, flip, step-up)."""
    _check_counts(N, M)
    gamma = check_gamma(gamma)
    kernel = partial(_simulated_hist, N=N, M=M, gamma=gamma, target=target, hypothesis=hypothesis)
    tag = f"simulate/{hypothesis}/{N}/{M}/{gamma!r}/{target!r}"
    hist = engine.sum_chunks(
        engine.run_chunks(kernel, trials, seed, tag, chunk=engine.default_chunk(N), workers=workers)
    )
    return CountPmf(hist / trials, hypothesis, "monte-carlo")


def _placement_matrix(n: int, p: float) -> np.ndarray:
    """``T[a, b]`` = P(b of n items placed | a already placed), each remaining one with prob ``p``."""
    a = np.arange(n + 1)[:, None]
    b = np.arange(n + 1)[None, :]
    return binom.pmf(b - a, n - a, p)


def numerical_cost(N: int, M: int) -> float:
    H = N - M
    return float(N) * (N + 1) * ((H + 1) ** 2 * (M + 1) + (H + 1) * (M + 1) ** 2)


def pmf_g1_numerical(N: int, M: int, gamma: float, target: TargetModel) -> CountPmf:
    """Deterministic evaluation of the ordered-statistic integral for fixed ``M``.

    The count depends on the q-vector only through how many values fall in
    each bin ``((k-1)gamma/N, k gamma/N]``. Bins are swept left to right,
    tracking how many honest and Byzantine sensors have been placed and the
    last index ``j`` whose cumulative count reached ``j``. Cost grows like
    ``N^2 (N-M)^2 M``, so this is meant for networks of a few dozen sensors.
    """
    _check_counts(N, M)
    gamma = check_gamma(gamma)
    H = N - M
    edges = np.arange(N + 1) * gamma / N
    Fh = honest_q_cdf(edges, target)
    Fb = byzantine_q_cdf(edges, target)
    P = np.zeros((H + 1, M + 1, N + 1))
    P[0, 0, 0] = 1.0
    placed = np.add.outer(np.arange(H + 1), np.arange(M + 1))
    for k in range(N):
        ph = (Fh[k + 1] - Fh[k]) / (1 - Fh[k]) if Fh[k] < 1 else 0.0
        pb = (Fb[k + 1] - Fb[k]) / (1 - Fb[k]) if Fb[k] < 1 else 0.0
        P = np.einsum("ab,acl->bcl", _placement_matrix(H, min(ph, 1.0)), P)
        P = np.einsum("cd,bcl->bdl", _placement_matrix(M, min(pb, 1.0)), P)
        reached = placed >= k + 1
        P[reached, k + 1] = P[reached].sum(axis=-1)
        P[reached, : k + 1] = 0.0
    probs = P.sum(axis=(0, 1))
    return CountPmf(np.clip(probs, 0.0, None), G1, "exact")


# -- G1: asymptotics --------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticParams:
    """Large-N BH threshold and per-sensor detection probabilities."""

    A0: float
    beta: float
    v_star: float
    alpha: float
    phi: float
    pdh: float | None = None
    pdb: float | None = None
    pd: float | None = None


def mixture_cdf(v, alpha: float, phi: float):
    """``alpha F_B(v) + (1 - alpha) F_H(v)`` for signal-bearing sensors."""
    v = np.asarray(v, dtype=float)
    fh = signal_p_cdf(v, phi)
    fb = 1.0 - signal_p_cdf(1.0 - v, phi)
    return (alpha * fb + (1 - alpha) * fh)[()]


_VSTAR_GRID = np.unique(np.concatenate([np.geomspace(1e-300, 1e-3, 600), np.linspace(1e-3, 1.0, 4000)]))


def solve_vstar(gamma: float, alpha: float, target: TargetModel, tol: float = 1e-10) -> AsymptoticParams:
    """Asymptotic BH p-value threshold: largest root of ``F(v) = beta v`` in (0, 1).

    Returns ``v_star = 0`` when ``F(v) < beta v`` everywhere on (0, 1).
    """
    gamma = check_gamma(gamma)
    if not 0 <= alpha <= 1:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    A0 = 1.0 - target.signal_fraction
    if A0 >= 1.0:
        raise DegenerateModelError("d0 = 0: no sensor can observe the target")
    beta = (1.0 / gamma - A0) / (1.0 - A0)
    phi = target.phi

    def g(v):
        return mixture_cdf(v, alpha, phi) - beta * v

    vals = g(_VSTAR_GRID)
    pos = np.nonzero(vals > 0)[0]
    v_star = 0.0
    if pos.size:
        j = pos[-1]
        lo, hi = _VSTAR_GRID[j], _VSTAR_GRID[j + 1]
        # bisection: g(lo) > 0 >= g(hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm > 0:
                lo = mid
            else:
                hi = mid
            if abs(gm) < tol or hi - lo <= 4 * np.finfo(float).eps * hi:
                break
        v_star = float(mid if abs(gm) < tol else (lo if abs(g(lo)) < abs(g(hi)) else hi))
    return AsymptoticParams(A0=A0, beta=beta, v_star=v_star, alpha=alpha, phi=phi)


def avg_detection_probs(params: AsymptoticParams) -> AsymptoticParams:
    """Fill in honest, Byzantine and mixture probabilities of reporting a detection."""
    v, A0, phi = params.v_star, params.A0, params.phi
    if v <= 0:
        pdh = pdb = 0.0
    else:
        pdh = (1 - A0) * float(signal_p_cdf(v, phi)) + A0 * v
        pdb = (1 - A0) * (1.0 - float(signal_p_cdf(1.0 - v, phi))) + A0 * v
    pd = params.alpha * pdb + (1 - params.alpha) * pdh
    return dataclasses.replace(params, pdh=pdh, pdb=pdb, pd=pd)


def asymptotic_params(gamma: float, alpha: float, target: TargetModel) -> AsymptoticParams:
    return avg_detection_probs(solve_vstar(gamma, alpha, target))


def pmf_g1_asymptotic(N: int, M: int, params: AsymptoticParams, form: str = "binomial") -> CountPmf:
    """Binomial approximations of the G1 count pmf.

    ``form="binomial"`` uses the mixture probability ``pd`` for every sensor;
    ``form="convolution"`` treats the ``M`` Byzantines and ``N - M`` honest
    sensors as two binomial populations.
    """
    _check_counts(N, M)
    if params.pd is None:
        params = avg_detection_probs(params)
    i = np.arange(N + 1)
    if form == "binomial":
        probs = binom.pmf(i, N, params.pd)
    elif form == "convolution":
        probs = np.convolve(
            binom.pmf(np.arange(M + 1), M, params.pdb),
            binom.pmf(np.arange(N - M + 1), N - M, params.pdh),
        )
    else:
        raise ParameterError(f"unknown form {form!r}")
    return CountPmf(probs, G1, "asymptotic-binomial")


@dataclass(frozen=True)
class GaussianCountApprox:
    """Normal density with the binomial's mean and variance."""

    N: int
    pd: float

    @property
    def mean(self) -> float:
        return self.N * self.pd

    @property
    def var(self) -> float:
        return self.N * self.pd * (1 - self.pd)

    def __call__(self, i):
        i = np.asarray(i, dtype=float)
        return (np.exp(-((i - self.mean) ** 2) / (2 * self.var)) / math.sqrt(2 * math.pi * self.var))[()]

    def at_integers(self) -> np.ndarray:
        return self(np.arange(self.N + 1))


def pmf_g1_gaussian(N: int, pd: float) -> GaussianCountApprox:
    if not 0 < pd < 1:
        raise DegenerateModelError(f"pd must lie in (0, 1) for a non-degenerate variance, got {pd}")
    return GaussianCountApprox(N, pd)
