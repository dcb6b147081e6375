"""Benjamini-Hochberg step-up counting and FDR bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def check_gamma(gamma: float) -> float:
    if not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    return float(gamma)


@dataclass(frozen=True)
class FdrAccounting:
    false_alarms: int
    true_detections: int
    correct_rejections: int
    misses: int

    @property
    def delta(self) -> int:
        return self.false_alarms + self.true_detections

    @property
    def realized_fdr(self) -> float:
        d = self.delta
        return self.false_alarms / d if d else 0.0


def bh_count(q, gamma: float):
    """Step-up count and the indices it rejects.

    Returns ``(delta, rejected)`` where ``delta`` is the largest ``i`` with
    ``q_(i) <= i*gamma/N`` (0 if none) and ``rejected`` holds the sensor
    indices of the ``delta`` smallest q-values.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ParameterError("q must be a non-empty 1-d vector")
    if np.any((q < 0) | (q > 1)):
        raise ParameterError("q-values must lie in [0, 1]")
    gamma = check_gamma(gamma)
    N = q.size
    order = np.argsort(q, kind="stable")
    hits = np.nonzero(q[order] <= np.arange(1, N + 1) * gamma / N)[0]
    delta = int(hits[-1]) + 1 if hits.size else 0
    return delta, order[:delta]


def bh_count_batch(q: np.ndarray, gamma: float) -> np.ndarray:
    """Row-wise step-up count for a ``(trials, N)`` array."""
    N = q.shape[1]
    ok = np.sort(q, axis=1) <= np.arange(1, N + 1) * gamma / N
    last = N - np.argmax(ok[:, ::-1], axis=1)
    return np.where(ok.any(axis=1), last, 0)


def bh_rejections_batch(q: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Boolean ``(trials, N)`` mask of rejected sensors given the counts."""
    ranks = np.argsort(np.argsort(q, axis=1, kind="stable"), axis=1)
    return ranks < delta[:, None]


def fdr_accounting(rejections, signal_mask) -> FdrAccounting:
    signal_mask = np.asarray(signal_mask, dtype=bool)
    rejected = np.zeros(signal_mask.size, dtype=bool)
    rejected[np.asarray(rejections, dtype=int)] = True
    S = int(np.count_nonzero(rejected & signal_mask))
    F = int(np.count_nonzero(rejected & ~signal_mask))
    T_miss = int(np.count_nonzero(~rejected & signal_mask))
    W = signal_mask.size - S - F - T_miss
    return FdrAccounting(F, S, W, T_miss)


def fdr_realization(rejections, signal_mask) -> float:
    """F/(F+S) for one trial, 0 when nothing is rejected."""
    return fdr_accounting(rejections, signal_mask).realized_fdr


def fdr_realization_batch(rejected: np.ndarray, signal_mask: np.ndarray) -> np.ndarray:
    total = rejected.sum(axis=1)
    false = (rejected & ~signal_mask).sum(axis=1)
    return np.divide(false, total, out=np.zeros(total.shape), where=total > 0)


def count_identical(q, p_fa: float):
    """Count of q-values at or below a common threshold ``p_fa``."""
    if not 0 < p_fa < 1:
        raise ParameterError(f"p_fa must lie in (0, 1), got {p_fa}")
    q = np.asarray(q, dtype=float)
    return np.count_nonzero(q <= p_fa, axis=-1)[()]
