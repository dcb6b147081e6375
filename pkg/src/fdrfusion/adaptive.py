"""Online estimation of the Byzantine regime and adaptive switching of detector parameters.

The fusion center keeps the counts of its last ``T0`` G1 decisions and
compares their empirical CDF with a reference count pmf per alpha region
(a Kolmogorov-type statistic for discrete references). The best-fitting
region's detector parameters are then put into service.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from . import engine
from .bh import bh_count_batch
from .errors import ParameterError
from .fusion import GlobalDetector, design_detector, g1_pmf
from .pmf import CountPmf
from .scene import G1, TargetModel, byzantine_count, simulate_trials

# D values closer than this are treated as a tie
TIE_TOL = 1e-12


def conover_ks(samples, ref_pmf: CountPmf) -> float:
    """``sup_x |H(x) - S_n(x)|`` over the support ``{0..N}`` of the reference."""
    x = np.asarray(samples, dtype=int)
    if x.size == 0:
        raise ParameterError("need at least one sample")
    N = ref_pmf.N
    if np.any((x < 0) | (x > N)):
        raise ParameterError(f"samples must lie in [0, {N}]")
    emp = np.cumsum(np.bincount(x, minlength=N + 1)) / x.size
    return float(min(1.0, np.max(np.abs(ref_pmf.cdf() - emp))))


@dataclass(frozen=True)
class RegionHypothesis:
    alpha_ref: float
    ref_pmf: CountPmf
    params: GlobalDetector


def _best_fit(d: np.ndarray, alphas: Sequence[float]) -> int:
    order = sorted(range(len(alphas)), key=lambda i: alphas[i])
    lowest = min(d)
    for i in order:
        if d[i] - lowest <= TIE_TOL:
            return i
    raise AssertionError("unreachable")


def select_region(samples, hypotheses: Sequence[RegionHypothesis]) -> int:
    """Index of the hypothesis with the smallest statistic; ties go to the lower alpha."""
    if not hypotheses:
        raise ParameterError("need at least one hypothesis")
    d = np.array([conover_ks(samples, h.ref_pmf) for h in hypotheses])
    return _best_fit(d, [h.alpha_ref for h in hypotheses])


class CountWindow:
    """FIFO of the most recent counts that led to a G1 decision."""

    def __init__(self, T0: int):
        if T0 < 1:
            raise ParameterError("T0 must be >= 1")
        self.T0 = T0
        self._values: deque[int] = deque(maxlen=T0)

    def push(self, count: int) -> None:
        self._values.append(int(count))

    def clear(self) -> None:
        self._values.clear()

    @property
    def full(self) -> bool:
        return len(self._values) == self.T0

    @property
    def samples(self) -> list[int]:
        return list(self._values)

    def __len__(self):
        return len(self._values)


def adaptive_step(
    window: CountWindow,
    hypotheses: Sequence[RegionHypothesis],
    current: GlobalDetector,
    new_count: int,
    global_decision: str,
) -> GlobalDetector:
    """One controller update; params change only once the window is full."""
    if not hypotheses:
        raise ParameterError("need at least one hypothesis")
    if global_decision == G1:
        window.push(new_count)
    if not window.full:
        return current
    return hypotheses[select_region(window.samples, hypotheses)].params


def gate_pmf(pmf: CountPmf, det: GlobalDetector) -> CountPmf:
    """Count pmf restricted to the trials on which ``det`` declares G1."""
    w = np.zeros(pmf.probs.size)
    w[det.T + 1:] = 1.0
    if det.T < w.size:
        w[det.T] = det.kappa
    gated = pmf.probs * w
    if gated.sum() <= 0:
        return pmf
    return CountPmf(gated / gated.sum(), pmf.hypothesis, pmf.provenance)


@dataclass
class RegionBank:
    """Regions sorted by alpha, their detectors, and reference pmfs per detector in use.

    ``refs[j][i]`` is the reference for region ``i`` while detector ``j`` is
    active: the G1 count pmf at ``alphas[i]`` for ``detectors[j].gamma``,
    restricted to G1 decisions when ``gated``.
    """

    alphas: list[float]
    detectors: list[GlobalDetector]
    refs: list[list[CountPmf]]
    gated: bool = True

    @property
    def Q(self) -> int:
        return len(self.alphas)

    def hypotheses(self, current: int) -> list[RegionHypothesis]:
        return [RegionHypothesis(a, self.refs[current][i], self.detectors[i]) for i, a in enumerate(self.alphas)]

    def ref_cdfs(self) -> np.ndarray:
        return np.array([[r.cdf() for r in row] for row in self.refs])


def build_region_bank(
    N: int,
    target: TargetModel,
    alphas: Sequence[float],
    gammas: Sequence[float],
    p_fa: float,
    *,
    gated: bool = True,
    source: str = "auto",
    samples: int = 500_000,
    seed: int = 0,
    workers: int = 1,
) -> RegionBank:
    if len(alphas) != len(gammas) or not alphas:
        raise ParameterError("need one gamma per alpha region")
    order = sorted(range(len(alphas)), key=lambda i: alphas[i])
    alphas = [float(alphas[i]) for i in order]
    gammas = [float(gammas[i]) for i in order]
    detectors = [design_detector(N, g, p_fa) for g in gammas]
    refs = []
    for det in detectors:
        row = []
        for a in alphas:
            pmf = g1_pmf(N, byzantine_count(N, a), det.gamma, target, source=source,
                         samples=samples, seed=seed, workers=workers)
            row.append(gate_pmf(pmf, det) if gated else pmf)
        refs.append(row)
    return RegionBank(alphas, detectors, refs, gated)


class AdaptiveController:
    """Single-episode controller.

    With ``flush_on_switch`` the window restarts after every parameter change,
    since counts recorded under another gamma follow a different pmf.
    ``switch_after`` consecutive identical selections are required to switch.
    """

    def __init__(self, bank: RegionBank, T0: int, initial: int = 0,
                 flush_on_switch: bool = True, switch_after: int = 1):
        self.bank = bank
        self.window = CountWindow(T0)
        self.current = initial
        self.flush_on_switch = flush_on_switch
        self.switch_after = switch_after
        self._pending = initial
        self._streak = 0

    @property
    def detector(self) -> GlobalDetector:
        return self.bank.detectors[self.current]

    def step(self, new_count: int, global_decision: str) -> GlobalDetector:
        if global_decision != G1:
            return self.detector
        self.window.push(new_count)
        if not self.window.full:
            return self.detector
        choice = select_region(self.window.samples, self.bank.hypotheses(self.current))
        if choice == self.current:
            self._streak = 0
            return self.detector
        if choice == self._pending:
            self._streak += 1
        else:
            self._pending, self._streak = choice, 1
        if self._streak >= self.switch_after:
            self.current, self._streak = choice, 0
            if self.flush_on_switch:
                self.window.clear()
        return self.detector

    def observe(self, counts_by_detector: Sequence[int], u: float) -> bool:
        """Decide on one trial and update. ``counts_by_detector[j]`` is the count under detector ``j``'s gamma."""
        count = int(counts_by_detector[self.current])
        decision = bool(self.detector.decide(count, u))
        self.step(count, G1 if decision else "G0")
        return decision


class BatchController:
    """The :class:`AdaptiveController` state machine for many episodes at once."""

    def __init__(self, bank: RegionBank, T0: int, episodes: int, N: int, initial: int = 0,
                 flush_on_switch: bool = True, switch_after: int = 1):
        self.bank = bank
        self.T0 = T0
        self.flush_on_switch = flush_on_switch
        self.switch_after = switch_after
        self.cdfs = bank.ref_cdfs()  # (J, Q, N+1)
        self.T = np.array([d.T for d in bank.detectors])
        self.kappa = np.array([d.kappa for d in bank.detectors])
        alpha_rank = np.argsort(np.argsort(bank.alphas, kind="stable"), kind="stable")
        self._alpha_rank = alpha_rank
        E = episodes
        self.current = np.full(E, initial)
        self.hist = np.zeros((E, N + 1), dtype=np.int64)
        self.buf = np.zeros((E, T0), dtype=np.int64)
        self.pos = np.zeros(E, dtype=np.int64)
        self.length = np.zeros(E, dtype=np.int64)
        self.pending = np.full(E, initial)
        self.streak = np.zeros(E, dtype=np.int64)

    def observe(self, counts_by_detector: np.ndarray, u: np.ndarray) -> np.ndarray:
        E = self.current.size
        rows = np.arange(E)
        cur = self.current
        count = counts_by_detector[rows, cur]
        T, kappa = self.T[cur], self.kappa[cur]
        decision = (count > T) | ((count == T) & (u < kappa))
        self._push(np.nonzero(decision)[0], count)
        full = np.nonzero(decision & (self.length == self.T0))[0]
        if full.size:
            self._select(full)
        return decision

    def _push(self, idx: np.ndarray, count: np.ndarray) -> None:
        if not idx.size:
            return
        full = self.length[idx] == self.T0
        old = self.buf[idx, self.pos[idx]]
        ev = idx[full]
        np.subtract.at(self.hist, (ev, old[full]), 1)
        self.buf[idx, self.pos[idx]] = count[idx]
        np.add.at(self.hist, (idx, count[idx]), 1)
        self.pos[idx] = (self.pos[idx] + 1) % self.T0
        self.length[idx] = np.minimum(self.length[idx] + 1, self.T0)

    def _select(self, idx: np.ndarray) -> None:
        emp = np.cumsum(self.hist[idx], axis=1) / self.T0  # (k, N+1)
        ref = self.cdfs[self.current[idx]]  # (k, Q, N+1)
        d = np.minimum(1.0, np.max(np.abs(ref - emp[:, None, :]), axis=2))
        # ties resolved toward the lowest alpha: scan regions in alpha order
        near = d - d.min(axis=1, keepdims=True) <= TIE_TOL
        rank = np.where(near, self._alpha_rank[None, :], np.iinfo(np.int64).max)
        choice = np.argmin(rank, axis=1)

        cur = self.current[idx]
        stay = choice == cur
        self.streak[idx[stay]] = 0
        move = ~stay
        same = move & (choice == self.pending[idx])
        self.streak[idx[same]] += 1
        fresh = move & ~same
        self.pending[idx[fresh]] = choice[fresh]
        self.streak[idx[fresh]] = 1
        switch = move & (self.streak[idx] >= self.switch_after)
        sw = idx[switch]
        self.current[sw] = choice[switch]
        self.streak[sw] = 0
        if self.flush_on_switch and sw.size:
            self.hist[sw] = 0
            self.length[sw] = 0
            self.pos[sw] = 0


AlphaSchedule = Callable[[int], float]


def step_schedule(before: float, after: float, at: int) -> AlphaSchedule:
    """``before`` for ``t < at``, ``after`` from then on."""

    def schedule(t: int) -> float:
        return before if t < at else after

    return schedule


@dataclass
class Timeline:
    t: np.ndarray
    alpha: np.ndarray
    pd_adaptive: np.ndarray
    pd_fixed: np.ndarray
    selected_region: np.ndarray
    episodes: int = field(default=0)


def _timeline_chunk(rng, n, *, N, target, alphas_t, bank, fixed, T0, flush_on_switch, switch_after):
    horizon = len(alphas_t)
    ctl = BatchController(bank, T0, n, N, flush_on_switch=flush_on_switch, switch_after=switch_after)
    gammas = [d.gamma for d in bank.detectors]
    out = np.zeros((3, horizon))
    for t, a in enumerate(alphas_t):
        q, _ = simulate_trials(n, N, byzantine_count(N, a), target, G1, rng)
        u = rng.random(n)
        counts = np.stack([bh_count_batch(q, g) for g in gammas], axis=1)
        out[2, t] = ctl.current.sum()
        out[0, t] = ctl.observe(counts, u).sum()
        fixed_count = counts[:, 0] if fixed.gamma == gammas[0] else bh_count_batch(q, fixed.gamma)
        out[1, t] = fixed.decide(fixed_count, u).sum()
    return out


def simulate_adaptive_timeline(
    N: int,
    target: TargetModel,
    alpha_schedule: AlphaSchedule | Sequence[float],
    horizon: int,
    T0: int,
    bank: RegionBank,
    trials: int,
    *,
    fixed: GlobalDetector | None = None,
    flush_on_switch: bool = True,
    switch_after: int = 1,
    seed: int = 0,
    workers: int = 1,
) -> Timeline:
    """Per-step global detection probability of adaptive and fixed detectors.

    Every episode starts in the lowest-alpha region; one G1 trial per step is
    shared by both detectors (and their randomisation coin).
    """
    if callable(alpha_schedule):
        alphas_t = [float(alpha_schedule(t)) for t in range(horizon)]
    else:
        alphas_t = [float(a) for a in alpha_schedule][:horizon]
        if len(alphas_t) < horizon:
            raise ParameterError("alpha schedule shorter than the horizon")
    fixed = fixed or bank.detectors[0]
    kernel = partial(_timeline_chunk, N=N, target=target, alphas_t=alphas_t, bank=bank, fixed=fixed,
                     T0=T0, flush_on_switch=flush_on_switch, switch_after=switch_after)
    tag = f"adaptive/{N}/{target!r}/{T0}/{horizon}"
    chunk = 2048
    total = engine.sum_chunks(engine.run_chunks(kernel, trials, seed, tag, chunk=chunk, workers=workers))
    total = total / trials
    return Timeline(np.arange(horizon), np.array(alphas_t), total[0], total[1], total[2], trials)
