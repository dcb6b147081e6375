"""Experiment drivers behind the command-line subcommands.

Each driver returns an :class:`ExperimentResult` whose CSV rendering is a
pure function of the scenario, the seed and the driver arguments.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Sequence

import numpy as np

from . import __version__, engine
from .adaptive import build_region_bank, simulate_adaptive_timeline, step_schedule
from .bh import bh_count_batch, bh_rejections_batch, fdr_realization_batch
from .config import Scenario
from .fusion import (
    DEFAULT_GAMMA_GRID,
    MEASURES,
    GlobalDetector,
    design_detector,
    g1_pmf,
    identical_threshold_pmfs,
    optimize_gamma,
    optimize_gamma_multi,
    roc,
)
from .pmf import (
    asymptotic_params,
    pmf_g0_asymptotic,
    pmf_g0_exact,
    pmf_g1_asymptotic,
    pmf_g1_exact,
    pmf_g1_gaussian,
    pmf_g1_numerical,
    pmf_simulated,
)
from .scene import G0, G1, TargetModel, byzantine_count, simulate_trials

DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_PFA_GRID = tuple(np.round(np.linspace(0.02, 0.5, 25), 4))

TRIALS_TABLES = 500_000
TRIALS_SWEEP = 50_000
TRIALS_PD = 10_000


@dataclass
class ExperimentResult:
    name: str
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# fdrfusion {__version__}\n")
        buf.write(f"# command = {self.name}\n")
        for k, v in self.metadata.items():
            buf.write(f"# {k} = {_fmt(v)}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row width {len(row)} != {len(self.columns)} columns")
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.6g" % v
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return "" if v is None else str(v)


def _meta(scenario: Scenario, trials: int | None, **extra) -> dict[str, Any]:
    meta = scenario.echo()
    meta["trials"] = trials
    meta.update(extra)
    return meta


# -- kernels (module level so worker processes can unpickle them) -----------


def _fdr_kernel(rng, n, *, N, M, gamma, target, hypothesis):
    q, signal = simulate_trials(n, N, M, target, hypothesis, rng)
    delta = bh_count_batch(q, gamma)
    fdr = fdr_realization_batch(bh_rejections_batch(q, delta), signal)
    return np.array([fdr.sum(), float(delta.sum())])


def _pd_kernel(rng, n, *, N, M, target, det: GlobalDetector):
    q, _ = simulate_trials(n, N, M, target, G1, rng)
    delta = bh_count_batch(q, det.gamma)
    return np.array([np.count_nonzero(det.decide(delta, rng.random(n)))])


def simulate_fdr(N, M, gamma, target, hypothesis, trials, seed, workers=1):
    """Mean realised FDR and mean count over end-to-end trials."""
    kernel = partial(_fdr_kernel, N=N, M=M, gamma=gamma, target=target, hypothesis=hypothesis)
    tag = f"fdr/{hypothesis}/{N}/{M}/{gamma!r}/{target!r}"
    total = engine.sum_chunks(
        engine.run_chunks(kernel, trials, seed, tag, chunk=engine.default_chunk(N), workers=workers)
    )
    return total[0] / trials, total[1] / trials


def simulate_pd(N, M, target, det: GlobalDetector, trials, seed, workers=1) -> float:
    """Fraction of G1 trials on which ``det`` declares G1."""
    kernel = partial(_pd_kernel, N=N, M=M, target=target, det=det)
    tag = f"pd/{N}/{M}/{det!r}/{target!r}"
    total = engine.sum_chunks(
        engine.run_chunks(kernel, trials, seed, tag, chunk=engine.default_chunk(N), workers=workers)
    )
    return float(total[0]) / trials


# -- drivers ----------------------------------------------------------------


def run_tables(scenario: Scenario, alphas: Sequence[float] = (0.0, 0.5, 1.0), workers: int = 1) -> ExperimentResult:
    """Count pmf under G1 per alpha: integral by Monte Carlo next to end-to-end simulation."""
    trials = scenario.trials_or(TRIALS_TABLES)
    N, target = scenario.N, scenario.target
    res = ExperimentResult("tables", ["alpha", "i", "numerical", "simulated", "exact"],
                           metadata=_meta(scenario, trials, alphas=list(alphas)))
    for a in alphas:
        M = byzantine_count(N, a)
        num = pmf_g1_exact(N, M, scenario.gamma, target, samples=trials, seed=scenario.seed, workers=workers)
        sim = pmf_simulated(N, M, scenario.gamma, target, G1, trials=trials, seed=scenario.seed, workers=workers)
        exact = g1_pmf(N, M, scenario.gamma, target, source="auto", samples=trials, seed=scenario.seed,
                       workers=workers)
        for i in range(N + 1):
            res.rows.append((a, i, num.probs[i], sim.probs[i], exact.probs[i]))
    return res


def run_fdr_sweep(scenario: Scenario, alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
                  workers: int = 1) -> ExperimentResult:
    trials = scenario.trials_or(TRIALS_SWEEP)
    N, target = scenario.N, scenario.target
    res = ExperimentResult("fdr-sweep", ["alpha", "fdr_g0", "fdr_g1", "mean_delta_g0", "mean_delta_g1"],
                           metadata=_meta(scenario, trials, alphas=list(alpha_grid)))
    for a in alpha_grid:
        M = byzantine_count(N, a)
        f0, d0 = simulate_fdr(N, M, scenario.gamma, target, G0, trials, scenario.seed, workers)
        f1, d1 = simulate_fdr(N, M, scenario.gamma, target, G1, trials, scenario.seed, workers)
        res.rows.append((a, f0, f1, d0, d1))
    return res


def run_design(scenario: Scenario, gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
               measures: Sequence[str] = MEASURES, source: str = "auto", workers: int = 1) -> ExperimentResult:
    """Score every grid gamma under each criterion; ``selected`` flags each criterion's argmax."""
    trials = scenario.trials_or(100_000)
    M = byzantine_count(scenario.N, scenario.alpha)
    searches = optimize_gamma_multi(measures, gamma_grid, scenario.N, M, scenario.target, scenario.p_fa_target,
                                    source=source, samples=trials, seed=scenario.seed, workers=workers)
    res = ExperimentResult("design", ["gamma", "measure", "score", "T", "kappa", "selected"],
                           metadata=_meta(scenario, trials, gammas=sorted(gamma_grid), source=source))
    for m in measures:
        for row in searches[m].rows:
            res.rows.append((row.gamma, m, row.score, row.T, row.kappa, row.gamma == searches[m].best))
    return res


def run_roc(scenario: Scenario, p_fa_grid: Sequence[float] = DEFAULT_PFA_GRID, source: str = "auto",
            workers: int = 1) -> ExperimentResult:
    """ROC of the FDR scheme at the scenario's gamma next to the identical-threshold baseline."""
    trials = scenario.trials_or(100_000)
    N, target = scenario.N, scenario.target
    M = byzantine_count(N, scenario.alpha)
    pmf0 = pmf_g0_exact(N, scenario.gamma)
    pmf1 = g1_pmf(N, M, scenario.gamma, target, source=source, samples=trials, seed=scenario.seed, workers=workers)
    base0, base1 = identical_threshold_pmfs(N, M, scenario.p_fa_identical, target)
    fdr_curve = roc(pmf0, pmf1, p_fa_grid)
    base_curve = roc(base0, base1, p_fa_grid)
    res = ExperimentResult("roc", ["p_fa", "p_d", "p_d_identical"],
                           metadata=_meta(scenario, trials, source=source))
    for a, pd, pdi in zip(fdr_curve.p_fa, fdr_curve.p_d, base_curve.p_d):
        res.rows.append((a, pd, pdi))
    return res


def run_alpha_pd_sweep(scenario: Scenario, alpha_grid: Sequence[float] = tuple(np.round(np.linspace(0, 1, 11), 2)),
                       gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID, source: str = "auto",
                       workers: int = 1) -> ExperimentResult:
    """Simulated P_D against alpha for the scenario's fixed gamma and for gamma re-optimised at each alpha."""
    trials = scenario.trials_or(TRIALS_PD)
    N, target, p_fa = scenario.N, scenario.target, scenario.p_fa_target
    fixed = design_detector(N, scenario.gamma, p_fa)
    res = ExperimentResult("alpha-pd", ["alpha", "gamma_fixed", "pd_fixed", "gamma_adaptive", "pd_adaptive"],
                           metadata=_meta(scenario, trials, gammas=sorted(gamma_grid), source=source))
    for a in alpha_grid:
        M = byzantine_count(N, a)
        best = optimize_gamma("roc", gamma_grid, N, M, target, p_fa, source=source, seed=scenario.seed,
                              workers=workers).best
        adaptive = design_detector(N, best, p_fa)
        pd_fixed = simulate_pd(N, M, target, fixed, trials, scenario.seed, workers)
        pd_adaptive = simulate_pd(N, M, target, adaptive, trials, scenario.seed, workers)
        res.rows.append((a, fixed.gamma, pd_fixed, best, pd_adaptive))
    return res


def run_adaptive(scenario: Scenario, *, region_alphas: Sequence[float] = (0.0, 0.5),
                 region_gammas: Sequence[float] = (0.25, 0.1), alpha_before: float = 0.0,
                 alpha_after: float = 0.7, change_at: int = 30, horizon: int = 150, T0: int = 30,
                 flush_on_switch: bool = True, switch_after: int = 1, source: str = "auto",
                 workers: int = 1) -> ExperimentResult:
    trials = scenario.trials_or(TRIALS_PD)
    N, target = scenario.N, scenario.target
    bank = build_region_bank(N, target, region_alphas, region_gammas, scenario.p_fa_target, source=source,
                             seed=scenario.seed, workers=workers)
    tl = simulate_adaptive_timeline(N, target, step_schedule(alpha_before, alpha_after, change_at), horizon, T0,
                                    bank, trials, flush_on_switch=flush_on_switch, switch_after=switch_after,
                                    seed=scenario.seed, workers=workers)
    meta = _meta(scenario, trials, region_alphas=list(region_alphas), region_gammas=list(region_gammas),
                 alpha_before=alpha_before, alpha_after=alpha_after, change_at=change_at, horizon=horizon,
                 T0=T0, flush_on_switch=flush_on_switch, switch_after=switch_after, source=source)
    res = ExperimentResult("adaptive", ["t", "alpha_true", "pd_adaptive", "pd_fixed", "selected_region"],
                           metadata=meta)
    for row in zip(tl.t.tolist(), tl.alpha, tl.pd_adaptive, tl.pd_fixed, tl.selected_region):
        res.rows.append(row)
    return res


PMF_METHODS = ("exact", "mc", "numerical", "simulated", "asymptotic", "convolution", "gaussian")


def run_pmf(scenario: Scenario, hypothesis: str = G1, method: str = "numerical", i_max: int | None = None,
            workers: int = 1) -> ExperimentResult:
    """Count pmf for one hypothesis and evaluation method.

    Under G0 ``exact`` is the closed form and ``asymptotic`` its large-N
    limit; under G1 ``mc`` integrates by Monte Carlo, ``numerical`` uses the
    bin recursion, ``asymptotic``/``convolution``/``gaussian`` use the
    asymptotic BH threshold.
    """
    trials = scenario.trials_or(TRIALS_TABLES)
    N, target, gamma = scenario.N, scenario.target, scenario.gamma
    M = byzantine_count(N, scenario.alpha)
    seed = scenario.seed
    if method == "simulated":
        probs = pmf_simulated(N, M, gamma, target, hypothesis, trials=trials, seed=seed, workers=workers).probs
    elif hypothesis == G0:
        if method == "exact":
            probs = pmf_g0_exact(N, gamma).probs
        elif method == "asymptotic":
            probs = pmf_g0_asymptotic(gamma, N if i_max is None else i_max).probs
        else:
            raise ValueError(f"method {method!r} is not available under G0")
    elif method in ("exact", "mc"):
        probs = pmf_g1_exact(N, M, gamma, target, samples=trials, seed=seed, workers=workers).probs
    elif method == "numerical":
        probs = pmf_g1_numerical(N, M, gamma, target).probs
    elif method in ("asymptotic", "convolution", "gaussian"):
        params = asymptotic_params(gamma, scenario.alpha, target)
        if method == "gaussian":
            probs = pmf_g1_gaussian(N, params.pd).at_integers()
        else:
            form = "binomial" if method == "asymptotic" else "convolution"
            probs = pmf_g1_asymptotic(N, M, params, form=form).probs
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {PMF_METHODS}")
    res = ExperimentResult("pmf", ["i", "prob"], metadata=_meta(scenario, trials, hypothesis=hypothesis,
                                                                method=method))
    res.rows.extend((i, float(p)) for i, p in enumerate(probs))
    return res
