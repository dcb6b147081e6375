import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdrfusion.adaptive import (
    AdaptiveController,
    BatchController,
    CountWindow,
    RegionHypothesis,
    adaptive_step,
    build_region_bank,
    conover_ks,
    gate_pmf,
    select_region,
    simulate_adaptive_timeline,
    step_schedule,
)
from fdrfusion.errors import ParameterError
from fdrfusion.fusion import GlobalDetector
from fdrfusion.pmf import CountPmf, pmf_g1_numerical
from fdrfusion.scene import G0, G1


def pmf(p):
    return CountPmf(np.asarray(p, float), G1, "exact")


DET_A = GlobalDetector(0.25, 2, 0.5)
DET_B = GlobalDetector(0.1, 0, 0.0)


# -- KS statistic -------------------------------------------------------------------


def test_conover_hand_example():
    assert conover_ks([3, 3, 3, 3], pmf([0.25, 0.25, 0.25, 0.25])) == pytest.approx(0.75)
    assert conover_ks([0, 1, 2, 3], pmf([0.25, 0.25, 0.25, 0.25])) == 0.0


@settings(max_examples=50)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=40))
def test_conover_zero_against_own_empirical(xs):
    own = pmf(np.bincount(xs, minlength=7) / len(xs))
    assert conover_ks(xs, own) == pytest.approx(0, abs=1e-12)
    assert 0 <= conover_ks(xs, pmf(np.full(7, 1 / 7))) <= 1


def test_conover_rejects_out_of_range():
    with pytest.raises(ParameterError):
        conover_ks([5], pmf([0.5, 0.5]))
    with pytest.raises(ParameterError):
        conover_ks([], pmf([0.5, 0.5]))


# -- region selection -----------------------------------------------------------------


def test_select_region_picks_best_fit():
    low = RegionHypothesis(0.0, pmf([0.1, 0.1, 0.8]), DET_A)
    high = RegionHypothesis(0.5, pmf([0.8, 0.1, 0.1]), DET_B)
    assert select_region([2, 2, 2, 1], [low, high]) == 0
    assert select_region([0, 0, 0, 1], [low, high]) == 1


def test_select_region_ties_to_lower_alpha():
    same = pmf([0.5, 0.5])
    hyps = [RegionHypothesis(0.7, same, DET_B), RegionHypothesis(0.2, same, DET_A)]
    assert select_region([0, 1], hyps) == 1


def test_select_region_self_consistency(table_target):
    pmfs = [pmf_g1_numerical(4, M, 0.1, table_target) for M in (0, 4)]
    hyps = [RegionHypothesis(a, p, DET_A) for a, p in zip((0.0, 1.0), pmfs)]
    rng = np.random.default_rng(77)
    for truth, p in enumerate(pmfs):
        hits = sum(select_region(rng.choice(5, size=1000, p=p.probs), hyps) == truth for _ in range(100))
        assert hits >= 95


# -- adaptive_step -----------------------------------------------------------------


def hyps_two():
    return [RegionHypothesis(0.0, pmf([0.05, 0.05, 0.9]), DET_A),
            RegionHypothesis(0.5, pmf([0.05, 0.9, 0.05]), DET_B)]


def test_adaptive_step_ignores_g0_and_waits_for_full_window():
    w = CountWindow(3)
    cur = DET_A
    cur = adaptive_step(w, hyps_two(), cur, 1, G0)
    assert len(w) == 0 and cur is DET_A
    for _ in range(2):
        cur = adaptive_step(w, hyps_two(), cur, 1, G1)
        assert cur is DET_A
    cur = adaptive_step(w, hyps_two(), cur, 1, G1)
    assert cur is DET_B


def test_window_is_fifo():
    w = CountWindow(2)
    for c in (1, 2, 3):
        w.push(c)
    assert w.samples == [2, 3] and w.full
    w.clear()
    assert len(w) == 0


def test_gate_pmf():
    g = gate_pmf(pmf([0.4, 0.3, 0.2, 0.1]), GlobalDetector(0.1, 1, 0.5))
    assert np.allclose(g.probs, np.array([0, 0.15, 0.2, 0.1]) / 0.45)


# -- controllers ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def bank():
    from fdrfusion.scene import TargetModel

    return build_region_bank(20, TargetModel(5, 5, 10), (0.0, 0.5), (0.25, 0.1), 0.1)


def test_bank_layout(bank):
    assert bank.alphas == [0.0, 0.5]
    assert [d.gamma for d in bank.detectors] == [0.25, 0.1]
    assert bank.ref_cdfs().shape == (2, 2, 21)


@pytest.mark.parametrize("switch_after, flush", [(1, True), (2, True), (1, False)])
def test_batch_matches_scalar(bank, switch_after, flush):
    rng = np.random.default_rng(3)
    E, steps = 6, 300
    batch = BatchController(bank, 10, E, 20, flush_on_switch=flush, switch_after=switch_after)
    scalars = [AdaptiveController(bank, 10, flush_on_switch=flush, switch_after=switch_after) for _ in range(E)]
    for _ in range(steps):
        counts = rng.integers(0, 8, size=(E, 2))
        u = rng.random(E)
        dec = batch.observe(counts, u)
        expect = [c.observe(row, ui) for c, row, ui in zip(scalars, counts, u)]
        assert dec.tolist() == expect
        assert batch.current.tolist() == [c.current for c in scalars]


def test_controller_stays_in_bank(bank):
    ctl = AdaptiveController(bank, 5)
    rng = np.random.default_rng(1)
    for _ in range(200):
        ctl.observe(rng.integers(0, 21, size=2), rng.random())
        assert ctl.detector in bank.detectors


def test_timeline_without_attack_matches_fixed(bank, design_target):
    tl = simulate_adaptive_timeline(20, design_target, step_schedule(0, 0, 0), 60, 30, bank, 4000, seed=2)
    assert np.max(np.abs(tl.pd_adaptive - tl.pd_fixed)) <= 0.02


def test_timeline_reproducible(bank, design_target):
    a = simulate_adaptive_timeline(20, design_target, [0.7] * 20, 20, 5, bank, 3000, seed=8)
    b = simulate_adaptive_timeline(20, design_target, [0.7] * 20, 20, 5, bank, 3000, seed=8, workers=2)
    assert np.array_equal(a.pd_adaptive, b.pd_adaptive)
    assert np.array_equal(a.selected_region, b.selected_region)


def test_schedule():
    s = step_schedule(0.0, 0.7, 30)
    assert s(29) == 0.0 and s(30) == 0.7
