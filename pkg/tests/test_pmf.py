import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import binom

from fdrfusion.errors import DegenerateModelError, ParameterError
from fdrfusion.pmf import (
    CountPmf,
    asymptotic_params,
    byzantine_q_cdf,
    honest_q_cdf,
    marginal_p_pdf_g1,
    mixture_cdf,
    pmf_g0_asymptotic,
    pmf_g0_exact,
    pmf_g1_asymptotic,
    pmf_g1_exact,
    pmf_g1_gaussian,
    pmf_g1_numerical,
    pmf_simulated,
    signal_p_cdf,
    solve_vstar,
)
from fdrfusion.scene import G0, TargetModel


# -- G0 -----------------------------------------------------------------------


@given(st.integers(1, 60), st.floats(0.001, 0.999))
def test_g0_sums_to_one(N, gamma):
    assert abs(pmf_g0_exact(N, gamma).probs.sum() - 1) < 1e-12


@pytest.mark.parametrize("N", [1, 3, 20, 200])
@pytest.mark.parametrize("gamma", [0.01, 0.25, 0.7])
def test_g0_end_points(N, gamma):
    p = pmf_g0_exact(N, gamma).probs
    assert p[0] == pytest.approx(1 - gamma, rel=1e-12)
    assert p[N] == pytest.approx(gamma**N, rel=1e-10)


def test_g0_two_sensors_by_hand():
    # Delta=1 needs the smaller value in (0, g/2] and the larger above g:
    # P(q_(1) <= g/2) - P(q_(2) <= g) with the Delta=2 event being both <= g.
    g = 0.3
    p = pmf_g0_exact(2, g).probs
    p_two = g**2
    p_none = 1 - g
    assert p[2] == pytest.approx(p_two)
    assert p[1] == pytest.approx(1 - p_none - p_two)
    assert p[1] == pytest.approx(2 * (g / 2) * (1 - g))


def test_g0_matches_uniform_simulation(rng):
    from fdrfusion.bh import bh_count_batch

    counts = bh_count_batch(rng.random((200_000, 6)), 0.2)
    emp = np.bincount(counts, minlength=7) / counts.size
    assert np.max(np.abs(emp - pmf_g0_exact(6, 0.2).probs)) < 0.004


@pytest.mark.parametrize("alpha_M", [0, 5, 20])
def test_g0_histogram_ignores_byzantines(alpha_M, design_target):
    sim = pmf_simulated(20, alpha_M, 0.25, design_target, G0, trials=100_000, seed=3)
    assert sim.total_variation(pmf_g0_exact(20, 0.25)) < 0.01


def test_g0_asymptotic():
    a = pmf_g0_asymptotic(0.25, 200)
    assert abs(a.probs.sum() - 1) < 1e-10
    exact = pmf_g0_exact(500, 0.25)
    assert np.max(np.abs(a.probs[:21] - exact.probs[:21])) < 1e-3


def test_g0_errors():
    with pytest.raises(ParameterError):
        pmf_g0_exact(0, 0.1)
    with pytest.raises(ParameterError):
        pmf_g0_exact(5, 0.0)


# -- marginals ------------------------------------------------------------------


@pytest.mark.parametrize("target", [TargetModel(3, 3, 10), TargetModel(5, 5, 10), TargetModel(15, 3, 10)])
def test_marginal_pdf_integrates_to_one(target):
    total, _ = integrate.quad(lambda u: marginal_p_pdf_g1(u, target), 0, 1, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_marginal_pdf_matches_cdf(table_target):
    for v in (0.01, 0.1, 0.5, 0.9):
        num, _ = integrate.quad(lambda u: marginal_p_pdf_g1(u, table_target), 0, v, limit=200)
        assert num == pytest.approx(float(honest_q_cdf(v, table_target)), abs=1e-7)


def test_byzantine_cdf_is_flip(table_target, rng):
    v = rng.random(50)
    assert np.allclose(byzantine_q_cdf(v, table_target), 1 - honest_q_cdf(1 - v, table_target))


def test_signal_cdf_phi_zero_is_uniform():
    v = np.linspace(0, 1, 11)
    assert np.allclose(signal_p_cdf(v, 0.0), v)


# -- G1 numerical ---------------------------------------------------------------


def g1_enumeration_oracle(N, M, gamma, target):
    """Sum over every assignment of sensors to bins ((k-1)g/N, kg/N] plus 'above'."""
    edges = np.arange(N + 1) * gamma / N
    ph = np.diff(honest_q_cdf(edges, target))
    pb = np.diff(byzantine_q_cdf(edges, target))
    ph = np.append(ph, 1 - ph.sum())
    pb = np.append(pb, 1 - pb.sum())
    out = np.zeros(N + 1)
    for bins in itertools.product(range(N + 1), repeat=N):
        prob = 1.0
        for s, b in enumerate(bins):
            prob *= pb[b] if s < M else ph[b]
        below = [sum(1 for b in bins if b < i) for i in range(1, N + 1)]
        delta = max([i for i in range(1, N + 1) if below[i - 1] >= i], default=0)
        out[delta] += prob
    return out


@pytest.mark.parametrize("M", [0, 1, 2, 4])
def test_numerical_matches_enumeration(M, table_target):
    got = pmf_g1_numerical(4, M, 0.1, table_target).probs
    assert np.allclose(got, g1_enumeration_oracle(4, M, 0.1, table_target), atol=1e-13)


def test_numerical_matches_enumeration_five(design_target):
    got = pmf_g1_numerical(5, 2, 0.3, design_target).probs
    assert np.allclose(got, g1_enumeration_oracle(5, 2, 0.3, design_target), atol=1e-13)


def test_numerical_with_no_signal_is_g0():
    quiet = TargetModel(P0=0.0, d0=5.0, R=10.0)
    for M in (0, 3, 8):
        assert np.allclose(pmf_g1_numerical(8, M, 0.2, quiet).probs, pmf_g0_exact(8, 0.2).probs, atol=1e-13)


def test_numerical_upper_corner_closed_form(table_target):
    # with no Byzantines, Delta = N exactly when all q <= gamma
    p = pmf_g1_numerical(4, 0, 0.1, table_target).probs
    assert p[4] == pytest.approx(float(honest_q_cdf(0.1, table_target)) ** 4, rel=1e-10)


def test_monte_carlo_matches_numerical(table_target):
    for M in (0, 2, 4):
        mc = pmf_g1_exact(4, M, 0.1, table_target, samples=400_000, seed=11)
        assert np.max(np.abs(mc.probs - pmf_g1_numerical(4, M, 0.1, table_target).probs)) < 0.003


def test_end_to_end_matches_numerical(design_target):
    sim = pmf_simulated(20, 5, 0.25, design_target, trials=100_000, seed=5)
    assert sim.total_variation(pmf_g1_numerical(20, 5, 0.25, design_target)) < 0.012


def test_signal_stochastically_dominates_null(design_target):
    g1 = pmf_g1_numerical(20, 0, 0.25, design_target).cdf()
    g0 = pmf_g0_exact(20, 0.25).cdf()
    assert np.all(g1 <= g0 + 1e-12)


# -- asymptotics ----------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.4, 0.8, 1.0])
def test_vstar_is_a_root(alpha, large_target):
    p = solve_vstar(0.0077, alpha, large_target)
    if p.v_star > 0:
        resid = mixture_cdf(p.v_star, alpha, p.phi) - p.beta * p.v_star
        assert abs(resid) < 1e-10
        assert 0 < p.v_star < 1


def test_vstar_zero_without_signal():
    faint = TargetModel(P0=1e-8, d0=3.0, R=10.0)
    assert solve_vstar(0.01, 0.0, faint).v_star == 0.0


def test_vstar_decreases_with_beta(large_target):
    v = [solve_vstar(g, 0.2, large_target).v_star for g in (0.02, 0.01, 0.005, 0.002)]
    assert all(a >= b for a, b in zip(v, v[1:]))


def test_vstar_degenerate():
    with pytest.raises(DegenerateModelError):
        solve_vstar(0.1, 0.0, TargetModel(P0=5, d0=0, R=10))


def test_detection_probs_by_quadrature(large_target):
    p = asymptotic_params(0.0077, 0.4, large_target)
    fh = lambda u: marginal_p_pdf_g1(u, large_target)  # noqa: E731
    pdh, _ = integrate.quad(fh, 1e-300, p.v_star, limit=200, points=[p.v_star / 10])
    pdb, _ = integrate.quad(lambda u: fh(1 - u), 1e-300, p.v_star, limit=200)
    assert p.pdh == pytest.approx(pdh, rel=1e-6)
    assert p.pdb == pytest.approx(pdb, rel=1e-6)
    assert p.pd == pytest.approx(0.4 * p.pdb + 0.6 * p.pdh, rel=1e-12)


@pytest.mark.parametrize("form", ["binomial", "convolution"])
def test_asymptotic_forms_sum_to_one(form, large_target):
    p = asymptotic_params(0.0077, 0.4, large_target)
    pmf = pmf_g1_asymptotic(500, 200, p, form=form)
    assert abs(pmf.probs.sum() - 1) < 1e-10
    assert pmf.N == 500


def test_convolution_mean(large_target):
    p = asymptotic_params(0.0077, 0.4, large_target)
    pmf = pmf_g1_asymptotic(500, 200, p, form="convolution")
    assert pmf.mean() == pytest.approx(200 * p.pdb + 300 * p.pdh, rel=1e-9)


def test_gaussian_approximation():
    g = pmf_g1_gaussian(500, 0.06)
    vals = g.at_integers()
    assert vals.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(vals - binom.pmf(np.arange(501), 500, 0.06))) < 0.005
    assert int(np.argmax(vals)) == 30
    with pytest.raises(DegenerateModelError):
        pmf_g1_gaussian(10, 0.0)


# -- CountPmf -------------------------------------------------------------------


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12).filter(lambda x: sum(x) > 0))
def test_tail_plus_cdf(ws):
    pmf = CountPmf(np.array(ws) / sum(ws), G0, "exact")
    assert np.allclose(pmf.cdf() + pmf.tail(), 1.0)


def test_countpmf_validation_and_csv():
    with pytest.raises(ParameterError):
        CountPmf([0.5, -0.1], G0, "exact")
    with pytest.raises(ParameterError):
        CountPmf([1.0], G0, "made-up")
    text = CountPmf([0.25, 0.75], G0, "exact").to_csv()
    assert text == "i,prob\n0,0.25\n1,0.75\n"
    assert math.isclose(CountPmf([0.25, 0.75], G0, "exact").var(), 0.1875)
