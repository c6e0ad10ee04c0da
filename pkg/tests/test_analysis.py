import math

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import quad

from permuteflip import analysis, decode, specfun
from permuteflip.analysis import (
    exact_pf_distribution,
    expected_gumbel_testscore,
    expected_pf_testscore,
    expected_utility,
    matched_tradeoff_margin,
    stability_check,
    tradeoff_curve,
)
from permuteflip.decode import RandomSource, softmax_probs

from oracles import (
    harmonic_partial_sum,
    pf_distribution_bruteforce,
    pf_distribution_polyexact,
    pf_testscore_polyexact,
)


# ---------------------------------------------------------------------------
# exact_pf_distribution
# ---------------------------------------------------------------------------


def test_two_token_closed_form():
    p = exact_pf_distribution([3.0, 0.0], 1.0)
    assert abs(p[0] - (1.0 - 0.5 * math.exp(-3.0))) < 1e-12
    assert abs(p[1] - 0.5 * math.exp(-3.0)) < 1e-12


def test_equal_logits_uniform():
    for n in (2, 5, 16, 256):
        p = exact_pf_distribution(np.zeros(n), 1.0)
        np.testing.assert_allclose(p, np.full(n, 1.0 / n), atol=1e-12)


def test_one_off_model_closed_form():
    n, gap = 5, 2.0
    u = np.array([-gap] + [0.0] * (n - 1))
    p = exact_pf_distribution(u, 1.0)
    p1 = math.exp(-gap) / n
    assert p[0] == pytest.approx(p1, abs=1e-13)
    np.testing.assert_allclose(p[1:], (1.0 - p1) / (n - 1), atol=1e-12)


def test_matches_bruteforce_and_polynomial_oracles():
    rng = np.random.default_rng(17)
    for temperature in (0.5, 1.0, 2.0):
        u = rng.normal(size=5)
        got = exact_pf_distribution(u, temperature)
        np.testing.assert_allclose(got, pf_distribution_bruteforce(u, temperature), atol=1e-12)
        np.testing.assert_allclose(got, pf_distribution_polyexact(u, temperature), atol=1e-12)
    u = rng.normal(size=12)
    np.testing.assert_allclose(
        exact_pf_distribution(u, 0.7), pf_distribution_polyexact(u, 0.7), atol=1e-11
    )


def test_normalization_random_instances():
    rng = np.random.default_rng(2)
    for size in (2, 17, 64, 256):
        for temperature in (0.3, 1.0, 3.0):
            u = rng.normal(size=size) * 2.0
            p = exact_pf_distribution(u, temperature)
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-8


def test_monte_carlo_agreement_small_vocab():
    u = np.array([1.0, 0.3, -0.5])
    exact = exact_pf_distribution(u, 0.7)
    draws = decode.pf_sample_permute_flip(u, 0.7, RandomSource(6), size=300_000)
    emp = np.bincount(draws, minlength=3) / 300_000
    for w in range(3):
        se = math.sqrt(exact[w] * (1 - exact[w]) / 300_000)
        assert abs(emp[w] - exact[w]) <= 3.5 * se


def test_vocabulary_cap():
    with pytest.raises(ValueError):
        exact_pf_distribution(np.zeros(4097), 1.0)


# ---------------------------------------------------------------------------
# expected_utility and the suboptimality ordering
# ---------------------------------------------------------------------------


def test_expected_utility_point_mass():
    u = np.array([0.1, 2.0, -1.0])
    dist = np.array([0.0, 1.0, 0.0])
    assert expected_utility(dist, u) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        expected_utility(dist, u[:2])


def test_never_worse_than_softmax_and_log_vocab_bound():
    rng = np.random.default_rng(11)
    for _ in range(150):
        size = int(rng.choice([2, 8, 32]))
        temperature = float(rng.choice([0.3, 1.0, 3.0]))
        u = rng.normal(size=size)
        pf_util = expected_utility(exact_pf_distribution(u, temperature), u)
        sm_util = expected_utility(softmax_probs(u, temperature), u)
        assert pf_util >= sm_util - 1e-9
        assert u.max() - pf_util <= temperature * math.log(size) + 1e-9


def test_two_token_suboptimality_ratio_limits():
    # the pf/softmax suboptimality ratio is (1 + e^{-gap/T}) / 2 in the
    # two-token model: at least 1/2 everywhere, approaching it as the gap grows
    for gap, temperature in [(1.0, 1.0), (3.0, 1.0), (10.0, 1.0), (3.0, 0.4)]:
        u = np.array([gap, 0.0])
        pf_sub = gap - expected_utility(exact_pf_distribution(u, temperature), u)
        sm_sub = gap - expected_utility(softmax_probs(u, temperature), u)
        ratio = pf_sub / sm_sub
        assert ratio >= 0.5 - 1e-9
    u = np.array([10.0, 0.0])
    pf_sub = 10.0 - expected_utility(exact_pf_distribution(u, 1.0), u)
    sm_sub = 10.0 - expected_utility(softmax_probs(u, 1.0), u)
    assert pf_sub / sm_sub <= 0.501


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------


def test_stability_identical_inputs():
    rep = stability_check([0.3, -0.2, 1.0], [0.3, -0.2, 1.0], 0.7, "pf")
    assert rep.max_abs_log_ratio == pytest.approx(0.0, abs=1e-12)
    assert rep.holds


def test_stability_greedy_unboundedness():
    # an argmax flip makes greedy's importance ratio infinite
    rep = stability_check([0.0, -1.0], [-1.0, 0.0], 1.0, "greedy")
    assert math.isinf(rep.max_abs_log_ratio)
    assert not rep.holds
    # with the argmax unchanged, both point masses coincide: this pair alone
    # cannot witness instability (the probability-realizing flip pair above does)
    rep = stability_check([0.0, -1.0], [1.0, 0.0], 1.0, "greedy")
    assert rep.max_abs_log_ratio == 0.0


def test_stability_topk_topp_unboundedness():
    rep = stability_check([0.0, -1.0, -2.0], [0.0, -2.0, -1.0], 1.0, "topk", k=2)
    assert math.isinf(rep.max_abs_log_ratio)
    rep = stability_check([0.0, -2.0, -3.0], [0.0, -3.0, -2.0], 1.0, "topp", p=0.95)
    assert math.isinf(rep.max_abs_log_ratio)


def test_stability_holds_for_pf_and_softmax():
    rng = np.random.default_rng(23)
    for method in ("pf", "softmax"):
        for _ in range(150):
            size = int(rng.choice([2, 8, 32]))
            temperature = float(rng.choice([0.3, 1.0, 3.0]))
            u = rng.normal(size=size)
            u_tilde = u + rng.uniform(-0.5, 0.5, size=size)
            rep = stability_check(u, u_tilde, temperature, method)
            assert rep.holds, (method, rep)


# ---------------------------------------------------------------------------
# expected test scores
# ---------------------------------------------------------------------------


def test_pf_score_deterministic_step():
    assert expected_pf_testscore([50.0, 0.0, 0.0], 1.0) == pytest.approx(1.0, abs=1e-6)


def test_pf_score_uniform_k_is_harmonic():
    for k in (1, 2, 4, 8):
        assert expected_pf_testscore(np.zeros(k), 1.0) == pytest.approx(
            harmonic_partial_sum(k), abs=1e-10
        )
    assert expected_pf_testscore(np.zeros(4), 1.0) == pytest.approx(25.0 / 12.0, abs=1e-10)


def test_pf_score_two_token_closed_form():
    for gap, temperature in [(3.0, 1.0), (3.0, 0.7), (1.0, 2.0)]:
        a = gap / temperature
        want = 1.0 + 0.5 * math.exp(-a) * (1.0 + a)
        assert expected_pf_testscore([gap, 0.0], temperature) == pytest.approx(want, abs=1e-8)


def test_pf_score_one_off_closed_form():
    n, gap = 5, 2.0
    u = np.array([-gap] + [0.0] * (n - 1))
    want = harmonic_partial_sum(n - 1) + (1.0 + gap) * math.exp(-gap) / n
    assert expected_pf_testscore(u, 1.0) == pytest.approx(want, abs=1e-8)
    assert want == pytest.approx(2.164534, abs=1e-6)


def test_pf_score_matches_polynomial_oracle_and_floor():
    rng = np.random.default_rng(5)
    for _ in range(25):
        u = rng.normal(size=int(rng.integers(2, 9)))
        temperature = float(rng.choice([0.5, 1.0, 2.0]))
        got = expected_pf_testscore(u, temperature)
        assert got == pytest.approx(pf_testscore_polyexact(u, temperature), abs=1e-10)
        assert got >= 1.0 - 1e-9


def test_gumbel_score_deterministic_and_uniform():
    assert expected_gumbel_testscore([1.0]) == pytest.approx(1.0, abs=1e-12)
    assert expected_gumbel_testscore([1.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    for n in (8, 100, 1000):
        got = expected_gumbel_testscore(np.full(n, 1.0 / n))
        assert got == pytest.approx(harmonic_partial_sum(n), abs=1e-10)
        assert got == pytest.approx(math.log(n) + np.euler_gamma, abs=0.01 if n >= 100 else 0.1)


def test_gumbel_score_two_token_closed_form():
    gap, temperature = 3.0, 1.0
    p = softmax_probs(np.array([gap, 0.0]), temperature)
    a = math.exp(gap / temperature)
    want = specfun.harmonic(1.0 + 1.0 / a) / (1.0 + 1.0 / a) + specfun.harmonic(1.0 + a) / (1.0 + a)
    assert expected_gumbel_testscore(p) == pytest.approx(want, abs=1e-12)


def test_gumbel_score_direct_summation_and_entropy_bound():
    mp.mp.dps = 30
    rng = np.random.default_rng(9)
    coeff = math.pi**2 / 6.0 - 1.0
    for _ in range(50):
        w = rng.dirichlet(np.full(int(rng.integers(2, 30)), 0.5))
        got = expected_gumbel_testscore(w)
        direct = math.fsum(
            float(p * mp.harmonic(1.0 / p)) for p in w if p > 1e-300
        )
        assert got == pytest.approx(direct, abs=1e-10)
        assert got >= 1.0 + coeff * specfun.shannon_entropy(w) - 1e-9


# ---------------------------------------------------------------------------
# the two selection/score integrals behind the closed forms
# ---------------------------------------------------------------------------


def test_logarithmic_product_integrals_against_quadrature():
    # int_0^{1/a} -ln x (1 - a x)^{N-1} dx = (ln a + H_N) / (a N); the
    # companion int_0^1 -ln x (1 - x)^{N-2} dx = H_{N-1} / (N - 1).  Both
    # denominators were pinned numerically before being relied on.
    for a, n in [(2.0, 3), (math.e**2, 5), (1.0, 2), (5.0, 10)]:
        got, err = quad(lambda x: -math.log(x) * (1 - a * x) ** (n - 1), 0.0, 1.0 / a)
        want = (math.log(a) + harmonic_partial_sum(n)) / (a * n)
        assert got == pytest.approx(want, abs=max(1e-8, 10 * err))
    for n in (2, 3, 5, 10):
        got, err = quad(lambda x: -math.log(x) * (1 - x) ** (n - 2), 0.0, 1.0)
        want = harmonic_partial_sum(n - 1) / (n - 1)
        assert got == pytest.approx(want, abs=max(1e-8, 10 * err))


# ---------------------------------------------------------------------------
# tradeoff curves
# ---------------------------------------------------------------------------


def test_tradeoff_low_temperature_limit():
    for scheme in ("pf", "gumbel", "gumbel_on_pf"):
        (pt,) = tradeoff_curve(3.0, [0.05], scheme)
        assert pt.suboptimality == pytest.approx(0.0, abs=1e-10)
        assert pt.detectability == pytest.approx(0.0, abs=1e-10)


def test_tradeoff_pf_point_matches_closed_form():
    (pt,) = tradeoff_curve(3.0, [1.0], "pf")
    assert pt.detectability == pytest.approx(0.5 * math.exp(-3.0) * 4.0, abs=1e-10)
    assert pt.suboptimality == pytest.approx(3.0 * 0.5 * math.exp(-3.0), abs=1e-10)


def test_tradeoff_gumbel_on_pf_uses_pf_distribution():
    (pt,) = tradeoff_curve(3.0, [1.0], "gumbel_on_pf")
    dist = exact_pf_distribution(np.array([3.0, 0.0]), 1.0)
    assert pt.detectability == pytest.approx(expected_gumbel_testscore(dist) - 1.0, abs=1e-12)
    assert pt.suboptimality == pytest.approx(3.0 * dist[1], abs=1e-12)


def test_matched_tradeoff_pf_dominates():
    assert matched_tradeoff_margin(3.0) >= -1e-9


def test_tradeoff_validation():
    with pytest.raises(ValueError):
        tradeoff_curve(-1.0, [1.0], "pf")
    with pytest.raises(ValueError):
        tradeoff_curve(3.0, [1.0], "kgw")


def test_single_token_vocabulary_degenerate():
    np.testing.assert_allclose(exact_pf_distribution([7.0], 1.0), [1.0], atol=1e-14)
    assert expected_pf_testscore([7.0], 1.0) == pytest.approx(1.0, abs=1e-12)


def test_largest_supported_vocabulary():
    p = exact_pf_distribution(np.zeros(4096), 1.0)
    np.testing.assert_allclose(p, np.full(4096, 1 / 4096), atol=1e-12)
    rng = np.random.default_rng(41)
    p = exact_pf_distribution(rng.normal(size=4096), 0.8)
    assert abs(p.sum() - 1.0) < 1e-8 and np.all(p >= 0)


def test_engine_hard_cases_vs_high_precision_quadrature():
    mp.mp.dps = 40

    def mp_prob(u, temperature, w):
        um = max(u)
        d = [mp.e ** (mp.mpf(x - um) / temperature) for x in u]
        return d[w] * mp.quad(
            lambda s: mp.fprod(1 - s * di for i, di in enumerate(d) if i != w), [0, 1]
        )

    cases = [
        (np.array([0.0, -1e-9, -2e-9, -1e-8, -3e-9, -5e-9]), 1.0),   # near ties
        (np.array([0.0, -50.0, -100.0, -300.0, -600.0]), 1.0),       # huge spread
        (np.array([0.0, -1e-6, -30.0, -30.0, -30.0, -30.0]), 1.0),   # bimodal
        (np.array([1.0, 0.3, -0.5, 0.2]), 0.05),                     # tiny temperature
    ]
    for u, temperature in cases:
        got = exact_pf_distribution(u, temperature)
        for w in range(u.size):
            want = float(mp_prob(u, temperature, w))
            if want > 1e-300:
                assert abs(got[w] - want) <= 1e-11 * want, (u, temperature, w)
