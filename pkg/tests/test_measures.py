from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixlab import measures as M

import oracles


def random_radial(rng, n, ell):
    return M.RadialMeasure(n, ell, rng.dirichlet(np.ones(n + 1)))


def test_rho_zero_is_point_mass():
    d = M.rho(3, 2, 0).density()
    assert d[0] == 1.0 and d[1:].sum() == 0.0


def test_rho_out_of_range():
    with pytest.raises(ValueError):
        M.rho(3, 2, 4)


def test_pi_examples():
    assert np.allclose(M.pi(3, 2).class_weights, np.array([1, 3, 3, 1]) / 8, atol=0, rtol=1e-15)
    assert np.allclose(M.pi(2, 3).class_weights, np.array([1, 4, 4]) / 9, atol=0, rtol=1e-15)


def test_pi_density_is_uniform():
    for n, ell in [(3, 2), (2, 3), (2, 4)]:
        assert np.allclose(M.pi(n, ell).density(), 1 / ell**n, atol=1e-15)


def test_class_weights_are_binomial():
    # b_k = C(n,k) p^k (1-p)^(n-k) with p = (l-1)/l
    for n, ell in [(5, 2), (6, 3), (80, 3)]:
        p = (ell - 1) / ell
        b = [math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)]
        assert np.allclose(M.pi(n, ell).class_weights, b, rtol=1e-10, atol=1e-300)


def test_measure_validation():
    with pytest.raises(ValueError):
        M.RadialMeasure(2, 2, [0.5, 0.6, -0.1])
    with pytest.raises(ValueError):
        M.RadialMeasure(2, 2, [0.5, 0.4, 0.0])
    with pytest.raises(ValueError):
        M.RadialMeasure(2, 2, [1.0, 0.0])


def test_measure_json_round_trip():
    mu = M.RadialMeasure(3, 3, [0.1, 0.2, 0.3, 0.4])
    back = M.RadialMeasure.from_json(mu.to_json())
    assert np.array_equal(back.class_weights, mu.class_weights) and (back.n, back.ell) == (3, 3)


def test_convolve_identity_and_absorbing():
    rng = np.random.default_rng(1)
    for n, ell in [(3, 2), (4, 3), (5, 4)]:
        mu = random_radial(rng, n, ell)
        assert np.allclose(M.convolve(M.rho(n, ell, 0), mu).class_weights, mu.class_weights, atol=1e-14)
        assert np.allclose(M.convolve(M.pi(n, ell), mu).class_weights, M.pi(n, ell).class_weights, atol=1e-14)


def test_single_bit_flip_twice():
    assert np.allclose(M.convolve(M.rho(1, 2, 1), M.rho(1, 2, 1)).class_weights, [1, 0], atol=1e-15)


def test_convolve_mismatch():
    with pytest.raises(ValueError):
        M.convolve(M.rho(2, 2, 1), M.rho(3, 2, 1))


@pytest.mark.parametrize("n,ell", [(1, 2), (2, 2), (3, 2), (2, 3), (3, 3), (4, 2)])
def test_convolve_matches_brute_force_oracle(n, ell):
    rng = np.random.default_rng(n * 10 + ell)
    for _ in range(5):
        a, b = random_radial(rng, n, ell), random_radial(rng, n, ell)
        brute = oracles.group_convolve(
            oracles.radial_density(a.class_weights, n, ell), oracles.radial_density(b.class_weights, n, ell), n, ell
        )
        expected = oracles.class_weights(brute, n, ell)
        for method in ("krawtchouk", "intersection"):
            assert np.abs(M.convolve(a, b, method=method).class_weights - expected).max() <= 1e-12


def test_convolve_exact_rationals():
    a = [Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)]
    b = [Fraction(0), Fraction(1), Fraction(0)]
    out = M.convolve_exact(a, b, 2, 3)
    assert sum(out) == 1
    brute = oracles.class_weights(
        oracles.group_convolve(oracles.radial_density([float(x) for x in a], 2, 3), oracles.radial_density([0, 1, 0], 2, 3), 2, 3),
        2,
        3,
    )
    assert np.allclose([float(x) for x in out], brute, atol=1e-15)


def test_routes_agree_for_moderate_n():
    rng = np.random.default_rng(3)
    for n, ell in [(12, 2), (20, 2), (10, 3)]:
        a, b = random_radial(rng, n, ell), random_radial(rng, n, ell)
        k = M.convolve(a, b, method="krawtchouk").class_weights
        i = M.convolve(a, b, method="intersection").class_weights
        assert np.abs(k - i).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_convolution_commutes_and_associates(n, ell, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_radial(rng, n, ell) for _ in range(3))
    ab = M.convolve(a, b)
    assert np.abs(ab.class_weights - M.convolve(b, a).class_weights).max() <= 1e-12
    left = M.convolve(ab, c).class_weights
    right = M.convolve(a, M.convolve(b, c)).class_weights
    assert np.abs(left - right).max() <= 1e-12
    assert abs(ab.class_weights.sum() - 1) <= 1e-12 and ab.class_weights.min() >= 0


def test_pi_transform_is_trivial_character():
    for n, ell in [(4, 2), (3, 3), (6, 5)]:
        lam = M.eigenvalues(M.pi(n, ell))
        assert abs(lam[0] - 1) < 1e-14 and np.abs(lam[1:]).max() < 1e-13


def test_krawtchouk_formula():
    K = M.krawtchouk_matrix(3, 3)
    # K_1(w) = (l-1)(n-w) - w
    assert [K[1][w] for w in range(4)] == [2 * (3 - w) - w for w in range(4)]
    assert all(K[0][w] == 1 for w in range(4))


def test_mu_base_examples():
    mu, prm = M.mu_base(1, 2)
    assert prm.t == 1 and abs(prm.theta - 0.5) < 1e-15
    mu4, prm4 = M.mu_base(4, 3)
    assert prm4.t == 4
    assert abs(prm4.theta - 4 * (1 - 2 ** (-0.25))) < 1e-15
    assert abs(prm4.theta - 0.63641433898514) < 1e-13
    for n in (1, 5, 17, 100):
        mu, prm = M.mu_base(n, 3)
        assert abs(mu.class_weights[1] - prm.theta * 2 / 3) < 1e-15
        assert prm.n <= prm.t <= 2 * n and prm.t & (prm.t - 1) == 0 and 0 < prm.theta < 1


def test_power_convolve_basics():
    mu, _ = M.mu_base(5, 2)
    assert np.array_equal(M.power_convolve(mu, 1).class_weights, mu.class_weights)
    assert np.allclose(M.power_convolve(M.rho(5, 2, 0), 8).class_weights, M.rho(5, 2, 0).class_weights)
    with pytest.raises(ValueError):
        M.power_convolve(mu, 3)
    with pytest.warns(UserWarning):
        p3 = M.power_convolve(mu, 3, allow_general=True)
    assert np.allclose(p3.class_weights, M.convolve(M.convolve(mu, mu), mu).class_weights, atol=1e-14)


def test_power_routes_agree():
    mu, prm = M.mu_base(16, 2)
    k = M.power_convolve(mu, prm.t, method="krawtchouk").class_weights
    i = M.power_convolve(mu, prm.t, method="intersection").class_weights
    assert np.abs(k - i).max() < 1e-12


def test_support_law_trivial_cases():
    assert np.array_equal(M.support_size_distribution(4, 2, 0, 0.3), [1, 0, 0, 0, 0])
    law = M.support_size_distribution(4, 3, 1, 1.0)
    assert np.allclose(law, [1 / 3, 2 / 3, 0, 0, 0], atol=1e-15)


def test_occupancy_recursion_matches_stirling_oracle():
    for n, draws in [(5, 3), (6, 10), (8, 8)]:
        exact = oracles.occupancy_exact(n, draws)
        assert M.occupancy_law(n, draws, exact=True) == exact
        assert np.allclose(M.occupancy_law(n, draws), [float(x) for x in exact], atol=1e-15)


def test_support_law_matches_rational_oracle():
    n, ell, t = 4, 3, 4
    theta = Fraction(1, 2)
    exact = oracles.support_law_exact(n, ell, t, theta)
    assert np.allclose(M.support_size_distribution(n, ell, t, 0.5), [float(x) for x in exact], atol=1e-15)


@pytest.mark.parametrize("n", [2, 6, 10])
def test_support_law_matches_power_convolve(n):
    for ell in (2, 3):
        mu, prm = M.mu_base(n, ell)
        law = M.support_size_distribution(n, ell, prm.t, prm.theta)
        assert abs(law.sum() - 1) < 1e-12
        assert np.abs(law - M.power_convolve(mu, prm.t).class_weights).max() < 1e-10


def test_expected_distinct_is_half():
    for n in (1, 3, 10, 37, 100):
        prm = M.convolution_params(n, 2)
        law = M.distinct_count_distribution(n, prm.t, prm.theta)
        assert abs(law @ np.arange(n + 1) - n / 2) < 1e-9 * n
        assert abs(n * (1 - (1 - prm.theta / n) ** prm.t) - n / 2) < 1e-9 * n


def test_monte_carlo_matches_dp():
    n, ell = 12, 3
    prm = M.convolution_params(n, ell)
    rng = np.random.default_rng(5)
    samples = M.sample_power_support(n, ell, prm.t, prm.theta, 100_000, rng)
    emp = np.bincount(samples, minlength=n + 1) / len(samples)
    law = M.support_size_distribution(n, ell, prm.t, prm.theta)
    se = np.sqrt(law * (1 - law) / len(samples))
    assert np.all(np.abs(emp - law) <= 3 * se + 1e-12)


def test_dml_constant_bounded_at_half():
    vals = [M.dml_error_constant(n, 0.5) for n in (8, 16, 32, 64, 128, 256, 512, 1024)]
    assert max(vals) < 0.2
    b = M.binomial_class_weights(20, 0.5)
    assert np.allclose(b, b[::-1])
    with pytest.raises(ValueError):
        M.dml_error_constant(10, 1.0)


def test_dml_error_is_order_one_over_n_when_skewed():
    # at p != 1/2 the Edgeworth skewness term gives sup error ~ c / n with
    # c = |1 - 2p| / (6 p (1 - p)) * max_x |(x^3 - 3x) phi(x)|, so n^{3/2} err grows like sqrt(n)
    p = 2 / 3
    x = np.linspace(0, 4, 400_001)
    c = abs(1 - 2 * p) / (6 * p * (1 - p)) * np.max(np.abs((x**3 - 3 * x) * np.exp(-x * x / 2) / np.sqrt(2 * np.pi)))
    scaled = {n: M.dml_error_constant(n, p) / math.sqrt(n) for n in (256, 1024, 4096)}
    assert abs(scaled[4096] - c) < 0.01
    assert M.dml_error_constant(4096, p) > 2 * M.dml_error_constant(256, p)


def test_intervals():
    I = M.interval_I(64, 0.5)
    assert I.grid == tuple(range(25, 40))
    J = M.interval_J(64, 0.5)
    assert len(I) == len(J) == 15
    assert all(0 <= k <= 64 for k in J.grid)
    # the sizes may differ by one elsewhere
    for n in range(8, 300):
        for p in (0.5, 2 / 3):
            assert abs(len(M.interval_I(n, p)) - len(M.interval_J(n, p))) <= 1
    with pytest.raises(ValueError, match="minimum valid n"):
        M.interval_J(1, 0.999999)


def test_rho_interval_uniform_mixture():
    spec = M.interval_J(16, 0.5)
    mu = M.rho_interval(16, 2, spec)
    assert np.allclose(mu.class_weights[list(spec.grid)], 1 / len(spec))


def test_plateau_constant():
    for ell in (2, 3):
        for n in (8, 16, 32, 64):
            c = M.plateau_constant(n, ell)
            assert 0 < c <= 1
            mu, prm = M.mu_base(n, ell)
            power = M.power_convolve(mu, prm.t).class_weights
            J = M.interval_J(n, prm.p)
            # mu^t >= c rho_J pointwise, classwise
            assert np.all(power[list(J.grid)] >= c / len(J) - 1e-15)


def test_tv_distance_and_quarter_check():
    assert M.tv_distance(M.pi(4, 3), M.pi(4, 3)) == 0
    assert abs(M.tv_distance(M.rho(4, 3, 0), M.pi(4, 3)) - (1 - 3.0**-4)) < 1e-15
    for n in (16, 32, 64, 128):
        nu, q = M.truncated_pi(n, 2)
        assert q >= 0.75
        assert M.tv_distance(nu, M.pi(n, 2)) <= 0.25
        assert M.pointwise_quarter_check(nu)


def test_pi_class_weights_are_binomial_by_enumeration():
    for ell in (2, 3):
        for n in range(1, 7):
            uniform = np.full(ell**n, 1.0 / ell**n)
            by_count = oracles.class_weights(uniform, n, ell)
            b = M.binomial_class_weights(n, (ell - 1) / ell)
            assert np.allclose(by_count, b, atol=1e-15)
            assert np.allclose(M.pi(n, ell).class_weights, b, atol=1e-15)
