import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from knockoffs.copula import (
    Archimedean,
    CallableGenerator,
    Clayton,
    Comonotone,
    CopulaModelSpec,
    Countermonotone,
    Gaussian,
    Gumbel,
    Independence,
    Marginal,
    bivariate_normal_cdf,
    check_generator_conditions,
    check_nested_condition,
    conditional_cdf_oracle,
    copula_level,
    evaluate_H,
    frailty_laplace_check,
    kendall_tau_archimedean,
    make_copula,
    make_generator,
    make_marginal,
    rectangle_volume_check,
    sample_joint_direct,
    sample_knockoff_frailty,
    sample_x,
)
from knockoffs.copula.conditions import FAIL, INCONCLUSIVE, PASS, derivative_sign
from knockoffs.copula.frailty import posterior_frailty_grid
from knockoffs.diagnostics import swap_test_exact_pmf
from knockoffs.errors import (
    BoundaryError,
    DegenerateError,
    InvalidInputError,
    NumericIntegrityError,
    ResourceLimitError,
    UnsupportedModelError,
)
from knockoffs.swap_group import SwapSet, apply_swap, enumerate_swaps

W = Countermonotone()


def archimedean_spec(gen, p, marginals=()):
    return CopulaModelSpec(Archimedean(gen, p), tuple(Archimedean(gen, 2) for _ in range(p)), marginals)


def ww_spec(d2=None):
    return CopulaModelSpec(W, (W, d2 or W))


# generators

@pytest.mark.parametrize("gen", [Clayton(0.5), Clayton(2.0), Gumbel(1.0), Gumbel(3.0)])
def test_generator_inverse_roundtrip(gen):
    u = np.linspace(0.01, 0.99, 99)
    assert np.max(np.abs(gen.psi(gen.psi_inv(u)) - u)) < 1e-12
    assert gen.psi(0.0) == 1.0
    assert np.all(np.diff(gen.psi(np.linspace(0, 20, 200))) < 0)


@pytest.mark.parametrize("gen", [Clayton(2.0), Gumbel(2.0)])
def test_frailty_laplace_transform(gen):
    for t, est, se, psi in frailty_laplace_check(gen, [0.1, 0.5, 1.0, 3.0], 200_000, seed=1):
        assert abs(est - psi) <= 4 * se


def test_clayton_closed_form_derivatives_match_mpmath():
    g = Clayton(1.7)
    for k in range(1, 6):
        for t in (0.05, 1.0, 7.0):
            ref = mpmath.diff(lambda s: g.psi_mp(s), t, k)
            assert np.isclose(g.derivative(t, k), float(ref), rtol=1e-10)


def test_generator_validation():
    with pytest.raises(InvalidInputError):
        CallableGenerator(lambda t: max(0.0, 1.0 - t))
    with pytest.raises(InvalidInputError):
        Clayton(-1.0)
    with pytest.raises(InvalidInputError):
        Gumbel(0.5)
    with pytest.raises(InvalidInputError):
        make_generator("frank", 1.0)
    g = CallableGenerator(lambda t: 1.0 / (1.0 + t), name="clayton1")
    assert np.isclose(g.psi_inv(0.25), 3.0, atol=1e-10)


# copulas

finite = st.floats(-6, 6).map(lambda v: round(v, 6))


@settings(max_examples=30)
@given(finite, finite, st.floats(-0.95, 0.95).map(lambda v: round(v, 6)))
def test_bivariate_normal_cdf_against_quadrature(h, k, rho):
    # one-dimensional oracle: P(Z1 <= h, Z2 <= k) = int_{-inf}^h phi(z) Phi((k - rho z)/s) dz
    with mpmath.workdps(30):
        s = mpmath.sqrt(1 - mpmath.mpf(rho) ** 2)
        pts = sorted({-mpmath.inf, min(0.0, h), h})
        ref = mpmath.quad(lambda z: mpmath.npdf(z) * mpmath.ncdf((k - rho * z) / s), pts)
    assert abs(bivariate_normal_cdf(h, k, rho) - float(ref)) < 1e-12


def test_bivariate_normal_special_arguments():
    assert bivariate_normal_cdf(-np.inf, 1.0, 0.3) == 0.0
    assert np.isclose(bivariate_normal_cdf(np.inf, 0.5, 0.3), stats.norm.cdf(0.5))
    assert np.isclose(bivariate_normal_cdf(0.0, 0.0, 0.5), 0.25 + np.arcsin(0.5) / (2 * np.pi))


def test_basic_copulas():
    u = np.array([0.3, 0.6])
    assert np.isclose(Independence().cdf(u), 0.18)
    assert np.isclose(Comonotone().cdf(u), 0.3)
    assert W.cdf(u) == 0.0 and np.isclose(W.cdf([0.7, 0.6]), 0.3)
    with pytest.raises(InvalidInputError):
        Countermonotone(3)
    g = make_copula({"family": "gaussian", "rho": 0.4}, 2)
    assert isinstance(g, Gaussian) and np.isclose(g.corr[0, 1], 0.4)
    with pytest.raises(InvalidInputError):
        make_copula({"family": "nope"}, 2)


def test_archimedean_density_integrates():
    from scipy import integrate

    c = Archimedean(Clayton(2.0), 2)
    val, _ = integrate.dblquad(lambda b, a: float(c.density(np.array([a, b]))), 0, 1, 0, 1, epsabs=1e-8)
    assert abs(val - 1.0) < 1e-5


# the candidate CDF H

def test_evaluate_H_counterexample_value():
    spec = CopulaModelSpec(W, (W, Independence()))
    x = np.array([0.9, 0.9, 0.9, np.inf])
    assert np.isclose(evaluate_H(spec, x), 0.7, atol=1e-15)


def test_evaluate_H_limits():
    gen = Clayton(2.0)
    norm = Marginal.from_scipy(stats.norm())
    spec = archimedean_spec(gen, 2, (norm, norm))
    x = np.array([0.3, -0.4, np.inf, np.inf])
    expected = Archimedean(gen, 2).cdf(stats.norm.cdf([0.3, -0.4]))
    assert np.isclose(evaluate_H(spec, x), expected, atol=1e-12)
    y = np.array([np.inf, np.inf, 0.3, -0.4])
    assert np.isclose(evaluate_H(spec, y), expected, atol=1e-12)
    assert evaluate_H(spec, np.array([-np.inf, 0.0, 0.0, 0.0])) == 0.0


def test_evaluate_H_rejects_bad_marginal():
    bad = Marginal(lambda x: np.full(np.shape(x), 1.5), lambda u: u)
    spec = CopulaModelSpec(Independence(1), (Independence(),), (bad,))
    with pytest.raises(NumericIntegrityError):
        evaluate_H(spec, np.array([0.1, 0.2]))


@pytest.mark.parametrize(
    "spec",
    [
        archimedean_spec(Clayton(2.0), 2),
        CopulaModelSpec(Gaussian(0.3), (Gaussian(0.8), Gaussian(0.8))),
        CopulaModelSpec(Archimedean(Clayton(1.0), 3), (Archimedean(Clayton(2.0), 2),) * 3),
    ],
)
def test_H_swap_symmetric_when_pairs_symmetric(spec):
    u = np.random.default_rng(0).uniform(0.01, 0.99, size=(200, 2 * spec.p))
    base = copula_level(spec, u)
    for S in enumerate_swaps(spec.p):
        assert np.allclose(copula_level(spec, apply_swap(u, S)), base, rtol=0, atol=1e-14)


def test_volume_check_counterexample_and_three_margin_oracle():
    rep = rectangle_volume_check(ww_spec(), 8)
    assert rep.min_volume < 0 and not rep.passed
    lo, hi = np.array(rep.witness_lower), np.array(rep.witness_upper)
    assert np.all(hi > lo)
    # the u4 -> 1 margin is (u1 + u2 + u3 - 2)^+, whose volume on [1/2, 1]^3 is -1/2
    total = 0.0
    for corner in np.ndindex(2, 2, 2):
        u = np.array([0.5 + 0.5 * c for c in corner] + [1.0])
        total += (-1) ** (3 - sum(corner)) * copula_level(ww_spec(), u)
    assert np.isclose(total, -0.5, atol=1e-15)


def test_volume_check_valid_specs():
    assert rectangle_volume_check(CopulaModelSpec(Gaussian(0.3), (Gaussian(0.8),) * 2), 8).passed
    rep = rectangle_volume_check(CopulaModelSpec(Independence(2), (Independence(),) * 2), 8)
    assert rep.passed and np.isclose(rep.min_volume, 8.0**-4)
    assert rectangle_volume_check(archimedean_spec(Clayton(2.0), 2), 8).passed


def test_volume_check_finds_invalid_gaussian_nesting():
    # equal inner and outer correlation is not a valid 4-dim CDF
    rep = rectangle_volume_check(CopulaModelSpec(Gaussian(0.5), (Gaussian(0.5),) * 2), 8)
    assert not rep.passed


def test_volume_guard_and_report():
    with pytest.raises(ResourceLimitError):
        rectangle_volume_check(archimedean_spec(Clayton(1.0), 3), 20)
    d = rectangle_volume_check(ww_spec(), 4).to_dict()
    assert d["pass"] is False and d["statistic"] < 0 and "witness_cell" in d


def test_conditional_oracle_independence():
    spec = CopulaModelSpec(Independence(1), (Independence(),))
    for x2 in (0.0, 0.2, 0.77, 1.0):
        assert np.isclose(conditional_cdf_oracle(spec, np.array([0.4, x2])), x2, atol=1e-9)
    with pytest.raises(DegenerateError):
        conditional_cdf_oracle(spec, np.array([0.0, 0.5]))
    with pytest.raises(ResourceLimitError):
        conditional_cdf_oracle(archimedean_spec(Clayton(1.0), 4), np.full(8, 0.5))


def test_conditional_oracle_monotone():
    spec = archimedean_spec(Clayton(2.0), 2)
    grid = np.linspace(0.05, 0.95, 7)
    vals = [conditional_cdf_oracle(spec, np.array([0.3, 0.6, t, 0.5])) for t in grid]
    assert np.all(np.diff(vals) >= -1e-9)


def test_conditional_oracle_matches_frailty_sampler():
    spec = archimedean_spec(Clayton(2.0), 2)
    x = np.array([0.3, 0.6])
    draws = sample_knockoff_frailty(spec, np.tile(x, (100_000, 1)), seed=4)
    for t in [(0.2, 0.3), (0.5, 0.5), (0.8, 0.4)]:
        emp = np.mean(np.all(draws <= np.array(t), axis=1))
        assert abs(emp - conditional_cdf_oracle(spec, np.concatenate([x, t]))) < 0.01


# derivative-sign conditions

def test_generator_conditions():
    assert check_generator_conditions(Clayton(2.0), 8).status == PASS
    assert check_generator_conditions(Clayton(2.0), 8).method == "closed-form"
    assert check_generator_conditions(Clayton(2.0), 6, method="numeric").status == PASS
    g = check_generator_conditions(Gumbel(2.0), 8)
    assert g.status == PASS and g.method == "finite-difference-mp"


def test_generator_conditions_flags_non_cm():
    # 1/(1+t^2) is decreasing into (0, 1] but its second derivative changes sign
    g = CallableGenerator(lambda t: 1.0 / (1.0 + t * t), mp_fn=lambda t: 1 / (1 + t * t), name="cauchy")
    assert check_generator_conditions(g, 3).status == FAIL


def test_derivative_sign_float_path():
    sign, est = derivative_sign(lambda t: np.exp(-t), 1.0, 2, use_mp=False)
    assert sign == 1 and np.isclose(est, np.exp(-1.0), rtol=1e-6)
    sign, _ = derivative_sign(lambda t: 3.0 * t, 1.0, 2, use_mp=False)
    assert sign in (0, None)


def test_nested_conditions():
    same = check_nested_condition(Clayton(2.0), Clayton(2.0))
    assert same.status == PASS
    ok = check_nested_condition(Clayton(1.0), Clayton(2.0), order=8)
    assert ok.status == PASS and ok.family_rule["satisfied"]
    bad = check_nested_condition(Clayton(2.0), Clayton(1.0), order=8)
    assert bad.status == FAIL and not bad.family_rule["satisfied"]
    assert bad.composition_check.violations
    assert check_nested_condition(Gumbel(1.5), Gumbel(3.0), order=6).status in (PASS, INCONCLUSIVE)
    assert check_nested_condition(Gumbel(3.0), Gumbel(1.5), order=6).status == FAIL


# frailty sampling

def test_kendall_tau_oracle():
    for theta in (0.5, 2.0, 5.0):
        assert np.isclose(kendall_tau_archimedean(Clayton(theta)), theta / (theta + 2), atol=1e-8)
    assert np.isclose(kendall_tau_archimedean(Gumbel(2.5)), 1 - 1 / 2.5, atol=1e-7)


def test_knockoff_tau_and_small_theta():
    spec = archimedean_spec(Clayton(2.0), 3)
    x = sample_x(spec, 30_000, seed=1)
    xt = sample_knockoff_frailty(spec, x, seed=2)
    tau = stats.kendalltau(xt[:, 0], xt[:, 1]).statistic
    assert abs(tau - kendall_tau_archimedean(Clayton(2.0))) < 0.02
    near = archimedean_spec(Clayton(1e-3), 2)
    x = sample_x(near, 100_000, seed=3)
    xt = sample_knockoff_frailty(near, x, seed=4)
    assert abs(np.corrcoef(x[:, 0], xt[:, 0])[0, 1]) < 0.02


def test_grid_posterior_matches_conjugate():
    gen = Clayton(2.0)
    rng = np.random.default_rng(0)
    s = np.full(1500, 1.7)
    grid = posterior_frailty_grid(gen, s, 3, rng)
    exact = stats.gamma(1 / 2.0 + 3, scale=1 / (1 + 1.7))
    assert stats.kstest(grid, exact.cdf).pvalue > 0.01
    spec = archimedean_spec(gen, 2)
    x = sample_x(spec, 4000, seed=5)
    a = sample_knockoff_frailty(spec, x, seed=6, method="grid")
    b = sample_knockoff_frailty(spec, x, seed=7, method="conjugate")
    assert stats.ks_2samp(a[:, 0], b[:, 0]).pvalue > 0.01


def test_frailty_errors():
    spec = archimedean_spec(Clayton(2.0), 2)
    with pytest.raises(BoundaryError):
        sample_knockoff_frailty(spec, np.array([0.0, 0.5]), seed=1)
    gum = archimedean_spec(Gumbel(2.0), 2)
    with pytest.raises(UnsupportedModelError):
        sample_knockoff_frailty(gum, np.array([0.3, 0.5]), seed=1)
    mixed = CopulaModelSpec(Archimedean(Clayton(1.0), 2), (Archimedean(Clayton(2.0), 2),) * 2)
    with pytest.raises(UnsupportedModelError):
        sample_knockoff_frailty(mixed, np.array([0.3, 0.5]), seed=1)
    with pytest.raises(InvalidInputError):
        sample_knockoff_frailty(spec, np.array([0.3, 0.5]), method="mcmc")


def test_frailty_with_marginals_and_reproducible():
    spec = archimedean_spec(Clayton(1.5), 2, (make_marginal({"dist": "expon"}), make_marginal({"dist": "norm"})))
    x = sample_x(spec, 5000, seed=1)
    a = sample_knockoff_frailty(spec, x, seed=9)
    assert np.array_equal(a, sample_knockoff_frailty(spec, x, seed=9))
    assert stats.kstest(a[:, 0], "expon").pvalue > 0.001
    assert stats.kstest(a[:, 1], "norm").pvalue > 0.001


def test_frailty_cell_pmf_swap_symmetry():
    spec = archimedean_spec(Clayton(2.0), 2)
    n = 400_000
    x = sample_x(spec, n, seed=11)
    z = np.hstack([x, sample_knockoff_frailty(spec, x, seed=12)])
    cells = np.minimum((z * 4).astype(int), 3)
    counts = np.zeros((4,) * 4)
    np.add.at(counts, tuple(cells.T), 1)
    phat = counts / n
    for S in enumerate_swaps(2)[1:]:
        other = np.transpose(phat, S.permutation())
        se = np.sqrt((phat + other) / n)
        assert np.all(np.abs(phat - other) <= 4 * se + 1e-12)
    # the exact-pmf checker on the raw counts reports nonzero sampling noise only
    dev = swap_test_exact_pmf(lambda y: phat[tuple(y[..., j].astype(int) for j in range(4))], 2, range(4))
    assert dev["max_deviation"] < 0.005


def test_frailty_joint_cdf_dkw():
    spec = archimedean_spec(Clayton(2.0), 2)
    n = 100_000
    x = sample_x(spec, n, seed=21)
    z = np.hstack([x, sample_knockoff_frailty(spec, x, seed=22)])
    cells = np.minimum((z * 8).astype(int), 7)
    counts = np.zeros((8,) * 4)
    np.add.at(counts, tuple(cells.T), 1)
    emp = counts
    for ax in range(4):
        emp = np.cumsum(emp, axis=ax)
    emp /= n
    ticks = np.arange(1, 9) / 8
    grid = np.stack(np.meshgrid(*([ticks] * 4), indexing="ij"), axis=-1)
    dkw = np.sqrt(np.log(2 / 0.05) / (2 * n))
    assert np.max(np.abs(emp - copula_level(spec, grid))) <= 3 * dkw


def test_direct_and_conditional_routes_agree():
    spec = archimedean_spec(Clayton(2.0), 2)
    direct = sample_joint_direct(spec, 50_000, seed=1)
    x = sample_x(spec, 50_000, seed=2)
    cond = np.hstack([x, sample_knockoff_frailty(spec, x, seed=3)])
    for f in (lambda z: z[:, 0] * z[:, 2], lambda z: np.max(z, axis=1), lambda z: z[:, 1] - z[:, 3]):
        assert stats.ks_2samp(f(direct), f(cond)).pvalue > 0.001
    assert SwapSet(2, {1}).p == 2
