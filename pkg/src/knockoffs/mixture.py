"""Knockoffs for conditionally independent (mixture) models.

X_1..X_p are independent given theta = (theta_1..theta_p) with
X_i | theta ~ f_i(., theta_i) and a product prior gamma = gamma_1 x ... x gamma_p.
Redrawing every coordinate from the same theta gives the knockoff law with
density

    q(y) = prod_i int f_i(y_i, t) f_i(y_{p+i}, t) gamma_i(dt),

so q is symmetric in each pair (y_i, y_{p+i}) and its first block has the
marginal h of X.  With a conjugate prior every factor is closed form and the
knockoff can be drawn exactly: theta | X = x from the posterior, then
X~_i ~ f_i(., theta_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from ._rng import make_rng
from .errors import (
    ConstructionError,
    DegenerateError,
    InvalidInputError,
    UnsupportedModelError,
)
from .swap_group import COUNTING, LEBESGUE, Density2p

REGISTRATION_RTOL = 1e-8
LOG_2PI = np.log(2.0 * np.pi)


def _vec(v, p, name, positive=False):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(p, float(arr))
    if arr.shape != (p,):
        raise InvalidInputError(f"{name} must have length {p}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    if positive and np.any(arr <= 0):
        raise InvalidInputError(f"{name} must be positive")
    return arr


class ConjugateFamily:
    """Per-coordinate conjugate prior/likelihood pairs.

    Subclasses provide closed forms on arrays whose last axis has length p:
    ``log_pair`` (log of int f(y) f(yt) dgamma), ``log_marginal``, posterior
    and likelihood samplers.  For the registration gate they also provide
    scalar ``log_likelihood`` / ``log_prior`` and a prior location/scale so
    the closed forms can be checked against 1-D quadrature.
    """

    name = "family"
    measure = LEBESGUE
    p: int

    def __init__(self, p: int):
        self.p = p

    def register(self):
        """Cross-validate the closed forms against quadrature; raise if they disagree."""
        seen = set()
        for i in range(self.p):
            key = tuple(float(v[i]) for _, v in sorted(vars(self).items()) if isinstance(v, np.ndarray))
            if key in seen:
                continue
            seen.add(key)
            for y, yt in self.registration_points(i):
                closed_pair = np.exp(self._pair_i(i, y, yt))
                quad_pair = quadrature_pair_density(self, i, y, yt)
                closed_h = np.exp(self._marginal_i(i, y))
                quad_h = quadrature_marginal_density(self, i, y)
                for what, a, b in (("pair", closed_pair, quad_pair), ("marginal", closed_h, quad_h)):
                    if not np.isclose(a, b, rtol=REGISTRATION_RTOL, atol=1e-300):
                        raise ConstructionError(
                            f"{self.name}: closed-form {what} density {a!r} disagrees with "
                            f"quadrature {b!r} at coordinate {i + 1}, y={y}, yt={yt}"
                        )
        return self

    def _pair_i(self, i, y, yt):
        y2 = np.zeros(self.p)
        yt2 = np.zeros(self.p)
        y2[i], yt2[i] = y, yt
        return self.log_pair(y2, yt2)[i]

    def _marginal_i(self, i, x):
        x2 = np.zeros(self.p)
        x2[i] = x
        return self.log_marginal(x2)[i]

    # closed forms, vectorized
    def log_pair(self, y, yt):
        raise NotImplementedError

    def log_marginal(self, x):
        raise NotImplementedError

    def sample_prior(self, n, rng):
        raise NotImplementedError

    def sample_posterior(self, x, rng):
        raise NotImplementedError

    def sample_likelihood(self, theta, rng):
        raise NotImplementedError

    def interval_prob(self, lo, hi, theta):
        """Q_i([lo_i, hi_i], theta_i) for every coordinate; shape of ``theta``."""
        raise NotImplementedError

    def likelihood_mean(self, theta):
        raise NotImplementedError

    def mean_theta_free(self) -> np.ndarray:
        return np.zeros(self.p, dtype=bool)

    def marginal_distributions(self) -> list:
        """Frozen scipy laws of each X_i (prior predictive)."""
        raise NotImplementedError

    # scalar pieces for quadrature
    def log_likelihood(self, i, t, theta):
        raise NotImplementedError

    def log_prior(self, i, theta):
        raise NotImplementedError

    def prior_location(self, i):
        """(support_lo, support_hi, center, scale) of gamma_i."""
        raise NotImplementedError

    def registration_points(self, i):
        raise NotImplementedError

    def in_support(self, y):
        y = np.asarray(y, dtype=float)
        if self.measure == COUNTING:
            return (y >= 0) & (y == np.floor(y))
        return np.isfinite(y)

    def describe(self) -> dict:
        raise NotImplementedError


class PoissonGamma(ConjugateFamily):
    """X_i | theta ~ Poisson(theta_i), theta_i ~ Gamma(shape a_i, rate b_i)."""

    name = "poisson-gamma"
    measure = COUNTING

    def __init__(self, a, b, p=None):
        a_arr = np.atleast_1d(np.asarray(a, dtype=float))
        p = p or max(a_arr.size, np.atleast_1d(b).size)
        super().__init__(p)
        self.a = _vec(a, p, "a", positive=True)
        self.b = _vec(b, p, "b", positive=True)
        self.register()

    def log_pair(self, y, yt):
        y, yt = np.asarray(y, dtype=float), np.asarray(yt, dtype=float)
        tot = y + yt
        a, b = self.a, self.b
        with np.errstate(invalid="ignore", divide="ignore"):
            val = (
                a * np.log(b) - special.gammaln(a)
                + special.gammaln(a + tot) - (a + tot) * np.log(b + 2.0)
                - (special.gammaln(y + 1.0) + special.gammaln(yt + 1.0))
            )
        return np.where(self.in_support(y) & self.in_support(yt), val, -np.inf)

    def log_marginal(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.a, self.b
        with np.errstate(invalid="ignore", divide="ignore"):
            val = (
                a * np.log(b) - special.gammaln(a)
                + special.gammaln(a + x) - (a + x) * np.log(b + 1.0)
                - special.gammaln(x + 1.0)
            )
        return np.where(self.in_support(x), val, -np.inf)

    def sample_prior(self, n, rng):
        return rng.gamma(self.a, 1.0 / self.b, size=(n, self.p))

    def sample_posterior(self, x, rng):
        x = np.asarray(x, dtype=float)
        return rng.gamma(self.a + x, 1.0 / (self.b + 1.0))

    def sample_likelihood(self, theta, rng):
        return rng.poisson(theta)

    def interval_prob(self, lo, hi, theta):
        hi_k = np.floor(np.asarray(hi, dtype=float))
        lo_k = np.ceil(np.asarray(lo, dtype=float)) - 1
        return stats.poisson.cdf(hi_k, theta) - stats.poisson.cdf(lo_k, theta)

    def likelihood_mean(self, theta):
        return np.asarray(theta, dtype=float)

    def marginal_distributions(self):
        return [stats.nbinom(a, b / (b + 1.0)) for a, b in zip(self.a, self.b)]

    def log_likelihood(self, i, t, theta):
        return stats.poisson.logpmf(t, theta)

    def log_prior(self, i, theta):
        return stats.gamma.logpdf(theta, self.a[i], scale=1.0 / self.b[i])

    def prior_location(self, i):
        a, b = self.a[i], self.b[i]
        return 0.0, np.inf, max(a - 1.0, 0.0) / b, np.sqrt(a) / b

    def registration_points(self, i):
        return [(0, 0), (1, 0), (3, 2)]

    def describe(self):
        return {"family": self.name, "a": self.a.tolist(), "b": self.b.tolist()}


class NormalNormal(ConjugateFamily):
    """X_i | theta ~ N(theta_i, sigma_i^2), theta_i ~ N(m_i, tau_i^2)."""

    name = "normal-normal"

    def __init__(self, m, tau, sigma, p=None):
        p = p or max(np.atleast_1d(m).size, np.atleast_1d(tau).size, np.atleast_1d(sigma).size)
        super().__init__(p)
        self.m = _vec(m, p, "m")
        self.tau = _vec(tau, p, "tau", positive=True)
        self.sigma = _vec(sigma, p, "sigma", positive=True)
        self.register()

    def log_pair(self, y, yt):
        d1 = np.asarray(y, dtype=float) - self.m
        d2 = np.asarray(yt, dtype=float) - self.m
        v, c = self.tau**2 + self.sigma**2, self.tau**2
        det = v * v - c * c
        quad = (v * (d1 * d1 + d2 * d2) - 2.0 * c * (d1 * d2)) / det
        return -LOG_2PI - 0.5 * np.log(det) - 0.5 * quad

    def log_marginal(self, x):
        return stats.norm.logpdf(x, self.m, np.sqrt(self.tau**2 + self.sigma**2))

    def posterior_params(self, x):
        prec = 1.0 / self.tau**2 + 1.0 / self.sigma**2
        mean = (self.m / self.tau**2 + np.asarray(x, dtype=float) / self.sigma**2) / prec
        return mean, 1.0 / prec

    def sample_prior(self, n, rng):
        return rng.normal(self.m, self.tau, size=(n, self.p))

    def sample_posterior(self, x, rng):
        mean, var = self.posterior_params(x)
        return rng.normal(mean, np.sqrt(var))

    def sample_likelihood(self, theta, rng):
        return rng.normal(theta, self.sigma)

    def interval_prob(self, lo, hi, theta):
        return stats.norm.cdf((hi - theta) / self.sigma) - stats.norm.cdf((lo - theta) / self.sigma)

    def likelihood_mean(self, theta):
        return np.asarray(theta, dtype=float)

    def marginal_distributions(self):
        return [stats.norm(m, np.sqrt(t**2 + s**2)) for m, t, s in zip(self.m, self.tau, self.sigma)]

    def log_likelihood(self, i, t, theta):
        return stats.norm.logpdf(t, theta, self.sigma[i])

    def log_prior(self, i, theta):
        return stats.norm.logpdf(theta, self.m[i], self.tau[i])

    def prior_location(self, i):
        return -np.inf, np.inf, self.m[i], self.tau[i]

    def registration_points(self, i):
        s = np.sqrt(self.tau[i] ** 2 + self.sigma[i] ** 2)
        m = self.m[i]
        return [(m, m), (m + s, m - 0.5 * s), (m - 2 * s, m + 1.5 * s)]

    def describe(self):
        return {"family": self.name, "m": self.m.tolist(), "tau": self.tau.tolist(), "sigma": self.sigma.tolist()}


class NormalGammaScale(ConjugateFamily):
    """X_i | theta ~ N(mu_i, 1/theta_i), precision theta_i ~ Gamma(a_i, rate b_i).

    The likelihood mean does not depend on theta, so X_i and X~_i are
    uncorrelated under every prior.
    """

    name = "normal-gamma-scale"

    def __init__(self, mu, a, b, p=None):
        p = p or max(np.atleast_1d(mu).size, np.atleast_1d(a).size, np.atleast_1d(b).size)
        super().__init__(p)
        self.mu = _vec(mu, p, "mu")
        self.a = _vec(a, p, "a", positive=True)
        self.b = _vec(b, p, "b", positive=True)
        self.register()

    def log_pair(self, y, yt):
        d1 = np.asarray(y, dtype=float) - self.mu
        d2 = np.asarray(yt, dtype=float) - self.mu
        ss = d1 * d1 + d2 * d2
        a, b = self.a, self.b
        return (
            a * np.log(b) - special.gammaln(a) - LOG_2PI
            + special.gammaln(a + 1.0) - (a + 1.0) * np.log(b + ss / 2.0)
        )

    def log_marginal(self, x):
        d = np.asarray(x, dtype=float) - self.mu
        a, b = self.a, self.b
        return (
            a * np.log(b) - special.gammaln(a) - 0.5 * LOG_2PI
            + special.gammaln(a + 0.5) - (a + 0.5) * np.log(b + d * d / 2.0)
        )

    def sample_prior(self, n, rng):
        return rng.gamma(self.a, 1.0 / self.b, size=(n, self.p))

    def sample_posterior(self, x, rng):
        d = np.asarray(x, dtype=float) - self.mu
        return rng.gamma(self.a + 0.5, 1.0 / (self.b + d * d / 2.0))

    def sample_likelihood(self, theta, rng):
        return rng.normal(self.mu, 1.0 / np.sqrt(theta))

    def interval_prob(self, lo, hi, theta):
        sd = 1.0 / np.sqrt(theta)
        return stats.norm.cdf((hi - self.mu) / sd) - stats.norm.cdf((lo - self.mu) / sd)

    def likelihood_mean(self, theta):
        return np.broadcast_to(self.mu, np.shape(theta)).astype(float)

    def mean_theta_free(self):
        return np.ones(self.p, dtype=bool)

    def marginal_distributions(self):
        return [stats.t(2 * a, loc=mu, scale=np.sqrt(b / a)) for mu, a, b in zip(self.mu, self.a, self.b)]

    def log_likelihood(self, i, t, theta):
        return stats.norm.logpdf(t, self.mu[i], 1.0 / np.sqrt(theta))

    def log_prior(self, i, theta):
        return stats.gamma.logpdf(theta, self.a[i], scale=1.0 / self.b[i])

    def prior_location(self, i):
        a, b = self.a[i], self.b[i]
        return 0.0, np.inf, max(a - 1.0, 0.0) / b, np.sqrt(a) / b

    def registration_points(self, i):
        mu = self.mu[i]
        return [(mu, mu), (mu + 1.0, mu - 0.3), (mu - 2.5, mu + 0.7)]

    def describe(self):
        return {"family": self.name, "mu": self.mu.tolist(), "a": self.a.tolist(), "b": self.b.tolist()}


FAMILIES = {
    "poisson-gamma": PoissonGamma,
    "normal-normal": NormalNormal,
    "normal-gamma-scale": NormalGammaScale,
}


def make_family(name: str, **params) -> ConjugateFamily:
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise UnsupportedModelError(f"unknown family {name!r}; known: {sorted(FAMILIES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidInputError(f"{name}: {exc}") from exc


def _integrate_exp(logfn, lo, hi, center, scale):
    """int_lo^hi exp(logfn(t)) dt with the peak located first for stability."""
    probes = center + scale * np.linspace(-30, 30, 241)
    probes = probes[(probes > lo) & (probes < hi)]
    if probes.size == 0:
        probes = np.array([center])
    vals = np.array([logfn(t) for t in probes])
    k = int(np.argmax(vals))
    peak, top = probes[k], vals[k]

    def f(t):
        return np.exp(logfn(t) - top)

    opts = dict(limit=500, epsabs=0.0, epsrel=1e-12)
    left = integrate.quad(f, lo, peak, **opts)[0] if peak > lo else 0.0
    right = integrate.quad(f, peak, hi, **opts)[0] if hi > peak else 0.0
    return np.exp(top) * (left + right)


def quadrature_pair_density(family: ConjugateFamily, i: int, y, yt) -> float:
    """int f_i(y, t) f_i(yt, t) gamma_i(dt) by adaptive quadrature (oracle)."""
    lo, hi, center, scale = family.prior_location(i)

    def logfn(t):
        return family.log_likelihood(i, y, t) + family.log_likelihood(i, yt, t) + family.log_prior(i, t)

    return _integrate_exp(logfn, lo, hi, center, scale)


def quadrature_marginal_density(family: ConjugateFamily, i: int, x) -> float:
    lo, hi, center, scale = family.prior_location(i)

    def logfn(t):
        return family.log_likelihood(i, x, t) + family.log_prior(i, t)

    return _integrate_exp(logfn, lo, hi, center, scale)


def _split(family, y):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != 2 * family.p:
        raise InvalidInputError(f"expected {2 * family.p} coordinates, got shape {y.shape}")
    return y[..., : family.p], y[..., family.p:]


def _check_family(family):
    if not isinstance(family, ConjugateFamily):
        raise UnsupportedModelError(f"not a conjugate family: {type(family).__name__}")


def knockoff_joint_density(family: ConjugateFamily, y) -> np.ndarray:
    """q(y) for y in R^{2p} (or an array of such points)."""
    _check_family(family)
    first, second = _split(family, y)
    return np.exp(np.sum(family.log_pair(first, second), axis=-1))


def marginal_density(family: ConjugateFamily, x) -> np.ndarray:
    """h(x), the density of X."""
    _check_family(family)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != family.p:
        raise InvalidInputError(f"expected {family.p} coordinates")
    return np.exp(np.sum(family.log_marginal(x), axis=-1))


def conditional_knockoff_density(family: ConjugateFamily, x, xt) -> np.ndarray:
    """q(x, xt) / h(x), evaluated in log space."""
    _check_family(family)
    x = np.asarray(x, dtype=float)
    xt = np.asarray(xt, dtype=float)
    log_h = np.sum(family.log_marginal(x), axis=-1)
    if np.any(np.isneginf(log_h)):
        raise DegenerateError("h(x) = 0: cannot condition on a zero-density point")
    log_q = np.sum(family.log_pair(x, xt), axis=-1)
    return np.exp(log_q - log_h)


@dataclass(frozen=True)
class MixtureDensityBundle:
    q: Density2p
    h: Callable


def density_bundle(family: ConjugateFamily) -> MixtureDensityBundle:
    q = Density2p(family.p, lambda y: knockoff_joint_density(family, y), (family.measure,) * (2 * family.p))
    return MixtureDensityBundle(q, lambda x: marginal_density(family, x))


def sample_x(family: ConjugateFamily, n: int, seed=None) -> np.ndarray:
    rng = make_rng(seed)
    return family.sample_likelihood(family.sample_prior(n, rng), rng)


def sample_joint(family: ConjugateFamily, n: int, seed=None) -> np.ndarray:
    """(X, X~) drawn by sharing one prior draw of theta."""
    rng = make_rng(seed)
    theta = family.sample_prior(n, rng)
    return np.hstack([family.sample_likelihood(theta, rng), family.sample_likelihood(theta, rng)])


def sample_knockoff(family: ConjugateFamily, x, seed=None) -> np.ndarray:
    """theta ~ posterior given x, then X~_i ~ f_i(., theta_i); ``x`` may be (n, p)."""
    _check_family(family)
    rng = make_rng(seed)
    x = np.asarray(x)
    if x.shape[-1] != family.p:
        raise InvalidInputError(f"expected {family.p} coordinates")
    if np.any(np.isneginf(family.log_marginal(x))):
        raise DegenerateError("h(x) = 0: x is outside the support of X")
    try:
        theta = family.sample_posterior(x, rng)
    except NotImplementedError:
        raise UnsupportedModelError(f"{family.name}: no exact posterior sampler") from None
    return family.sample_likelihood(theta, rng)


@dataclass
class Estimate:
    value: float
    se: float

    def within(self, target: float, n_se: float = 4.0) -> bool:
        return abs(self.value - target) <= n_se * self.se + 1e-15


def _rectangle(rect, p, name):
    rect = np.asarray(rect, dtype=float)
    if rect.shape != (p, 2):
        raise InvalidInputError(f"{name} must be a list of {p} (lo, hi) intervals")
    if np.any(rect[:, 0] > rect[:, 1]):
        raise InvalidInputError(f"{name} has an interval with lo > hi")
    return rect[:, 0], rect[:, 1]


def dependence_gap(family: ConjugateFamily, A, B, n: int, seed=None) -> Estimate:
    """P(X in A, X~ in B) - P(X in A) P(X~ in B) for product rectangles.

    Equals cov_gamma(Q(A, theta), Q(B, theta)), estimated from n prior draws.
    """
    rng = make_rng(seed)
    a_lo, a_hi = _rectangle(A, family.p, "A")
    b_lo, b_hi = _rectangle(B, family.p, "B")
    theta = family.sample_prior(n, rng)
    qa = np.prod(family.interval_prob(a_lo, a_hi, theta), axis=1)
    qb = np.prod(family.interval_prob(b_lo, b_hi, theta), axis=1)
    prod = (qa - qa.mean()) * (qb - qb.mean())
    return Estimate(float(prod.sum() / (n - 1)), float(prod.std(ddof=1) / np.sqrt(n)))


@dataclass
class CovarianceRow:
    coordinate: int
    estimate: Estimate
    mean_theta_free: bool

    @property
    def passed(self) -> bool | None:
        """Zero covariance is only required when the likelihood mean is theta-free."""
        if not self.mean_theta_free:
            return None
        return self.estimate.within(0.0)


def uncorrelated_check(family: ConjugateFamily, n: int, seed=None) -> list[CovarianceRow]:
    """cov(X_i, X~_i) for each coordinate, from n joint draws."""
    xx = sample_joint(family, n, seed)
    p = family.p
    free = family.mean_theta_free()
    rows = []
    for i in range(p):
        a = xx[:, i] - xx[:, i].mean()
        b = xx[:, p + i] - xx[:, p + i].mean()
        prod = a * b
        est = Estimate(float(prod.sum() / (n - 1)), float(prod.std(ddof=1) / np.sqrt(n)))
        rows.append(CovarianceRow(i + 1, est, bool(free[i])))
    return rows


def bayes_factor(family_1: ConjugateFamily, family_2: ConjugateFamily, x) -> float:
    """h_1(x) / h_2(x) for two priors over the same likelihood."""
    x = np.asarray(x, dtype=float)
    return float(np.exp(np.sum(family_1.log_marginal(x)) - np.sum(family_2.log_marginal(x))))


def truncation_bound(family: ConjugateFamily, x, tail_mass: float = 1e-10, max_k: int = 100000) -> np.ndarray:
    """Per-coordinate K such that P(X~_i > K | X = x) < tail_mass (counting families).

    Uses the exact negative-binomial survival function of the conditional law.
    """
    if not isinstance(family, PoissonGamma):
        raise UnsupportedModelError("truncation bounds are defined for Poisson-Gamma")
    x = np.asarray(x, dtype=float)
    size = family.a + x
    prob = (family.b + 1.0) / (family.b + 2.0)
    ks = np.empty(family.p, dtype=int)
    for i in range(family.p):
        k = int(stats.nbinom.isf(tail_mass, size[i], prob[i]))
        while stats.nbinom.sf(k, size[i], prob[i]) >= tail_mass and k < max_k:
            k += 1
        ks[i] = k
    return ks


def family_from_config(desc: dict) -> ConjugateFamily:
    desc = dict(desc)
    name = desc.pop("family", None)
    if name is None:
        raise InvalidInputError("family descriptor needs a 'family' key")
    return make_family(name, **desc)


def grid_points(values: Sequence, dim: int) -> np.ndarray:
    """Cartesian product of ``values`` in ``dim`` axes, as an (m, dim) array."""
    axes = np.meshgrid(*([np.asarray(values)] * dim), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)
