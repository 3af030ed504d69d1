"""Exact knockoff sampling when C and every D_i share one Archimedean generator.

Then H = C*(F_1(x_1), ..., F_p(x_{2p})) with C* the 2p-dimensional
Archimedean copula, which has the frailty representation
U_j = psi(E_j / V), E_j iid Exp(1), V with Laplace transform psi.  Given the
first block U = u, the frailty has density proportional to
prior(v) * v^p * exp(-v * sum_i psi^-1(u_i)), and the knockoff block is
psi(E~_i / V) with fresh exponentials.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

from .._rng import make_rng
from ..errors import BoundaryError, InvalidInputError, UnsupportedModelError
from .generators import ArchimedeanGenerator
from .model import CopulaModelSpec

POSTERIOR_GRID_POINTS = 4096


def sample_archimedean(gen: ArchimedeanGenerator, dim: int, n: int, seed=None) -> np.ndarray:
    """Marshall-Olkin draws from psi(sum psi^-1(u_i)) on [0,1]^dim."""
    rng = make_rng(seed)
    try:
        v = gen.sample_frailty(n, rng)
    except NotImplementedError:
        raise UnsupportedModelError(f"{gen.name} has no frailty sampler") from None
    e = rng.exponential(1.0, size=(n, dim))
    return gen.psi(e / v[:, None])


def _require_generator(spec: CopulaModelSpec) -> ArchimedeanGenerator:
    gen = spec.common_generator()
    if gen is None:
        raise UnsupportedModelError(
            "exact frailty sampling needs C and every D_i Archimedean with one shared generator"
        )
    return gen


def _quantiles(spec, u):
    out = np.empty(u.shape)
    for i, m in enumerate(spec.marginals):
        out[:, i] = m.ppf(u[:, i])
    return out


def sample_x(spec: CopulaModelSpec, n: int, seed=None) -> np.ndarray:
    """Draws of X whose copula is C (common-generator case)."""
    gen = _require_generator(spec)
    return _quantiles(spec, sample_archimedean(gen, spec.p, n, seed))


def sample_joint_direct(spec: CopulaModelSpec, n: int, seed=None) -> np.ndarray:
    """Draws of (X, X~) from the 2p-dimensional C* in one Marshall-Olkin pass."""
    gen = _require_generator(spec)
    u = sample_archimedean(gen, 2 * spec.p, n, seed)
    p = spec.p
    return np.hstack([_quantiles(spec, u[:, :p]), _quantiles(spec, u[:, p:])])


def posterior_frailty_grid(gen: ArchimedeanGenerator, s, p: int, rng, n_grid: int = POSTERIOR_GRID_POINTS):
    """Inverse-CDF draw of V | U from its density on a log-spaced grid.

    Needs ``gen.frailty_logpdf``.  The grid spans the bulk of the posterior
    (located from the unnormalized log density on a coarse pass) and the
    CDF is interpolated linearly in log v.
    """
    if gen.frailty_logpdf is None:
        raise UnsupportedModelError(f"{gen.name}: frailty density unavailable for grid posterior")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    coarse = np.linspace(np.log(1e-12), np.log(1e6), n_grid)

    def log_density(log_v, sk):
        # density of log V: prior(v) v^p e^{-v s} times the Jacobian v
        v = np.exp(log_v)
        return gen.frailty_logpdf(v) + (p + 1) * log_v - v * sk

    out = np.empty(s.shape)
    for k, sk in enumerate(s):
        logd = log_density(coarse, sk)
        live = np.flatnonzero(logd >= logd.max() - 50.0)
        lo = coarse[max(live[0] - 1, 0)]
        hi = coarse[min(live[-1] + 1, n_grid - 1)]
        fine = np.linspace(lo, hi, n_grid)
        w = np.exp(log_density(fine, sk) - logd.max())
        cdf = np.concatenate([[0.0], np.cumsum((w[1:] + w[:-1]) / 2)])
        cdf /= cdf[-1]
        out[k] = np.exp(np.interp(rng.random(), cdf, fine))
    return out


def sample_knockoff_frailty(spec: CopulaModelSpec, x, seed=None, method: str = "auto") -> np.ndarray:
    """Draw X~ | X = x for the common-generator Archimedean model.

    ``method`` is "conjugate" (closed-form posterior, Clayton), "grid" (numeric
    posterior from the frailty density) or "auto" (conjugate when available).
    """
    gen = _require_generator(spec)
    rng = make_rng(seed)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    p = spec.p
    if x2.shape[1] != p:
        raise InvalidInputError(f"x must have {p} coordinates")
    u = np.empty(x2.shape)
    for i, m in enumerate(spec.marginals):
        u[:, i] = m.cdf(x2[:, i])
    if np.any(u <= 0) or np.any(u >= 1):
        raise BoundaryError("F_i(x_i) must lie strictly inside (0, 1)")
    s = gen.psi_inv(u).sum(axis=1)

    if method not in ("auto", "conjugate", "grid"):
        raise InvalidInputError(f"unknown method {method!r}")
    v = None
    if method in ("auto", "conjugate"):
        try:
            v = gen.sample_frailty_posterior(s, p, rng)
        except NotImplementedError:
            if method == "conjugate":
                raise UnsupportedModelError(f"{gen.name}: no conjugate frailty posterior") from None
    if v is None:
        v = posterior_frailty_grid(gen, s, p, rng)

    e = rng.exponential(1.0, size=x2.shape)
    out = _quantiles(spec, gen.psi(e / v[:, None]))
    return out[0] if single else out


def kendall_tau_archimedean(gen: ArchimedeanGenerator) -> float:
    """tau = 1 - 4 * int_0^inf t psi'(t)^2 dt, by adaptive quadrature."""

    def dpsi(t):
        d = gen.derivative(t, 1)
        if d is not None:
            return float(d)
        h = 1e-6 * max(t, 1e-3)
        return float((gen.psi(t + h) - gen.psi(max(t - h, 0.0))) / (t + h - max(t - h, 0.0)))

    val, _ = integrate.quad(lambda t: t * dpsi(t) ** 2, 0.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
    return 1.0 - 4.0 * val


def frailty_laplace_check(gen: ArchimedeanGenerator, t_grid, n: int, seed=None):
    """Monte-Carlo E[exp(-tV)] against psi(t); rows of (t, estimate, se, psi)."""
    rng = make_rng(seed)
    v = gen.sample_frailty(n, rng)
    rows = []
    for t in t_grid:
        vals = np.exp(-t * v)
        rows.append((float(t), vals.mean(), vals.std(ddof=1) / np.sqrt(n), float(gen.psi(t))))
    return rows
