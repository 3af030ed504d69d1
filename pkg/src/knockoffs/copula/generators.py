"""Archimedean generators psi: [0, inf) -> (0, 1].

Each generator supplies psi and its inverse in numpy, an mpmath version of
psi used for high-precision numerical derivatives, and (when the family has
one) a sampler for the frailty V whose Laplace transform is psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np
from scipy import optimize, special, stats

from ..errors import InvalidInputError


class ArchimedeanGenerator:
    name = "generator"
    theta = float("nan")

    def psi(self, t):
        raise NotImplementedError

    def psi_inv(self, u):
        raise NotImplementedError

    def psi_mp(self, t):
        """psi evaluated in mpmath arithmetic (for finite differences)."""
        return None

    def psi_inv_mp(self, u):
        return None

    def derivative(self, t, k: int):
        """Closed-form k-th derivative, or None if unavailable."""
        return None

    def derivative_sign(self, k: int):
        """Known sign of psi^(k) on (0, inf): +1, -1, or None if not known."""
        return None

    def psi_inv_derivative(self, u):
        """d/du psi^-1(u) = 1 / psi'(psi^-1(u))."""
        d1 = self.derivative(self.psi_inv(u), 1)
        if d1 is None:
            raise NotImplementedError
        return 1.0 / d1

    # frailty law, V with E[exp(-tV)] = psi(t)
    has_frailty = False
    frailty_logpdf = None

    def sample_frailty(self, size, rng):
        raise NotImplementedError

    def sample_frailty_posterior(self, s, p: int, rng):
        """Draw V | U = u given s = sum_i psi^-1(u_i) over p coordinates."""
        raise NotImplementedError

    def params(self) -> dict:
        return {"name": self.name, "theta": self.theta}

    def same_as(self, other) -> bool:
        return type(self) is type(other) and self.theta == other.theta

    def __repr__(self):
        return f"{type(self).__name__}(theta={self.theta!r})"


@dataclass(frozen=True, repr=False)
class Clayton(ArchimedeanGenerator):
    """psi(t) = (1 + t)^(-1/theta), theta > 0; frailty Gamma(1/theta, 1)."""

    theta: float
    name = "clayton"
    has_frailty = True

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidInputError(f"Clayton needs theta > 0, got {self.theta}")

    def psi(self, t):
        return np.power(1.0 + np.asarray(t, dtype=float), -1.0 / self.theta)

    def psi_inv(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return np.expm1(-self.theta * np.log(u))

    def psi_mp(self, t):
        return (1 + t) ** (-1 / mpmath.mpf(self.theta))

    def psi_inv_mp(self, u):
        return u ** (-mpmath.mpf(self.theta)) - 1

    def derivative(self, t, k):
        a = 1.0 / self.theta
        coef = (-1.0) ** k * math.exp(special.gammaln(a + k) - special.gammaln(a))
        return coef * np.power(1.0 + np.asarray(t, dtype=float), -a - k)

    def derivative_sign(self, k):
        return (-1) ** k

    def frailty_logpdf(self, v):
        return stats.gamma.logpdf(v, 1.0 / self.theta)

    def sample_frailty(self, size, rng):
        return rng.gamma(1.0 / self.theta, 1.0, size=size)

    def sample_frailty_posterior(self, s, p, rng):
        s = np.asarray(s, dtype=float)
        return rng.gamma(1.0 / self.theta + p, 1.0 / (1.0 + s))


@dataclass(frozen=True, repr=False)
class Gumbel(ArchimedeanGenerator):
    """psi(t) = exp(-t^(1/theta)), theta >= 1; frailty positive stable."""

    theta: float
    name = "gumbel"
    has_frailty = True

    def __post_init__(self):
        if not self.theta >= 1:
            raise InvalidInputError(f"Gumbel needs theta >= 1, got {self.theta}")

    def psi(self, t):
        return np.exp(-np.power(np.asarray(t, dtype=float), 1.0 / self.theta))

    def psi_inv(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return np.power(-np.log(u), self.theta)

    def psi_mp(self, t):
        return mpmath.exp(-(t ** (1 / mpmath.mpf(self.theta))))

    def psi_inv_mp(self, u):
        return (-mpmath.log(u)) ** mpmath.mpf(self.theta)

    def derivative(self, t, k):
        if k != 1:
            return None
        t = np.asarray(t, dtype=float)
        a = 1.0 / self.theta
        return -a * np.power(t, a - 1.0) * self.psi(t)

    def sample_frailty(self, size, rng):
        # Kanter's representation of the positive stable law with
        # Laplace transform exp(-t^alpha).
        alpha = 1.0 / self.theta
        if alpha == 1.0:
            return np.ones(size)
        u = rng.uniform(0.0, np.pi, size=size)
        w = rng.exponential(1.0, size=size)
        left = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
        right = (np.sin((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
        return left * right


@dataclass(frozen=True, repr=False)
class CallableGenerator(ArchimedeanGenerator):
    """A user-supplied generator; validated on construction.

    ``psi_inv`` is optional and falls back to root finding.  Without a
    ``psi_mp`` the derivative checks run in double precision.
    """

    fn: Callable
    inverse: Callable | None = None
    mp_fn: Callable | None = None
    mp_inverse: Callable | None = None
    name: str = "custom"
    theta: float = float("nan")
    validation_grid: tuple = field(default=tuple(np.concatenate([[0.0], np.logspace(-3, 2, 51)])))

    def __post_init__(self):
        validate_generator(self, np.asarray(self.validation_grid))

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        return np.vectorize(lambda s: float(self.fn(s)), otypes=[float])(t)

    def psi_inv(self, u):
        if self.inverse is not None:
            return np.asarray(self.inverse(u), dtype=float)

        def one(v):
            if v >= 1.0:
                return 0.0
            if v <= 0.0:
                return np.inf
            hi = 1.0
            while self.fn(hi) > v:
                hi *= 2.0
                if hi > 1e300:
                    return np.inf
            return optimize.brentq(lambda s: self.fn(s) - v, 0.0, hi, xtol=1e-15, rtol=1e-15)

        return np.vectorize(one, otypes=[float])(np.asarray(u, dtype=float))

    def psi_mp(self, t):
        return None if self.mp_fn is None else self.mp_fn(t)

    def psi_inv_mp(self, u):
        return None if self.mp_inverse is None else self.mp_inverse(u)

    def same_as(self, other):
        return self is other


def validate_generator(gen: ArchimedeanGenerator, t_grid) -> None:
    """Reject functions that are not strictly decreasing maps into (0, 1]."""
    t = np.unique(np.concatenate([[0.0], np.asarray(t_grid, dtype=float)]))
    if np.any(t < 0):
        raise InvalidInputError("generator grid must be nonnegative")
    vals = np.asarray(gen.psi(t), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("psi returned non-finite values")
    if abs(vals[0] - 1.0) > 1e-12:
        raise InvalidInputError(f"psi(0) must be 1, got {vals[0]!r}")
    if np.any(vals <= 0) or np.any(vals > 1):
        raise InvalidInputError("psi must map [0, inf) into (0, 1]")
    if np.any(np.diff(vals) >= 0):
        raise InvalidInputError("psi must be strictly decreasing")


GENERATORS = {"clayton": Clayton, "gumbel": Gumbel}


def make_generator(name: str, theta: float) -> ArchimedeanGenerator:
    try:
        cls = GENERATORS[name.lower()]
    except KeyError:
        raise InvalidInputError(f"unknown generator {name!r}; known: {sorted(GENERATORS)}")
    return cls(float(theta))
