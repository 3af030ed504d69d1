"""Copula distribution functions on [0, 1]^d, vectorized over leading axes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..errors import InvalidInputError
from .generators import ArchimedeanGenerator


class Copula:
    dim: int = 2
    symmetric = True

    def cdf(self, u) -> np.ndarray:
        raise NotImplementedError

    def density(self, u):
        """Copula density when available in closed form, else None."""
        return None

    def describe(self) -> dict:
        raise NotImplementedError

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise InvalidInputError(f"expected {self.dim} coordinates, got shape {u.shape}")
        return u


@dataclass(frozen=True)
class Independence(Copula):
    dim: int = 2

    def cdf(self, u):
        return np.prod(self._check(u), axis=-1)

    def density(self, u):
        return np.ones(np.shape(u)[:-1])

    def describe(self):
        return {"family": "independence", "dim": self.dim}


@dataclass(frozen=True)
class Comonotone(Copula):
    """Upper Frechet bound M(u) = min(u)."""

    dim: int = 2

    def cdf(self, u):
        return np.min(self._check(u), axis=-1)

    def describe(self):
        return {"family": "comonotone", "dim": self.dim}


@dataclass(frozen=True)
class Countermonotone(Copula):
    """Lower Frechet bound W(u1, u2) = (u1 + u2 - 1)^+ (a copula only for d = 2)."""

    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise InvalidInputError("the countermonotone copula exists only in dimension 2")

    def cdf(self, u):
        u = self._check(u)
        return np.maximum(u[..., 0] + u[..., 1] - 1.0, 0.0)

    def describe(self):
        return {"family": "countermonotone", "dim": 2}


def bivariate_normal_cdf(h, k, rho: float) -> np.ndarray:
    """P(Z1 <= h, Z2 <= k) for standard normals with correlation rho.

    Uses Owen's T function; accurate to roughly machine precision, which the
    rectangle-volume checks need (inclusion-exclusion amplifies CDF error).
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    if not -1.0 < rho < 1.0:
        raise InvalidInputError("rho must lie in (-1, 1)")
    out = np.empty(h.shape)
    lo_h, lo_k = np.isneginf(h), np.isneginf(k)
    hi_h, hi_k = np.isposinf(h), np.isposinf(k)
    out[lo_h | lo_k] = 0.0
    only_k = hi_h & ~lo_k
    only_h = hi_k & ~lo_h
    out[only_k] = special.ndtr(k[only_k])
    out[only_h] = special.ndtr(h[only_h])
    fin = np.isfinite(h) & np.isfinite(k)
    hf, kf = h[fin], k[fin]
    s = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = np.where(hf == 0, 0.0, (kf - rho * hf) / (hf * s))
        ak = np.where(kf == 0, 0.0, (hf - rho * kf) / (kf * s))
    # T(0, +-inf) = +-1/4 handles a zero argument.
    th = np.where(hf == 0, np.sign(kf - rho * hf) * 0.25, special.owens_t(hf, ah))
    tk = np.where(kf == 0, np.sign(hf - rho * kf) * 0.25, special.owens_t(kf, ak))
    neg = (hf * kf < 0) | ((hf * kf == 0) & (hf + kf < 0))
    val = 0.5 * (special.ndtr(hf) + special.ndtr(kf)) - th - tk - np.where(neg, 0.5, 0.0)
    both0 = (hf == 0) & (kf == 0)
    val = np.where(both0, 0.25 + np.arcsin(rho) / (2 * np.pi), val)
    out[fin] = np.clip(val, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class Gaussian(Copula):
    """Gaussian copula; ``corr`` may be a scalar (d = 2) or a matrix.

    Dimension 2 uses the Owen's T evaluation.  Higher dimensions fall back to
    scipy's quasi-Monte-Carlo multivariate normal CDF (about 1e-6 accuracy).
    """

    corr: object = 0.0
    dim: int = 2

    def __post_init__(self):
        c = np.asarray(self.corr, dtype=float)
        if c.ndim == 0:
            c = np.array([[1.0, float(c)], [float(c), 1.0]])
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInputError("corr must be a scalar or a square matrix")
        if not np.allclose(np.diag(c), 1.0) or not np.allclose(c, c.T):
            raise InvalidInputError("corr must be a symmetric matrix with unit diagonal")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise InvalidInputError("corr must be positive definite")
        object.__setattr__(self, "corr", c)
        object.__setattr__(self, "dim", c.shape[0])

    def cdf(self, u):
        u = self._check(u)
        with np.errstate(divide="ignore"):
            z = special.ndtri(u)
        if self.dim == 2:
            return bivariate_normal_cdf(z[..., 0], z[..., 1], self.corr[0, 1])
        flat = z.reshape(-1, self.dim)
        out = np.zeros(flat.shape[0])
        live = ~np.any(np.isneginf(flat), axis=1)
        if live.any():
            mvn = stats.multivariate_normal(np.zeros(self.dim), self.corr)
            zz = np.where(np.isposinf(flat[live]), 40.0, flat[live])
            out[live] = np.atleast_1d(mvn.cdf(zz))
        return out.reshape(u.shape[:-1])

    def density(self, u):
        u = self._check(u)
        z = special.ndtri(u)
        inv = np.linalg.inv(self.corr)
        quad = np.einsum("...i,ij,...j->...", z, inv - np.eye(self.dim), z)
        return np.exp(-0.5 * quad) / np.sqrt(np.linalg.det(self.corr))

    def describe(self):
        if self.dim == 2:
            return {"family": "gaussian", "rho": float(self.corr[0, 1])}
        return {"family": "gaussian", "corr": self.corr.tolist()}


@dataclass(frozen=True)
class Archimedean(Copula):
    """C(u) = psi(sum_i psi^-1(u_i))."""

    generator: ArchimedeanGenerator = None
    dim: int = 2

    def __post_init__(self):
        if self.generator is None:
            raise InvalidInputError("an Archimedean copula needs a generator")

    def cdf(self, u):
        u = self._check(u)
        s = np.sum(self.generator.psi_inv(u), axis=-1)
        out = np.zeros(s.shape)
        fin = np.isfinite(s)
        out[fin] = self.generator.psi(s[fin])
        return out

    def density(self, u):
        u = self._check(u)
        g = self.generator
        dk = g.derivative(np.sum(g.psi_inv(u), axis=-1), self.dim)
        if dk is None:
            return None
        try:
            jac = np.prod(g.psi_inv_derivative(u), axis=-1)
        except NotImplementedError:
            return None
        return dk * jac

    def describe(self):
        return {**self.generator.params(), "family": "archimedean", "generator": self.generator.name, "dim": self.dim}


def make_copula(desc: dict, dim: int) -> Copula:
    """Build a copula from a config descriptor such as ``{"family": "clayton", "theta": 2}``."""
    from .generators import make_generator

    if not isinstance(desc, dict) or "family" not in desc:
        raise InvalidInputError("copula descriptor needs a 'family' key")
    fam = str(desc["family"]).lower()
    if fam == "independence":
        return Independence(dim)
    if fam == "comonotone":
        return Comonotone(dim)
    if fam == "countermonotone":
        return Countermonotone(dim)
    if fam == "gaussian":
        if "corr" in desc:
            return Gaussian(desc["corr"])
        if "rho" not in desc:
            raise InvalidInputError("gaussian copula needs 'rho' or 'corr'")
        rho = float(desc["rho"])
        corr = np.full((dim, dim), rho)
        np.fill_diagonal(corr, 1.0)
        return Gaussian(corr if dim > 2 else rho)
    if fam in ("clayton", "gumbel", "archimedean"):
        name = desc.get("generator", fam)
        if "theta" not in desc:
            raise InvalidInputError(f"{fam} copula needs 'theta'")
        return Archimedean(make_generator(name, desc["theta"]), dim)
    raise InvalidInputError(f"unknown copula family {fam!r}")
