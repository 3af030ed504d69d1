"""The candidate joint CDF H built from a p-copula C and 2-copulas D_i.

    H(x) = C[D_1(F_1(x_1), F_1(x_{p+1})), ..., D_p(F_p(x_p), F_p(x_{2p}))]

``copula_level`` evaluates the same expression on uniform scale
(C* with u_i = F_i(x_i)); ``evaluate_H`` composes it with the marginals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from ..errors import (
    DegenerateError,
    InvalidInputError,
    NumericIntegrityError,
    ResourceLimitError,
)
from .copulas import Archimedean, Copula

GRID_GUARD = 10**7


@dataclass(frozen=True)
class Marginal:
    """A univariate law given by CDF, generalized inverse, and density."""

    cdf: Callable
    ppf: Callable
    pdf: Callable | None = None
    name: str = "custom"

    @classmethod
    def from_scipy(cls, dist, name=None) -> "Marginal":
        return cls(dist.cdf, dist.ppf, getattr(dist, "pdf", None), name or dist.dist.name)

    @classmethod
    def uniform(cls) -> "Marginal":
        return cls(
            lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0),
            lambda u: np.asarray(u, dtype=float),
            lambda x: ((np.asarray(x) > 0) & (np.asarray(x) < 1)).astype(float),
            "uniform",
        )


def make_marginal(desc: dict) -> Marginal:
    """``{"dist": "norm", "loc": 0, "scale": 1}`` -> Marginal (any scipy.stats name)."""
    if not isinstance(desc, dict) or "dist" not in desc:
        raise InvalidInputError("marginal descriptor needs a 'dist' key")
    name = desc["dist"]
    if name == "uniform" and set(desc) <= {"dist"}:
        return Marginal.uniform()
    dist = getattr(stats, name, None)
    if dist is None or not hasattr(dist, "cdf"):
        raise InvalidInputError(f"unknown distribution {name!r}")
    kwargs = {k: v for k, v in desc.items() if k != "dist"}
    try:
        frozen = dist(**kwargs)
        frozen.cdf(0.0)
    except Exception as exc:  # scipy raises a variety of types on bad shapes
        raise InvalidInputError(f"bad parameters for {name!r}: {exc}") from exc
    return Marginal.from_scipy(frozen, name)


@dataclass(frozen=True)
class CopulaModelSpec:
    C: Copula
    D: tuple
    marginals: tuple = ()

    def __post_init__(self):
        D = tuple(self.D)
        p = len(D)
        if p < 1:
            raise InvalidInputError("need at least one pair copula D_i")
        if self.C.dim != p:
            raise InvalidInputError(f"C has dimension {self.C.dim} but there are {p} pair copulas")
        for i, d in enumerate(D):
            if d.dim != 2:
                raise InvalidInputError(f"D_{i + 1} must be a 2-copula")
        margs = tuple(self.marginals) or tuple(Marginal.uniform() for _ in range(p))
        if len(margs) != p:
            raise InvalidInputError(f"need {p} marginals, got {len(margs)}")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "marginals", margs)

    @property
    def p(self) -> int:
        return len(self.D)

    def common_generator(self):
        """The shared generator if C and every D_i are Archimedean with it, else None."""
        if not isinstance(self.C, Archimedean):
            return None
        g = self.C.generator
        if all(isinstance(d, Archimedean) and d.generator.same_as(g) for d in self.D):
            return g
        return None

    def all_symmetric(self) -> bool:
        return all(d.symmetric for d in self.D)

    def to_uniform(self, x) -> np.ndarray:
        """Map x in R^{2p} to (F_1(x_1), ..., F_p(x_p), F_1(x_{p+1}), ...)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2 * self.p:
            raise InvalidInputError(f"expected {2 * self.p} coordinates, got shape {x.shape}")
        u = np.empty(x.shape)
        for i, m in enumerate(self.marginals):
            u[..., i] = m.cdf(x[..., i])
            u[..., self.p + i] = m.cdf(x[..., self.p + i])
        if np.any(np.isnan(u)) or np.any(u < 0) or np.any(u > 1):
            raise NumericIntegrityError("a marginal CDF returned a value outside [0, 1]")
        return u


def copula_level(spec: CopulaModelSpec, u) -> np.ndarray:
    """C*(u) = C[D_1(u_1, u_{p+1}), ..., D_p(u_p, u_{2p})] for u in [0,1]^{2p}."""
    u = np.asarray(u, dtype=float)
    p = spec.p
    w = np.empty(u.shape[:-1] + (p,))
    for i, d in enumerate(spec.D):
        w[..., i] = d.cdf(np.stack([u[..., i], u[..., p + i]], axis=-1))
    return spec.C.cdf(w)


def evaluate_H(spec: CopulaModelSpec, x) -> np.ndarray:
    return copula_level(spec, spec.to_uniform(x))


@dataclass
class VolumeReport:
    min_volume: float
    witness_lower: list
    witness_upper: list
    resolution: int
    tol: float
    n_cells: int
    validity_gate: str = "not-evaluated"

    @property
    def passed(self) -> bool:
        return self.min_volume >= -self.tol

    def to_dict(self) -> dict:
        return {
            "test": "rectangle_volume",
            "statistic": self.min_volume,
            "threshold": -self.tol,
            "pass": self.passed,
            "resolution": self.resolution,
            "n_cells": self.n_cells,
            "witness_cell": {"lower": self.witness_lower, "upper": self.witness_upper},
            "gate": "numeric-volumes",
            "validity_gate": self.validity_gate,
        }


def rectangle_volume_check(spec: CopulaModelSpec, grid_resolution: int, tol: float = 1e-10) -> VolumeReport:
    """Signed 2p-dimensional volume of H on every cell of a uniform-scale grid.

    Cells are [k/r, (k+1)/r] per axis in copula coordinates; because each F_i
    is nondecreasing, a negative cell volume of C* is a negative rectangle
    volume of H.  Inclusion-exclusion over a full grid is a successive
    first difference along each axis.
    """
    r = int(grid_resolution)
    n_dim = 2 * spec.p
    if r < 1:
        raise InvalidInputError("grid_resolution must be >= 1")
    if r**n_dim > GRID_GUARD:
        raise ResourceLimitError(f"{r}^{n_dim} cells exceeds guard {GRID_GUARD}")
    ticks = np.linspace(0.0, 1.0, r + 1)
    grid = np.stack(np.meshgrid(*([ticks] * n_dim), indexing="ij"), axis=-1)
    vol = copula_level(spec, grid)
    for ax in range(n_dim):
        vol = np.diff(vol, axis=ax)
    idx = np.unravel_index(int(np.argmin(vol)), vol.shape)
    lower = [float(ticks[i]) for i in idx]
    upper = [float(ticks[i + 1]) for i in idx]
    return VolumeReport(float(vol[idx]), lower, upper, r, tol, int(vol.size))


def _mixed_partial(fn, u, axes, h):
    """Central-difference mixed partial derivative over ``axes`` (one step each)."""
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=len(axes)):
        pt = u.copy()
        for ax, s in zip(axes, signs):
            pt[ax] += s * h[ax]
        total = total + np.prod(signs) * fn(pt)
    return total / np.prod([2.0 * h[ax] for ax in axes])


def conditional_cdf_oracle(spec: CopulaModelSpec, x, step: float = 1e-3) -> float:
    """P(X~ <= x_{p+1..2p} | X = x_{1..p}) by finite differences of H.

    Works on copula scale: the mixed partial of C* over the first block,
    divided by the copula density of C at u (finite differences of C when no
    closed form exists).  The marginal densities cancel.  Slow reference
    oracle, p <= 3.
    """
    p = spec.p
    if p > 3:
        raise ResourceLimitError("conditional_cdf_oracle supports p <= 3")
    u = spec.to_uniform(np.asarray(x, dtype=float))
    first = u[:p]
    if np.any(first <= 0) or np.any(first >= 1):
        raise DegenerateError("conditioning value outside the open support")
    h = np.full(2 * p, step)
    h[:p] = np.minimum(step, np.minimum(first, 1 - first) / 2)
    num = _mixed_partial(lambda v: copula_level(spec, v), u, list(range(p)), h)
    den = spec.C.density(first)
    if den is None or not np.isfinite(den):
        den = _mixed_partial(spec.C.cdf, first, list(range(p)), h[:p])
    den = float(den)
    if den < 1e-12:
        raise DegenerateError(f"copula density {den:.3e} too small at the conditioning point")
    return float(np.clip(num / den, 0.0, 1.0))
