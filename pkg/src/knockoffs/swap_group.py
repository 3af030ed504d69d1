"""The knockoff swap group acting on R^{2p}.

A swap set S (a subset of {1..p}) acts on a point of R^{2p} by exchanging
coordinate i with coordinate p+i for every i in S.  All 2^p such maps form an
abelian group (composition is symmetric difference of the sets).  Everything
here works on arrays of shape ``(..., 2p)`` so orbit sums vectorize.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._rng import make_rng
from .errors import (
    InvalidDensityError,
    InvalidInputError,
    InvalidTestFunctionError,
    ResourceLimitError,
)

MAX_ENUMERATION_P = 20

LEBESGUE = "lebesgue"
COUNTING = "counting"


@dataclass(frozen=True)
class SwapSet:
    """A subset of {1..p} (1-based) naming the swap map f_S."""

    p: int
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise InvalidInputError(f"p must be a positive integer, got {self.p!r}")
        members = frozenset(int(i) for i in self.members)
        bad = [i for i in members if not 1 <= i <= self.p]
        if bad:
            raise InvalidInputError(f"swap indices {sorted(bad)} outside 1..{self.p}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_mask(cls, p: int, mask: int) -> "SwapSet":
        return cls(p, frozenset(i + 1 for i in range(p) if (mask >> i) & 1))

    @property
    def mask(self) -> int:
        return sum(1 << (i - 1) for i in self.members)

    def permutation(self) -> np.ndarray:
        """Index array ``perm`` with ``apply_swap(x, S) == x[..., perm]``."""
        perm = np.arange(2 * self.p)
        for i in self.members:
            perm[i - 1], perm[self.p + i - 1] = self.p + i - 1, i - 1
        return perm

    def matrix(self) -> np.ndarray:
        """Permutation matrix P with ``apply_swap(x, S) == P @ x``."""
        return np.eye(2 * self.p)[self.permutation()]

    def compose(self, other: "SwapSet") -> "SwapSet":
        if other.p != self.p:
            raise InvalidInputError("cannot compose swaps of different dimension")
        return SwapSet(self.p, self.members ^ other.members)

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        inner = ",".join(str(i) for i in sorted(self.members))
        return f"SwapSet(p={self.p}, {{{inner}}})"


def apply_swap(x, S: SwapSet) -> np.ndarray:
    """Apply f_S to a point (or to every row of an array) in R^{2p}."""
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[-1] != 2 * S.p:
        raise InvalidInputError(
            f"expected trailing dimension {2 * S.p}, got shape {x.shape}"
        )
    return x[..., S.permutation()]


def enumerate_swaps(p: int, max_p: int = MAX_ENUMERATION_P) -> list[SwapSet]:
    """All 2^p swap sets in binary-counter order of their membership bitmask."""
    if int(p) != p or p < 1:
        raise InvalidInputError(f"p must be a positive integer, got {p!r}")
    if p > max_p:
        raise ResourceLimitError(f"enumerating 2^{p} swaps exceeds guard p <= {max_p}")
    return [SwapSet.from_mask(p, mask) for mask in range(2**p)]


def orbit(x, p: int | None = None) -> np.ndarray:
    """Stack f_S(x) over all S; result has shape ``(2^p, ..., 2p)``."""
    x = np.asarray(x)
    if p is None:
        p = _infer_p(x)
    return np.stack([apply_swap(x, S) for S in enumerate_swaps(p)])


def _infer_p(x) -> int:
    d = np.shape(x)[-1]
    if d % 2:
        raise InvalidInputError(f"points in R^(2p) need an even dimension, got {d}")
    return d // 2


@dataclass(frozen=True)
class Density2p:
    """A density on R^{2p} against a product dominating measure.

    ``fn`` maps an array of shape ``(..., 2p)`` to an array of shape ``(...)``.
    ``measure`` lists one factor per coordinate ("lebesgue" or "counting"),
    and factor p+i must equal factor i so the dominating measure itself is
    swap-invariant.
    """

    p: int
    fn: Callable[[np.ndarray], np.ndarray]
    measure: tuple = ()

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise InvalidInputError(f"p must be a positive integer, got {self.p!r}")
        measure = tuple(self.measure) or (LEBESGUE,) * (2 * self.p)
        if len(measure) != 2 * self.p:
            raise InvalidInputError(
                f"dominating measure needs {2 * self.p} factors, got {len(measure)}"
            )
        for m in measure:
            if m not in (LEBESGUE, COUNTING):
                raise InvalidInputError(f"unknown measure factor {m!r}")
        for i in range(self.p):
            if measure[i] != measure[self.p + i]:
                raise InvalidInputError(
                    f"measure factor {self.p + i + 1} must equal factor {i + 1}"
                )
        object.__setattr__(self, "measure", measure)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2 * self.p:
            raise InvalidInputError(
                f"expected trailing dimension {2 * self.p}, got shape {x.shape}"
            )
        val = np.asarray(self.fn(x), dtype=float)
        if np.any(np.isnan(val)) or np.any(val < 0):
            raise InvalidDensityError("density returned a negative or NaN value")
        return val


def symmetrize_density(g: Density2p) -> Density2p:
    """Average ``g`` over the swap orbit: q(x) = 2^-p * sum_S g(f_S(x))."""
    swaps = enumerate_swaps(g.p)
    perms = [S.permutation() for S in swaps]
    scale = 1.0 / len(swaps)

    def q(x):
        total = np.zeros(np.shape(x)[:-1])
        for perm in perms:
            total = total + g(x[..., perm])
        return total * scale

    return Density2p(g.p, q, g.measure)


def tilt_density(phi=None, *, log_phi=None) -> Callable[[np.ndarray], np.ndarray]:
    """Build q(x) = 2^p phi(x) / sum_S phi(f_S(x)) from a positive function.

    The orbit average of the result is identically 1, so q is a density of a
    probability pi with respect to any swap-invariant law lambda, and the
    symmetrization of pi recovers lambda.  Supplying ``log_phi`` instead of
    ``phi`` evaluates the ratio in log space, which avoids underflow for
    Gaussian-like tilts.
    """
    if (phi is None) == (log_phi is None):
        raise InvalidInputError("give exactly one of phi or log_phi")

    def q(x):
        x = np.asarray(x, dtype=float)
        p = _infer_p(x)
        pts = orbit(x, p)
        if log_phi is not None:
            logs = np.asarray(log_phi(pts), dtype=float)
            if not np.all(np.isfinite(logs)):
                raise InvalidInputError("log_phi must be finite (phi strictly positive)")
            top = logs.max(axis=0)
            denom = np.log(np.exp(logs - top).sum(axis=0)) + top
            return 2.0**p * np.exp(logs[0] - denom)
        vals = np.asarray(phi(pts), dtype=float)
        if np.any(~(vals > 0)) or not np.all(np.isfinite(vals)):
            raise InvalidInputError("phi must be strictly positive and finite")
        return 2.0**p * vals[0] / vals.sum(axis=0)

    return q


@dataclass
class OrbitReport:
    max_deviation: float
    worst_point: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def orbit_normalization_check(q_over_lambda, points, tol: float = 1e-12) -> OrbitReport:
    """Max over ``points`` of |2^-p sum_S q(f_S(x)) - 1|."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise InvalidInputError("need at least one point")
    p = _infer_p(points)
    vals = np.asarray(q_over_lambda(orbit(points, p)), dtype=float)
    if np.any(np.isnan(vals)) or np.any(vals < 0):
        raise InvalidDensityError("density ratio returned a negative or NaN value")
    dev = np.abs(vals.mean(axis=0) - 1.0)
    k = int(np.argmax(dev))
    return OrbitReport(float(dev[k]), points[k], tol)


def sample_symmetrized(sample_pi, n: int, p: int, seed=None) -> np.ndarray:
    """Draw from 2^-p * sum_S pi o f_S^-1 by swapping a pi-draw with a uniform S.

    ``sample_pi(n, rng)`` must return an ``(n, 2p)`` array.
    """
    rng = make_rng(seed)
    y = np.asarray(sample_pi(n, rng))
    masks = rng.integers(0, 2**p, size=n)
    out = y.copy()
    for i in range(p):
        flip = ((masks >> i) & 1).astype(bool)
        out[flip, i], out[flip, p + i] = y[flip, p + i], y[flip, i]
    return out


def sample_tilted(sample_lambda, q_over_lambda, n: int, p: int, seed=None) -> np.ndarray:
    """Rejection-sample pi(dx) = q(x) lambda(dx), using the bound q <= 2^p.

    The bound holds for any ``q`` whose orbit average is 1 (e.g. from
    :func:`tilt_density`).
    """
    rng = make_rng(seed)
    bound = 2.0**p
    chunks, have = [], 0
    while have < n:
        batch = max(2 * (n - have), 64)
        x = np.asarray(sample_lambda(batch, rng))
        accept = rng.random(batch) * bound < q_over_lambda(x)
        chunks.append(x[accept])
        have += int(accept.sum())
    return np.concatenate(chunks)[:n]


@dataclass
class AgreementRecord:
    name: str
    mean_pi: float
    mean_lambda: float
    difference: float
    se: float

    @property
    def flagged(self) -> bool:
        return abs(self.difference) > 4 * self.se


def check_swap_symmetric(fn, p: int, seed=None, n_points: int = 64, rtol: float = 1e-10):
    """Spot-check g(f_S(x)) == g(x) on random points for every swap S."""
    rng = make_rng(seed)
    pts = rng.standard_normal((n_points, 2 * p))
    base = np.asarray(fn(pts), dtype=float)
    for S in enumerate_swaps(p)[1:]:
        other = np.asarray(fn(apply_swap(pts, S)), dtype=float)
        if not np.allclose(other, base, rtol=rtol, atol=rtol):
            return False
    return True


def invariant_event_agreement(
    sampler_pi,
    sampler_lambda,
    test_functions: Sequence[Callable],
    n: int,
    seed=None,
    names: Sequence[str] | None = None,
) -> list[AgreementRecord]:
    """Compare E_pi[g] and E_lambda[g] for swap-symmetric test functions g.

    Samplers are called as ``sampler(n, rng)`` and return ``(n, 2p)`` arrays.
    Functions that are not swap-symmetric are rejected up front.
    """
    rng = make_rng(seed)
    x_pi = np.asarray(sampler_pi(n, rng), dtype=float)
    x_lam = np.asarray(sampler_lambda(n, rng), dtype=float)
    p = _infer_p(x_pi)
    names = list(names) if names is not None else [
        getattr(g, "__name__", f"g{k}") for k, g in enumerate(test_functions)
    ]
    for g, name in zip(test_functions, names):
        if not check_swap_symmetric(g, p, seed=rng):
            raise InvalidTestFunctionError(f"test function {name!r} is not swap-symmetric")

    records = []
    for g, name in zip(test_functions, names):
        a = np.asarray(g(x_pi), dtype=float)
        b = np.asarray(g(x_lam), dtype=float)
        se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        records.append(AgreementRecord(name, a.mean(), b.mean(), a.mean() - b.mean(), se))
    return records
