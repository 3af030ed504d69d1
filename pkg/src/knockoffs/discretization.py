"""Approximate knockoffs through discretization.

X^(n)_i = (floor(n X_i) + U_i) / n with U_i iid uniform(0, 1).  Given the
cell k = floor(n X), the coordinates of X^(n) are independent uniforms on
their 1/n intervals, so redrawing the uniforms gives an exact knockoff of
X^(n).  X^(n) converges to X in total variation as n grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import InvalidInputError, ResourceLimitError

HIST_GUARD = 10**7


@dataclass(frozen=True)
class DiscretizationLevel:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"discretization level must be a positive integer, got {self.n!r}")


def _level(n) -> int:
    return DiscretizationLevel(n).n if not isinstance(n, DiscretizationLevel) else n.n


def open_uniform(rng, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1); never exactly 0."""
    return (rng.integers(0, 2**52, size=shape) + 0.5) * 2.0**-52


def _cells(x, n):
    return np.floor(n * np.asarray(x, dtype=float))


def discretize(x, n, u=None, seed=None) -> np.ndarray:
    """(floor(n x_i) + U_i) / n.  ``u`` fixes the uniforms (for tests)."""
    n = _level(n)
    k = _cells(x, n)
    if u is None:
        u = open_uniform(make_rng(seed), k.shape)
    return (k + np.asarray(u, dtype=float)) / n


def knockoff_of_discretized(x, n, u=None, seed=None) -> np.ndarray:
    """Fresh uniforms in the same cell: an exact knockoff of X^(n).

    ``x`` may be the original X or X^(n) itself; both share the cell.
    """
    return discretize(x, n, u=u, seed=seed)


def sample_discretized_pair(x, n, seed=None) -> np.ndarray:
    """(X^(n), X~) side by side for rows of X."""
    rng = make_rng(seed)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = _cells(x, _level(n))
    u = open_uniform(rng, (2,) + k.shape)
    n = _level(n)
    return np.hstack([(k + u[0]) / n, (k + u[1]) / n])


def _check_pair(samples_a, samples_b, bins_per_axis):
    a = np.atleast_2d(np.asarray(samples_a, dtype=float))
    b = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InvalidInputError("sample sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("sample sets must have the same dimension")
    if bins_per_axis < 1:
        raise InvalidInputError("bins_per_axis must be >= 1")
    if float(bins_per_axis) ** a.shape[1] > HIST_GUARD:
        raise ResourceLimitError(f"{bins_per_axis}^{a.shape[1]} histogram cells exceeds guard {HIST_GUARD}")
    return a, b


def _edges(a, b, bins, bounds):
    p = a.shape[1]
    if bounds is None:
        lo = np.minimum(a.min(axis=0), b.min(axis=0))
        hi = np.maximum(a.max(axis=0), b.max(axis=0))
    else:
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (p, 2) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise InvalidInputError(f"bounds must be {p} increasing (lo, hi) pairs")
        lo, hi = bounds[:, 0], bounds[:, 1]
    hi = np.where(hi > lo, hi, lo + 1.0)
    return lo, hi


def _cell_index(s, lo, hi, bins):
    """Flat histogram cell of each row; rows outside the box share index bins^p."""
    rel = (s - lo) / (hi - lo)
    inside = np.all((rel >= 0) & (rel <= 1), axis=1)
    k = np.clip(np.floor(rel * bins), 0, bins - 1).astype(np.int64)
    flat = np.ravel_multi_index(tuple(k[inside].T), (bins,) * s.shape[1]) if inside.any() else k[:0, 0]
    out = np.full(s.shape[0], bins ** s.shape[1], dtype=np.int64)
    out[inside] = flat
    return out


def _tv_from_index(ia, ib, n_cells):
    ha = np.bincount(ia, minlength=n_cells + 1) / ia.size
    hb = np.bincount(ib, minlength=n_cells + 1) / ib.size
    return float(0.5 * np.abs(ha - hb).sum())


def empirical_tv(samples_a, samples_b, bins_per_axis: int, bounds=None) -> float:
    """Half L1 distance between normalized histograms on a common box.

    ``bounds`` is a (p, 2) array of (lo, hi); by default the joint bounding
    box of both sample sets.  Points outside a user box are pooled into one
    overflow cell.
    """
    a, b = _check_pair(samples_a, samples_b, bins_per_axis)
    lo, hi = _edges(a, b, bins_per_axis, bounds)
    n_cells = bins_per_axis ** a.shape[1]
    return _tv_from_index(_cell_index(a, lo, hi, bins_per_axis), _cell_index(b, lo, hi, bins_per_axis), n_cells)


def bootstrap_tv_se(samples_a, samples_b, bins_per_axis, bounds=None, n_boot=50, seed=None) -> float:
    """Bootstrap standard error of ``empirical_tv`` (paired row resampling when sizes match)."""
    rng = make_rng(seed)
    a, b = _check_pair(samples_a, samples_b, bins_per_axis)
    lo, hi = _edges(a, b, bins_per_axis, bounds)
    n_cells = bins_per_axis ** a.shape[1]
    ca = _cell_index(a, lo, hi, bins_per_axis)
    cb = _cell_index(b, lo, hi, bins_per_axis)
    vals = np.empty(n_boot)
    for r in range(n_boot):
        ia = rng.integers(0, ca.size, ca.size)
        ib = ia if ca.size == cb.size else rng.integers(0, cb.size, cb.size)
        vals[r] = _tv_from_index(ca[ia], cb[ib], n_cells)
    return float(vals.std(ddof=1))


@dataclass
class TVRow:
    n: int
    tv: float
    se: float
    max_cell_gap: float

    def to_dict(self):
        return {"n": self.n, "tv": self.tv, "bootstrap_se": self.se, "max_abs_x_minus_knockoff": self.max_cell_gap}


def tv_decay(
    x,
    levels=(2, 4, 8, 16, 32, 64),
    bins_per_axis: int = 20,
    bounds=None,
    n_boot: int = 50,
    seed=None,
) -> list[TVRow]:
    """TV(X, X^(n)) across levels using the same X rows and uniforms.

    Reusing the draws (paired design) makes the estimates comparable across n.
    The knockoff gap column records max |X - X~| at each level.
    """
    rng = make_rng(seed)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = open_uniform(rng, (2,) + x.shape)
    if bounds is None:
        bounds = np.stack([x.min(axis=0) - 1e-9, x.max(axis=0) + 1e-9], axis=1)
    rows = []
    for n in levels:
        n = _level(n)
        xn = discretize(x, n, u=u[0])
        xt = knockoff_of_discretized(x, n, u=u[1])
        gap = float(np.max(np.abs(x - xt)))
        if not gap < 1.0 / n:
            raise AssertionError(f"knockoff left its cell at n={n}")
        tv = empirical_tv(x, xn, bins_per_axis, bounds)
        se = bootstrap_tv_se(x, xn, bins_per_axis, bounds, n_boot, rng)
        rows.append(TVRow(n, tv, se, gap))
    return rows
