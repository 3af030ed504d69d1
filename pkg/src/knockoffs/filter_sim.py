"""Knockoff filter with marginal-correlation statistics and an FDR simulation harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gaussian, mixture
from ._rng import make_rng, spawn_seeds
from .copula import frailty
from .copula.model import CopulaModelSpec
from .errors import DegenerateError, InvalidInputError, UnsupportedModelError


def _standardize(a, what):
    a = np.asarray(a, dtype=float)
    centered = a - a.mean(axis=0)
    norms = np.sqrt(np.sum(centered**2, axis=0))
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0) + 1
        raise DegenerateError(f"zero-variance {what} column(s): {bad.tolist()}")
    return centered / norms


def compute_w_statistics(X, Xt, y) -> np.ndarray:
    """W_j = |corr(x_j, y)| - |corr(x~_j, y)|."""
    X = np.asarray(X, dtype=float)
    Xt = np.asarray(Xt, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape != Xt.shape or X.shape[0] != y.size:
        raise InvalidInputError("X and Xt must be n x p and y length n")
    ys = _standardize(y[:, None], "response")[:, 0]
    return np.abs(_standardize(X, "X").T @ ys) - np.abs(_standardize(Xt, "knockoff").T @ ys)


def knockoff_threshold(W, q: float, plus: bool = True) -> tuple[float, np.ndarray]:
    """Smallest t among the nonzero |W_j| with (plus + #{W <= -t}) / max(1, #{W >= t}) <= q.

    Returns ``(tau, selected)`` with 0-based selected indices; tau = inf and
    an empty selection when no t qualifies.
    """
    if not 0 < q < 1:
        raise InvalidInputError(f"q must lie in (0, 1), got {q}")
    W = np.asarray(W, dtype=float)
    offset = 1.0 if plus else 0.0
    for t in np.unique(np.abs(W[W != 0])):
        ratio = (offset + np.sum(W <= -t)) / max(1, int(np.sum(W >= t)))
        if ratio <= q:
            return float(t), np.flatnonzero(W >= t)
    return float("inf"), np.array([], dtype=int)


@dataclass
class RegressionScenario:
    n_obs: int
    p: int
    beta: np.ndarray
    noise_sd: float
    model: object
    q: float = 0.2
    plus: bool = True

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape != (self.p,):
            raise InvalidInputError(f"beta must have length p={self.p}")
        if not 0 < self.q < 1:
            raise InvalidInputError("q must lie in (0, 1)")
        if not self.noise_sd > 0:
            raise InvalidInputError("noise_sd must be positive")
        if self.n_obs < 3:
            raise InvalidInputError("n_obs must be at least 3")

    @property
    def nonnull_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0)

    @classmethod
    def with_signals(cls, n_obs, p, k, amplitude, noise_sd, model, q=0.2, plus=True, seed=None):
        """k nonnulls of size +-amplitude at random positions."""
        if k > p:
            raise InvalidInputError("more nonnulls than variables")
        rng = make_rng(seed)
        beta = np.zeros(p)
        idx = rng.choice(p, size=k, replace=False)
        beta[idx] = amplitude * rng.choice([-1.0, 1.0], size=k)
        return cls(n_obs, p, beta, noise_sd, model, q, plus)


def _method_for(model, method):
    if method == "gaussian":
        if not isinstance(model, gaussian.GaussianModel):
            raise UnsupportedModelError("method 'gaussian' needs a GaussianModel")
        return (lambda n, rng: gaussian.sample_x(model, n, rng),
                lambda x, rng: gaussian.conditional_knockoff(model, x, rng))
    if method == "mixture":
        if not isinstance(model, mixture.ConjugateFamily):
            raise UnsupportedModelError("method 'mixture' needs a conjugate family")
        return (lambda n, rng: mixture.sample_x(model, n, rng),
                lambda x, rng: mixture.sample_knockoff(model, x, rng))
    if method == "archimedean":
        if not isinstance(model, CopulaModelSpec):
            raise UnsupportedModelError("method 'archimedean' needs a copula model")
        return (lambda n, rng: frailty.sample_x(model, n, rng),
                lambda x, rng: frailty.sample_knockoff_frailty(model, x, rng))
    raise UnsupportedModelError(f"unknown knockoff method {method!r}")


@dataclass
class FDRReport:
    method: str
    n_reps: int
    q: float
    plus: bool
    fdr: float
    fdr_se: float
    power: float
    power_se: float
    mean_selected: float
    fdp: list = field(default_factory=list, repr=False)
    tpp: list = field(default_factory=list, repr=False)

    @property
    def fdr_controlled(self) -> bool:
        return self.fdr <= self.q + 3.0 * self.fdr_se

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_reps": self.n_reps,
            "q": self.q,
            "plus": self.plus,
            "fdr": self.fdr,
            "fdr_se": self.fdr_se,
            "power": self.power,
            "power_se": self.power_se,
            "mean_selected": self.mean_selected,
            "fdr_within_q_plus_3se": self.fdr_controlled,
        }


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), float(se)


def run_replicate(scenario: RegressionScenario, draw_x, draw_knockoff, rng):
    X = np.asarray(draw_x(scenario.n_obs, rng), dtype=float)
    y = X @ scenario.beta + scenario.noise_sd * rng.standard_normal(scenario.n_obs)
    Xt = np.asarray(draw_knockoff(X, rng), dtype=float)
    W = compute_w_statistics(X, Xt, y)
    _, sel = knockoff_threshold(W, scenario.q, scenario.plus)
    nonnull = set(scenario.nonnull_set.tolist())
    false = sum(1 for j in sel if j not in nonnull)
    true = len(sel) - false
    return false / max(1, len(sel)), true / max(1, len(nonnull)), len(sel)


def fdr_simulation(scenario: RegressionScenario, knockoff_method: str, n_reps: int, seed=None) -> FDRReport:
    """Mean FDP and power over ``n_reps`` replicates, each on its own seed substream."""
    draw_x, draw_knockoff = _method_for(scenario.model, knockoff_method)
    fdp, tpp, nsel = [], [], []
    for child in spawn_seeds(seed, n_reps):
        f, t, k = run_replicate(scenario, draw_x, draw_knockoff, np.random.default_rng(child))
        fdp.append(f)
        tpp.append(t)
        nsel.append(k)
    fdr, fdr_se = _mean_se(fdp)
    power, power_se = _mean_se(tpp)
    return FDRReport(knockoff_method, n_reps, scenario.q, scenario.plus, fdr, fdr_se, power, power_se,
                     float(np.mean(nsel)), fdp, tpp)
