"""Gaussian knockoffs: (X, X~) ~ N(0, G) with G = [[S, S-D], [S-D, S]].

Sampling uses the half-sum/half-difference coordinates
A = (X + X~)/2 ~ N(0, S - D/2) and B = (X - X~)/2 ~ N(0, D/2), which are
independent.  So G is PSD exactly when D >= 0 and S - D/2 >= 0, only a p x p
eigendecomposition is needed, and d_j = 0 gives X~_j == X_j bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._rng import make_rng
from .errors import ConstructionError, InvalidInputError

PSD_TOL = 1e-8


def _check_sigma(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] == 0:
        raise InvalidInputError(f"sigma must be a nonempty square matrix, got {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise InvalidInputError("sigma has non-finite entries")
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=1e-12):
        raise InvalidInputError("sigma must be symmetric")
    if np.linalg.eigvalsh(sigma).min() <= 0:
        raise InvalidInputError("sigma must be positive definite")
    return sigma


def _psd_factor(a, tol):
    """Symmetric square-root factor of a PSD matrix, clipping tiny negatives."""
    w, v = np.linalg.eigh(a)
    if w.min() < -tol:
        raise ConstructionError(f"matrix not PSD: minimum eigenvalue {w.min():.3e}")
    return v * np.sqrt(np.clip(w, 0.0, None))


def select_diag_equicorrelated(sigma) -> np.ndarray:
    """d_j = min(S_jj, 2 * lambda_min(corr(S)) * S_jj)."""
    sigma = _check_sigma(sigma)
    scale = np.diag(sigma)
    sd = np.sqrt(scale)
    corr = sigma / np.outer(sd, sd)
    lam = np.linalg.eigvalsh(corr).min()
    return np.minimum(scale, 2.0 * lam * scale)


@dataclass(frozen=True)
class GaussianModel:
    sigma: np.ndarray
    d: np.ndarray
    mean: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def g(self) -> np.ndarray:
        off = self.sigma - np.diag(self.d)
        return np.block([[self.sigma, off], [off, self.sigma]])

    def psd_tolerance(self) -> float:
        return PSD_TOL * max(1.0, np.trace(self.sigma) / self.p)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.g).min())


def assemble_joint(sigma, d=None, mean=None) -> GaussianModel:
    """Validate ``sigma`` and ``d`` and return the joint model.

    ``d`` defaults to the equicorrelated choice.  Raises ConstructionError if
    G has an eigenvalue below -1e-8 * max(1, trace(G)/2p).
    """
    sigma = _check_sigma(sigma)
    p = sigma.shape[0]
    d = select_diag_equicorrelated(sigma) if d is None else np.asarray(d, dtype=float)
    if d.shape != (p,):
        raise InvalidInputError(f"d must have length {p}, got shape {d.shape}")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidInputError("d must be finite and nonnegative")
    if mean is not None:
        mean = np.asarray(mean, dtype=float)
        if mean.shape != (p,):
            raise InvalidInputError(f"mean must have length {p}")
    model = GaussianModel(sigma, d, mean)
    lam = model.min_eigenvalue()
    if lam < -model.psd_tolerance():
        raise ConstructionError(f"G is not positive semidefinite: minimum eigenvalue {lam:.6g}")
    return model


def sample_joint(model: GaussianModel, n: int, seed=None) -> np.ndarray:
    """n draws of (X, X~) as an ``(n, 2p)`` array."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = make_rng(seed)
    p = model.p
    half_sum = _psd_factor(model.sigma - np.diag(model.d) / 2.0, model.psd_tolerance())
    z = rng.standard_normal((n, 2 * p))
    a = z[:, :p] @ half_sum.T
    b = z[:, p:] * np.sqrt(model.d / 2.0)
    out = np.hstack([a + b, a - b])
    if model.mean is not None:
        out += np.concatenate([model.mean, model.mean])
    return out


def sample_x(model: GaussianModel, n: int, seed=None) -> np.ndarray:
    rng = make_rng(seed)
    chol = np.linalg.cholesky(model.sigma)
    x = rng.standard_normal((n, model.p)) @ chol.T
    if model.mean is not None:
        x += model.mean
    return x


def conditional_params(model: GaussianModel):
    """Return (M, Sigma_c) with E[X~ | X=x] = x - M x and Cov = Sigma_c.

    M = D S^-1, so the mean (S - D) S^-1 x is computed as x - D S^-1 x, which
    is exact when D = 0.  Sigma_c = 2D - D S^-1 D.
    """
    try:
        cho = linalg.cho_factor(model.sigma)
    except linalg.LinAlgError as exc:
        raise InvalidInputError("sigma is singular") from exc
    dmat = np.diag(model.d)
    m = linalg.cho_solve(cho, dmat).T  # D S^-1 (S, D symmetric)
    cov = 2.0 * dmat - m @ dmat
    cov = (cov + cov.T) / 2.0
    return m, cov


def conditional_knockoff(model: GaussianModel, x, seed=None) -> np.ndarray:
    """Draw X~ | X = x; ``x`` may be one point or an ``(n, p)`` array."""
    rng = make_rng(seed)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.p:
        raise InvalidInputError(f"x must have {model.p} coordinates")
    centered = x2 - model.mean if model.mean is not None else x2
    m, cov = conditional_params(model)
    factor = _psd_factor(cov, model.psd_tolerance())
    noise = rng.standard_normal(x2.shape) @ factor.T
    out = x2 - centered @ m.T + noise
    return out[0] if single else out
