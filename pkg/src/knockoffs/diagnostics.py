"""Checks that a sampler really produces a knockoff law.

* ``swap_test_energy``: permutation energy-distance test of f_S(Z) ~ Z.
* ``swap_test_exact_pmf``: exact pmf symmetry on a finite grid.
* ``marginal_preservation_test``: both blocks against L(X_i) (KS or chi-square).
* ``covariance_consistency``: cov(X_i, X~_j) = cov(X_i, X_j) for i != j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from ._rng import make_rng
from .errors import InvalidInputError, ResourceLimitError
from .swap_group import SwapSet, apply_swap

PMF_GRID_GUARD = 10**7
ENERGY_CHUNK = 1024
MIN_ENERGY_ROWS = 100
MIN_COV_ROWS = 1000


@dataclass
class TestRecord:
    __test__ = False  # not a pytest class

    test: str
    statistic: float
    threshold: float
    passed: bool
    seed: int | None
    n: int
    p_value: float | None = None
    mandatory: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"test": self.test, "statistic": self.statistic, "threshold": self.threshold}
        if self.p_value is not None:
            out["p_value"] = self.p_value
        out.update({"pass": self.passed, "seed": self.seed, "n": self.n, "mandatory": self.mandatory})
        if self.details:
            out["details"] = self.details
        return out


@dataclass
class DiagnosticsReport:
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records if r.mandatory)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "tests": [r.to_dict() for r in self.records]}


def _joint(samples, p=None):
    z = np.asarray(samples, dtype=float)
    if z.ndim != 2 or z.shape[1] % 2:
        raise InvalidInputError("joint samples must be an n x 2p matrix")
    if p is not None and z.shape[1] != 2 * p:
        raise InvalidInputError(f"expected {2 * p} columns, got {z.shape[1]}")
    return z


def _energy_sums(pooled, labels):
    """For each label column z: (z'Dz, z'D1, 1'D1) with D the distance matrix."""
    m = pooled.shape[0]
    dz = np.zeros((m, labels.shape[1]))
    row_sums = np.zeros(m)
    for start in range(0, m, ENERGY_CHUNK):
        stop = min(start + ENERGY_CHUNK, m)
        block = cdist(pooled[start:stop], pooled)
        dz[start:stop] = block @ labels
        row_sums[start:stop] = block.sum(axis=1)
    zdz = np.einsum("ij,ij->j", labels, dz)
    zd1 = labels.T @ row_sums
    return zdz, zd1, row_sums.sum()


def swap_test_energy(samples, S: SwapSet, n_permutations: int = 200, seed=None) -> tuple[float, float]:
    """Energy-distance permutation test of f_S(X, X~) ~ (X, X~).

    Rows are shuffled and split in halves; f_S is applied to the second half.
    Returns ``(p_value, statistic)`` with p = (1 + #{perm >= obs}) / (1 + P).
    """
    z = _joint(samples, S.p)
    n = z.shape[0]
    if n < MIN_ENERGY_ROWS:
        raise InvalidInputError(f"swap_test_energy needs at least {MIN_ENERGY_ROWS} rows, got {n}")
    rng = make_rng(seed)
    order = rng.permutation(n)
    half = n // 2
    a = z[order[:half]]
    b = apply_swap(z[order[half: 2 * half]], S)
    pooled = np.vstack([a, b])
    m = pooled.shape[0]
    labels = np.zeros((m, n_permutations + 1))
    labels[:half, 0] = 1.0
    for k in range(1, n_permutations + 1):
        labels[rng.permutation(m)[:half], k] = 1.0
    zdz, zd1, total = _energy_sums(pooled, labels)
    # sums within the first group, across groups, and within the second group
    s_aa = zdz
    s_ab = zd1 - zdz
    s_bb = total - 2.0 * zd1 + zdz
    energy = 2.0 * s_ab / (half * half) - s_aa / half**2 - s_bb / half**2
    obs = energy[0]
    # small tolerance so ties in exact arithmetic count as exceedances
    exceed = np.sum(energy[1:] >= obs - 1e-12 * abs(obs))
    return float((1 + exceed) / (1 + n_permutations)), float(obs)


def swap_test_exact_pmf(pmf, p: int, values: Sequence) -> dict:
    """max over S and grid points y of |pmf(y) - pmf(f_S(y))|.

    ``values`` are the support points used on every axis; ``pmf`` takes an
    array of shape (..., 2p).  Returns the deviation with a witness.
    """
    values = np.asarray(values, dtype=float)
    k = values.size
    if float(k) ** (2 * p) > PMF_GRID_GUARD:
        raise ResourceLimitError(f"{k}^{2 * p} grid points exceeds guard {PMF_GRID_GUARD}")
    grid = np.stack(np.meshgrid(*([values] * (2 * p)), indexing="ij"), axis=-1)
    v = np.asarray(pmf(grid), dtype=float)
    best = {"max_deviation": 0.0, "swap": [], "witness": None}
    for mask in range(1, 2**p):
        S = SwapSet.from_mask(p, mask)
        # f_S is an involution, so pmf(f_S(y)) is a transpose of the value array
        dev = np.abs(v - np.transpose(v, S.permutation()))
        idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[idx] > best["max_deviation"]:
            best = {
                "max_deviation": float(dev[idx]),
                "swap": sorted(S.members),
                "witness": [float(values[i]) for i in idx],
            }
    return best


def _is_discrete(dist) -> bool:
    return isinstance(getattr(dist, "dist", None), stats.rv_discrete)


def _chi_square_discrete(x, dist, min_expected=5.0):
    """Exact-support chi-square: cells {lo..K-1} plus a pooled upper tail."""
    n = x.size
    lo = int(max(dist.support()[0], np.min(x)))
    hi = int(max(np.max(x), lo))
    ks = np.arange(lo, hi + 1)
    expected = n * dist.pmf(ks)
    expected[0] += n * dist.cdf(lo - 1)
    observed = np.bincount((x - lo).astype(int), minlength=ks.size).astype(float)
    # merge tail cells from the right until each has enough expected mass
    exp_cells, obs_cells = [], []
    e_acc, o_acc = n * dist.sf(hi), 0.0
    for e, o in zip(expected[::-1], observed[::-1]):
        e_acc += e
        o_acc += o
        if e_acc >= min_expected:
            exp_cells.append(e_acc)
            obs_cells.append(o_acc)
            e_acc, o_acc = 0.0, 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_cells:
            exp_cells[-1] += e_acc
            obs_cells[-1] += o_acc
        else:
            exp_cells.append(e_acc)
            obs_cells.append(o_acc)
    exp_cells, obs_cells = np.array(exp_cells), np.array(obs_cells)
    if exp_cells.size < 2:
        return 0.0, 1.0, 0
    stat = float(np.sum((obs_cells - exp_cells) ** 2 / exp_cells))
    df = exp_cells.size - 1
    return stat, float(stats.chi2.sf(stat, df)), df


def marginal_preservation_test(samples, reference, alpha: float = 0.01, seed=None) -> TestRecord:
    """Both blocks of every coordinate against its reference law L(X_i).

    ``reference`` is a list of frozen scipy distributions (or CDF callables
    for continuous laws).  Continuous laws use one-sample KS, discrete laws a
    chi-square test on the integer support.  The record passes when every
    coordinate passes at the Bonferroni level alpha / (2p); per-coordinate
    critical values at ``alpha`` are reported too.
    """
    z = _joint(samples)
    n, two_p = z.shape
    p = two_p // 2
    if len(reference) != p:
        raise InvalidInputError(f"need {p} reference laws, got {len(reference)}")
    level = alpha / two_p
    rows, ok = [], True
    for j in range(two_p):
        ref = reference[j % p]
        block = "X" if j < p else "XK"
        col = z[:, j]
        if _is_discrete(ref):
            stat, pval, df = _chi_square_discrete(col, ref)
            passed = pval >= level
            rows.append({"column": f"{block}{j % p + 1}", "kind": "chi-square", "statistic": stat,
                         "df": df, "p_value": pval, "pass": bool(passed)})
        else:
            cdf = ref.cdf if hasattr(ref, "cdf") else ref
            res = stats.kstest(col, cdf)
            crit = float(stats.kstwo.ppf(1.0 - alpha, n))
            crit_adj = float(stats.kstwo.ppf(1.0 - level, n))
            passed = res.statistic <= crit_adj
            rows.append({"column": f"{block}{j % p + 1}", "kind": "ks", "statistic": float(res.statistic),
                         "critical_value": crit, "bonferroni_critical_value": crit_adj,
                         "p_value": float(res.pvalue), "pass": bool(passed)})
        ok &= bool(passed)
    min_p = min(r["p_value"] for r in rows)
    return TestRecord("marginal_preservation", float(min_p), float(level), ok,
                      _seed_value(seed), n, p_value=float(min_p), details={"columns": rows})


def _seed_value(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def _loo_cov(da, db, s, n):
    """Leave-one-out sample covariances given centered columns and the full sum s."""
    return (s - n / (n - 1.0) * da * db) / (n - 2.0)


def covariance_consistency(samples, n_se: float = 4.0, seed=None) -> TestRecord:
    """|cov(X_i, X~_j) - cov(X_i, X_j)| <= n_se * SE for every i != j (jackknife SE).

    The diagonal i = j is reported without a gate: exchangeability does not
    constrain cov(X_i, X~_i).
    """
    z = _joint(samples)
    n, two_p = z.shape
    p = two_p // 2
    if n < MIN_COV_ROWS:
        raise InvalidInputError(f"covariance_consistency needs at least {MIN_COV_ROWS} rows, got {n}")
    dz = z - z.mean(axis=0)
    sums = dz.T @ dz
    pairs, diagonal = [], []
    worst_z, ok = 0.0, True
    for i in range(p):
        loo_x = _loo_cov(dz[:, i: i + 1], dz[:, :p], sums[i, :p], n)
        loo_k = _loo_cov(dz[:, i: i + 1], dz[:, p:], sums[i, p:], n)
        loo = loo_k - loo_x
        jack_mean = loo.mean(axis=0)
        se = np.sqrt((n - 1.0) / n * np.sum((loo - jack_mean) ** 2, axis=0))
        diff = (sums[i, p:] - sums[i, :p]) / (n - 1.0)
        for j in range(p):
            if i == j:
                diagonal.append({"i": i + 1, "cov_x_xk": float(sums[i, p + i] / (n - 1.0)),
                                 "var_x": float(sums[i, i] / (n - 1.0))})
                continue
            tol = n_se * se[j] + 1e-12 * max(1.0, abs(sums[i, j] / (n - 1.0)))
            passed = abs(diff[j]) <= tol
            zval = abs(diff[j]) / se[j] if se[j] > 0 else (0.0 if diff[j] == 0 else np.inf)
            worst_z = max(worst_z, float(zval))
            ok &= bool(passed)
            pairs.append({"i": i + 1, "j": j + 1, "difference": float(diff[j]), "se": float(se[j]),
                          "pass": bool(passed)})
    return TestRecord("covariance_consistency", worst_z, n_se, ok, _seed_value(seed), n,
                      details={"pairs": pairs, "diagonal_ungated": diagonal})


def energy_record(samples, S: SwapSet, alpha: float = 0.05, n_permutations: int = 200, seed=None) -> TestRecord:
    pval, stat = swap_test_energy(samples, S, n_permutations, seed)
    return TestRecord(f"swap_energy_S={sorted(S.members)}", stat, alpha, pval >= alpha,
                      _seed_value(seed), int(np.asarray(samples).shape[0]), p_value=pval,
                      details={"swap": sorted(S.members), "n_permutations": n_permutations})


def run_diagnostics(
    samples,
    reference=None,
    alpha: float = 0.05,
    n_permutations: int = 200,
    seed=None,
    swaps: str = "singletons",
) -> DiagnosticsReport:
    """Energy swap tests (each singleton S, plus the full swap), marginals, covariances."""
    z = _joint(samples)
    p = z.shape[1] // 2
    sets = [SwapSet(p, {i}) for i in range(1, p + 1)]
    if swaps == "singletons+full" and p > 1:
        sets.append(SwapSet(p, set(range(1, p + 1))))
    elif swaps not in ("singletons", "singletons+full"):
        raise InvalidInputError(f"unknown swap selection {swaps!r}")
    report = DiagnosticsReport()
    base = make_rng(seed).integers(0, 2**63, size=len(sets))
    for S, s in zip(sets, base):
        rec = energy_record(z, S, alpha, n_permutations, int(s))
        rec.seed = _seed_value(seed)
        report.records.append(rec)
    if reference is not None:
        report.records.append(marginal_preservation_test(z, reference, alpha=alpha, seed=seed))
    if z.shape[0] >= MIN_COV_ROWS:
        report.records.append(covariance_consistency(z, seed=seed))
    return report


__all__ = [
    "TestRecord",
    "DiagnosticsReport",
    "swap_test_energy",
    "swap_test_exact_pmf",
    "marginal_preservation_test",
    "covariance_consistency",
    "energy_record",
    "run_diagnostics",
]
