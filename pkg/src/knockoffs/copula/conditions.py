"""Derivative-sign conditions that make Archimedean constructions valid.

* ``check_generator_conditions``: (-1)^k psi^(k) >= 0 for k = 1..order, which
  makes psi(sum psi^-1(u_i)) a copula in dimension ``order``.
* ``check_nested_condition``: additionally (-1)^(k-1) (psi^-1 o psi_i)^(k) >= 0,
  the nesting condition for pair copulas with their own generator.

Signs come from closed forms when the generator declares them; otherwise from
central finite differences with Richardson extrapolation, evaluated in mpmath
at high precision when the generator provides mpmath versions.  A sign is
"inconclusive" whenever two step sizes disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import mpmath
import numpy as np

from .generators import ArchimedeanGenerator, validate_generator

DEFAULT_T_GRID = tuple(np.logspace(-2, 2, 25))
MP_DPS = 80
MP_ZERO_TOL = 1e-20
STEP = 1e-2

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def _central_diff(f, t, k, h):
    half = k / 2
    total = 0
    for j in range(k + 1):
        total += (-1) ** j * comb(k, j) * f(t + (half - j) * h)
    return total / h**k


def _richardson(f, t, k, h):
    return (4 * _central_diff(f, t, k, h / 2) - _central_diff(f, t, k, h)) / 3


def derivative_sign(f, t: float, k: int, *, use_mp: bool = True, step: float = STEP):
    """Sign of f^(k)(t) as +1, -1, 0 (numerically zero) or None (inconclusive).

    Returns ``(sign, estimate)``.  ``f`` takes an mpmath number when
    ``use_mp`` is true and a float otherwise.
    """
    if use_mp:
        with mpmath.workdps(MP_DPS):
            tt = mpmath.mpf(t)
            h = mpmath.mpf(step) * tt
            r1 = _richardson(f, tt, k, h)
            r2 = _richardson(f, tt, k, h / 2)
            zero_tol = MP_ZERO_TOL
            est = float(r2)
            r1, r2 = float(r1), float(r2)
    else:
        h = step * t
        r1 = float(_richardson(f, t, k, h))
        r2 = float(_richardson(f, t, k, h / 2))
        # roundoff of a k-th difference is about eps * 2^k / h^k
        zero_tol = 1e3 * np.finfo(float).eps * 2.0**k / (h / 4) ** k
        est = r2
    if abs(r1) <= zero_tol and abs(r2) <= zero_tol:
        return 0, est
    if abs(r1) <= zero_tol or abs(r2) <= zero_tol or np.sign(r1) != np.sign(r2):
        return None, est
    return int(np.sign(r2)), est


@dataclass
class SignCheck:
    """Outcome of checking that a family of derivative signs holds on a grid."""

    condition: str
    status: str
    method: str
    order: int
    violations: list = field(default_factory=list)
    inconclusive: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "status": self.status,
            "method": self.method,
            "order": self.order,
            "violations": [{"k": k, "t": t, "value": v} for k, t, v in self.violations],
            "inconclusive": [{"k": k, "t": t, "value": v} for k, t, v in self.inconclusive],
        }


def _grid_check(condition, f, required_sign, order, t_grid, use_mp, k_start=1):
    violations, unsure = [], []
    for k in range(k_start, order + 1):
        want = required_sign(k)
        for t in t_grid:
            sign, est = derivative_sign(f, float(t), k, use_mp=use_mp)
            if sign is None:
                unsure.append((k, float(t), est))
            elif sign != 0 and sign != want:
                violations.append((k, float(t), est))
    status = FAIL if violations else (INCONCLUSIVE if unsure else PASS)
    method = "finite-difference-mp" if use_mp else "finite-difference"
    return SignCheck(condition, status, method, order, violations, unsure)


def _mp_or_float(gen: ArchimedeanGenerator, which="psi"):
    mp_fn = gen.psi_mp if which == "psi" else gen.psi_inv_mp
    probe = mp_fn(mpmath.mpf("0.5"))
    if probe is not None:
        return mp_fn, True
    np_fn = gen.psi if which == "psi" else gen.psi_inv
    return (lambda s: float(np_fn(float(s)))), False


def check_generator_conditions(
    gen: ArchimedeanGenerator,
    order: int = 8,
    t_grid=DEFAULT_T_GRID,
    method: str = "auto",
) -> SignCheck:
    """(-1)^k psi^(k) >= 0 for k = 1..order on ``t_grid``.

    ``method="auto"`` uses the generator's declared closed-form signs when it
    has them for every order, finite differences otherwise.
    """
    validate_generator(gen, t_grid)
    condition = f"(-1)^k psi^(k) >= 0, k=1..{order}"
    if method in ("auto", "closed-form"):
        signs = [gen.derivative_sign(k) for k in range(1, order + 1)]
        if all(s is not None for s in signs):
            bad = [(k, None, None) for k, s in zip(range(1, order + 1), signs) if s != (-1) ** k]
            return SignCheck(condition, FAIL if bad else PASS, "closed-form", order, bad)
        if method == "closed-form":
            return SignCheck(condition, INCONCLUSIVE, "closed-form", order)
    f, use_mp = _mp_or_float(gen, "psi")
    return _grid_check(condition, f, lambda k: (-1) ** k, order, t_grid, use_mp)


@dataclass
class NestedReport:
    status: str
    generator_check: SignCheck
    composition_check: SignCheck
    family_rule: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "generator_condition": self.generator_check.to_dict(),
            "composition_condition": self.composition_check.to_dict(),
        }
        if self.family_rule is not None:
            out["family_rule"] = self.family_rule
        return out


def check_nested_condition(
    psi_outer: ArchimedeanGenerator,
    psi_inner: ArchimedeanGenerator,
    order: int = 8,
    t_grid=DEFAULT_T_GRID,
) -> NestedReport:
    """Both inequalities for a pair copula with generator ``psi_inner`` inside
    a copula with generator ``psi_outer``."""
    validate_generator(psi_outer, t_grid)
    inner = check_generator_conditions(psi_inner, order, t_grid, method="numeric")
    inv, mp_inv = _mp_or_float(psi_outer, "inv")
    inn, mp_inn = _mp_or_float(psi_inner, "psi")
    use_mp = mp_inv and mp_inn
    if use_mp:
        comp = lambda s: inv(inn(s))  # noqa: E731
    else:
        comp = lambda s: float(psi_outer.psi_inv(psi_inner.psi(float(s))))  # noqa: E731
    composition = _grid_check(
        f"(-1)^(k-1) (psi^-1 o psi_i)^(k) >= 0, k=1..{order}",
        comp,
        lambda k: (-1) ** (k - 1),
        order,
        t_grid,
        use_mp,
    )
    statuses = {inner.status, composition.status}
    status = FAIL if FAIL in statuses else (INCONCLUSIVE if INCONCLUSIVE in statuses else PASS)
    rule = None
    if type(psi_outer) is type(psi_inner) and psi_outer.name in ("clayton", "gumbel"):
        rule = {
            "rule": "inner theta >= outer theta",
            "outer_theta": psi_outer.theta,
            "inner_theta": psi_inner.theta,
            "satisfied": bool(psi_inner.theta >= psi_outer.theta),
        }
    return NestedReport(status, inner, composition, rule)
