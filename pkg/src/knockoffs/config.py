"""JSON run configuration and model construction for the command line.

A config file holds one object.  ``model`` is a tagged union on ``type``:

    gaussian            sigma | ar1+p, optional d, mean
    archimedean         generator, theta, p, optional marginals
    copula              C, D (list of 2-copula descriptors), optional marginals
    conjugate-mixture   family plus its hyperparameters (arrays or scalars + p)
    discretized         base (another model), level
    symmetrized-density mean, cov of a Gaussian law pi on R^{2p}

Errors raise ConfigError naming the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import DEFAULT_SEED
from .errors import ConfigError, KnockoffError

COMMANDS = ("sample", "diagnose", "check-copula", "filter-sim", "tv-decay")
MODEL_TYPES = ("gaussian", "archimedean", "copula", "conjugate-mixture", "discretized", "symmetrized-density")
TOP_LEVEL_KEYS = {"command", "model", "n", "seed", "out", "format", "diagnose", "filter", "tv", "check", "input"}

SECTION_DEFAULTS = {
    "diagnose": {"alpha": 0.05, "n_permutations": 200, "swaps": "singletons"},
    "filter": {"n_obs": 300, "k": 10, "amplitude": 0.5, "noise_sd": 1.0, "q": 0.2, "plus": True, "n_reps": 100,
               "method": None},
    "tv": {"levels": [2, 4, 8, 16, 32, 64], "bins": 20, "bounds": None, "n_boot": 50},
    "check": {"grid_resolution": 8, "order": None, "tol": 1e-10},
}


@dataclass
class RunConfig:
    command: str
    model: dict
    n: int = 1000
    seed: int = DEFAULT_SEED
    out: str | None = None
    format: str = "csv"
    input: str | None = None
    sections: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Everything that determines the output, for embedding in reports."""
        out = {"command": self.command, "model": self.model, "n": self.n, "seed": self.seed, "format": self.format}
        if self.input is not None:
            out["input"] = self.input
        out.update(self.sections)
        return out


def load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(None, f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(None, f"{path}: top level must be a JSON object")
    return data


def _int(value, name, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(name, f"expected an integer, got {value!r}")
    value = int(value)
    if lo is not None and value < lo:
        raise ConfigError(name, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(name, f"must be <= {hi}, got {value}")
    return value


def _num(value, name, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(name, f"must be positive, got {value}")
    return float(value)


def parse_seed(value, name="seed") -> int:
    return _int(value, name, 0, 2**64 - 1)


def build_config(data: dict, command: str, seed_override=None, out_override=None) -> RunConfig:
    unknown = sorted(set(data) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(unknown[0], f"unknown field (allowed: {sorted(TOP_LEVEL_KEYS)})")
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {list(COMMANDS)}")
    if "command" in data and data["command"] != command:
        raise ConfigError("command", f"config says {data['command']!r} but {command!r} was requested")
    if "model" not in data and not (command == "diagnose" and "input" in data):
        raise ConfigError("model", "required")
    model = data.get("model")
    if model is not None:
        validate_model(model, "model")
    n = _int(data.get("n", 1000), "n", 1)
    seed = parse_seed(seed_override if seed_override is not None else data.get("seed", DEFAULT_SEED))
    fmt = data.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format", "must be 'csv' or 'json'")
    sections = {}
    for key, defaults in SECTION_DEFAULTS.items():
        given = data.get(key, {})
        if not isinstance(given, dict):
            raise ConfigError(key, "must be an object")
        extra = sorted(set(given) - set(defaults))
        if extra:
            raise ConfigError(f"{key}.{extra[0]}", f"unknown field (allowed: {sorted(defaults)})")
        merged = dict(defaults)
        merged.update(given)
        sections[key] = merged
    _validate_sections(sections)
    out = out_override if out_override is not None else data.get("out")
    return RunConfig(command, model, n, seed, out, fmt, data.get("input"), sections)


def _validate_sections(s):
    d = s["diagnose"]
    if not 0 < _num(d["alpha"], "diagnose.alpha") < 1:
        raise ConfigError("diagnose.alpha", "must lie in (0, 1)")
    _int(d["n_permutations"], "diagnose.n_permutations", 1)
    if d["swaps"] not in ("singletons", "singletons+full"):
        raise ConfigError("diagnose.swaps", "must be 'singletons' or 'singletons+full'")
    f = s["filter"]
    _int(f["n_obs"], "filter.n_obs", 3)
    _int(f["k"], "filter.k", 0)
    _int(f["n_reps"], "filter.n_reps", 1)
    _num(f["amplitude"], "filter.amplitude")
    _num(f["noise_sd"], "filter.noise_sd", positive=True)
    if not 0 < _num(f["q"], "filter.q") < 1:
        raise ConfigError("filter.q", "must lie in (0, 1)")
    if not isinstance(f["plus"], bool):
        raise ConfigError("filter.plus", "must be true or false")
    t = s["tv"]
    if not isinstance(t["levels"], list) or not t["levels"]:
        raise ConfigError("tv.levels", "must be a nonempty list of integers")
    for i, lv in enumerate(t["levels"]):
        _int(lv, f"tv.levels[{i}]", 1)
    _int(t["bins"], "tv.bins", 1)
    _int(t["n_boot"], "tv.n_boot", 2)
    c = s["check"]
    _int(c["grid_resolution"], "check.grid_resolution", 1)
    if c["order"] is not None:
        _int(c["order"], "check.order", 1)
    _num(c["tol"], "check.tol", positive=True)


def _array(value, name, ndim=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(name, "must be numeric") from None
    if ndim is not None and arr.ndim != ndim:
        raise ConfigError(name, f"expected a {ndim}-dimensional array")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(name, "must be finite")
    return arr


def _require(desc, key, where):
    if key not in desc:
        raise ConfigError(f"{where}.{key}", "required")
    return desc[key]


def validate_model(desc, where="model"):
    """Structural checks only; numerical validity is checked by ``build_model``."""
    if not isinstance(desc, dict):
        raise ConfigError(where, "must be an object")
    kind = desc.get("type")
    if kind not in MODEL_TYPES:
        raise ConfigError(f"{where}.type", f"must be one of {list(MODEL_TYPES)}, got {kind!r}")
    if kind == "gaussian":
        if "sigma" not in desc and "ar1" not in desc:
            raise ConfigError(f"{where}.sigma", "required (or give ar1 and p)")
        if "ar1" in desc:
            _require(desc, "p", where)
    elif kind == "archimedean":
        for key in ("generator", "theta", "p"):
            _require(desc, key, where)
    elif kind == "copula":
        _require(desc, "C", where)
        if not isinstance(_require(desc, "D", where), list):
            raise ConfigError(f"{where}.D", "must be a list of pair-copula descriptors")
    elif kind == "conjugate-mixture":
        _require(desc, "family", where)
    elif kind == "discretized":
        _require(desc, "level", where)
        validate_model(_require(desc, "base", where), f"{where}.base")
    elif kind == "symmetrized-density":
        _require(desc, "mean", where)
        _require(desc, "cov", where)


def _marginals(desc, p, where):
    from .copula import make_marginal

    margs = desc.get("marginals")
    if margs is None:
        return ()
    if not isinstance(margs, list) or len(margs) != p:
        raise ConfigError(f"{where}.marginals", f"must be a list of {p} descriptors")
    out = []
    for i, m in enumerate(margs):
        try:
            out.append(make_marginal(m))
        except KnockoffError as exc:
            raise ConfigError(f"{where}.marginals[{i}]", str(exc)) from None
    return tuple(out)


def build_model(desc: dict, where="model"):
    """Turn a validated model descriptor into a library object."""
    from . import gaussian, mixture
    from .copula import Archimedean, CopulaModelSpec, make_generator

    validate_model(desc, where)
    kind = desc["type"]
    try:
        if kind == "gaussian":
            if "ar1" in desc:
                p = _int(desc["p"], f"{where}.p", 1)
                rho = _num(desc["ar1"], f"{where}.ar1")
                idx = np.arange(p)
                sigma = rho ** np.abs(np.subtract.outer(idx, idx))
            else:
                sigma = _array(desc["sigma"], f"{where}.sigma", 2)
            d = _array(desc["d"], f"{where}.d", 1) if desc.get("d") is not None else None
            mean = _array(desc["mean"], f"{where}.mean", 1) if desc.get("mean") is not None else None
            return gaussian.assemble_joint(sigma, d, mean)
        if kind == "archimedean":
            p = _int(desc["p"], f"{where}.p", 1)
            gen = make_generator(str(desc["generator"]), _num(desc["theta"], f"{where}.theta"))
            return CopulaModelSpec(Archimedean(gen, p), tuple(Archimedean(gen, 2) for _ in range(p)),
                                   _marginals(desc, p, where))
        if kind == "copula":
            p = len(desc["D"])
            if p < 1:
                raise ConfigError(f"{where}.D", "needs at least one pair copula")
            C = _copula(desc["C"], p, f"{where}.C")
            D = tuple(_copula(dd, 2, f"{where}.D[{i}]") for i, dd in enumerate(desc["D"]))
            return CopulaModelSpec(C, D, _marginals(desc, p, where))
        if kind == "conjugate-mixture":
            params = {k: v for k, v in desc.items() if k not in ("type", "family")}
            for k, v in params.items():
                if k != "p":
                    params[k] = _array(v, f"{where}.{k}")
            if "p" in params:
                params["p"] = _int(params["p"], f"{where}.p", 1)
            return mixture.make_family(str(desc["family"]), **params)
        if kind == "discretized":
            base = build_model(desc["base"], f"{where}.base")
            return DiscretizedModel(base, _int(desc["level"], f"{where}.level", 1))
        if kind == "symmetrized-density":
            mean = _array(desc["mean"], f"{where}.mean", 1)
            cov = _array(desc["cov"], f"{where}.cov", 2)
            if mean.size % 2 or cov.shape != (mean.size, mean.size):
                raise ConfigError(where, "mean must have even length 2p and cov shape 2p x 2p")
            if np.min(np.linalg.eigvalsh((cov + cov.T) / 2)) < -1e-10:
                raise ConfigError(f"{where}.cov", "must be positive semidefinite")
            return SymmetrizedGaussian(mean, cov)
    except ConfigError:
        raise
    except KnockoffError as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.type", f"unsupported model type {kind!r}")


def _copula(desc, dim, where):
    from .copula import make_copula

    try:
        return make_copula(desc, dim)
    except KnockoffError as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass(frozen=True)
class DiscretizedModel:
    base: object
    level: int


@dataclass(frozen=True)
class SymmetrizedGaussian:
    """pi = N(mean, cov) on R^{2p}; the knockoff law is its F-symmetrization."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def p(self) -> int:
        return self.mean.size // 2
