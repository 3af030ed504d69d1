"""Command-line entry point.

    knockoffs sample        --config run.json --out draws.csv
    knockoffs diagnose      --config run.json --out report.json
    knockoffs check-copula  --config run.json --out report.json
    knockoffs filter-sim    --config run.json --out fdr.json   (also writes fdr.csv)
    knockoffs tv-decay      --config run.json --out tv.json

Exit status: 0 success, 1 invalid config or input, 2 a mandatory check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import diagnostics, discretization, filter_sim, gaussian, mixture
from .config import (
    COMMANDS,
    ConfigError,
    DiscretizedModel,
    SymmetrizedGaussian,
    build_config,
    build_model,
    load_json,
    parse_seed,
)
from .copula import (
    Archimedean,
    CopulaModelSpec,
    check_generator_conditions,
    check_nested_condition,
    rectangle_volume_check,
)
from .copula import frailty
from .errors import KnockoffError, UnsupportedModelError
from .swap_group import sample_symmetrized

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1; status 2 is reserved for failed checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def model_p(model) -> int:
    if isinstance(model, DiscretizedModel):
        return model_p(model.base)
    return int(model.p)


def x_sampler(model):
    """``draw(n, rng)`` returning rows of X for models that define L(X)."""
    if isinstance(model, gaussian.GaussianModel):
        return lambda n, rng: gaussian.sample_x(model, n, rng)
    if isinstance(model, CopulaModelSpec):
        return lambda n, rng: frailty.sample_x(model, n, rng)
    if isinstance(model, mixture.ConjugateFamily):
        return lambda n, rng: mixture.sample_x(model, n, rng)
    if isinstance(model, SymmetrizedGaussian):
        joint = joint_sampler(model)
        return lambda n, rng: joint(n, rng)[:, : model.p]
    raise UnsupportedModelError(f"no sampler for X under {type(model).__name__}")


def joint_sampler(model):
    """``draw(n, rng)`` returning rows of (X, X~): X first, then X~ | X."""
    if isinstance(model, gaussian.GaussianModel):
        def draw(n, rng):
            x = gaussian.sample_x(model, n, rng)
            return np.hstack([x, gaussian.conditional_knockoff(model, x, rng)])
        return draw
    if isinstance(model, CopulaModelSpec):
        def draw(n, rng):
            x = frailty.sample_x(model, n, rng)
            return np.hstack([x, frailty.sample_knockoff_frailty(model, x, rng)])
        return draw
    if isinstance(model, mixture.ConjugateFamily):
        def draw(n, rng):
            x = mixture.sample_x(model, n, rng)
            return np.hstack([x, mixture.sample_knockoff(model, x, rng)])
        return draw
    if isinstance(model, DiscretizedModel):
        base = x_sampler(model.base)
        return lambda n, rng: discretization.sample_discretized_pair(base(n, rng), model.level, rng)
    if isinstance(model, SymmetrizedGaussian):
        def draw_pi(n, rng):
            return rng.multivariate_normal(model.mean, model.cov, size=n, method="eigh")
        return lambda n, rng: sample_symmetrized(draw_pi, n, model.p, rng)
    raise UnsupportedModelError(f"no knockoff sampler for {type(model).__name__}")


def reference_marginals(model):
    if isinstance(model, gaussian.GaussianModel):
        mean = model.mean if model.mean is not None else np.zeros(model.p)
        return [stats.norm(m, s) for m, s in zip(mean, np.sqrt(np.diag(model.sigma)))]
    if isinstance(model, CopulaModelSpec):
        return list(model.marginals)
    if isinstance(model, mixture.ConjugateFamily):
        return model.marginal_distributions()
    return None


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    Path(path).write_text(text)


def write_matrix_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue())


def joint_header(p):
    return [f"X{i}" for i in range(1, p + 1)] + [f"XK{i}" for i in range(1, p + 1)]


def read_joint_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("input", f"{path} is empty") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ConfigError("input", f"{path}:{line_no}: non-numeric value") from None
    if len(header) % 2 or any(len(r) != len(header) for r in rows):
        raise ConfigError("input", f"{path}: expected an even number of columns in every row")
    return np.array(rows, dtype=float).reshape(len(rows), len(header))


# commands

def cmd_sample(cfg, model, log):
    rng = np.random.default_rng(cfg.seed)
    z = joint_sampler(model)(cfg.n, rng)
    p = model_p(model)
    if cfg.format == "csv":
        write_matrix_csv(cfg.out, joint_header(p), z)
    else:
        write_json(cfg.out, {"config": cfg.resolved(), "columns": joint_header(p), "rows": z})
    log(f"wrote {z.shape[0]} rows x {z.shape[1]} columns to {cfg.out}")
    return EXIT_OK


def cmd_diagnose(cfg, model, log):
    draw_seed, test_seed = np.random.SeedSequence(cfg.seed).generate_state(2, dtype=np.uint64)
    if cfg.input is not None:
        z = read_joint_csv(cfg.input)
    else:
        z = joint_sampler(model)(cfg.n, np.random.default_rng(int(draw_seed)))
    ref = reference_marginals(model) if model is not None else None
    d = cfg.sections["diagnose"]
    report = diagnostics.run_diagnostics(z, ref, alpha=d["alpha"], n_permutations=d["n_permutations"],
                                         seed=int(test_seed), swaps=d["swaps"])
    for rec in report.records:
        rec.seed = cfg.seed
    out = report.to_dict()
    out["config"] = cfg.resolved()
    write_json(cfg.out, out)
    log(f"diagnostics {'passed' if report.passed else 'FAILED'}; report at {cfg.out}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_check_copula(cfg, model, log):
    if not isinstance(model, CopulaModelSpec):
        raise ConfigError("model.type", "check-copula needs an 'archimedean' or 'copula' model")
    c = cfg.sections["check"]
    order = c["order"] or 2 * model.p
    out = {"config": cfg.resolved(), "generator_conditions": [], "nested_conditions": []}
    failed = False
    seen = []
    for name, cop in [("C", model.C)] + [(f"D{i + 1}", d) for i, d in enumerate(model.D)]:
        if isinstance(cop, Archimedean) and not any(cop.generator.same_as(g) for g in seen):
            seen.append(cop.generator)
            chk = check_generator_conditions(cop.generator, order)
            out["generator_conditions"].append({"copula": name, "generator": cop.generator.params(),
                                                **chk.to_dict()})
            failed |= chk.status == "fail"
    if isinstance(model.C, Archimedean):
        for i, d in enumerate(model.D):
            if isinstance(d, Archimedean) and not d.generator.same_as(model.C.generator):
                rep = check_nested_condition(model.C.generator, d.generator, order)
                out["nested_conditions"].append({"pair": i + 1, **rep.to_dict()})
                failed |= rep.status == "fail"
    vol = rectangle_volume_check(model, c["grid_resolution"], c["tol"])
    gen = model.common_generator()
    if gen is not None:
        vol.validity_gate = "common-generator"
    out["rectangle_volume"] = vol.to_dict()
    failed |= not vol.passed
    out["pass"] = not failed
    write_json(cfg.out, out)
    log(f"copula checks {'passed' if not failed else 'FAILED'}; min cell volume {vol.min_volume:.3e}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _method_name(model):
    if isinstance(model, gaussian.GaussianModel):
        return "gaussian"
    if isinstance(model, mixture.ConjugateFamily):
        return "mixture"
    if isinstance(model, CopulaModelSpec):
        return "archimedean"
    raise UnsupportedModelError(f"filter-sim does not support {type(model).__name__}")


def cmd_filter_sim(cfg, model, log):
    f = cfg.sections["filter"]
    method = f["method"] or _method_name(model)
    beta_seed, sim_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    p = model_p(model)
    if f["k"] > p:
        raise ConfigError("filter.k", f"more nonnulls than variables ({f['k']} > {p})")
    scenario = filter_sim.RegressionScenario.with_signals(
        f["n_obs"], p, f["k"], f["amplitude"], f["noise_sd"], model, f["q"], f["plus"],
        seed=np.random.default_rng(beta_seed),
    )
    rep = filter_sim.fdr_simulation(scenario, method, f["n_reps"], sim_seed)
    out = rep.to_dict()
    out["nonnull_set"] = (scenario.nonnull_set + 1).tolist()
    out["config"] = cfg.resolved()
    write_json(cfg.out, out)
    csv_path = Path(cfg.out).with_suffix(".csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n_reps", "q", "plus", "fdr", "fdr_se", "power", "power_se", "mean_selected"])
    w.writerow([rep.method, rep.n_reps, repr(rep.q), int(rep.plus), repr(rep.fdr), repr(rep.fdr_se),
                repr(rep.power), repr(rep.power_se), repr(rep.mean_selected)])
    csv_path.write_text(buf.getvalue())
    log(f"FDR {rep.fdr:.4f} +- {rep.fdr_se:.4f}, power {rep.power:.4f}; wrote {cfg.out} and {csv_path}")
    return EXIT_OK


def cmd_tv_decay(cfg, model, log):
    t = cfg.sections["tv"]
    draw_seed, tv_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    base = model.base if isinstance(model, DiscretizedModel) else model
    x = x_sampler(base)(cfg.n, np.random.default_rng(draw_seed))
    bounds = None
    if t["bounds"] is not None:
        bounds = np.asarray(t["bounds"], dtype=float)
        if bounds.shape != (x.shape[1], 2):
            raise ConfigError("tv.bounds", f"must be {x.shape[1]} (lo, hi) pairs")
    rows = discretization.tv_decay(x, t["levels"], t["bins"], bounds, t["n_boot"], np.random.default_rng(tv_seed))
    table = [r.to_dict() for r in rows]
    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "tv", "bootstrap_se", "max_abs_x_minus_knockoff"])
        for r in rows:
            w.writerow([r.n, repr(r.tv), repr(r.se), repr(r.max_cell_gap)])
        Path(cfg.out).write_text(buf.getvalue())
    else:
        write_json(cfg.out, {"config": cfg.resolved(), "table": table})
    log("\n".join(f"n={r.n:>5}  tv={r.tv:.5f}  se={r.se:.5f}" for r in rows))
    return EXIT_OK


HANDLERS = {
    "sample": cmd_sample,
    "diagnose": cmd_diagnose,
    "check-copula": cmd_check_copula,
    "filter-sim": cmd_filter_sim,
    "tv-decay": cmd_tv_decay,
}


def _seed_arg(text):
    try:
        return parse_seed(int(text), "--seed")
    except (ValueError, ConfigError):
        raise argparse.ArgumentTypeError(f"not an unsigned 64-bit integer: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="knockoffs", description="Knockoff construction, checks and simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=_seed_arg, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=None, help="output path (overrides the config)")
        sp.add_argument("--quiet", action="store_true")
    return parser


def run(command, config_path, seed=None, out=None, quiet=False) -> int:
    def log(msg):
        if not quiet:
            print(msg)

    try:
        data = load_json(config_path)
        cfg = build_config(data, command, seed, out)
        if cfg.out is None:
            raise ConfigError("out", "required (in the config or via --out)")
        model = build_model(cfg.model) if cfg.model is not None else None
        return HANDLERS[command](cfg, model, log)
    except (ConfigError, KnockoffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.seed, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
