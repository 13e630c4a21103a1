"""Experiment runner: JSON configuration in, JSON summary and CSV data out.

Experiments are archival artifacts: the configuration is a single JSON
document, outputs embed its hash and the seed, and reruns with the same
configuration are byte-identical (no timestamps are written).  Execution
details (output directory, worker count, verbosity) are excluded from the
hash so they cannot change the recorded provenance.

Exit codes: 0 success / all verdicts pass, 1 verdict failure,
2 usage or configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, DivergenceError, EstimationError,
                     HypothesisError, NumericsError, QuadratureError)
from .dirichlet import solve_at
from .eigen import estimate_lambda, eigen_identity_residual, faber_krahn_compare
from .fields import FieldExpr
from .geometry import DOMAIN_SHAPES, domain_from_spec, interior_lattice
from .grid import (assemble, narrow_domain_threshold, principal_eigenpair,
                   solve_dirichlet, solve_semilinear, symmetry_check)
from .kernels import KERNEL_FAMILIES, kernel_from_spec
from .paths import PathConfig, survival_curve

EXPERIMENT_KINDS = ("solve", "eigen", "faber-krahn", "survival", "cross-validate",
                    "validate-kernel", "narrow-domain", "symmetry")

_EXECUTION_KEYS = ("output_dir", "workers", "quiet")

_REQUIRED = {
    "solve": ("kernel", "domain", "n_paths", "dt", "t_max"),
    "eigen": ("kernel", "domain", "n_paths", "dt", "t_max"),
    "faber-krahn": ("kernel", "domain", "n_paths", "dt", "t_max"),
    "survival": ("kernel", "domain", "n_paths", "dt", "t_max"),
    "cross-validate": ("kernel", "domain", "n_paths", "dt", "t_max", "h"),
    "validate-kernel": ("kernel",),
    "narrow-domain": ("h",),
    "symmetry": ("kernel", "domain", "h"),
}


def config_hash(config: dict) -> str:
    semantic = {k: v for k, v in config.items() if k not in _EXECUTION_KEYS}
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def validate_config(config: dict) -> None:
    if not isinstance(config, dict):
        raise ConfigError("configuration must be a JSON object")
    kind = config.get("kind")
    if kind is None:
        raise ConfigError("missing required field 'kind'")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; "
                          f"choose from {EXPERIMENT_KINDS}")
    for field in _REQUIRED[kind]:
        if field not in config:
            raise ConfigError(f"missing required field {field!r} for kind {kind!r}")
    try:
        if "kernel" in config:
            kernel_from_spec(config["kernel"])
        if "domain" in config:
            domain_from_spec(config["domain"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid kernel/domain spec: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return repr(obj)
    return obj


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating))
                              else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _path_config(config: dict, seed: int) -> PathConfig:
    return PathConfig(dt=float(config["dt"]), t_max=float(config["t_max"]),
                      base_seed=seed, epsilon=config.get("epsilon"),
                      small_jump_mode=config.get("small_jump_mode", "gaussian-approx"),
                      bridge_correction=bool(config.get("bridge_correction", True)))


def _hypothesis_flags(domain) -> dict:
    ok = domain.has_exterior_sphere
    return {"exterior_sphere": ok,
            "label": "ok" if ok else "hypothesis-extended (corners violate the "
                                     "uniform exterior sphere condition)"}


def _curve_rows(curve):
    return list(zip(curve.t, curve.s_hat, curve.ci_lo, curve.ci_hi))


def _default_t_grid(config):
    if "t_grid" in config:
        return np.asarray(config["t_grid"], dtype=float)
    return np.linspace(float(config["t_max"]) / 160.0, float(config["t_max"]), 160)


def run(config: dict, output_dir: str, seed: int | None = None,
        quiet: bool = False) -> int:
    """Execute one experiment; returns the process exit code."""
    validate_config(config)
    kind = config["kind"]
    if seed is not None:
        config = dict(config)
        config["seed"] = int(seed)
    seed_val = int(config.get("seed", 0))
    workers = int(config.get("workers", 1))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "kind": kind,
        "config": {k: v for k, v in config.items() if k not in _EXECUTION_KEYS},
        "config_hash": config_hash(config),
        "seed": seed_val,
        "package_version": __version__,
    }
    verdicts: dict = {}
    try:
        runner = _RUNNERS[kind]
        runner(config, seed_val, workers, out, summary, verdicts)
    except (ConfigError, HypothesisError) as exc:
        if not quiet:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, EstimationError, DivergenceError, QuadratureError) as exc:
        if not quiet:
            print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    summary["verdicts"] = verdicts
    _write_json(out / "summary.json", summary)
    if not quiet:
        for name, ok in verdicts.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        print(f"wrote {out / 'summary.json'}")
    return 0 if all(verdicts.values()) else 1


# -- per-kind runners --------------------------------------------------------

def _field(config, key, dim, default="0"):
    return FieldExpr(config.get(key, default), dim)


def _run_solve(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    cfg = _path_config(config, seed)
    d = domain.dimension
    f = _field(config, "f", d)
    g = _field(config, "g", d)
    if "x0" in config:
        starts = np.atleast_2d(np.asarray(config["x0"], dtype=float))
    else:
        starts = np.atleast_2d(domain.centroid())
    n_paths = int(config["n_paths"])
    rows = []
    results = []
    for i, x0 in enumerate(starts):
        est = solve_at(domain, f, g, x0, kernel, n_paths, cfg, workers=workers,
                       start_index=i * n_paths)
        rows.append(list(x0) + [est.mean, est.std_error, est.censored_count])
        results.append({"x0": list(x0), "mean": est.mean, "std_error": est.std_error,
                        "ci95": list(est.ci95), "n_effective": est.n_effective,
                        "censored_count": est.censored_count,
                        "censor_bias_bound": est.censor_bias_bound})
    coords = [f"x{k + 1}" for k in range(d)]
    _write_csv(out / "solve.csv", coords + ["mean", "std_error", "censored_count"], rows)
    summary["estimates"] = results
    summary["hypothesis_flags"] = _hypothesis_flags(domain)


def _run_eigen(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    cfg = _path_config(config, seed)
    est = estimate_lambda(domain, kernel, x0=config.get("x0"),
                          n_paths=int(config["n_paths"]), config=cfg,
                          t_grid=_default_t_grid(config), workers=workers)
    _write_csv(out / "survival.csv", ["t", "s_hat", "ci_lo", "ci_hi"],
               _curve_rows(est.curve))
    summary["lambda_hat"] = est.lambda_hat
    summary["ci95"] = list(est.ci95)
    summary["fit_window"] = list(est.fit_window)
    summary["fit_r2"] = est.fit_r2
    summary["diagnostics"] = est.diagnostics
    summary["hypothesis_flags"] = _hypothesis_flags(domain)
    verdicts["lambda_positive"] = est.lambda_hat > 0.0


def _run_faber_krahn(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    cfg = _path_config(config, seed)
    res = faber_krahn_compare(domain, kernel, int(config["n_paths"]), cfg,
                              workers=workers)
    _write_csv(out / "survival_domain.csv", ["t", "s_hat", "ci_lo", "ci_hi"],
               _curve_rows(res.lambda_domain.curve))
    _write_csv(out / "survival_ball.csv", ["t", "s_hat", "ci_lo", "ci_hi"],
               _curve_rows(res.lambda_ball.curve))
    summary["lambda_D"] = res.lambda_domain.lambda_hat
    summary["lambda_D_ci95"] = list(res.lambda_domain.ci95)
    summary["lambda_B"] = res.lambda_ball.lambda_hat
    summary["lambda_B_ci95"] = list(res.lambda_ball.ci95)
    summary["ball_radius"] = res.ball.radius
    summary["hypothesis_flags"] = _hypothesis_flags(domain)
    verdicts["ball_minimizes_lambda"] = res.passed


def _run_survival(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    cfg = _path_config(config, seed)
    x0 = np.asarray(config.get("x0", domain.centroid()), dtype=float)
    curve = survival_curve(domain, x0, kernel, _default_t_grid(config),
                           int(config["n_paths"]), cfg, workers=workers)
    _write_csv(out / "survival.csv", ["t", "s_hat", "ci_lo", "ci_hi"],
               _curve_rows(curve))
    summary["censored_count"] = curve.censored_count
    summary["n_paths"] = curve.n_paths
    summary["hypothesis_flags"] = _hypothesis_flags(domain)


def _run_cross_validate(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    cfg = _path_config(config, seed)
    d = domain.dimension
    f = _field(config, "f", d)
    g = _field(config, "g", d)
    grid_tol = float(config.get("grid_tol", 0.02))
    op = assemble(domain, kernel, h=float(config["h"]),
                  r_max=config.get("r_max"),
                  far_field_value=float(config.get("far_field_value", 0.0)))
    u = solve_dirichlet(op, f, g)
    margin = 2.0 * math.sqrt(cfg.dt * 2.0)
    if "points" in config:
        starts = np.atleast_2d(np.asarray(config["points"], dtype=float))
    else:
        starts = interior_lattice(domain, margin=margin,
                                  target_count=int(config.get("n_points", 9)))
    scale = float(np.abs(u.values).max())
    n_paths = int(config["n_paths"])
    rows = []
    all_ok = True
    for i, x0 in enumerate(starts):
        est = solve_at(domain, f, g, x0, kernel, n_paths, cfg, workers=workers,
                       start_index=i * n_paths)
        gv = float(u.interpolate(x0)[0])
        tol = grid_tol * scale + 1.96 * est.std_error
        ok = abs(est.mean - gv) <= tol
        all_ok &= ok
        rows.append(list(x0) + [gv, est.mean, est.std_error, int(ok)])
    coords = [f"x{k + 1}" for k in range(d)]
    _write_csv(out / "cross_validate.csv",
               coords + ["grid_value", "mc_mean", "mc_std_error", "agree"], rows)
    summary["grid_nodes"] = op.n_interior
    summary["grid_tolerance"] = grid_tol
    summary["hypothesis_flags"] = _hypothesis_flags(domain)
    verdicts["methods_agree"] = bool(all_ok)


def _run_validate_kernel(config, seed, workers, out, summary, verdicts):
    from .kernels import check_A1, levy_integrability, small_jump_stats

    kernel = kernel_from_spec(config["kernel"])
    try:
        value = levy_integrability(kernel)
        summary["integrability_value"] = value
        verdicts["levy_integrable"] = True
    except DivergenceError as exc:
        summary["integrability_value"] = None
        summary["divergence"] = str(exc)
        verdicts["levy_integrable"] = False
        return
    radii = config.get("a1_radii", [0.1, 1.0, 10.0])
    rep = check_A1(kernel, radii)
    summary["a1"] = {"radii": list(rep.radii), "sup_per_radius": list(rep.sup_per_radius),
                     "im_ratio_max": rep.im_ratio_max}
    verdicts["a1_nondegenerate"] = rep.passed
    eps = float(config.get("epsilon", 0.1))
    if kernel.family != "zero":
        st = small_jump_stats(kernel, eps)
        summary["small_jump_stats"] = {"epsilon": eps, "big_rate": st.big_rate,
                                       "small_var_trace": st.small_var_trace}
    summary["positivity_radius"] = kernel.positivity_radius
    verdicts["positivity_near_origin"] = kernel.positivity_radius is not None \
        or kernel.family == "zero"


def _run_narrow_domain(config, seed, workers, out, summary, verdicts):
    kernel = kernel_from_spec(config["kernel"]) if "kernel" in config else None
    c_values = [float(c) for c in config.get("c_values", [20.0, 50.0])]
    widths = config.get("widths", [round(0.2 + 0.05 * i, 2) for i in range(17)])
    h = float(config["h"])
    dim = int(config.get("dimension", kernel.dimension if kernel else 2))
    rows = []
    thresholds = []
    for c in sorted(c_values):
        res = narrow_domain_threshold(c, widths, h, kernel=kernel, dimension=dim)
        thresholds.append(res.threshold)
        rows.extend([c, w, mu] for w, mu in zip(res.widths, res.max_u))
    _write_csv(out / "narrow_domain.csv", ["c", "width", "max_u"], rows)
    summary["c_values"] = sorted(c_values)
    summary["thresholds"] = thresholds
    verdicts["nonpositive_below_threshold"] = all(t > 0 for t in thresholds)
    verdicts["threshold_decreases_in_c"] = all(
        a >= b for a, b in zip(thresholds, thresholds[1:])) and \
        (len(thresholds) < 2 or thresholds[-1] < thresholds[0])


def _run_symmetry(config, seed, workers, out, summary, verdicts):
    domain = domain_from_spec(config["domain"])
    kernel = kernel_from_spec(config["kernel"])
    h = float(config["h"])
    tol = float(config.get("tolerance", 0.02))
    mu_factor = float(config.get("mu_factor", 1.5))
    op = assemble(domain, kernel, h=h, r_max=config.get("r_max"))
    pair = principal_eigenpair(op)
    mu = mu_factor * pair.lambda_h
    f = lambda u: u ** 3 - mu * u            # noqa: E731
    fp = lambda u: 3.0 * u ** 2 - mu         # noqa: E731
    amp = math.sqrt(mu - pair.lambda_h) if mu > pair.lambda_h else 1.0
    res = solve_semilinear(op, f, fp, 2.0 * amp * pair.psi.values)
    rep = symmetry_check(op, res.u, tol)
    _write_csv(out / "radial_profile.csv", ["radius", "mean_u"],
               list(zip(rep.bin_radii, rep.bin_means)))
    summary["lambda_h"] = pair.lambda_h
    summary["mu"] = mu
    summary["newton_iterations"] = res.iterations
    summary["max_deviation"] = rep.max_deviation
    summary["solution_positive"] = bool(res.u.values.min() > 0)
    verdicts["radial_and_decreasing"] = rep.passed
    verdicts["positive_solution"] = bool(res.u.values.min() > 0)


_RUNNERS = {
    "solve": _run_solve,
    "eigen": _run_eigen,
    "faber-krahn": _run_faber_krahn,
    "survival": _run_survival,
    "cross-validate": _run_cross_validate,
    "validate-kernel": _run_validate_kernel,
    "narrow-domain": _run_narrow_domain,
    "symmetry": _run_symmetry,
}


# -- entry point -------------------------------------------------------------

def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="jumplab",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment configuration")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="validate a configuration file")
    p_val.add_argument("config")

    sub.add_parser("list-kernels", help="print supported kernel families")
    sub.add_parser("list-domains", help="print supported domain shapes")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run(_load_config(args.config), args.out, seed=args.seed,
                       quiet=args.quiet)
        if args.command == "validate":
            validate_config(_load_config(args.config))
            print("configuration is valid")
            return 0
        if args.command == "list-kernels":
            print("\n".join(KERNEL_FAMILIES))
            return 0
        if args.command == "list-domains":
            print("\n".join(DOMAIN_SHAPES))
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
