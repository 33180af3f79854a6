"""Command-line experiment runner.

Subcommands: ``ldt-solve``, ``estimate``, ``aggregate``, ``cache-kl``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.

Environment: ``LAIS_OUTPUT_DIR`` prefixes relative output paths and
``LAIS_WORKERS`` sets the number of threads used across ensemble runs.
"""
import argparse
import csv
import io
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import problems
from .algorithm import LaisConfig, run_lais
from .config import ExperimentConfig, load_config
from .diagnostics import bias_test, cv_of_ensemble, rrmse_of_ensemble
from .errors import ConfigError, IncompatibleConfigs, NumericalFailure
from .estimators import lsis_estimate, mc_estimate
from .ldt import build_subspace, load_artifact, save_artifact, second_order_prob, solve_ldt
from .numerics import RngStream

log = logging.getLogger("lais")

SCHEMA_VERSION = "lais-csv/1"
CSV_COLUMNS = (
    "schema_version", "method", "problem", "n", "kappa", "z", "n_ce", "j_max",
    "level", "N_cumulative", "n_f", "n_grad", "p_hat", "seed",
)
SUMMARY_COLUMNS = (
    "method", "problem", "n", "kappa", "z", "n_ce", "j_max", "level", "N_cumulative",
    "runs", "mean_p_hat", "cv", "rrmse", "bias_z", "bias_pass", "p_ref",
)
GROUP_KEYS = ("method", "problem", "n", "kappa", "z", "n_ce", "j_max", "level", "N_cumulative")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _g(x):
    return f"{x:.17g}"


def output_path(path):
    root = os.environ.get("LAIS_OUTPUT_DIR")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def build_problem(cfg):
    p = cfg.problem
    if p.name == "quadratic":
        return problems.QuadraticMap(p.n, p.kappa, z=cfg.z)
    field = problems.kl_field_cached(
        cfg.kl_cache or None, elements=p.elements, corr_length=p.corr_length,
        mean_a=p.mean_a, var_a=p.var_a, modes=p.modes,
    )
    return problems.DiffusionMap(field, z=cfg.z)


def obtain_ldt(cfg, event_map, need_subspace=True):
    """Read the LDT artifact when it matches, otherwise solve and (optionally) store it."""
    path = cfg.ldt_artifact
    m = cfg.method
    if path and os.path.exists(path):
        sol, sub = load_artifact(path)
        if sol.z == cfg.z and sol.theta_star.size == event_map.n and (
                not need_subspace or (sub is not None and sub.epsilon == m.epsilon)):
            return sol, sub
        log.info("artifact %s does not match this configuration; recomputing", path)
    sol = solve_ldt(event_map, cfg.z)
    sub = None
    if need_subspace:
        sub = build_subspace(event_map, sol, m.epsilon, m.r_max, tol=m.eig_tol,
                             rng=RngStream(cfg.ensemble.base_seed, 2))
    if path:
        save_artifact(path, sol, sub)
    return sol, sub


def _row(cfg, method, level, n_cum, n_f, n_grad, p_hat, seed, n_ce="", j_max=""):
    p = cfg.problem
    return {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "problem": p.name,
        "n": str(cfg.dimension),
        "kappa": _g(p.kappa) if p.name == "quadratic" else "",
        "z": _g(cfg.z),
        "n_ce": str(n_ce),
        "j_max": str(j_max),
        "level": str(level),
        "N_cumulative": str(n_cum),
        "n_f": str(n_f),
        "n_grad": str(n_grad),
        "p_hat": _g(p_hat),
        "seed": str(seed),
    }


def run_experiment(cfg):
    """All CSV rows of an experiment, in (run, level) order."""
    event_map = build_problem(cfg)
    m = cfg.method
    seeds = [cfg.ensemble.base_seed + k for k in range(cfg.ensemble.runs)]
    sol = sub = None
    if m.name != "mc":
        sol, sub = obtain_ldt(cfg, event_map, need_subspace=m.name.startswith("lais"))

    def one(seed):
        if m.name == "mc":
            est = mc_estimate(event_map, cfg.z, m.n_samples, RngStream(seed, 0))
            return [_row(cfg, "mc", 1, m.n_samples, m.n_samples, 0, est.p_hat, seed)]
        if m.name == "lsis":
            est = lsis_estimate(event_map, cfg.z, sol.theta_star, m.n_samples, RngStream(seed, 0))
            return [_row(cfg, "lsis", 1, m.n_samples, m.n_samples + sol.n_f_used,
                         sol.n_grad_used, est.p_hat, seed)]
        scheme = "standard" if m.name == "lais-s" else "deterministic-mixture"
        lc = LaisConfig(m.n_ce, m.j_max, m.epsilon, m.r_max, scheme, seed, m.eig_tol)
        rep = run_lais(event_map, cfg.z, lc, ldt=sol, subspace=sub)
        return [
            _row(cfg, m.name, lv.level, lv.n_cumulative, lv.n_cumulative + sol.n_f_used,
                 rep.n_grad, lv.p_hat, seed, m.n_ce, m.j_max)
            for lv in rep.per_level
        ]

    workers = int(os.environ.get("LAIS_WORKERS", "1") or 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(one, seeds))
    else:
        chunks = [one(s) for s in seeds]
    return [row for chunk in chunks for row in chunk]


def write_csv(rows, path, columns=CSV_COLUMNS):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise IncompatibleConfigs(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    for row in rows:
        if row["schema_version"] != SCHEMA_VERSION:
            raise IncompatibleConfigs(f"{path}: schema {row['schema_version']!r}, expected {SCHEMA_VERSION!r}")
    return rows


def reference_probability(key, source, value=None):
    problem, kappa, z = key[1], key[3], float(key[4])
    if source == "value":
        if value is None or not value > 0:
            raise IncompatibleConfigs("p_ref source 'value' needs a positive --p-ref-value")
        return value
    if source == "oracle":
        if problem != "quadratic":
            raise IncompatibleConfigs(f"no quadrature oracle for problem {problem!r}")
        return problems.quadratic_oracle_pf(z, float(kappa))
    if source == "lsis-reference":
        if problem != "diffusion" or z != 0.535:
            raise IncompatibleConfigs("the LSIS reference exists only for the default diffusion problem at z=0.535")
        return problems.DIFFUSION_REFERENCE_PF
    raise IncompatibleConfigs(f"unknown p_ref source {source!r}")


def _sort_token(text):
    try:
        return (0, float(text), "")
    except ValueError:
        return (1, 0.0, text)


def aggregate(paths, source="oracle", value=None):
    groups = defaultdict(list)
    seen = defaultdict(set)
    for path in paths:
        for row in read_csv(path):
            key = tuple(row[k] for k in GROUP_KEYS)
            if row["seed"] in seen[key]:
                raise IncompatibleConfigs(f"seed {row['seed']} appears twice for {dict(zip(GROUP_KEYS, key))}")
            seen[key].add(row["seed"])
            groups[key].append(float(row["p_hat"]))
    out = []
    for key in sorted(groups, key=lambda k: tuple(_sort_token(x) for x in k)):
        est = np.array(groups[key])
        p_ref = reference_probability(key, source, value)
        cv = cv_of_ensemble(est) if est.size >= 2 and est.mean() > 0 else float("nan")
        bias = bias_test(est, p_ref) if est.size >= 30 else None
        row = dict(zip(GROUP_KEYS, key))
        row.update(
            runs=str(est.size),
            mean_p_hat=_g(est.mean()),
            cv=_g(cv),
            rrmse=_g(rrmse_of_ensemble(est, p_ref)),
            bias_z=_g(bias.z_score) if bias else "",
            bias_pass=str(bias.passed).lower() if bias else "",
            p_ref=_g(p_ref),
        )
        out.append(row)
    return out


# ------------------------------------------------------------------ CLI


def _add_overrides(ap):
    g = ap.add_argument_group("configuration overrides")
    g.add_argument("--config", help="YAML experiment file")
    g.add_argument("--problem", choices=("quadratic", "diffusion"))
    g.add_argument("--n", type=int)
    g.add_argument("--kappa", type=float)
    g.add_argument("--elements", type=int)
    g.add_argument("--modes", type=int)
    g.add_argument("--corr-length", type=float)
    g.add_argument("--mean-a", type=float)
    g.add_argument("--var-a", type=float)
    g.add_argument("--z", type=float)
    g.add_argument("--method", choices=("mc", "lsis", "lais-s", "lais-dm"))
    g.add_argument("--n-ce", type=int)
    g.add_argument("--j-max", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--r-max", type=int)
    g.add_argument("--n-samples", type=int)
    g.add_argument("--eig-tol", type=float)
    g.add_argument("--runs", type=int)
    g.add_argument("--base-seed", type=int)
    g.add_argument("--output")
    g.add_argument("--ldt-artifact")
    g.add_argument("--kl-cache")


_OVERRIDES = {
    "problem": ("problem", "name"), "n": ("problem", "n"), "kappa": ("problem", "kappa"),
    "elements": ("problem", "elements"), "modes": ("problem", "modes"),
    "corr_length": ("problem", "corr_length"), "mean_a": ("problem", "mean_a"), "var_a": ("problem", "var_a"),
    "z": (None, "z"), "method": ("method", "name"), "n_ce": ("method", "n_ce"), "j_max": ("method", "j_max"),
    "epsilon": ("method", "epsilon"), "r_max": ("method", "r_max"), "n_samples": ("method", "n_samples"),
    "eig_tol": ("method", "eig_tol"), "runs": ("ensemble", "runs"), "base_seed": ("ensemble", "base_seed"),
    "output": (None, "output"), "ldt_artifact": (None, "ldt_artifact"), "kl_cache": (None, "kl_cache"),
}


def resolve_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for attr, (section, name) in _OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if section is None:
            cfg = replace(cfg, **{name: value})
        else:
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **{name: value})})
    return cfg.validate()


def cmd_ldt_solve(args):
    cfg = resolve_config(args)
    event_map = build_problem(cfg)
    sol = solve_ldt(event_map, cfg.z)
    m = cfg.method
    sub = build_subspace(event_map, sol, m.epsilon, m.r_max, tol=m.eig_tol,
                         rng=RngStream(cfg.ensemble.base_seed, 2))
    path = args.out or cfg.ldt_artifact or "ldt_artifact.txt"
    save_artifact(output_path(path), sol, sub)
    print(f"I* = {sol.I_star:.10g}")
    print(f"lambda = {sol.lam:.10g}")
    print(f"|F(theta*) - z| = {sol.constraint_residual:.3e}")
    print(f"r = {sub.r} (epsilon = {sub.epsilon:g})")
    print("retained eigenvalues: " + " ".join(f"{v:.6g}" for v in sub.h_eigs))
    print("lambda*|eig|: " + " ".join(f"{sol.lam * abs(v):.6g}" for v in sub.all_eigs[:sub.r + 2]))
    try:
        print(f"p_SO = {second_order_prob(sol, sub.all_eigs):.6g} (k = {sub.all_eigs.size} eigenvalues)")
    except NumericalFailure as exc:
        print(f"p_SO unavailable: {exc}")
    print(f"cost: N_F = {sol.n_f_used}, N_gradF = {sol.n_grad_used + sub.n_grad_used}")
    print(f"artifact: {output_path(path)}")
    return EXIT_OK


def cmd_estimate(args):
    cfg = resolve_config(args)
    rows = run_experiment(cfg)
    path = output_path(cfg.output)
    write_csv(rows, path)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_aggregate(args):
    rows = aggregate(args.csv, args.p_ref, args.p_ref_value)
    path = output_path(args.output)
    write_csv(rows, path, SUMMARY_COLUMNS)
    print(f"wrote {len(rows)} summary rows to {path}")
    return EXIT_OK


def cmd_cache_kl(args):
    cfg = resolve_config(args)
    path = args.out or cfg.kl_cache or "kl_cache.txt"
    p = cfg.problem
    field = problems.build_kl_field(p.elements, p.corr_length, p.mean_a, p.var_a, p.modes)
    problems.save_kl_field(field, output_path(path))
    print(f"wrote {field.modes} KL modes on {field.elements} points to {output_path(path)}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="lais", description="LDT-based adaptive importance sampling experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ldt-solve", help="solve the LDT problem and build the subspace")
    _add_overrides(p)
    p.add_argument("--out", help="artifact path (default: config ldt_artifact)")
    p.set_defaults(func=cmd_ldt_solve)

    p = sub.add_parser("estimate", help="run an estimator ensemble and write CSV rows")
    _add_overrides(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("aggregate", help="summarize estimate CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--p-ref", choices=("oracle", "value", "lsis-reference"), default="oracle")
    p.add_argument("--p-ref-value", type=float)
    p.add_argument("--output", default="summary.csv")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("cache-kl", help="precompute the KL eigenpairs")
    _add_overrides(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cache_kl)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IncompatibleConfigs, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
