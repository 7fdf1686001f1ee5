"""Command-line interface.

Subcommands: generate, train, sweep, bound, validate, slope, report.
Flags mirror config keys; ``--set key=value`` overrides any key. Exit
codes: 0 success, 2 config error, 3 bound requested out of regime,
4 solver failures above the configured threshold.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bounds as bounds_mod
from . import metrics as metrics_mod
from .config import ConfigError, config_hash, get_typed, load_config, parse_value
from .datagen import export_csv, generate_full
from .harness import (
    build_spec,
    emit_plotdata,
    fit_loglog_slope,
    read_table,
    run_sweep,
    write_table,
)
from .learner import DistillConfig, ReplayObjective, fit_distill_sequence, fit_replay
from .memory import restrict
from .models import save_thetas_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUT_OF_REGIME = 3
EXIT_SOLVER_FAILURES = 4


def _load(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = parse_value(val)
    if getattr(args, "seed", None) is not None:
        cfg["sweep.seed"] = args.seed
    return cfg


def _cmd_generate(args) -> int:
    cfg = _load(args)
    seed = get_typed(cfg, "sweep.seed", int, default=0)
    spec, policy, _, _ = build_spec(cfg, "none", None, seed)
    store = restrict(generate_full(spec), policy, spec.T)
    index_path = export_csv(store, args.out)
    print(f"wrote {args.out} and {index_path} "
          f"(T={spec.T}, m={spec.m}, n_t={store.n_t.tolist()})")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _load(args)
    seed = get_typed(cfg, "sweep.seed", int, default=0)
    spec, policy, model, space = build_spec(cfg, "none", None, seed)
    paradigm = get_typed(cfg, "train.paradigm", str, default="replay")
    if paradigm == "distill":
        dcfg = DistillConfig(
            variant=get_typed(cfg, "distill.variant", str, default="anchor-per-task"),
            beta_decay=get_typed(cfg, "distill.beta_decay", float, default=4.0),
        )
        out = fit_distill_sequence(spec, policy, dcfg, space, model)
    else:
        store = restrict(generate_full(spec), policy, spec.T)
        out = fit_replay(store, ReplayObjective(weights=np.ones(spec.T)), space, model)
    if args.out:
        save_thetas_csv(args.out, out.theta_hat)
    err = metrics_mod.estimation_error(spec, out.predictor(model), n_eval=2000)
    print(f"objective={out.objective_value!r} converged={out.converged} "
          f"iters={out.solver_iters} avg_error={np.mean(err.per_task)!r}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    table = run_sweep(cfg, seed=args.seed)
    paths = emit_plotdata(table, args.out)
    print(f"config {table.meta['config_hash']}: "
          f"{table.meta['n_total']} runs, {table.meta['n_failed']} failed")
    for p in paths:
        print(f"wrote {p}")
    max_frac = get_typed(cfg, "sweep.max_failure_frac", float, default=0.2)
    if table.meta["n_total"] and table.meta["n_failed"] > max_frac * table.meta["n_total"]:
        return EXIT_SOLVER_FAILURES
    return EXIT_OK


def _cmd_bound(args) -> int:
    cfg = _load(args)
    seed = get_typed(cfg, "sweep.seed", int, default=0)
    spec, policy, model, space = build_spec(cfg, "none", None, seed)
    store = restrict(generate_full(spec), policy, spec.T)
    n_mc = get_typed(cfg, "bound.n_mc", int, default=100_000)
    n_theta = get_typed(cfg, "bound.n_theta", int, default=64)
    kappa = metrics_mod.estimate_kappa(spec, n_mc=n_mc, n_theta=n_theta, seed=seed)
    m2 = metrics_mod.estimate_m2(spec, n_mc=n_mc, n_theta=n_theta, seed=seed)
    which = {"replay": "general", "distill": "distill",
             "dep-weights": "dep-weights"}[
        get_typed(cfg, "train.paradigm", str, default="replay")]
    inputs = bounds_mod.derive_inputs(
        spec, store.n_t, np.ones(spec.T), kappa=max(kappa.value, 1.0), m2=m2.value,
        delta=get_typed(cfg, "bound.delta", float, default=0.05),
        C=get_typed(cfg, "bound.C", float, default=2.0),
    )
    res = bounds_mod.theorem_bound(inputs, which)
    cond = bounds_mod.sample_condition(inputs, which)
    print(f"kappa~{kappa.value!r} (se {kappa.se!r})  M2~{m2.value!r}")
    print(f"bound[{which}] = {res.value!r}  in_regime={res.in_regime} "
          f"(n' {cond.n_lhs:g} vs needed {cond.n_rhs:g}; m {cond.m_lhs:g} "
          f"vs needed {cond.m_rhs:g})")
    return EXIT_OK if res.in_regime else EXIT_OUT_OF_REGIME


def _cmd_validate(args) -> int:
    cfg = _load(args)
    n_trials = get_typed(cfg, "validate.trials", int, default=100_000)
    sigma = get_typed(cfg, "validate.sigma", float, default=1.0)
    ok = True
    for d in get_typed(cfg, "validate.dims", list, default=[4, 16, 64]):
        rep = bounds_mod.validate_norm_concentration(sigma, int(d), n_trials)
        worst = min((r.bound + 3 * r.se - r.empirical) for r in rep.rows)
        print(f"norm-tail d={d}: {'ok' if rep.all_ok else 'VIOLATED'} "
              f"(tightest slack {worst:.3g})")
        ok = ok and rep.all_ok
        prj = bounds_mod.validate_projection_difference(
            sigma, int(d), r=3.5 * max(sigma, 1e-12), L=1.0, n_trials=n_trials)
        print(f"projection d={d}: {'ok' if prj.ok else 'VIOLATED'} "
              f"(empirical {prj.empirical:.3g} vs bound {prj.bound:.3g})")
        ok = ok and prj.ok
    return EXIT_OK if ok else 1


def _cmd_slope(args) -> int:
    table = read_table(args.table)
    slope, se = fit_loglog_slope(table, args.xcol, args.ycol)
    print(f"slope={slope!r} stderr={se!r}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .figures import render_sweep_figure

    table = read_table(args.table)
    path = render_sweep_figure(table, args.out, title=args.title)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clrecover",
        description="Dependent-task continual-learning simulations and "
                    "recovery-bound checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, required=seed_required,
                       help="root seed (mirrors sweep.seed)")

    p = sub.add_parser("generate", help="write a sample matrix CSV plus index sidecar")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="fit one model under the configured paradigm")
    common(p)
    p.add_argument("--out", help="write fitted parameters as a CSV row")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="run the configured sweep and emit CSV + series")
    common(p, seed_required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bound", help="evaluate the error bound for the configuration")
    common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("validate", help="run the concentration validators")
    common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("slope", help="log-log slope of two columns of a sweep CSV")
    p.add_argument("table")
    p.add_argument("--xcol", default="total_samples")
    p.add_argument("--ycol", default="err_weighted")
    p.set_defaults(func=_cmd_slope)

    p = sub.add_parser("report", help="render figures from a sweep CSV")
    p.add_argument("table")
    p.add_argument("--out", required=True, help="PNG output path")
    p.add_argument("--title")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
