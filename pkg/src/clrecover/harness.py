"""Experiment orchestration: deterministic sweeps over one axis, CSV
emission with aggregate rows, and log-log slope fits on the aggregates.

Every trial owns an isolated seed derived from (root seed, grid index,
trial index), so results are byte-identical across reruns and worker
counts; rows are merged in grid order regardless of completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from . import metrics as metrics_mod
from .config import ConfigError, config_hash, get_typed
from .datagen import TaskSequenceSpec, generate_full, stream
from .learner import (
    DistillConfig,
    ReplayObjective,
    WeightScheme,
    fit_distill_sequence,
    fit_replay,
    fit_weighted_dependent,
)
from .memory import MemoryPolicy, restrict
from .models import ModelSpec, ParameterSpace
from .models import Predictor
from .transforms import DependencyChain, from_record, identity

_TAG_THETA_STAR = 41

AXES = ("total_samples", "scale_s", "T", "nu")
PARADIGMS = ("replay", "distill", "dep-weights")

COLUMNS = [
    "kind", "axis", "axis_value", "total_samples", "trial", "paradigm", "T", "m",
    "n_min", "seed", "objective", "converged", "err_weighted", "err_se", "err_avg",
    "discrepancy", "bound_value", "in_regime", "n_runs", "n_excluded", "config_hash",
]


@dataclass(eq=False)
class Table:
    columns: list[str]
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def select(self, **eq) -> list[dict]:
        return [r for r in self.rows
                if all(str(r.get(k, "")) == str(v) for k, v in eq.items())]


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(table: Table, path: str):
    with open(path, "w") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(row.get(c)) for c in table.columns) + "\n")


def read_table(path: str) -> Table:
    with open(path) as fh:
        columns = fh.readline().rstrip("\n").split(",")
        rows = []
        for line in fh:
            vals = line.rstrip("\n").split(",")
            rows.append(dict(zip(columns, vals)))
    return Table(columns=columns, rows=rows)


def _as_float(row: dict, col: str) -> float:
    v = row.get(col)
    if v is None or v == "":
        raise ValueError(f"row has no value in column {col!r}")
    return float(v)


@dataclass(eq=False)
class ExperimentConfig:
    """Validated view of the flat config mapping."""

    raw: dict
    axis: str
    grid: list
    trials: int
    seed: int
    paradigm: str
    workers: int
    hash: str

    @classmethod
    def from_dict(cls, cfg: dict, seed: int | None = None) -> "ExperimentConfig":
        axis = get_typed(cfg, "sweep.axis", str, default="total_samples")
        if axis not in AXES:
            raise ConfigError(f"sweep.axis must be one of {AXES}, got {axis!r}")
        grid = get_typed(cfg, "sweep.grid", list, required=True)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sweep.grid must be non-empty and strictly increasing")
        trials = get_typed(cfg, "sweep.trials", int, default=1)
        if trials < 1:
            raise ConfigError("sweep.trials must be >= 1")
        paradigm = get_typed(cfg, "train.paradigm", str, default="replay")
        if paradigm not in PARADIGMS:
            raise ConfigError(f"train.paradigm must be one of {PARADIGMS}")
        if seed is None:
            seed = get_typed(cfg, "sweep.seed", int, required=True)
        effective = dict(cfg)
        effective["sweep.seed"] = seed
        return cls(
            raw=effective, axis=axis, grid=list(grid), trials=trials, seed=seed,
            paradigm=paradigm,
            workers=get_typed(cfg, "sweep.workers", int, default=0),
            hash=config_hash(effective),
        )


def _trial_seed(root: int, gi: int, ti: int) -> int:
    ss = np.random.SeedSequence(root, spawn_key=(100, gi, ti))
    return int(ss.generate_state(1, np.uint64)[0])


def _build_chain(cfg: dict, T: int, scale_override) -> DependencyChain:
    maps = [identity()]
    for t in range(2, T + 1):
        rec = cfg.get(f"chain.{t}", cfg.get("chain.repeat", {"kind": "identity"}))
        if not isinstance(rec, dict):
            raise ConfigError(f"chain entry for task {t} must be a tagged record")
        if scale_override is not None and rec.get("kind") == "scaling":
            rec = dict(rec, s=scale_override)
        maps.append(from_record(rec))
    return DependencyChain(maps=tuple(maps))


def _resolve_counts(cfg: dict, axis: str, value, T: int):
    """(m, memory overrides) for this grid point."""
    kind = get_typed(cfg, "memory.kind", str, default="full")
    if axis != "total_samples":
        return get_typed(cfg, "seq.m", int, required=True), {}
    target = int(value)
    if kind == "full":
        m = max(1, round(target / T))
        return m, {}
    if kind == "random":
        frac = get_typed(cfg, "memory.fraction", float, default=None)
        if frac is not None:
            m = max(1, round(target / (1.0 + (T - 1) * frac)))
            return m, {"budget": max(1, round(frac * m))}
        budget = get_typed(cfg, "memory.budget", int, required=True)
        return max(1, target - (T - 1) * budget), {"budget": budget}
    raise ConfigError("total_samples sweeps support memory.kind full or random")


def _build_policy(cfg: dict, trial_seed: int, overrides: dict) -> MemoryPolicy:
    kind = get_typed(cfg, "memory.kind", str, default="full")
    if kind == "fixed":
        sets = get_typed(cfg, "memory.fixed", list, required=True)
        return MemoryPolicy(kind="fixed",
                            fixed_sets=tuple(tuple(int(i) for i in s) for s in sets),
                            seed=trial_seed)
    budget = overrides.get("budget", get_typed(cfg, "memory.budget", int, default=None))
    capacity = get_typed(cfg, "memory.capacity", int, default=None)
    return MemoryPolicy(kind=kind, budget=budget, capacity=capacity, seed=trial_seed)


def build_spec(cfg: dict, axis: str, value, trial_seed: int):
    """Assemble (sequence spec, policy, model, space) for one trial."""
    d_x = get_typed(cfg, "seq.d_x", int, required=True)
    d_y = get_typed(cfg, "seq.d_y", int, required=True)
    T = int(value) if axis == "T" else get_typed(cfg, "seq.T", int, required=True)
    nu = float(value) if axis == "nu" else get_typed(cfg, "seq.nu", float, default=0.0)
    sigma = get_typed(cfg, "seq.sigma", float, required=True)
    scale_override = float(value) if axis == "scale_s" else None
    m, overrides = _resolve_counts(cfg, axis, value, T)

    family = get_typed(cfg, "model.family", str, default="linear")
    hidden = get_typed(cfg, "model.hidden", int, default=8)
    model = ModelSpec(family=family, d_x=d_x, d_y=d_y, hidden=hidden)
    radius = get_typed(cfg, "seq.radius", float, default=1.0)
    space = ParameterSpace(p=model.p, radius=radius)

    frac = get_typed(cfg, "seq.theta_star_scale", float, default=0.7)
    rng = stream(trial_seed, _TAG_THETA_STAR)
    g = rng.standard_normal(space.p)
    theta_star = frac * radius * g / np.linalg.norm(g)

    spec = TaskSequenceSpec(
        d_x=d_x, d_y=d_y, T=T, m=m, sigma=sigma, nu=nu,
        chain=_build_chain(cfg, T, scale_override),
        true_predictor=Predictor(model, theta_star),
        space=space, seed=trial_seed,
        input_dist=get_typed(cfg, "seq.input_dist", str, default="gaussian"),
    )
    return spec, _build_policy(cfg, trial_seed, overrides), model, space


def _task_weights(mode: str, store) -> np.ndarray:
    n_t = store.n_t.astype(np.float64)
    if mode == "nonuniform":
        return store.T * n_t / float(np.sum(n_t))
    return np.ones(store.T)


def _run_trial(cfg: dict, axis: str, value, gi: int, ti: int, root_seed: int,
               consts: dict | None, cfg_digest: str) -> dict:
    trial_seed = _trial_seed(root_seed, gi, ti)
    spec, policy, model, space = build_spec(cfg, axis, value, trial_seed)
    paradigm = get_typed(cfg, "train.paradigm", str, default="replay")
    n_eval = get_typed(cfg, "sweep.n_eval", int, default=2000)

    full = generate_full(spec)
    store = restrict(full, policy, spec.T)
    n_t = store.n_t
    betas = None
    w_cap = None

    if paradigm == "replay":
        w = _task_weights(get_typed(cfg, "train.weights", str, default="uniform"), store)
        lam_mode = get_typed(cfg, "train.lam_mode", str, default="zero")
        if lam_mode == "bound":
            pos = w > 0
            n_dp = float(np.min(n_t[pos] / w[pos]))
            lam = min(1e-3, 4.0 * spec.nu**2 / (spec.T * n_dp))
        else:
            lam = 0.0
        obj = ReplayObjective(weights=w, lam=lam,
                              regularizer="ridge" if lam > 0 else "none")
        out = fit_replay(store, obj, space, model)
        report = metrics_mod.estimation_error(spec, out.predictor(model), weights=w,
                                              n_eval=n_eval)
        err_weighted = report.weighted
        bound_weights = w
    elif paradigm == "distill":
        dcfg = DistillConfig(
            variant=get_typed(cfg, "distill.variant", str, default="anchor-per-task"),
            beta_decay=get_typed(cfg, "distill.beta_decay", float, default=4.0),
        )
        out = fit_distill_sequence(spec, policy, dcfg, space, model)
        betas = dcfg.betas(spec.T)
        report = metrics_mod.estimation_error(spec, out.predictor(model),
                                              betas=betas, n_t=n_t, n_eval=n_eval)
        err_weighted = report.beta_weighted
        bound_weights = np.ones(spec.T)
    else:
        cap_mode = get_typed(cfg, "scheme.w_cap_mode", str, default="theorem")
        if cap_mode == "theorem":
            w_cap = 1.0 + 1.0 / (spec.T * int(np.min(n_t)))
        else:
            w_cap = get_typed(cfg, "scheme.w_cap", float, required=True)
        scheme = WeightScheme(
            kind=get_typed(cfg, "scheme.kind", str, default="loss-proportional"),
            w_cap=w_cap,
            constant=get_typed(cfg, "scheme.constant", float, default=1.0),
        )
        out = fit_weighted_dependent(store, scheme, space, model)
        report = metrics_mod.estimation_error(spec, out.predictor(model),
                                              n_eval=n_eval)
        err_weighted = report.weighted
        bound_weights = np.ones(spec.T)

    discrepancy = None
    if axis == "scale_s" and spec.T >= 2:
        res = metrics_mod.discrepancy_distance(
            metrics_mod.TaskInputLaw(spec, 1), metrics_mod.TaskInputLaw(spec, spec.T),
            space, model, method="closed-form",
        )
        discrepancy = res.value

    bound_value = None
    in_regime = None
    if consts is not None:
        which = {"replay": "general", "distill": "distill",
                 "dep-weights": "dep-weights"}[paradigm]
        omega = float(np.sum(spec.true_predictor.theta**2)) if (
            paradigm == "replay" and get_typed(cfg, "train.lam_mode", str,
                                               default="zero") == "bound") else 0.0
        binputs = bounds_mod.derive_inputs(
            spec, n_t, bound_weights, kappa=consts["kappa"], m2=consts["m2"],
            delta=get_typed(cfg, "bound.delta", float, default=0.05),
            C=get_typed(cfg, "bound.C", float, default=2.0),
            omega_at_fstar=omega, betas=betas, W=w_cap,
        )
        res = bounds_mod.theorem_bound(binputs, which)
        bound_value = res.value
        in_regime = res.in_regime

    return {
        "kind": "run", "axis": axis, "axis_value": value,
        "total_samples": int(np.sum(n_t)), "trial": ti, "paradigm": paradigm,
        "T": spec.T, "m": spec.m, "n_min": int(np.min(n_t)), "seed": trial_seed,
        "objective": out.objective_value, "converged": out.converged,
        "err_weighted": err_weighted, "err_se": None,
        "err_avg": float(np.mean(report.per_task)), "discrepancy": discrepancy,
        "bound_value": bound_value, "in_regime": in_regime,
        "n_runs": None, "n_excluded": None, "config_hash": cfg_digest,
    }


def _estimate_constants(cfg: dict, axis: str, value, root_seed: int, gi: int) -> dict:
    """Population constants shared by all trials of one grid point."""
    spec, _, _, _ = build_spec(cfg, axis, value, _trial_seed(root_seed, gi, 0))
    n_mc = get_typed(cfg, "bound.n_mc", int, default=100_000)
    n_theta = get_typed(cfg, "bound.n_theta", int, default=64)
    const_seed = _trial_seed(root_seed, gi, 10**6)
    kappa = metrics_mod.estimate_kappa(spec, n_mc=n_mc, n_theta=n_theta,
                                       seed=const_seed)
    m2 = metrics_mod.estimate_m2(spec, n_mc=n_mc, n_theta=n_theta, seed=const_seed)
    return {"kappa": max(kappa.value, 1.0), "m2": m2.value}


def run_sweep(cfg: dict, seed: int | None = None) -> Table:
    """Run the configured sweep; one row per trial plus one aggregate row
    per grid point. Non-converged runs are flagged, excluded from the
    aggregates, and counted."""
    exp = ExperimentConfig.from_dict(cfg, seed=seed)
    want_bound = get_typed(cfg, "sweep.bound", bool, default=False)
    jobs = []
    for gi, value in enumerate(exp.grid):
        consts = (_estimate_constants(exp.raw, exp.axis, value, exp.seed, gi)
                  if want_bound else None)
        for ti in range(exp.trials):
            jobs.append((exp.raw, exp.axis, value, gi, ti, exp.seed, consts, exp.hash))

    if exp.workers > 0:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(_run_trial_star, jobs))
    else:
        results = [_run_trial(*job) for job in jobs]

    rows: list[dict] = []
    n_failed = 0
    for gi, value in enumerate(exp.grid):
        block = [r for r in results if r["axis_value"] == value]
        rows.extend(block)
        good = [r for r in block if r["converged"]]
        n_failed += len(block) - len(good)
        agg = {
            "kind": "agg", "axis": exp.axis, "axis_value": value,
            "paradigm": exp.paradigm, "config_hash": exp.hash,
            "n_runs": len(good), "n_excluded": len(block) - len(good),
        }
        if good:
            errs = np.array([r["err_weighted"] for r in good])
            agg["total_samples"] = int(round(float(np.mean(
                [r["total_samples"] for r in good]))))
            agg["T"] = good[0]["T"]
            agg["m"] = good[0]["m"]
            agg["n_min"] = min(r["n_min"] for r in good)
            agg["err_weighted"] = float(np.mean(errs))
            agg["err_se"] = (float(np.std(errs, ddof=1) / np.sqrt(len(errs)))
                             if len(errs) > 1 else 0.0)
            agg["err_avg"] = float(np.mean([r["err_avg"] for r in good]))
            if good[0]["discrepancy"] is not None:
                agg["discrepancy"] = good[0]["discrepancy"]
            if good[0]["bound_value"] is not None:
                agg["bound_value"] = float(np.mean(
                    [r["bound_value"] for r in good]))
                agg["in_regime"] = float(np.mean(
                    [1.0 if r["in_regime"] else 0.0 for r in good]))
        rows.append(agg)

    table = Table(columns=list(COLUMNS), rows=rows)
    table.meta["n_failed"] = n_failed
    table.meta["n_total"] = len(results)
    table.meta["config_hash"] = exp.hash
    return table


def _run_trial_star(job):
    return _run_trial(*job)


def fit_loglog_slope(table: Table, xcol: str, ycol: str,
                     kind: str = "agg") -> tuple[float, float]:
    """Ordinary least squares on (ln x, ln y) over the aggregate rows."""
    pts = []
    for row in table.rows:
        if row.get("kind") not in (kind, None) and str(row.get("kind")) != kind:
            continue
        try:
            x, y = _as_float(row, xcol), _as_float(row, ycol)
        except ValueError:
            continue
        pts.append((x, y))
    if len(pts) < 3:
        raise ValueError("need at least 3 aggregate points for a slope fit")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("log-log slope needs positive values")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    n = lx.size
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    var = float(np.sum(resid**2) / max(n - 2, 1))
    return slope, math.sqrt(var / sxx)


def emit_plotdata(table: Table, prefix: str) -> list[str]:
    """Write the tidy CSV plus one two-column series file per curve
    (aggregate rows only). Text formats throughout."""
    paths = [f"{prefix}.csv"]
    write_table(table, paths[0])
    curves = [("measured", "err_weighted"), ("bound", "bound_value")]
    for name, col in curves:
        pts = []
        for row in table.select(kind="agg"):
            v = row.get(col)
            if v is None or v == "":
                continue
            pts.append((row["axis_value"], v))
        if not pts and name == "bound":
            continue
        path = f"{prefix}__{name}.dat"
        with open(path, "w") as fh:
            fh.write(f"# {name}: axis_value {col}\n")
            for x, y in pts:
                fh.write(f"{_fmt(x)} {_fmt(y)}\n")
        paths.append(path)
    return paths
