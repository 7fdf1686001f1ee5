"""Sampling of task sequences: task-1 inputs, propagated trajectories,
noisy labels, and the (possibly partial) task-by-sample matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transforms
from .models import ModelSpec, ParameterSpace, Predictor, evaluate

INPUT_DISTS = ("gaussian", "bounded-uniform", "rademacher-scaled")

# stream tags; every random draw in a sequence hangs off (seed, tag, ...)
_TAG_X1 = 0
_TAG_NOISE = 1
_TAG_EVAL = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) address.

    Each task-1 sample owns stream (seed, 0, i) and each noise vector owns
    (seed, 1, t, i), so growing m or T never perturbs earlier draws.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True, eq=False)
class TaskSequenceSpec:
    """Full generative description of one dependent-task sequence."""

    d_x: int
    d_y: int
    T: int
    m: int
    sigma: float
    nu: float
    chain: transforms.DependencyChain
    true_predictor: Predictor
    space: ParameterSpace
    seed: int
    input_dist: str = "gaussian"

    def __post_init__(self):
        if min(self.d_x, self.d_y, self.T, self.m) < 1:
            raise ValueError("d_x, d_y, T, m must all be >= 1")
        if self.sigma < 0 or self.nu < 0:
            raise ValueError("sigma and nu must be non-negative")
        if self.input_dist not in INPUT_DISTS:
            raise ValueError(f"unknown input distribution {self.input_dist!r}")
        if len(self.chain) != self.T:
            raise ValueError(f"chain has {len(self.chain)} maps but T={self.T}")
        fs = self.true_predictor.spec
        if (fs.d_x, fs.d_y) != (self.d_x, self.d_y):
            raise ValueError("true predictor dimensions do not match the sequence")
        if fs.p != self.space.p:
            raise ValueError("parameter space dimension does not match the family")
        if np.linalg.norm(self.true_predictor.theta) > self.space.radius * (1 + 1e-12):
            raise ValueError("true predictor must lie inside the parameter ball")


def _draw_coords(rng: np.random.Generator, n: int, dist: str, scale: float) -> np.ndarray:
    """n coordinates, mean zero, variance scale^2 under the chosen family."""
    if scale == 0.0:
        return np.zeros(n)
    if dist == "gaussian":
        return rng.standard_normal(n) * scale
    if dist == "bounded-uniform":
        half = scale * np.sqrt(3.0)
        return rng.uniform(-half, half, n)
    return np.where(rng.random(n) < 0.5, -scale, scale)


def sample_task1(spec: TaskSequenceSpec) -> np.ndarray:
    """m task-1 inputs, per-coordinate variance sigma^2 / d_x, shape (m, d_x)."""
    scale = spec.sigma / np.sqrt(spec.d_x)
    out = np.empty((spec.m, spec.d_x))
    for i in range(spec.m):
        out[i] = _draw_coords(stream(spec.seed, _TAG_X1, i), spec.d_x,
                              spec.input_dist, scale)
    return out


def _noise_row(spec: TaskSequenceSpec, t: int) -> np.ndarray:
    """Label noise for task t (1-based): (m, d_y), per-coordinate std nu."""
    if spec.nu == 0.0:
        return np.zeros((spec.m, spec.d_y))
    out = np.empty((spec.m, spec.d_y))
    for i in range(spec.m):
        out[i] = stream(spec.seed, _TAG_NOISE, t, i).standard_normal(spec.d_y) * spec.nu
    return out


@dataclass(eq=False)
class SampleStore:
    """Task-by-sample matrix of (x, y) pairs with an availability mask.

    ``mask[t, i]`` says whether sample i of task t (0-based) is present.
    Rows of absent entries hold NaN so stale values cannot leak into a fit.
    The last row is always fully present.
    """

    x: np.ndarray  # (T, m, d_x)
    y: np.ndarray  # (T, m, d_y)
    mask: np.ndarray  # (T, m) bool

    def __post_init__(self):
        if self.x.shape[:2] != self.mask.shape or self.y.shape[:2] != self.mask.shape:
            raise ValueError("x, y, mask shapes are inconsistent")
        if not bool(self.mask[-1].all()):
            raise ValueError("the current task must keep all its samples")

    @property
    def T(self) -> int:
        return self.mask.shape[0]

    @property
    def m(self) -> int:
        return self.mask.shape[1]

    @property
    def n_t(self) -> np.ndarray:
        """Per-task counts of available samples."""
        return self.mask.sum(axis=1).astype(int)

    def row_index(self, t: int) -> np.ndarray:
        """Available sample indices of task t (1-based task, 0-based samples)."""
        return np.flatnonzero(self.mask[t - 1])

    def col_index(self, i: int) -> np.ndarray:
        """Tasks (1-based) for which sample i is available."""
        return np.flatnonzero(self.mask[:, i]) + 1

    def is_full(self) -> bool:
        return bool(self.mask.all())


def generate_full(spec: TaskSequenceSpec) -> SampleStore:
    """Full matrix: propagate every task-1 sample through the chain and
    attach labels from the true predictor plus fresh per-entry noise."""
    x = np.empty((spec.T, spec.m, spec.d_x))
    x[0] = sample_task1(spec)
    for t in range(2, spec.T + 1):
        x[t - 1] = spec.chain.maps[t - 1](x[t - 2])
    y = np.empty((spec.T, spec.m, spec.d_y))
    for t in range(1, spec.T + 1):
        y[t - 1] = evaluate(spec.true_predictor, x[t - 1]) + _noise_row(spec, t)
    return SampleStore(x=x, y=y, mask=np.ones((spec.T, spec.m), dtype=bool))


def fresh_eval_batch(spec: TaskSequenceSpec, t: int, n: int, eval_key: int = 0):
    """n independent draws of (x_t, f*(x_t)), disjoint from training data.

    Draws fresh task-1 inputs from a dedicated stream and propagates them.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    spec.chain._check_t(t)
    rng = stream(spec.seed, _TAG_EVAL, t, eval_key)
    scale = spec.sigma / np.sqrt(spec.d_x)
    x1 = _draw_coords(rng, n * spec.d_x, spec.input_dist, scale).reshape(n, spec.d_x)
    xt = transforms.apply(spec.chain, t, x1)
    return xt, evaluate(spec.true_predictor, xt)


def export_csv(store: SampleStore, path: str, index_path: str | None = None) -> str:
    """Write available entries as ``t,i,x_0..,y_0..`` rows plus a sidecar
    file listing the available sample indices per task. Returns the sidecar
    path."""
    d_x = store.x.shape[2]
    d_y = store.y.shape[2]
    header = (["t", "i"] + [f"x_{j}" for j in range(d_x)]
              + [f"y_{j}" for j in range(d_y)])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(1, store.T + 1):
            for i in store.row_index(t):
                vals = [str(t), str(int(i))]
                vals += [repr(float(v)) for v in store.x[t - 1, i]]
                vals += [repr(float(v)) for v in store.y[t - 1, i]]
                fh.write(",".join(vals) + "\n")
    if index_path is None:
        index_path = str(path) + ".index"
    with open(index_path, "w") as fh:
        for t in range(1, store.T + 1):
            idx = " ".join(str(int(i)) for i in store.row_index(t))
            fh.write(f"{t}: {idx}\n")
    return index_path


def import_csv(path: str, index_path: str | None = None) -> SampleStore:
    """Inverse of export_csv; absent entries come back as NaN + mask."""
    if index_path is None:
        index_path = str(path) + ".index"
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        d_x = sum(1 for h in header if h.startswith("x_"))
        d_y = sum(1 for h in header if h.startswith("y_"))
        for line in fh:
            parts = line.strip().split(",")
            if parts and parts[0]:
                rows.append((int(parts[0]), int(parts[1]),
                             [float(v) for v in parts[2:2 + d_x]],
                             [float(v) for v in parts[2 + d_x:2 + d_x + d_y]]))
    index_sets: dict[int, list[int]] = {}
    with open(index_path) as fh:
        for line in fh:
            if ":" in line:
                t_str, idx_str = line.split(":", 1)
                index_sets[int(t_str)] = [int(v) for v in idx_str.split()]
    T = max(index_sets)
    m = max((max(v) for v in index_sets.values() if v), default=-1) + 1
    m = max(m, len(index_sets.get(T, [])))
    x = np.full((T, m, d_x), np.nan)
    y = np.full((T, m, d_y), np.nan)
    mask = np.zeros((T, m), dtype=bool)
    for t, idx in index_sets.items():
        mask[t - 1, idx] = True
    for t, i, xv, yv in rows:
        x[t - 1, i] = xv
        y[t - 1, i] = yv
    return SampleStore(x=x, y=y, mask=mask)
