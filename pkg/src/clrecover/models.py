"""Parameterized predictor families over a bounded parameter ball.

Two families are provided: linear maps (the parameter vector reshaped to a
d_y x d_x matrix) and a one-hidden-layer tanh network of fixed width. Both
evaluate in batch and expose computable Lipschitz constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms

FAMILIES = ("linear", "one-hidden-layer")


@dataclass(frozen=True)
class ModelSpec:
    """Family tag plus dimensions; fixes the parameter layout."""

    family: str
    d_x: int
    d_y: int
    hidden: int = 8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.d_x < 1 or self.d_y < 1 or (self.family != "linear" and self.hidden < 1):
            raise ValueError("dimensions must be positive")

    @property
    def p(self) -> int:
        if self.family == "linear":
            return self.d_x * self.d_y
        return self.hidden * self.d_x + self.d_y * self.hidden


@dataclass(frozen=True)
class ParameterSpace:
    """Euclidean ball of radius ``radius`` in R^p; diameter is 2 * radius."""

    p: int
    radius: float

    def __post_init__(self):
        if self.p < 0 or not np.isfinite(self.radius) or self.radius <= 0:
            raise ValueError("need p >= 0 and a finite positive radius")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


def project(space: ParameterSpace, theta: np.ndarray) -> np.ndarray:
    """Radial projection onto the ball; points already inside are returned as is."""
    theta = np.asarray(theta, dtype=np.float64)
    norm = float(np.linalg.norm(theta))
    if norm <= space.radius:
        return theta
    return theta * (space.radius / norm)


@dataclass(frozen=True, eq=False)
class Predictor:
    spec: ModelSpec
    theta: np.ndarray

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64))
        if theta.shape != (self.spec.p,):
            raise ValueError(f"theta must have shape ({self.spec.p},), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def weights(self):
        s = self.spec
        if s.family == "linear":
            return (self.theta.reshape(s.d_y, s.d_x),)
        k = s.hidden * s.d_x
        return (self.theta[:k].reshape(s.hidden, s.d_x),
                self.theta[k:].reshape(s.d_y, s.hidden))


def evaluate(pred: Predictor, x: np.ndarray) -> np.ndarray:
    """Evaluate on one d_x-vector or a batch (N, d_x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != pred.spec.d_x:
        raise ValueError(f"input dimension {x.shape[-1]} != d_x {pred.spec.d_x}")
    if pred.spec.family == "linear":
        (w,) = pred.weights()
        return x @ w.T
    w1, w2 = pred.weights()
    return np.tanh(x @ w1.T) @ w2.T


@dataclass(frozen=True, eq=False)
class DirectDifferenceMap:
    """Difference of two predictors composed with the chain up to task t:
    x1 is propagated to x_t, and the predictor outputs are subtracted there."""

    f: Predictor
    f_star: Predictor
    chain: transforms.DependencyChain
    t: int


def eval_G(dmap: DirectDifferenceMap, x1: np.ndarray) -> np.ndarray:
    xt = transforms.apply(dmap.chain, dmap.t, x1)
    return evaluate(dmap.f, xt) - evaluate(dmap.f_star, xt)


def parameter_lipschitz(spec: ModelSpec, space: ParameterSpace, r_eval: float) -> float:
    """Bound L with ||f_a(x) - f_b(x)|| <= L ||a - b|| on the ball ||x|| <= r_eval.

    Linear: the spectral norm of the difference matrix is at most the
    Euclidean distance of the flattened parameters, so L = r_eval.
    One-hidden-layer: split the difference across the two layers; tanh has
    unit slope and outputs bounded by 1 per unit.
    """
    if spec.family == "linear":
        return float(r_eval)
    h = spec.hidden
    return float(np.sqrt(h + (space.radius * r_eval) ** 2))


def input_lipschitz(spec: ModelSpec, space: ParameterSpace) -> float:
    """Bound on the input-Lipschitz constant, uniform over the parameter ball."""
    if spec.family == "linear":
        return float(space.radius)
    # ||W2|| * ||W1|| maximized at equal split of the parameter norm
    return float(space.radius**2 / 2.0)


def family_lipschitz(spec: ModelSpec, space: ParameterSpace, r_eval: float) -> float:
    """Single constant serving both Lipschitz roles (parameters and inputs)."""
    return max(parameter_lipschitz(spec, space, r_eval), input_lipschitz(spec, space))


def save_thetas_csv(path, thetas: np.ndarray):
    """Flat CSV, one parameter vector per row."""
    arr = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_thetas_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)
