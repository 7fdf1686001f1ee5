"""Deterministic maps that relate each task's inputs to the previous task's.

A task sequence is driven by a chain of maps, one per task, with the first
entry always the identity. Every map carries an operator-norm Lipschitz
bound so that the global smoothness constants of the composed input-to-error
map can be computed without touching data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHOGONALITY_TOL = 1e-10

_KINDS = ("identity", "scaling", "rotation", "permutation", "affine", "composition")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Transformation:
    """One tagged map on R^d. Immutable; safe to share across workers.

    ``lipschitz`` is an operator-norm bound: 1 for identity, rotation and
    permutation, |s| for scaling, the spectral norm of the matrix for
    affine, and the product of parts for a composition.
    """

    kind: str
    scale: float | None = None
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    perm: np.ndarray | None = None
    parts: tuple["Transformation", ...] = ()
    lipschitz: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transformation kind {self.kind!r}")
        if not np.isfinite(self.lipschitz) or self.lipschitz < 0:
            raise ValueError("lipschitz bound must be finite and non-negative")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Apply to a single d-vector or a batch of shape (N, d)."""
        if self.kind == "identity":
            return x
        if self.kind == "scaling":
            return self.scale * x
        if self.kind in ("rotation", "affine"):
            y = x @ self.matrix.T
            if self.offset is not None:
                y = y + self.offset
            return y
        if self.kind == "permutation":
            return x[..., self.perm]
        y = x
        for part in self.parts:
            y = part(y)
        return y

    def to_record(self) -> dict:
        """Tagged record used by the config file format."""
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "scaling":
            return {"kind": "scaling", "s": float(self.scale)}
        if self.kind == "rotation":
            return {"kind": "rotation", "matrix": self.matrix.tolist()}
        if self.kind == "permutation":
            return {"kind": "permutation", "perm": [int(j) for j in self.perm]}
        if self.kind == "affine":
            rec = {"kind": "affine", "matrix": self.matrix.tolist()}
            if self.offset is not None:
                rec["offset"] = self.offset.tolist()
            return rec
        return {"kind": "composition", "parts": [p.to_record() for p in self.parts]}


def identity() -> Transformation:
    return Transformation(kind="identity", lipschitz=1.0)


def scaling(s: float) -> Transformation:
    if not np.isfinite(s) or s <= 0:
        raise ValueError("scaling factor must be a positive real")
    return Transformation(kind="scaling", scale=float(s), lipschitz=abs(float(s)))


def rotation(matrix: np.ndarray) -> Transformation:
    """Rotation given directly as an orthogonal matrix."""
    q = _readonly(matrix)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("rotation matrix must be square")
    err = np.max(np.abs(q.T @ q - np.eye(q.shape[0])))
    if err > ORTHOGONALITY_TOL:
        raise ValueError(f"matrix is not orthogonal (QtQ deviates by {err:.2e})")
    return Transformation(kind="rotation", matrix=q, lipschitz=1.0)


def rotation_from_planes(d: int, planes: list[tuple[int, int, float]]) -> Transformation:
    """Rotation built as a product of planar rotations (i, j, angle in radians)."""
    q = np.eye(d)
    for i, j, angle in planes:
        r = np.eye(d)
        c, s = np.cos(angle), np.sin(angle)
        r[i, i] = c
        r[j, j] = c
        r[i, j] = -s
        r[j, i] = s
        q = r @ q
    return rotation(q)


def permutation(perm) -> Transformation:
    p = np.asarray(perm, dtype=np.intp)
    if sorted(p.tolist()) != list(range(p.size)):
        raise ValueError("permutation must be a bijection on 0..d-1")
    p = p.copy()
    p.setflags(write=False)
    return Transformation(kind="permutation", perm=p, lipschitz=1.0)


def affine(matrix: np.ndarray, offset: np.ndarray | None = None) -> Transformation:
    a = _readonly(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("affine matrix must be square")
    b = _readonly(offset) if offset is not None else None
    lip = float(np.linalg.norm(a, ord=2))
    return Transformation(kind="affine", matrix=a, offset=b, lipschitz=lip)


def compose(parts: list[Transformation]) -> Transformation:
    lip = float(np.prod([p.lipschitz for p in parts])) if parts else 1.0
    return Transformation(kind="composition", parts=tuple(parts), lipschitz=lip)


def from_record(rec: dict) -> Transformation:
    kind = rec.get("kind")
    if kind == "identity":
        return identity()
    if kind == "scaling":
        return scaling(rec["s"])
    if kind == "rotation":
        if "matrix" in rec:
            return rotation(np.asarray(rec["matrix"]))
        planes = [(int(i), int(j), float(a)) for i, j, a in rec["planes"]]
        return rotation_from_planes(int(rec["dim"]), planes)
    if kind == "permutation":
        return permutation(rec["perm"])
    if kind == "affine":
        return affine(np.asarray(rec["matrix"]), rec.get("offset"))
    if kind == "composition":
        return compose([from_record(r) for r in rec["parts"]])
    raise ValueError(f"unknown transformation record kind {kind!r}")


@dataclass(frozen=True, eq=False)
class DependencyChain:
    """The per-task maps, first entry identity. Evaluation is Markov:
    each task's inputs are produced from the previous task's only."""

    maps: tuple[Transformation, ...]
    markov_only: bool = True

    def __post_init__(self):
        if len(self.maps) < 1:
            raise ValueError("chain needs at least one map")
        if self.maps[0].kind != "identity":
            raise ValueError("first chain entry must be the identity")
        object.__setattr__(self, "maps", tuple(self.maps))

    def __len__(self) -> int:
        return len(self.maps)

    def cumulative_lipschitz(self, t: int) -> float:
        """Product of the per-map bounds for maps 1..t (t is 1-based)."""
        self._check_t(t)
        out = float(np.prod([m.lipschitz for m in self.maps[:t]]))
        if not np.isfinite(out) or out <= 0:
            raise ValueError("cumulative Lipschitz bound must be finite and positive")
        return out

    def max_cumulative_lipschitz(self) -> float:
        return max(self.cumulative_lipschitz(t) for t in range(1, len(self) + 1))

    def _check_t(self, t: int):
        if not 1 <= t <= len(self.maps):
            raise IndexError(f"task index {t} outside 1..{len(self.maps)}")


def chain_of(records_or_maps) -> DependencyChain:
    maps = [m if isinstance(m, Transformation) else from_record(m) for m in records_or_maps]
    return DependencyChain(maps=tuple(maps))


def apply(chain: DependencyChain, t: int, x1: np.ndarray) -> np.ndarray:
    """Propagate task-1 inputs to task t by folding maps 2..t in order.

    ``x1`` may be one vector or a batch (N, d). apply(chain, 1, x1) is x1.
    """
    chain._check_t(t)
    x = np.asarray(x1, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    for k in range(1, t):
        x = chain.maps[k](x)
    return x


def c_max_probe(
    chain: DependencyChain,
    model=None,
    space=None,
    f_star=None,
    n_probe: int = 10_000,
    seed: int = 0,
) -> float:
    """Largest norm of a predictor evaluated at the propagated origin.

    Probed over random parameters in the ball (plus the true predictor when
    given). Without a model this falls back to lf * ||chain(0)|| with lf = 1,
    which is exact for families that vanish at the origin.
    """
    origins = [apply(chain, t, np.zeros(_chain_dim(chain)))
               for t in range(1, len(chain) + 1)]
    if model is None or space is None:
        return max(float(np.linalg.norm(o)) for o in origins)

    from .models import Predictor, evaluate

    rng = np.random.default_rng(seed)
    thetas = rng.standard_normal((n_probe, space.p))
    norms = np.linalg.norm(thetas, axis=1, keepdims=True)
    radii = space.radius * rng.random((n_probe, 1)) ** (1.0 / space.p)
    thetas = thetas / np.maximum(norms, 1e-300) * radii
    best = 0.0
    for origin in origins:
        z = origin[None, :]
        for theta in thetas:
            val = float(np.linalg.norm(evaluate(Predictor(model, theta), z)))
            best = max(best, val)
        if f_star is not None:
            best = max(best, float(np.linalg.norm(evaluate(f_star, z))))
    return best


def _chain_dim(chain: DependencyChain) -> int:
    for m in chain.maps:
        if m.matrix is not None:
            return m.matrix.shape[0]
        if m.perm is not None:
            return m.perm.size
    return 1


def lipschitz_constants(
    chain: DependencyChain,
    lf: float,
    c_max: float | None = None,
    **probe_kwargs,
) -> tuple[float, float, float]:
    """Global constants (L_G, k_G, alpha) of the composed difference map.

    L_G = 2 * lf * max_t prod_{i<=t} L_i. The radius-dependent constant is
    linearized as K_G(r) <= k_G * r^alpha with alpha = 1 and
    k_G = 2 L_G + 2 C_max + 1; C_max defaults to a probe of the propagated
    origin (zero for origin-preserving chains and families).
    """
    if not np.isfinite(lf) or lf <= 0:
        raise ValueError("lf must be a positive real")
    l_g = 2.0 * lf * chain.max_cumulative_lipschitz()
    if c_max is None:
        if probe_kwargs.get("model") is not None:
            c_max = c_max_probe(chain, **probe_kwargs)
        else:
            # no family to probe: bound ||f(chain(0))|| <= lf * ||chain(0)||,
            # valid for families that vanish at the origin
            c_max = lf * c_max_probe(chain)
    k_g = 2.0 * l_g + 2.0 * c_max + 1.0
    return l_g, k_g, 1.0
