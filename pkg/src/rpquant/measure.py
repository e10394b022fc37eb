"""Bernoulli measures on code space and the invariant measure on RP^1.

For affine systems (every matrix has ``a21 == 0``) each map acts on the chart
as ``x -> s_i x + b_i`` with ``s_i = a11/a22`` and ``b_i = a12/a22``, and the
mean and second moment of the invariant measure solve a pair of linear
fixed-point equations.  Non-affine systems get sampling and cone masses only.

Sampling uses numpy's PCG64 generator: with ``rng = Generator(PCG64(seed))``
the step ``k`` map index is the first ``i`` with ``u_k < p_1 + ... + p_i``
where ``u = rng.random(burn_in + n)``.  The chain starts at the midpoint of the
base cone and the first ``burn_in`` iterates are dropped.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, GeometryError, UnsupportedError
from .projline import ProjPoint, point
from .rpifs import Cone, Mat2, RPIFSSpec, _check_word, products

__all__ = [
    "BernoulliSpec",
    "SelfSimilarMeasure",
    "CylinderTable",
    "cylinder_mass",
    "solve_moments",
    "affine_hull",
    "cylinders",
    "sample",
    "sample_chart",
    "cone_mass",
    "push_forward",
    "cantor_measure",
]


@dataclass(frozen=True)
class BernoulliSpec:
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.probs or any(not p > 0 for p in self.probs):
            raise DomainError("invalid probability vector: entries must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise DomainError("invalid probability vector: entries must sum to 1")


def cylinder_mass(b: BernoulliSpec, w: Sequence[int]) -> float:
    mass = 1.0
    for i in w:
        if not 1 <= i <= len(b.probs):
            raise DomainError(f"letter {i} outside alphabet 1..{len(b.probs)}")
        mass *= b.probs[i - 1]
    return mass


def _chart_maps(spec: RPIFSSpec) -> tuple[np.ndarray, np.ndarray]:
    s = np.array([A.a11 / A.a22 for A in spec.mats])
    b = np.array([A.a12 / A.a22 for A in spec.mats])
    return s, b


def affine_hull(spec: RPIFSSpec, max_iter: int = 2000) -> Cone:
    """Smallest closed interval containing the attractor of an affine contraction system."""
    if not spec.is_affine:
        raise UnsupportedError("hull is only computed for affine systems")
    s, b = _chart_maps(spec)
    if np.any(np.abs(s) >= 1):
        raise DomainError("affine hull needs every chart map to contract")
    # shrink an invariant interval onto the hull; approached from outside so
    # the result always contains the attractor
    radius = float(np.max(np.abs(b) / (1.0 - np.abs(s)))) * (1 + 1e-9) + 1e-300
    lo, hi = -radius, radius
    for _ in range(max_iter):
        ends = np.concatenate([s * lo + b, s * hi + b])
        new_lo, new_hi = max(lo, float(ends.min())), min(hi, float(ends.max()))
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
    return Cone.between(lo, hi)


class SelfSimilarMeasure:
    """Invariant probability measure of a weighted system, supported in ``base``."""

    def __init__(self, spec: RPIFSSpec, base: Cone | None = None):
        if spec.probs is None:
            raise DomainError("a self-similar measure needs a probability vector")
        self.spec = spec
        self.bernoulli = BernoulliSpec(spec.probs)
        self.affine = spec.is_affine
        if base is None:
            if not self.affine:
                raise DomainError("non-affine systems need an explicit base cone")
            base = affine_hull(spec)
        self.base = base
        self.mean = self.second_moment = None
        if self.affine:
            s, b = _chart_maps(spec)
            p = np.array(spec.probs)
            if float(p @ (s * s)) < 1:
                self.mean, self.second_moment = _moments(p, s, b)

    @property
    def variance(self) -> float:
        self._require_moments()
        return self.second_moment - self.mean**2

    def _require_moments(self):
        if not self.affine:
            raise UnsupportedError("exact moments need an affine system")
        if self.mean is None:
            raise DomainError("system does not contract in mean square")

    def chart_maps(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.affine:
            raise UnsupportedError("chart maps are affine only for affine systems")
        return _chart_maps(self.spec)

    def __repr__(self):
        return f"SelfSimilarMeasure(m={self.spec.m}, base={self.base.bounds}, affine={self.affine})"


def _moments(p, s, b) -> tuple[float, float]:
    mean = float(p @ b) / (1.0 - float(p @ s))
    num = float(p @ (2.0 * s * b * mean + b * b))
    return mean, num / (1.0 - float(p @ (s * s)))


def solve_moments(m: SelfSimilarMeasure) -> tuple[float, float]:
    """Mean and second moment (about the chart origin) of an affine invariant measure."""
    m._require_moments()
    return m.mean, m.second_moment


@lru_cache(maxsize=1)
def cantor_measure() -> SelfSimilarMeasure:
    from .rpifs import cantor_spec

    return SelfSimilarMeasure(cantor_spec())


@dataclass(frozen=True)
class CylinderTable:
    """Depth-``depth`` cylinders of an affine measure, lexicographic by word.

    Cylinder ``k`` carries mass ``mass[k]`` and chart map ``x -> scale[k] x + offset[k]``.
    """

    depth: int
    mass: np.ndarray
    scale: np.ndarray
    offset: np.ndarray

    def cones(self, base: Cone) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = base.bounds
        a = self.offset + self.scale * lo
        b = self.offset + self.scale * hi
        return np.minimum(a, b), np.maximum(a, b)


def cylinders(m: SelfSimilarMeasure, depth: int) -> CylinderTable:
    if not m.affine:
        raise UnsupportedError("cylinder tables need an affine system")
    levels = products(m.spec, depth)
    P = levels[depth]
    mass = np.ones(1)
    p = np.array(m.spec.probs)
    for _ in range(depth):
        mass = np.outer(mass, p).ravel()
    d = P[:, 1, 1]
    return CylinderTable(depth, mass, P[:, 0, 0] / d, P[:, 0, 1] / d)


def sample_chart(m: SelfSimilarMeasure, n: int, seed: int, burn_in: int = 50) -> np.ndarray:
    """Chaos-game iterates as chart coordinates."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if burn_in < 0:
        raise DomainError("burn_in must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(burn_in + n)
    cum = np.cumsum(m.spec.probs)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), m.spec.m - 1).tolist()
    out = np.empty(n)
    x = m.base.midpoint.x
    if m.affine:
        s, b = (v.tolist() for v in _chart_maps(m.spec))
        for k, i in enumerate(idx):
            x = s[i] * x + b[i]
            if k >= burn_in:
                out[k - burn_in] = x
    else:
        mats = m.spec.mats
        for k, i in enumerate(idx):
            A = mats[i]
            den = A.a21 * x + A.a22
            if den == 0:
                raise GeometryError("chaos game iterate escaped to infinity")
            x = (A.a11 * x + A.a12) / den
            if k >= burn_in:
                out[k - burn_in] = x
    return out


def sample(m: SelfSimilarMeasure, n: int, seed: int, burn_in: int = 50) -> list[ProjPoint]:
    return [point(x) for x in sample_chart(m, n, seed, burn_in).tolist()]


def cone_mass(m: SelfSimilarMeasure, c: Cone, depth: int) -> tuple[float, float]:
    """Lower and upper bounds on ``P(c)`` from depth-``depth`` cylinder cones.

    Cylinders that fall fully inside ``c`` count toward both bounds, those that
    only touch it count toward the upper bound.  Disjoint and interior
    cylinders are not refined further.
    """
    if depth < 1:
        raise DomainError("depth must be at least 1")
    from .rpifs import _check_cap

    _check_cap(m.spec.m, depth)
    lo, hi = c.bounds
    eps = 1e-12 * (1.0 + max(abs(lo), abs(hi)))
    lower = upper = 0.0
    stack: list[tuple[int, float, Mat2]] = [(0, 1.0, Mat2.identity())]
    probs, mats = m.spec.probs, m.spec.mats
    while stack:
        level, mass, A = stack.pop()
        y_lo, y_hi = m.base.image(A).bounds
        if y_hi < lo - eps or y_lo > hi + eps:
            continue
        if lo - eps <= y_lo and y_hi <= hi + eps:
            lower += mass
            upper += mass
        elif level == depth:
            upper += mass
        else:
            for p, B in zip(probs, mats):
                stack.append((level + 1, mass * p, A @ B))
    return lower, upper


def push_forward(m: SelfSimilarMeasure, T: Mat2) -> SelfSimilarMeasure:
    """Image measure under a chart-affine map ``x -> (a11 x + a12) / a22``."""
    if T.a21 != 0:
        raise UnsupportedError("push-forward is only implemented for a21 = 0")
    T = T.scaled(1.0 / T.a22)
    Tinv = T.inverse()
    mats = tuple(T @ A @ Tinv for A in m.spec.mats)
    return SelfSimilarMeasure(RPIFSSpec(mats, m.spec.probs), m.base.image(T))


def word_mass(m: SelfSimilarMeasure, w: Sequence[int]) -> float:
    return cylinder_mass(m.bernoulli, _check_word(m.spec, w))
