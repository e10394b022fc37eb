"""Real projective iterated function systems.

A system is a finite list of invertible 2x2 matrices acting on RP^1 by
``w_A[x] = [A x]``.  Words are tuples of 1-based letters; the word
``(i1, ..., in)`` addresses the product ``A_i1 A_i2 ... A_in`` and the composed
map ``w_i1 o ... o w_in``.

Two norms appear.  :func:`norm_max` (largest absolute entry) drives the
hyperbolicity certificate; :func:`spectral_radius` drives the zeta function and
the critical exponent.  Both are evaluated on determinant-normalized matrices,
since only the projective class of a matrix matters for the action.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, GeometryError, ResourceError
from .projline import ProjPoint, normalize, point

__all__ = [
    "MAX_PRODUCTS",
    "Mat2",
    "RPIFSSpec",
    "Cone",
    "apply",
    "sl2_normalize",
    "norm_max",
    "spectral_radius",
    "compose",
    "products",
    "words",
    "HyperbolicityCertificate",
    "hyperbolicity_certificate",
    "ZetaPartial",
    "zeta_partial",
    "critical_exponent",
    "refine",
    "midpoint",
    "coding_map",
    "cantor_spec",
    "load_spec",
]

MAX_PRODUCTS = 10**7


@dataclass(frozen=True)
class Mat2:
    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        if self.det == 0:
            raise DomainError(f"singular matrix {self.rows()}")

    @classmethod
    def from_rows(cls, rows) -> "Mat2":
        (a11, a12), (a21, a22) = rows
        return cls(float(a11), float(a12), float(a21), float(a22))

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def is_affine(self) -> bool:
        """True when the chart action is ``x -> s x + b`` (no pole in RP*)."""
        return self.a21 == 0

    def rows(self) -> list[list[float]]:
        return [[self.a11, self.a12], [self.a21, self.a22]]

    def to_array(self) -> np.ndarray:
        return np.array(self.rows(), dtype=float)

    def scaled(self, c: float) -> "Mat2":
        return Mat2(c * self.a11, c * self.a12, c * self.a21, c * self.a22)

    def inverse(self) -> "Mat2":
        d = self.det
        return Mat2(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def chart(self, x: float) -> float:
        """Moebius action on a chart coordinate; raises at the pole."""
        den = self.a21 * x + self.a22
        if den == 0:
            raise GeometryError(f"{x!r} is mapped to infinity")
        return (self.a11 * x + self.a12) / den


def apply(A: Mat2, p: ProjPoint) -> ProjPoint:
    return normalize(A.a11 * p.h0 + A.a12 * p.h1, A.a21 * p.h0 + A.a22 * p.h1)


def sl2_normalize(A: Mat2) -> Mat2:
    d = A.det
    if d <= 0:
        raise DomainError("SL(2,R) normalization needs det > 0")
    return A.scaled(1.0 / math.sqrt(d))


def norm_max(A: Mat2) -> float:
    return max(abs(A.a11), abs(A.a12), abs(A.a21), abs(A.a22))


def _spectral_radius_array(M: np.ndarray) -> np.ndarray:
    tr = M[..., 0, 0] + M[..., 1, 1]
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    disc = tr * tr - 4.0 * det
    real = 0.5 * (np.abs(tr) + np.sqrt(np.maximum(disc, 0.0)))
    cplx = np.sqrt(np.abs(det))
    return np.where(disc >= 0, real, cplx)


def spectral_radius(A: Mat2) -> float:
    """Largest eigenvalue modulus, real pair or complex pair."""
    return float(_spectral_radius_array(A.to_array()))


@dataclass(frozen=True)
class RPIFSSpec:
    mats: tuple[Mat2, ...]
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.mats:
            raise DomainError("a system needs at least one matrix")
        if self.probs is not None:
            if len(self.probs) != len(self.mats):
                raise DomainError("invalid probability vector: length differs from number of matrices")
            if any(not p > 0 for p in self.probs):
                raise DomainError("invalid probability vector: entries must be positive")
            if abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise DomainError("invalid probability vector: entries must sum to 1")

    @property
    def m(self) -> int:
        return len(self.mats)

    @property
    def is_affine(self) -> bool:
        return all(A.is_affine for A in self.mats)

    def normalized(self) -> "RPIFSSpec":
        """Each matrix scaled to |det| = 1; same projective maps."""
        mats = tuple(A.scaled(1.0 / math.sqrt(abs(A.det))) for A in self.mats)
        return RPIFSSpec(mats, self.probs)

    def with_probs(self, probs: Sequence[float]) -> "RPIFSSpec":
        return RPIFSSpec(self.mats, tuple(float(p) for p in probs))

    def array(self) -> np.ndarray:
        return np.array([A.rows() for A in self.mats], dtype=float)

    def to_json(self) -> dict:
        out = {"matrices": [A.rows() for A in self.mats]}
        if self.probs is not None:
            out["probs"] = list(self.probs)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "RPIFSSpec":
        try:
            mats = tuple(Mat2.from_rows(rows) for rows in obj["matrices"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"malformed system description: {exc}") from exc
        probs = obj.get("probs")
        if probs is not None:
            probs = tuple(float(p) for p in probs)
        return cls(mats, probs)

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def cantor_spec() -> RPIFSSpec:
    """The bundled two-map Cantor system with probabilities (1/2, 1/2)."""
    return load_spec(Path(__file__).parent / "data" / "cantor.json")


def load_spec(path) -> RPIFSSpec:
    with open(path) as fh:
        return RPIFSSpec.from_json(json.load(fh))


def _check_word(spec: RPIFSSpec, w: Sequence[int]) -> tuple[int, ...]:
    w = tuple(int(i) for i in w)
    for i in w:
        if not 1 <= i <= spec.m:
            raise DomainError(f"letter {i} outside alphabet 1..{spec.m}")
    return w


def compose(spec: RPIFSSpec, w: Sequence[int]) -> Mat2:
    """Left-to-right product ``A_w1 A_w2 ... A_wn``; identity for the empty word."""
    out = Mat2.identity()
    for i in _check_word(spec, w):
        out = out @ spec.mats[i - 1]
    return out


def _check_cap(m: int, depth: int):
    if depth < 0:
        raise DomainError("depth must be non-negative")
    if m**depth > MAX_PRODUCTS:
        raise ResourceError(f"{m}^{depth} products exceed the cap of {MAX_PRODUCTS}")


def words(m: int, depth: int) -> Iterable[tuple[int, ...]]:
    """All words of a given length in lexicographic order."""
    return itertools.product(range(1, m + 1), repeat=depth)


def products(spec: RPIFSSpec, depth: int, normalized: bool = False) -> list[np.ndarray]:
    """Stacked products for every level ``0..depth``.

    Level ``n`` is an array of shape ``(m**n, 2, 2)`` ordered lexicographically
    by word (last letter varies fastest).
    """
    _check_cap(spec.m, depth)
    gens = (spec.normalized() if normalized else spec).array()
    levels = [np.eye(2)[None]]
    for _ in range(depth):
        prev = levels[-1]
        nxt = np.matmul(prev[:, None], gens[None]).reshape(-1, 2, 2)
        levels.append(nxt)
    return levels


@dataclass(frozen=True)
class HyperbolicityCertificate:
    lambda_est: float
    c_est: float
    passed: bool
    min_norms: tuple[float, ...]


def hyperbolicity_certificate(spec: RPIFSSpec, max_depth: int) -> HyperbolicityCertificate:
    """Numeric check of ``||A|| >= c lambda^n`` over all products up to ``max_depth``.

    Uses the max-entry norm on determinant-normalized matrices.  A pass is
    evidence of uniform hyperbolicity at this depth, not a proof.
    """
    if max_depth < 2:
        raise DomainError("max_depth must be at least 2")
    levels = products(spec, max_depth, normalized=True)
    mins = [float(np.abs(levels[n]).max(axis=(1, 2)).min()) for n in range(1, max_depth + 1)]
    lam = mins[-1] ** (1.0 / max_depth)
    c = min(mn / lam**n for n, mn in enumerate(mins, start=1))
    return HyperbolicityCertificate(lam, c, lam > 1.0, tuple(mins))


@dataclass(frozen=True)
class ZetaPartial:
    level_sums: tuple[float, ...]
    total: float


def _log_radii(spec: RPIFSSpec, depth: int) -> list[np.ndarray]:
    levels = products(spec, depth, normalized=True)
    return [np.log(_spectral_radius_array(L)) for L in levels]


def _log_level_sum(log_rho: np.ndarray, t: float) -> float:
    e = -2.0 * t * log_rho
    top = e.max()
    return float(top + math.log(np.exp(e - top).sum()))


def zeta_partial(spec: RPIFSSpec, t: float, depth: int) -> ZetaPartial:
    """Truncated zeta series: level ``n`` sums ``rho(A_i)^(-2t)`` over words of length ``n``."""
    if t < 0:
        raise DomainError("t must be non-negative")
    if depth < 1:
        raise DomainError("depth must be at least 1")
    logs = _log_radii(spec, depth)
    sums = tuple(math.exp(_log_level_sum(logs[n], t)) for n in range(1, depth + 1))
    return ZetaPartial(sums, math.fsum(sums))


def critical_exponent(spec: RPIFSSpec, depth: int = 12, tol: float = 1e-8) -> float:
    """Exponent where the zeta series stops diverging.

    Bisects on ``t`` for the root of ``S_depth(t) / S_{depth-1}(t) = 1``.  The
    Hausdorff dimension estimate is ``min(1, result)``.
    """
    if depth < 3:
        raise DomainError("depth must be at least 3")
    if tol <= 0:
        raise DomainError("tol must be positive")
    logs = _log_radii(spec, depth)
    hi_lvl, lo_lvl = logs[depth], logs[depth - 1]

    def log_ratio(t):
        return _log_level_sum(hi_lvl, t) - _log_level_sum(lo_lvl, t)

    if log_ratio(0.0) <= 0:
        raise DomainError("no bracketing: level ratio at t=0 is not above 1")
    t_lo, t_hi = 0.0, 1.0
    while log_ratio(t_hi) > 0:
        t_lo, t_hi = t_hi, 2.0 * t_hi
        if t_hi > 1024:
            raise DomainError("no bracketing: level ratio stays above 1 (norms do not grow)")
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        if log_ratio(mid) > 0:
            t_lo = mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


@dataclass(frozen=True)
class Cone:
    """Segment of RP* between two finite points, not passing through infinity."""

    lo: ProjPoint
    hi: ProjPoint

    def __post_init__(self):
        if self.lo.is_infinite or self.hi.is_infinite:
            raise GeometryError("cone endpoints must be finite")
        if self.lo.x > self.hi.x:
            raise DomainError("cone endpoints out of order")

    @classmethod
    def between(cls, a: float, b: float) -> "Cone":
        a, b = sorted((float(a), float(b)))
        return cls(point(a), point(b))

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lo.x, self.hi.x

    @property
    def diameter(self) -> float:
        return self.hi.x - self.lo.x

    @property
    def midpoint(self) -> ProjPoint:
        return point(0.5 * (self.lo.x + self.hi.x))

    def contains(self, other: "Cone", tol: float = 0.0) -> bool:
        return self.lo.x - tol <= other.lo.x and other.hi.x <= self.hi.x + tol

    def image(self, A: Mat2) -> "Cone":
        """Image under ``w_A``; raises if the pole lies in the closed segment."""
        lo, hi = self.bounds
        if A.a21 != 0:
            pole = -A.a22 / A.a21
            if lo <= pole <= hi:
                raise GeometryError(f"cone [{lo!r}, {hi!r}] wraps through infinity")
        return Cone.between(A.chart(lo), A.chart(hi))


def midpoint(c: Cone) -> ProjPoint:
    return c.midpoint


def _images(levels_n: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    a11, a12 = levels_n[:, 0, 0], levels_n[:, 0, 1]
    a21, a22 = levels_n[:, 1, 0], levels_n[:, 1, 1]
    den_lo = a21 * lo + a22
    den_hi = a21 * hi + a22
    # the pole lies in [lo, hi] iff the denominator vanishes or changes sign there
    if np.any(den_lo * den_hi <= 0):
        raise GeometryError("a cone image wraps through infinity")
    y_lo = (a11 * lo + a12) / den_lo
    y_hi = (a11 * hi + a12) / den_hi
    return np.minimum(y_lo, y_hi), np.maximum(y_lo, y_hi)


def refine(spec: RPIFSSpec, base: Cone, depth: int) -> list[tuple[tuple[int, ...], Cone]]:
    """All depth-``depth`` cylinder cones ``w_{A_w}(base)``, ordered by word."""
    levels = products(spec, depth)
    lo, hi = base.bounds
    for n in range(1, depth):
        _images(levels[n], lo, hi)
    ylo, yhi = _images(levels[depth], lo, hi)
    return [
        (w, Cone(point(a), point(b)))
        for w, a, b in zip(words(spec.m, depth), ylo.tolist(), yhi.tolist())
    ]


def coding_map(
    spec: RPIFSSpec,
    prefix: Sequence[int],
    seed: ProjPoint,
    depth: int,
    extend: str = "periodic",
) -> ProjPoint:
    """Finite-depth approximation of the coding map.

    ``prefix`` is extended to ``depth`` letters, periodically or by repeating
    its last letter (``extend="last"``), then ``w_i1 o ... o w_idepth`` is
    applied to ``seed``.
    """
    prefix = _check_word(spec, prefix)
    if not prefix:
        raise DomainError("prefix must be non-empty")
    if depth < len(prefix):
        raise DomainError("depth shorter than prefix")
    if extend == "periodic":
        letters = [prefix[k % len(prefix)] for k in range(depth)]
    elif extend == "last":
        letters = list(prefix) + [prefix[-1]] * (depth - len(prefix))
    else:
        raise DomainError(f"unknown extension mode {extend!r}")
    p = seed
    for i in reversed(letters):
        p = apply(spec.mats[i - 1], p)
        if p.is_infinite:
            raise GeometryError("coding map iterate reached infinity")
    return p
