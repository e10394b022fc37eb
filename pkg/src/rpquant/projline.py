"""Arithmetic on the real projective line RP^1 = RP* u {inf}.

Points are kept in normalized homogeneous coordinates: ``[x:1]`` for points of
the affine chart RP* and ``[1:0]`` for the point at infinity.  The chart
operations (addition, multiplication, scaling, subtraction) and the metric are
only defined on RP*; passing infinity raises :class:`DomainError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

__all__ = [
    "ProjPoint",
    "INF",
    "normalize",
    "point",
    "oplus",
    "star",
    "scalar",
    "ominus",
    "dist",
    "approx_eq",
]


@dataclass(frozen=True)
class ProjPoint:
    h0: float
    h1: float

    def __post_init__(self):
        if self.h0 == 0 and self.h1 == 0:
            raise DomainError("(0, 0) is not a point of RP^1")

    @property
    def is_infinite(self) -> bool:
        return self.h1 == 0

    @property
    def x(self) -> float:
        """Affine chart coordinate; infinity has none."""
        if self.h1 == 0:
            raise DomainError("the point at infinity has no chart coordinate")
        return self.h0 / self.h1

    def to_json(self) -> list[float]:
        return [self.h0, self.h1]

    @classmethod
    def from_json(cls, pair) -> "ProjPoint":
        h0, h1 = pair
        return normalize(float(h0), float(h1))

    def __repr__(self):
        if self.h1 == 0:
            return "[1:0]"
        return f"[{self.h0!r}:1]"


INF = ProjPoint(1.0, 0.0)


def normalize(h0: float, h1: float) -> ProjPoint:
    """Canonical representative of the class of ``(h0, h1)``."""
    if h0 == 0 and h1 == 0:
        raise DomainError("(0, 0) is not a point of RP^1")
    if h1 == 0:
        return INF
    x = h0 / h1
    if math.isinf(x):
        # chart coordinate beyond float range
        return INF
    # keep a single signed zero so equality is exact
    return ProjPoint(x + 0.0, 1.0)


def point(x: float) -> ProjPoint:
    """The chart point ``[x:1]``."""
    return ProjPoint(float(x) + 0.0, 1.0)


def _chart(p: ProjPoint) -> float:
    if p.h1 == 0:
        raise DomainError("operation undefined at the point at infinity")
    return p.h0 / p.h1


def oplus(p: ProjPoint, q: ProjPoint) -> ProjPoint:
    return point(_chart(p) + _chart(q))


def star(p: ProjPoint, q: ProjPoint) -> ProjPoint:
    return point(_chart(p) * _chart(q))


def scalar(c: float, p: ProjPoint) -> ProjPoint:
    return point(c * _chart(p))


def ominus(p: ProjPoint, q: ProjPoint) -> ProjPoint:
    return point(_chart(p) - _chart(q))


def dist(p: ProjPoint, q: ProjPoint) -> float:
    """Projective metric on RP*: ``|x1 - x2|``."""
    return abs(_chart(p) - _chart(q))


def approx_eq(p: ProjPoint, q: ProjPoint, tol: float = 1e-12) -> bool:
    if p.is_infinite or q.is_infinite:
        return p.is_infinite and q.is_infinite
    return math.isclose(p.x, q.x, rel_tol=0.0, abs_tol=tol)
