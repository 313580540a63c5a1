"""Quadrature rules on the reference triangle and their affine pushforward.

Points are stored in barycentric form ``(l0, l1, l2)`` with respect to the
reference vertices ``(0, 0), (1, 0), (0, 1)``; weights sum to the reference
area 1/2.  Every rule is checked for monomial exactness when it is built.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError


class RuleKind(enum.Enum):
    CENTROID1 = "centroid1"
    GAUSS3 = "gauss3"
    GAUSS4 = "gauss4"
    VERTEX_MIDSIDE7 = "vertex-midside7"
    ERROR_RULE = "error-rule"


def reference_monomial_integral(a: int, b: int) -> float:
    """Exact value of the integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: RuleKind
    points: np.ndarray   # (n, 3) barycentric
    weights: np.ndarray  # (n,), sum 1/2
    precision: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(w) != len(pts):
            raise InvalidArgumentError("rule points must be (n, 3) barycentric with n weights")
        if abs(w.sum() - 0.5) > 1e-15:
            raise InvalidArgumentError(f"weights of {self.kind.value} sum to {w.sum()!r}, not 1/2")
        if np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-15) or np.any(pts < -1e-15):
            raise InvalidArgumentError(f"{self.kind.value} has a point outside the reference triangle")
        err = max_monomial_error(self)
        if err > 1e-13:
            raise InvalidArgumentError(
                f"{self.kind.value} misses its declared precision {self.precision} (error {err:.2e})")

    @property
    def xy(self) -> np.ndarray:
        """Reference coordinates ``(x, y) = (l1, l2)``."""
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


def max_monomial_error(rule: QuadratureRule, degree: int | None = None) -> float:
    """Largest relative error over monomials up to ``degree`` (default: the rule's precision)."""
    degree = rule.precision if degree is None else degree
    x, y = rule.xy.T
    worst = 0.0
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = reference_monomial_integral(a, b)
            approx = float(np.dot(rule.weights, x**a * y**b))
            worst = max(worst, abs(approx - exact) / exact)
    return worst


def _orbit3(a: float) -> list[tuple[float, float, float]]:
    """The three permutations of (a, b, b) with b = (1 - a) / 2."""
    b = 0.5 * (1.0 - a)
    return [(a, b, b), (b, a, b), (b, b, a)]


def _build(kind: RuleKind) -> QuadratureRule:
    third = 1.0 / 3.0
    if kind is RuleKind.CENTROID1:
        return QuadratureRule(kind, [(third, third, third)], [0.5], 1)
    if kind is RuleKind.GAUSS3:
        # edge midpoints
        pts = [(0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)]
        return QuadratureRule(kind, pts, [1.0 / 6.0] * 3, 2)
    if kind is RuleKind.GAUSS4:
        # the classical symmetric 4-point rule; its centroid weight is negative
        pts = [(third, third, third)] + _orbit3(0.6)
        w = [-27.0 / 96.0] + [25.0 / 96.0] * 3
        return QuadratureRule(kind, pts, w, 3)
    if kind is RuleKind.VERTEX_MIDSIDE7:
        pts = [(third, third, third),
               (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
               (0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)]
        w = np.array([27, 3, 3, 3, 8, 8, 8], dtype=float) / 120.0
        return QuadratureRule(kind, pts, w, 3)
    if kind is RuleKind.ERROR_RULE:
        # Dunavant degree 5
        s15 = math.sqrt(15.0)
        a1 = (9.0 - 2.0 * s15) / 21.0
        a2 = (9.0 + 2.0 * s15) / 21.0
        w1 = (155.0 + s15) / 2400.0
        w2 = (155.0 - s15) / 2400.0
        pts = [(third, third, third)] + _orbit3(a1) + _orbit3(a2)
        w = [9.0 / 80.0] + [w1] * 3 + [w2] * 3
        return QuadratureRule(kind, pts, w, 5)
    raise InvalidArgumentError(f"unknown rule kind {kind!r}")


@lru_cache(maxsize=None)
def _cached(kind: RuleKind) -> QuadratureRule:
    return _build(kind)


def rule(kind: RuleKind | str) -> QuadratureRule:
    """Return the built-in rule ``kind`` (a :class:`RuleKind` or its value string)."""
    try:
        kind = RuleKind(kind)
    except ValueError:
        raise InvalidArgumentError(f"unknown rule kind {kind!r}") from None
    return _cached(kind)


@dataclass(frozen=True)
class MappedRule:
    points: np.ndarray
    weights: np.ndarray


def map_to_cell(qrule: QuadratureRule, triangle) -> MappedRule:
    """Push ``qrule`` forward to a physical triangle given by its three vertices."""
    tri = np.asarray(triangle, dtype=float).reshape(3, 2)
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    scale = max(np.dot(e1, e1), np.dot(e2, e2), 1e-300)
    if abs(det) <= 1e-14 * scale:
        raise InvalidArgumentError("cannot map a quadrature rule to a degenerate triangle")
    return MappedRule(points=qrule.points @ tri, weights=qrule.weights * abs(det))


def outer_rule_is_gauss4(distance, delta: float, h_max: float):
    """Case-1 test on barycenter distances: ``distance < delta - h_max``."""
    return np.asarray(distance) < delta - h_max


def select_outer_rule(k: int, k2: int, mesh, delta: float | None = None) -> QuadratureRule:
    """Outer rule for the element pair ``(k, k2)``.

    Gauss4 when the barycenters are closer than ``delta - h_max`` (the pair
    is then taken to interact over all of ``E_k``), otherwise the
    vertex/midside rule, whose vertex and midside points reduce the chance of
    missing a partially interacting inner element.
    """
    delta = mesh.delta if delta is None else delta
    d = float(np.hypot(*(mesh.barycenters[k] - mesh.barycenters[k2])))
    if outer_rule_is_gauss4(d, delta, mesh.h_max):
        return rule(RuleKind.GAUSS4)
    return rule(RuleKind.VERTEX_MIDSIDE7)
