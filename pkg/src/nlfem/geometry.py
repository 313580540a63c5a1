"""Intersections of Euclidean balls with mesh elements.

A ball ``B_delta(x)`` is cut against every candidate element and the pieces
are returned as quadrature cells: triangles, and for the exact ball also
circular caps.  The approximate balls replace the caps by nothing
(``nocaps``), by inscribed triangles (``approxcaps``), or select whole
elements (``barycenter``, ``overlap``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError
from .mesh import Mesh


class BallStrategy(enum.Enum):
    EXACT_CAPS = "exactcaps"
    NO_CAPS = "nocaps"
    APPROX_CAPS = "approxcaps"
    BARYCENTER = "barycenter"
    OVERLAP = "overlap"
    SHIFTED = "shifted"
    BARYCENTER_NO_CAPS = "barycenter-nocaps"
    BARYCENTER_APPROX_CAPS = "barycenter-approxcaps"
    SHIFTED_NO_CAPS = "shifted-nocaps"

    @classmethod
    def parse(cls, value) -> "BallStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise InvalidArgumentError(f"unknown ball strategy {value!r} (expected one of {names})") from None

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def is_shifted(self) -> bool:
        return self in (BallStrategy.SHIFTED, BallStrategy.SHIFTED_NO_CAPS)

    @property
    def inner(self) -> "BallStrategy":
        """Strategy used for the inner (y) decomposition of a single ball."""
        return _INNER.get(self, self)


_CODES = {
    BallStrategy.EXACT_CAPS: K.S_EXACTCAPS,
    BallStrategy.NO_CAPS: K.S_NOCAPS,
    BallStrategy.APPROX_CAPS: K.S_APPROXCAPS,
    BallStrategy.BARYCENTER: K.S_BARYCENTER,
    BallStrategy.OVERLAP: K.S_OVERLAP,
    BallStrategy.SHIFTED: K.S_SHIFTED,
    BallStrategy.BARYCENTER_NO_CAPS: K.S_BARY_NOCAPS,
    BallStrategy.BARYCENTER_APPROX_CAPS: K.S_BARY_APPROXCAPS,
    BallStrategy.SHIFTED_NO_CAPS: K.S_SHIFTED_NOCAPS,
}

_INNER = {
    BallStrategy.SHIFTED: BallStrategy.EXACT_CAPS,
    BallStrategy.SHIFTED_NO_CAPS: BallStrategy.NO_CAPS,
    BallStrategy.BARYCENTER_NO_CAPS: BallStrategy.BARYCENTER,
    BallStrategy.BARYCENTER_APPROX_CAPS: BallStrategy.BARYCENTER,
}

_CLIP_MODE = {
    BallStrategy.EXACT_CAPS: K.EXACTCAPS,
    BallStrategy.NO_CAPS: K.NOCAPS,
    BallStrategy.APPROX_CAPS: K.APPROXCAPS,
}


class Overlap(enum.Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"


@dataclass(frozen=True)
class TriangleCell:
    vertices: np.ndarray  # (3, 2), counterclockwise

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
                           - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0]))


@dataclass(frozen=True)
class CapCell:
    """Circular segment cut off by the chord from ``exit_point`` to ``entry_point``.

    The cap lies to the right of that chord.  ``theta`` is the half angle,
    so the chord length is ``2 radius sin(theta)``.
    """

    center: np.ndarray
    radius: float
    exit_point: np.ndarray
    entry_point: np.ndarray
    theta: float

    @property
    def chord(self) -> float:
        return float(np.hypot(*(self.entry_point - self.exit_point)))

    @property
    def area(self) -> float:
        return 0.5 * self.radius**2 * K.segment_area_factor(self.theta)


@dataclass
class BallDecomposition:
    strategy: BallStrategy
    center: np.ndarray
    shifted_center: np.ndarray
    cells: list = field(default_factory=list)  # (element index, cell)

    @property
    def area(self) -> float:
        return float(sum(cell.area for _, cell in self.cells))

    def elements(self) -> np.ndarray:
        return np.unique([k for k, _ in self.cells]).astype(np.int64)

    def triangles(self):
        return [c for _, c in self.cells if isinstance(c, TriangleCell)]

    def caps(self):
        return [c for _, c in self.cells if isinstance(c, CapCell)]


def _as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("point has non-finite coordinates")
    return p


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not delta > 0.0 or not math.isfinite(delta):
        raise InvalidArgumentError(f"delta must be positive, got {delta!r}")
    return delta


def candidate_elements(mesh: Mesh, x, delta: float | None = None) -> np.ndarray:
    """Elements whose barycenter lies closer than ``delta + h_max`` to ``x``."""
    delta = mesh.delta if delta is None else _check_delta(delta)
    p = _as_point(x)
    d = np.hypot(mesh.barycenters[:, 0] - p[0], mesh.barycenters[:, 1] - p[1])
    return np.flatnonzero(d < delta + mesh.h_max)


def _tri(element) -> np.ndarray:
    tv = np.ascontiguousarray(np.asarray(element, dtype=float).reshape(3, 2))
    return tv


def edge_circle_intersections(vi, vj, x, delta: float) -> list[float]:
    """Ascending parameters in [0, 1] where the segment ``vi -> vj`` meets the circle."""
    a = _as_point(vi)
    b = _as_point(vj)
    c = _as_point(x)
    delta = _check_delta(delta)
    if np.array_equal(a, b):
        raise InvalidArgumentError("segment endpoints coincide")
    n, l1, l2 = K.segment_roots(a[0], a[1], b[0], b[1], c[0], c[1], delta)
    if n == 0:
        return []
    return [lam for lam in (l1, l2) if 0.0 <= lam <= 1.0]


def classify_overlap(element, x, delta: float) -> Overlap:
    tv = _tri(element)
    c = _as_point(x)
    delta = _check_delta(delta)
    n_in = sum(bool(K.inside(tv[i, 0], tv[i, 1], c[0], c[1], delta)) for i in range(3))
    if n_in == 3:
        return Overlap.FULL
    if K.disk_overlaps_triangle(tv, c[0], c[1], delta):
        return Overlap.PARTIAL
    return Overlap.NONE


def _walk(tv, c, delta):
    wp = np.empty((8, 2))
    wk = np.empty(8, np.int64)
    n, _ = K.boundary_walk(tv, c[0], c[1], delta, wp, wk)
    return wp[:n].copy(), wk[:n].copy()


def intersection_polygon(element, x, delta: float) -> np.ndarray:
    """Counterclockwise vertices of the polygon inscribed in ``element ∩ B_delta(x)``.

    The points are the element vertices inside the ball and the crossings
    of the element edges with the circle, in boundary order.
    """
    tv = _tri(element)
    c = _as_point(x)
    pts, _ = _walk(tv, c, _check_delta(delta))
    return pts


def polygon_area(polygon) -> float:
    p = np.asarray(polygon, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def fan_triangulate(polygon) -> list[TriangleCell]:
    """Triangles ``(p0, p_i, p_{i+1})`` of a convex counterclockwise polygon."""
    p = np.asarray(polygon, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise InvalidArgumentError("fan triangulation needs at least three points")
    return [TriangleCell(np.array([p[0], p[i], p[i + 1]])) for i in range(1, len(p) - 1)]


def cap_area(c: float, delta: float) -> float:
    """Area of the minor circular cap with chord length ``c``."""
    delta = _check_delta(delta)
    if c < 0 or c > 2.0 * delta * (1.0 + 1e-15):
        raise InvalidArgumentError(f"chord {c!r} does not fit in a circle of radius {delta!r}")
    s = min(c / (2.0 * delta), 1.0)
    return delta**2 * (math.asin(s) - s * math.sqrt(1.0 - s * s))


def cap_centroid_rule(cap: CapCell) -> tuple[np.ndarray, float]:
    """One-point rule at the cap centroid, weighted by the cap area."""
    fac = K.segment_area_factor(cap.theta)
    area = 0.5 * cap.radius**2 * fac
    if cap.theta <= 1e-12 or area == 0.0:
        return 0.5 * (cap.exit_point + cap.entry_point), 0.0
    d = cap.entry_point - cap.exit_point
    n = np.array([d[1], -d[0]]) / np.hypot(*d)
    dist = 4.0 * cap.radius * math.sin(cap.theta) ** 3 / (3.0 * fac)
    return cap.center + dist * n, area


def _arc_point(cap: CapCell, fraction: float) -> np.ndarray:
    v = cap.exit_point - cap.center
    alpha = math.atan2(v[1], v[0]) + 2.0 * cap.theta * fraction
    return cap.center + cap.radius * np.array([math.cos(alpha), math.sin(alpha)])


def approximate_cap_triangles(cap: CapCell, t: int = 1) -> list[TriangleCell]:
    """``t`` triangles inscribed in the cap.

    The arc is split into ``t + 1`` equal pieces; the triangles fan out from
    the chord's start point over the arc points, so ``t = 1`` uses the arc
    midpoint.
    """
    if int(t) < 1:
        raise InvalidArgumentError("need at least one triangle per cap")
    t = int(t)
    arc = [_arc_point(cap, m / (t + 1)) for m in range(1, t + 1)] + [cap.entry_point]
    return [TriangleCell(np.array([cap.exit_point, arc[m], arc[m + 1]])) for m in range(t)]


def _clip_cells(tv, c, delta, mode, t, min_area):
    tris = np.empty((K.max_cells(t), 6))
    caps = np.empty((4, K.CAP_COLS))
    wp = np.empty((8, 2))
    wk = np.empty(8, np.int64)
    nt, nc = K.clip_triangle(tv, c[0], c[1], delta, mode, int(t), min_area, tris, caps, wp, wk)
    cells = [TriangleCell(tris[i].reshape(3, 2).copy()) for i in range(nt)]
    for i in range(nc):
        row = caps[i]
        cells.append(CapCell(center=c.copy(), radius=delta, exit_point=row[3:5].copy(),
                             entry_point=row[5:7].copy(), theta=float(row[7])))
    return cells


def element_containing(mesh: Mesh, x) -> int:
    """Index of an element whose closure contains ``x``."""
    p = _as_point(x)
    v = mesh.vertices[mesh.elements]
    a, b, c = v[:, 0], v[:, 1], v[:, 2]

    def cross(u, w):
        return (w[:, 0] - u[:, 0]) * (p[1] - u[:, 1]) - (w[:, 1] - u[:, 1]) * (p[0] - u[:, 0])

    tol = -1e-12 * mesh.h_max**2
    hit = np.flatnonzero((cross(a, b) >= tol) & (cross(b, c) >= tol) & (cross(c, a) >= tol))
    if hit.size == 0:
        raise InvalidArgumentError(f"point {p.tolist()} lies outside the mesh")
    return int(hit[0])


def decompose_ball(mesh: Mesh, x, strategy, cap_triangles: int = 1,
                   delta: float | None = None, outer_element: int | None = None) -> BallDecomposition:
    """Quadrature cells of the (approximate) ball around ``x``.

    Shifted strategies recentre the ball at the barycenter of the outer
    element containing ``x`` (or ``outer_element`` when given).  The
    barycenter-based outer variants use the plain barycenter ball here;
    their outer-support splitting happens during assembly.
    """
    strategy = BallStrategy.parse(strategy)
    delta = mesh.delta if delta is None else _check_delta(delta)
    center = _as_point(x)
    shifted = center
    if strategy.is_shifted:
        k = element_containing(mesh, center) if outer_element is None else int(outer_element)
        shifted = np.array(mesh.barycenters[k], dtype=float)
    inner = strategy.inner
    dec = BallDecomposition(strategy=strategy, center=center, shifted_center=shifted)
    min_area = 1e-14 * mesh.h_max**2
    for e in candidate_elements(mesh, shifted, delta):
        tv = np.ascontiguousarray(mesh.vertices[mesh.elements[e]])
        if inner is BallStrategy.BARYCENTER:
            b = mesh.barycenters[e]
            take = bool(K.inside(b[0], b[1], shifted[0], shifted[1], delta))
        elif inner is BallStrategy.OVERLAP:
            take = bool(K.disk_overlaps_triangle(tv, shifted[0], shifted[1], delta))
        else:
            for cell in _clip_cells(tv, shifted, delta, _CLIP_MODE[inner], cap_triangles, min_area):
                dec.cells.append((int(e), cell))
            continue
        if take:
            dec.cells.append((int(e), TriangleCell(tv.copy())))
    return dec


def decomposition_svg(dec: BallDecomposition, mesh: Mesh | None = None, size: int = 480) -> str:
    """Best-effort SVG picture of a decomposition (debug aid)."""
    r = float(np.max([np.max(np.abs(c.vertices - dec.shifted_center)) for c in dec.triangles()]
                     + [c.radius for c in dec.caps()] + [1e-9]))
    lo = dec.shifted_center - 1.2 * r
    scale = size / (2.4 * r)

    def pt(p):
        q = (np.asarray(p) - lo) * scale
        return f"{q[0]:.2f},{size - q[1]:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    if mesh is not None:
        for e in candidate_elements(mesh, dec.shifted_center):
            pts = " ".join(pt(v) for v in mesh.vertices[mesh.elements[e]])
            out.append(f'<polygon points="{pts}" fill="none" stroke="#bbb" stroke-width="0.5"/>')
    for cell in dec.triangles():
        pts = " ".join(pt(v) for v in cell.vertices)
        out.append(f'<polygon points="{pts}" fill="#9cf" fill-opacity="0.5" stroke="#036" stroke-width="0.7"/>')
    for cap in dec.caps():
        rad = cap.radius * scale
        large = 1 if cap.theta > math.pi / 2 else 0
        # y axis is flipped, so a counterclockwise arc is drawn with sweep 0
        out.append(f'<path d="M {pt(cap.exit_point)} A {rad:.2f} {rad:.2f} 0 {large} 0 '
                   f'{pt(cap.entry_point)} Z" fill="#f96" fill-opacity="0.6" stroke="#930"/>')
    cx, cy = pt(dec.center).split(",")
    out.append(f'<circle cx="{cx}" cy="{cy}" r="2" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out)


def _cell_arrays(dec: BallDecomposition):
    tris = [c.vertices.reshape(6) for c in dec.triangles()]
    caps = [np.r_[0.0, 0.0, c.area, c.exit_point, c.entry_point, c.theta] for c in dec.caps()]
    tris = np.ascontiguousarray(np.array(tris, dtype=float).reshape(-1, 6))
    caps = np.ascontiguousarray(np.array(caps, dtype=float).reshape(-1, K.CAP_COLS))
    return tris, caps


def ball_difference_area(mesh: Mesh, x, strategy, resolution: int = 10**6, seed: int = 0,
                         cap_triangles: int = 1, delta: float | None = None,
                         outer_element: int | None = None) -> tuple[float, float]:
    """Sampled ``|B_delta(x) Δ B_delta,h(x)|`` and its standard error.

    ``resolution`` is the number of strata, one uniform point each, over a
    box that holds both balls.
    """
    if resolution < 1000:
        raise InvalidArgumentError("resolution must be at least 1000 sample points")
    delta = mesh.delta if delta is None else _check_delta(delta)
    dec = decompose_ball(mesh, x, strategy, cap_triangles, delta, outer_element)
    tris, caps = _cell_arrays(dec)
    c = dec.center
    s = dec.shifted_center
    half = delta + 2.0 * mesh.h_max + float(np.hypot(*(s - c)))
    n_side = int(math.ceil(math.sqrt(resolution)))
    return K.sample_ball_difference(c[0], c[1], delta, tris, caps, s[0], s[1], half, n_side, int(seed))


def exact_ball_difference_area(mesh: Mesh, x, strategy, cap_triangles: int = 1,
                               delta: float | None = None) -> float:
    """``|B Δ B_h|`` from area identities, for a ball inside the mesh region.

    Inscribed strategies give ``|B| - |B_h|``; whole-element strategies give
    ``|B| + |B_h| - 2 |B ∩ B_h|`` with the overlap measured by exact caps.
    Shifted strategies are not covered.
    """
    strategy = BallStrategy.parse(strategy)
    if strategy.is_shifted:
        raise InvalidArgumentError("no area identity for shifted balls; use ball_difference_area")
    delta = mesh.delta if delta is None else _check_delta(delta)
    dec = decompose_ball(mesh, x, strategy, cap_triangles, delta)
    full = math.pi * delta**2
    if strategy.inner in (BallStrategy.BARYCENTER, BallStrategy.OVERLAP):
        min_area = 1e-14 * mesh.h_max**2
        common = 0.0
        for e in dec.elements():
            tv = np.ascontiguousarray(mesh.vertices[mesh.elements[e]])
            common += sum(c.area for c in _clip_cells(tv, dec.center, delta, K.EXACTCAPS, 1, min_area))
        return full + dec.area - 2.0 * common
    return full - dec.area
