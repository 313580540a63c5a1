"""Conforming triangulations of the unit square and its interaction layer.

The computational domain is ``Omega = (0, 1)^2``.  The interaction layer
``Omega_I`` is a polygonal frame of width at least ``delta`` around it.
Elements never straddle ``dOmega``; nodes on ``dOmega`` belong to the
constrained set.

Node numbering puts the ``J_Omega`` interior nodes first, then every node of
the closed layer, so a coefficient vector splits as ``U[:J_Omega]`` (unknowns)
and ``U[J_Omega:]`` (volume-constraint values).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConstructionError, InvalidArgumentError, MeshValidationError

#: relative tolerance used for point-in-closed-square tests
GEOM_TOL = 1e-12


class Region(IntEnum):
    OMEGA = 0
    OMEGA_I = 1


def _strictly_inside(points: np.ndarray, tol: float = GEOM_TOL) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    return (x > tol) & (x < 1.0 - tol) & (y > tol) & (y < 1.0 - tol)


def _in_closed_square(points: np.ndarray, tol: float = GEOM_TOL) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    return (x >= -tol) & (x <= 1.0 + tol) & (y >= -tol) & (y <= 1.0 + tol)


def distance_to_square(points: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the closed unit square."""
    p = np.asarray(points, dtype=float)
    dx = np.maximum(np.maximum(-p[..., 0], 0.0), p[..., 0] - 1.0)
    dy = np.maximum(np.maximum(-p[..., 1], 0.0), p[..., 1] - 1.0)
    return np.hypot(dx, dy)


def signed_areas(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    a = vertices[elements[:, 0]]
    b = vertices[elements[:, 1]]
    c = vertices[elements[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def element_diameters(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Longest edge of every element."""
    p = vertices[elements]
    e01 = np.hypot(*(p[:, 1] - p[:, 0]).T)
    e12 = np.hypot(*(p[:, 2] - p[:, 1]).T)
    e20 = np.hypot(*(p[:, 0] - p[:, 2]).T)
    return np.maximum(np.maximum(e01, e12), e20)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation of ``Omega`` together with its layer.

    ``vertices`` and ``elements`` keep the order they were built or read in.
    The assembly works in node numbering; ``nodes`` and ``element_nodes``
    are the same data permuted so that interior nodes come first.
    """

    vertices: np.ndarray
    elements: np.ndarray
    regions: np.ndarray
    delta: float
    node_order: np.ndarray = field(init=False, repr=False)
    node_index: np.ndarray = field(init=False, repr=False)
    n_interior: int = field(init=False)
    barycenters: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    diameters: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        regions = np.asarray(self.regions, dtype=np.int8)
        interior = _strictly_inside(vertices)
        order = np.concatenate([np.flatnonzero(interior), np.flatnonzero(~interior)])
        index = np.empty_like(order)
        index[order] = np.arange(order.size)
        object.__setattr__(self, "vertices", _frozen(vertices))
        object.__setattr__(self, "elements", _frozen(elements))
        object.__setattr__(self, "regions", _frozen(regions))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "node_order", _frozen(order))
        object.__setattr__(self, "node_index", _frozen(index))
        object.__setattr__(self, "n_interior", int(interior.sum()))
        object.__setattr__(self, "barycenters", _frozen(vertices[elements].mean(axis=1)))
        object.__setattr__(self, "areas", _frozen(signed_areas(vertices, elements)))
        object.__setattr__(self, "diameters", _frozen(element_diameters(vertices, elements)))

    @property
    def nodes(self) -> np.ndarray:
        """Vertex coordinates in node numbering."""
        return self.vertices[self.node_order]

    @property
    def element_nodes(self) -> np.ndarray:
        """Element connectivity in node numbering."""
        return self.node_index[self.elements]

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def omega_elements(self) -> np.ndarray:
        return np.flatnonzero(self.regions == Region.OMEGA)

    @property
    def h_min(self) -> float:
        return float(self.diameters.min())

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())


@dataclass(frozen=True)
class MeshStatistics:
    h_min: float
    h_max: float
    J: int
    J_omega: int
    K: int
    K_omega: int


def mesh_statistics(mesh: Mesh) -> MeshStatistics:
    return MeshStatistics(
        h_min=mesh.h_min,
        h_max=mesh.h_max,
        J=mesh.n_nodes,
        J_omega=mesh.n_interior,
        K=mesh.n_elements,
        K_omega=int((mesh.regions == Region.OMEGA).sum()),
    )


def element_barycenter(mesh: Mesh, k: int) -> np.ndarray:
    return mesh.vertices[mesh.elements[k]].mean(axis=0)


def label_regions(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    bary = vertices[elements].mean(axis=1)
    return np.where(_strictly_inside(bary), Region.OMEGA, Region.OMEGA_I).astype(np.int8)


def _clip_area_with_square(tri: np.ndarray) -> float:
    """Area of a triangle clipped to the closed unit square."""
    poly = [tuple(p) for p in tri]
    for axis, bound, keep_below in ((0, 0.0, False), (0, 1.0, True),
                                    (1, 0.0, False), (1, 1.0, True)):
        out = []
        for i, p in enumerate(poly):
            q = poly[(i + 1) % len(poly)]
            p_in = p[axis] <= bound if keep_below else p[axis] >= bound
            q_in = q[axis] <= bound if keep_below else q[axis] >= bound
            if p_in:
                out.append(p)
            if p_in != q_in:
                t = (bound - p[axis]) / (q[axis] - p[axis])
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        poly = out
        if not poly:
            return 0.0
    a = 0.0
    for i, p in enumerate(poly):
        q = poly[(i + 1) % len(poly)]
        a += p[0] * q[1] - q[0] * p[1]
    return 0.5 * abs(a)


def validate_mesh(mesh: Mesh) -> None:
    """Raise :class:`MeshValidationError` on any violated mesh invariant."""
    v, e, reg = mesh.vertices, mesh.elements, mesh.regions
    if not np.all(np.isfinite(v)):
        raise MeshValidationError("non-finite vertex coordinates")
    if e.size and (e.min() < 0 or e.max() >= len(v)):
        raise MeshValidationError("element references a missing vertex")
    if not np.all(np.isin(reg, (Region.OMEGA, Region.OMEGA_I))):
        raise MeshValidationError("element with unknown region label")
    h_max = mesh.h_max
    if np.any(mesh.areas <= 1e-14 * h_max**2):
        bad = int(np.flatnonzero(mesh.areas <= 1e-14 * h_max**2)[0])
        raise MeshValidationError(f"element {bad} is inverted or degenerate")

    pts = v[e]
    omega = reg == Region.OMEGA
    inside_closed = _in_closed_square(pts).all(axis=1)
    bary_inside = _strictly_inside(mesh.barycenters)
    if np.any(omega & ~(inside_closed & bary_inside)):
        bad = int(np.flatnonzero(omega & ~(inside_closed & bary_inside))[0])
        raise MeshValidationError(f"Omega element {bad} straddles the boundary of Omega")
    layer = ~omega
    if np.any(layer & bary_inside):
        bad = int(np.flatnonzero(layer & bary_inside)[0])
        raise MeshValidationError(f"element {bad} lies inside Omega but is labeled Omega_I")
    # bbox prefilter: layer elements that only touch dOmega are skipped
    lo, hi = pts.min(axis=1), pts.max(axis=1)
    tol = GEOM_TOL
    near = layer & (lo[:, 0] < 1 - tol) & (hi[:, 0] > tol) & (lo[:, 1] < 1 - tol) & (hi[:, 1] > tol)
    for k in np.flatnonzero(near):
        if _clip_area_with_square(pts[k]) > 1e-12 * max(mesh.areas[k], h_max**2):
            raise MeshValidationError(f"Omega_I element {k} straddles the boundary of Omega")

    # conformity: every edge shared by at most two elements
    edges = np.sort(np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshValidationError("edge shared by more than two elements")
    boundary = uniq[counts == 1]
    # boundary edges must be on the outer rim of the layer; hanging nodes or a
    # layer thinner than delta both put a boundary point within delta of Omega
    probe = np.concatenate([v[boundary[:, 0]], 0.5 * (v[boundary[:, 0]] + v[boundary[:, 1]])])
    dist = distance_to_square(probe)
    if np.any(dist < mesh.delta * (1 - 1e-9)):
        raise MeshValidationError(
            "mesh boundary comes closer than delta to Omega "
            "(non-conforming edge or interaction layer too thin)")


def _grid_mesh(n: int, delta: float) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidArgumentError(f"n must be an integer >= 2, got {n!r}")
    if not (delta > 0 and math.isfinite(delta)):
        raise InvalidArgumentError(f"delta must be positive, got {delta!r}")
    m = int(math.ceil(delta * n - 1e-9))
    idx = np.arange(-m, n + m + 1)
    coords = idx / n
    side = len(idx)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    i, j = np.meshgrid(np.arange(side - 1), np.arange(side - 1), indexing="xy")
    sw = (j * side + i).ravel()
    se, nw = sw + 1, sw + side
    ne = nw + 1
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    elements = np.empty((2 * sw.size, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    return vertices, elements


def build_uniform_grid(n: int, delta: float) -> Mesh:
    """Uniform right-triangle grid on ``[-L, 1+L]^2`` with ``L = ceil(delta n)/n``."""
    vertices, elements = _grid_mesh(n, delta)
    mesh = Mesh(vertices, elements, label_regions(vertices, elements), delta)
    validate_mesh(mesh)
    return mesh


def build_squared_grid(n: int, delta: float) -> Mesh:
    """Uniform grid with vertices moved by ``(x1, x2) -> (x1, x2**2)``.

    The map is applied on the whole band ``0 <= x2 <= 1``.  It fixes
    ``x2 = 0`` and ``x2 = 1``, so the layer above and below Omega is untouched
    and the side strips of the layer stay conforming with Omega.
    """
    vertices, elements = _grid_mesh(n, delta)
    band = (vertices[:, 1] > 0.0) & (vertices[:, 1] < 1.0)
    vertices[band, 1] = vertices[band, 1] ** 2
    areas = signed_areas(vertices, elements)
    h = element_diameters(vertices, elements).max()
    if np.any(areas <= 1e-14 * h**2):
        raise ConstructionError("squared-grid remap produced an inverted element")
    mesh = Mesh(vertices, elements, label_regions(vertices, elements), delta)
    validate_mesh(mesh)
    return mesh


# -- text format --------------------------------------------------------------

def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def parse_mesh(text: str, delta: float | None = None) -> Mesh:
    lines = list(_data_lines(text))
    try:
        head = lines[0].split()
        if len(head) != 3 or head[0] != "nlmesh" or head[1] != "1":
            raise MeshValidationError(f"bad header line: {lines[0]!r}")
        file_delta = float(head[2])
        nv, ne = (int(t) for t in lines[1].split())
        body = lines[2:]
        if len(body) != nv + ne:
            raise MeshValidationError(
                f"expected {nv} vertex and {ne} element lines, found {len(body)} lines")
        vertices = np.array([[float(t) for t in ln.split()] for ln in body[:nv]], dtype=float)
        cells = np.array([[int(t) for t in ln.split()] for ln in body[nv:]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise MeshValidationError(f"cannot parse mesh: {exc}") from exc
    if vertices.shape != (nv, 2) or cells.shape != (ne, 4):
        raise MeshValidationError("wrong number of fields on vertex or element lines")
    elements, regions = cells[:, :3], cells[:, 3]
    if not np.all(np.isin(regions, (0, 1))):
        raise MeshValidationError("element with unlabeled region (expected 0 or 1)")
    if elements.size and (elements.min() < 0 or elements.max() >= nv):
        raise MeshValidationError("element references a missing vertex")
    # orientation is normalized, not treated as a defect
    cw = signed_areas(vertices, elements) < 0
    elements[cw] = elements[cw][:, [0, 2, 1]]
    mesh = Mesh(vertices, elements, regions, file_delta if delta is None else delta)
    validate_mesh(mesh)
    return mesh


def load_mesh(path: str | Path, delta: float | None = None) -> Mesh:
    """Read and validate a mesh file; ``delta`` overrides the header value."""
    return parse_mesh(Path(path).read_text(), delta)


def format_mesh(mesh: Mesh) -> str:
    out = [f"nlmesh 1 {mesh.delta!r}", f"{mesh.n_nodes} {mesh.n_elements}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out += [f"{a} {b} {c} {r}" for (a, b, c), r in zip(mesh.elements.tolist(), mesh.regions.tolist())]
    return "\n".join(out) + "\n"


def save_mesh(mesh: Mesh, path: str | Path) -> None:
    Path(path).write_text(format_mesh(mesh))
