"""Stiffness matrix and load vector for piecewise-linear nonlocal elements.

The bilinear form is assembled from the outer loop over elements of
``Omega`` only.  For every outer point ``x`` and inner point ``y`` the
double-difference integrand ``(u(y) - u(x)) (v(y) - v(x))`` is split into
an x-x block, a y-y block and two cross blocks.  Inner points in the
interaction layer count twice (the mirrored pair has its outer point in
the layer) and their ``g`` values go to the right-hand side.

With the constant kernel ``4 / (pi delta^4)`` the operator reproduces the
Laplacian on cubic polynomials, so the weak form here is

    sum over (Omega u Omega_I)^2 of (u(y) - u(x)) (v(y) - v(x)) psi(x, y)  =  (f, v)_Omega.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import InvalidArgumentError, MeshValidationError
from .geometry import BallDecomposition, BallStrategy, CapCell, cap_centroid_rule, element_containing
from .mesh import Mesh, Region
from .quadrature import RuleKind, rule

DEFAULT_CHUNK = 256


@numba.njit(K.PSI_SIG, cache=True, nogil=True)
def _unit_psi(x0, x1, y0, y1):
    return 1.0


def _compile(fn, sig, what: str):
    if isinstance(fn, numba.core.registry.CPUDispatcher):
        try:
            if tuple(sig.args) not in fn.signatures:
                fn.compile(sig.args)
        except Exception as exc:
            raise InvalidArgumentError(f"{what} does not compile for {sig}: {exc}") from exc
        return fn
    if not callable(fn):
        raise InvalidArgumentError(f"{what} must be callable")
    try:
        disp = numba.njit(sig, nogil=True)(fn)
    except Exception as exc:
        raise InvalidArgumentError(f"{what} must be numba-compilable with signature {sig}: {exc}") from exc
    return disp


@dataclass(frozen=True)
class Kernel:
    """``gamma(x, y) = scale * psi(x, y)`` restricted to ``|x - y| <= delta``.

    ``psi`` takes ``(x0, x1, y0, y1)`` and must be numba-compilable.  The
    ``scale`` factor is kept apart so that a constant kernel needs a single
    compiled function for every ``delta``.
    """

    delta: float
    psi: Callable = _unit_psi
    scale: float = 1.0
    constant_scaled: bool = False

    def __post_init__(self):
        d = float(self.delta)
        if not d > 0.0 or not math.isfinite(d):
            raise InvalidArgumentError(f"delta must be positive, got {self.delta!r}")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "psi", _compile(self.psi, K.PSI_SIG, "kernel psi"))
        if not self.scale > 0.0:
            raise InvalidArgumentError("kernel scale must be positive")
        self.check(n=16, seed=0)

    @classmethod
    def constant(cls, delta: float) -> "Kernel":
        """The scaled constant kernel ``4 / (pi delta^4)``."""
        return cls(delta, _unit_psi, 4.0 / (math.pi * float(delta) ** 4), True)

    def __call__(self, x, y) -> float:
        return self.scale * self.psi(float(x[0]), float(x[1]), float(y[0]), float(y[1]))

    def check(self, n: int = 64, seed: int = 0, tol: float = 1e-12):
        """Spot-check symmetry and nonnegativity on random pairs in the ball."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-0.2, 1.2, size=(n, 2))
        r = self.delta * np.sqrt(rng.uniform(size=n))
        a = rng.uniform(0, 2 * np.pi, size=n)
        y = x + np.c_[r * np.cos(a), r * np.sin(a)]
        for p, q in zip(x, y):
            v1, v2 = self(p, q), self(q, p)
            if not (v1 >= 0.0 and v2 >= 0.0):
                raise InvalidArgumentError(f"kernel is negative at {p.tolist()}, {q.tolist()}")
            if abs(v1 - v2) > tol * max(abs(v1), abs(v2), 1e-300):
                raise InvalidArgumentError(f"kernel is not symmetric at {p.tolist()}, {q.tolist()}")


@dataclass(frozen=True)
class ProblemData:
    """Source ``f`` on Omega and volume-constraint data ``g`` on the layer.

    ``f(x0, x1)`` is called with numpy arrays.  ``g(x0, x1)`` is called per
    point inside the compiled assembly, so it must be numba-compilable.
    """

    f: Callable
    g: Callable

    def __post_init__(self):
        if not callable(self.f):
            raise InvalidArgumentError("f must be callable")
        object.__setattr__(self, "g", _compile(self.g, K.G_SIG, "constraint g"))

    def f_values(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = np.broadcast_to(np.asarray(self.f(p[..., 0], p[..., 1]), dtype=float), p.shape[:-1])
        return np.array(out)

    def g_values(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        g = self.g
        return np.array([g(float(a), float(b)) for a, b in p])


@numba.njit(K.G_SIG, cache=True, nogil=True)
def manufactured_u(x0, x1):
    return x0 * x0 * x1 + x1 * x1


def manufactured_f(x0, x1):
    return -2.0 * (np.asarray(x1, dtype=float) + 1.0)


@numba.njit(K.G_SIG, cache=True, nogil=True)
def _zero(x0, x1):
    return 0.0


@numba.njit(K.G_SIG, cache=True, nogil=True)
def _one(x0, x1):
    return 1.0


def zero_source(x0, x1):
    return np.zeros(np.broadcast(np.asarray(x0), np.asarray(x1)).shape)


def manufactured_case(delta: float = 0.1):
    """Kernel, data and exact solution of the cubic manufactured problem.

    ``u = x1^2 x2 + x2^2``, ``f = -2 (x2 + 1)`` and ``g = u`` on the layer.
    """
    kernel = Kernel.constant(delta)
    data = ProblemData(manufactured_f, manufactured_u)
    return kernel, data, manufactured_u


def constant_data(value: float = 1.0) -> ProblemData:
    if value == 1.0:
        return ProblemData(zero_source, _one)
    if value == 0.0:
        return ProblemData(zero_source, _zero)
    c = float(value)
    return ProblemData(zero_source, lambda x0, x1: c)


def linear_data(a: float, b0: float, b1: float) -> ProblemData:
    """``f = 0`` and ``g = a + b0 x1 + b1 x2``."""
    a, b0, b1 = float(a), float(b0), float(b1)
    return ProblemData(zero_source, lambda x0, x1: a + b0 * x0 + b1 * x1)


@dataclass
class LinearSystem:
    """``A U = b`` for the interior coefficients, plus the constrained values."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraint_values: np.ndarray
    mesh: Mesh = field(repr=False)
    strategy: BallStrategy
    assembly_seconds: float = 0.0

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]

    def full_solution(self, interior: np.ndarray) -> np.ndarray:
        """Coefficients in node numbering: unknowns first, then constraint values."""
        u = np.asarray(interior, dtype=float)
        if u.shape != (self.n_unknowns,):
            raise InvalidArgumentError(f"expected {self.n_unknowns} interior values, got {u.shape}")
        return np.concatenate([u, self.constraint_values])

    def export_matrix(self, path) -> None:
        """MatrixMarket coordinate file, symmetric storage, 1-based indices."""
        scipy.io.mmwrite(str(path), sp.coo_matrix(self.matrix), symmetry="symmetric", precision=17)

    def export_rhs(self, path) -> None:
        np.savetxt(Path(path), self.rhs, fmt="%.17e")


def barycentric_inverses(mesh: Mesh) -> np.ndarray:
    """Per element, ``L`` with ``lambda_b(y) = L[b, 0] + L[b, 1] y0 + L[b, 2] y1``."""
    v = mesh.nodes[mesh.element_nodes]
    T = np.ones((mesh.n_elements, 3, 3))
    T[:, 1, :] = v[:, :, 0]
    T[:, 2, :] = v[:, :, 1]
    return np.ascontiguousarray(np.linalg.inv(T))


def candidate_pairs(mesh: Mesh, delta: float):
    """CSR-style lists of elements near each Omega element (barycenter distance < delta + 2 h_max)."""
    omega = mesh.omega_elements
    tree = cKDTree(mesh.barycenters)
    r = delta + 2.0 * mesh.h_max
    counts, blocks = [], []
    # blockwise, so the python lists of one block are all that is alive at a time
    for s in range(0, len(omega), 4096):
        lists = tree.query_ball_point(mesh.barycenters[omega[s:s + 4096]], r=r, return_sorted=True)
        counts.extend(len(c) for c in lists)
        blocks.append(np.concatenate([np.asarray(c, np.int64) for c in lists]))
    ptr = np.zeros(len(omega) + 1, np.int64)
    ptr[1:] = np.cumsum(counts)
    idx = np.concatenate(blocks) if blocks else np.zeros(0, np.int64)
    return omega.astype(np.int64), ptr, idx


def _load_vector(mesh: Mesh, data: ProblemData) -> np.ndarray:
    """``(f, phi_j)`` over Omega with Gauss4 on every element."""
    g4 = rule(RuleKind.GAUSS4)
    omega = mesh.omega_elements
    en = mesh.element_nodes[omega]
    v = mesh.nodes[en]                                   # (m, 3, 2)
    pts = np.einsum("qa,mad->mqd", g4.points, v)         # (m, 4, 2)
    w = g4.weights[None, :] * 2.0 * mesh.areas[omega][:, None]
    fw = data.f_values(pts) * w                          # (m, 4)
    contrib = fw @ g4.points                             # (m, 3)
    return np.bincount(en.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes)


def _upper_triplets(nodes3: np.ndarray, blocks: np.ndarray):
    """Rows, cols and values of symmetric 3x3 blocks stored as upper triangles."""
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(a, 3):
            v = blocks[:, a, b]
            rows.append(nodes3[:, a])
            cols.append(nodes3[:, b])
            vals.append(v)
            if a != b:
                rows.append(nodes3[:, b])
                cols.append(nodes3[:, a])
                vals.append(v)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _tree_sum(mats):
    """Pairwise sum in a fixed order; the tree only depends on ``len(mats)``."""
    while len(mats) > 1:
        mats = [mats[i] + mats[i + 1] if i + 1 < len(mats) else mats[i] for i in range(0, len(mats), 2)]
    return mats[0]


def assemble(mesh: Mesh, kernel: Kernel, data: ProblemData, strategy="exactcaps",
             cap_triangles: int = 1, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> LinearSystem:
    """Assemble the interior system for ``strategy``.

    Work is split into fixed chunks of outer elements; chunk results are
    merged in chunk order, so the matrix does not depend on ``workers``.
    """
    import time

    strategy = BallStrategy.parse(strategy)
    if abs(mesh.delta - kernel.delta) > 1e-12 * kernel.delta:
        raise InvalidArgumentError(f"mesh delta {mesh.delta} differs from kernel delta {kernel.delta}")
    if mesh.n_interior == 0:
        raise MeshValidationError("mesh has no interior nodes")
    if int(cap_triangles) < 1:
        raise InvalidArgumentError("cap_triangles must be at least 1")
    if int(workers) < 1 or int(chunk_size) < 1:
        raise InvalidArgumentError("workers and chunk_size must be positive")

    t0 = time.perf_counter()
    delta = kernel.delta
    nodes = np.ascontiguousarray(mesh.nodes)
    en = np.ascontiguousarray(mesh.element_nodes, dtype=np.int64)
    region = np.ascontiguousarray(mesh.regions, dtype=np.int64)
    bary = np.array(mesh.barycenters, order="C")
    binv = barycentric_inverses(mesh)
    omega, ptr, idx = candidate_pairs(mesh, delta)
    g4 = rule(RuleKind.GAUSS4)
    vm7 = rule(RuleKind.VERTEX_MIDSIDE7)
    g4p, g4w = np.array(g4.points, order="C"), np.array(g4.weights)
    vmp, vmw = np.array(vm7.points, order="C"), np.array(vm7.weights)
    h_max = mesh.h_max
    min_area = 1e-14 * h_max**2
    N = mesh.n_nodes

    def run(p0, p1):
        counts = K.count_local_nodes(en, region, ptr, idx, p0, p1, N)
        return K.assemble_chunk(nodes, en, region, bary, binv, omega, ptr, idx, counts, p0, p1,
                                strategy.code, int(cap_triangles), delta, h_max, min_area,
                                g4p, g4w, vmp, vmw, kernel.psi, data.g)

    bounds = [(s, min(s + chunk_size, len(omega))) for s in range(0, len(omega), chunk_size)]
    yy = np.zeros((mesh.n_elements, 3, 3))
    xx, rr, cross = [], [], []

    def reduce(part):
        # compress each chunk at once; raw triplets of fine grids do not fit in memory
        yy[...] += part[2]
        xx.append(part[0])
        rr.append(part[1])
        cr, cc, cv = part[3], part[4], part[5]
        C = sp.coo_matrix((np.concatenate([cv, cv]), (np.concatenate([cr, cc]), np.concatenate([cc, cr]))),
                          shape=(N, N)).tocsr()
        C.sum_duplicates()
        cross.append(C)

    if workers == 1 or len(bounds) == 1:
        for b in bounds:
            reduce(run(*b))
    else:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            for part in pool.map(lambda b: run(*b), bounds):
                reduce(part)

    xx = np.concatenate(xx)
    rr = np.concatenate(rr)
    r1, c1, v1 = _upper_triplets(en[omega], xx)
    r2, c2, v2 = _upper_triplets(en[omega], yy[omega])
    M = sp.coo_matrix((np.concatenate([v1, v2]), (np.concatenate([r1, r2]), np.concatenate([c1, c2]))),
                      shape=(N, N)).tocsr()
    M.sum_duplicates()
    M = (M - _tree_sum(cross)) * kernel.scale

    J = mesh.n_interior
    A = M[:J, :J]
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    gC = data.g_values(nodes[J:])
    R = np.bincount(en[omega].ravel(), weights=rr.ravel(), minlength=N) * kernel.scale
    G = _load_vector(mesh, data)
    rhs = G[:J] + R[:J] - M[:J, J:] @ gC
    return LinearSystem(A, rhs, gC, mesh, strategy, time.perf_counter() - t0)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def _hat(mesh: Mesh, e: int, j: int, y) -> float:
    """Value at ``y`` of the hat function of node ``j`` (node numbering) restricted to element ``e``."""
    local = np.flatnonzero(mesh.element_nodes[e] == j)
    if local.size == 0:
        return 0.0
    v = mesh.nodes[mesh.element_nodes[e]]
    T = np.vstack([np.ones(3), v.T])
    lam = np.linalg.solve(T, np.array([1.0, y[0], y[1]]))
    return float(lam[local[0]])


def _cell_points(cell):
    if isinstance(cell, CapCell):
        p, w = cap_centroid_rule(cell)
        return [p], [w]
    v = cell.vertices
    w = cell.area / 3.0
    return [0.5 * (v[m] + v[(m + 1) % 3]) for m in range(3)], [w, w, w]


def inner_integral_pair(mesh: Mesh, x, decomposition: BallDecomposition, kernel: Kernel, j: int, j2: int,
                        outer_element: int | None = None, integrand: Callable | None = None) -> float:
    """Inner quadrature of ``(phi_j(y) - phi_j(x)) (phi_j2(y) - phi_j2(x)) gamma(x, y)``.

    Gauss3 (edge midpoints) on triangle cells and the centroid rule on caps.
    ``integrand(x, y)`` replaces the hat-function product when given.
    """
    x = np.asarray(x, dtype=float)
    k = element_containing(mesh, x) if outer_element is None else int(outer_element)
    px = _hat(mesh, k, j, x)
    px2 = _hat(mesh, k, j2, x)
    total = 0.0
    for e, cell in decomposition.cells:
        for y, w in zip(*_cell_points(cell)):
            if integrand is not None:
                val = integrand(x, y)
            else:
                val = (_hat(mesh, e, j, y) - px) * (_hat(mesh, e, j2, y) - px2)
            total += w * val * kernel(x, y)
    return total


def absorption_integral(mesh: Mesh, x, decomposition: BallDecomposition, kernel: Kernel) -> float:
    """Quadrature of ``gamma(x, .)`` over the layer cells of the decomposition."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for e, cell in decomposition.cells:
        if mesh.regions[e] != Region.OMEGA_I:
            continue
        for y, w in zip(*_cell_points(cell)):
            total += w * kernel(x, y)
    return total


def energy_norm_diff(matrix, u1, u2) -> float:
    """``sqrt((u1 - u2)^T A (u1 - u2))``."""
    a = np.asarray(u1, dtype=float)
    b = np.asarray(u2, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or a.shape[0] != matrix.shape[0]:
        raise InvalidArgumentError(f"vector shapes {a.shape}, {b.shape} do not match matrix {matrix.shape}")
    d = a - b
    q = float(d @ (matrix @ d))
    return math.sqrt(max(q, 0.0))
