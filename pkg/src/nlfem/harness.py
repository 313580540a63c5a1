"""Convergence studies, geometric-error studies and patch tests.

Reports are plain row lists that round-trip through CSV.  Rates always use
``h_max`` as the mesh size.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .assembly import Kernel, assemble, constant_data, linear_data, manufactured_case
from .errors import InvalidArgumentError
from .geometry import BallStrategy, ball_difference_area, exact_ball_difference_area
from .mesh import Mesh, build_squared_grid, build_uniform_grid, load_mesh
from .quadrature import RuleKind, rule
from .solver import solve

CSV_COLUMNS = ("h_min", "h_max", "J_omega", "l2_error", "rate", "assembly_seconds")
GRID_KINDS = ("uniform", "squared", "files")


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class GridSpec:
    """A sequence of grids: ``uniform:10,20``, ``squared:10,20`` or ``files:a.nlmesh,b.nlmesh``."""

    kind: str
    levels: tuple

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        kind, sep, rest = str(text).partition(":")
        kind = kind.strip().lower()
        if not sep or kind not in GRID_KINDS or not rest.strip():
            raise InvalidArgumentError(f"grid spec {text!r} is not of the form uniform:10,20 | squared:.. | files:..")
        items = [s.strip() for s in rest.split(",") if s.strip()]
        if kind == "files":
            return cls(kind, tuple(items))
        try:
            levels = tuple(int(s) for s in items)
        except ValueError:
            raise InvalidArgumentError(f"grid levels in {text!r} must be integers") from None
        if any(n < 2 for n in levels):
            raise InvalidArgumentError("grid levels must be at least 2")
        return cls(kind, levels)

    def __str__(self):
        return f"{self.kind}:" + ",".join(str(v) for v in self.levels)

    def build(self, delta: float):
        """Yield the meshes one at a time."""
        for level in self.levels:
            if self.kind == "uniform":
                yield build_uniform_grid(level, delta)
            elif self.kind == "squared":
                yield build_squared_grid(level, delta)
            else:
                mesh = load_mesh(level)
                if abs(mesh.delta - delta) > 1e-12 * delta:
                    raise InvalidArgumentError(f"{level} was built for delta={mesh.delta}, not {delta}")
                yield mesh


@dataclass
class StudyConfig:
    grids: GridSpec
    strategy: BallStrategy = BallStrategy.EXACT_CAPS
    delta: float = 0.1
    cap_triangles: int = 1
    tol: float = 1e-12
    output: Path | None = None
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.grids, str):
            self.grids = GridSpec.parse(self.grids)
        self.strategy = BallStrategy.parse(self.strategy)
        if not self.delta > 0:
            raise InvalidArgumentError("delta must be positive")
        if int(self.cap_triangles) < 1:
            raise InvalidArgumentError("cap_triangles must be at least 1")
        if not self.tol > 0:
            raise InvalidArgumentError("solver tolerance must be positive")
        if int(self.workers) < 1:
            raise InvalidArgumentError("workers must be positive")


# ---------------------------------------------------------------- errors and rates

def _evaluate(u: Callable, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(u(x0, x1), dtype=float)
        if out.shape == x0.shape:
            return out
    except Exception:  # scalar-only callables, e.g. compiled point functions
        pass
    return np.vectorize(lambda a, b: float(u(a, b)), otypes=[float])(x0, x1)


def l2_error(mesh: Mesh, coefficients: np.ndarray, exact: Callable) -> float:
    """``||u - u_h||`` over Omega with the degree-5 error rule.

    ``coefficients`` are in node numbering, constraint values included.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (mesh.n_nodes,):
        raise InvalidArgumentError(f"expected {mesh.n_nodes} coefficients, got {c.shape}")
    er = rule(RuleKind.ERROR_RULE)
    omega = mesh.omega_elements
    en = mesh.element_nodes[omega]
    pts = np.einsum("qa,mad->mqd", er.points, mesh.nodes[en])
    uh = c[en] @ er.points.T
    ue = _evaluate(exact, pts[..., 0], pts[..., 1])
    w = er.weights[None, :] * 2.0 * mesh.areas[omega][:, None]
    return float(math.sqrt(np.sum(w * (ue - uh) ** 2)))


def observed_rates(errors: Sequence[float], h: Sequence[float]) -> list:
    """``log(e[i-1] / e[i]) / log(h[i-1] / h[i])``; the first entry is None."""
    rates = [None]
    for i in range(1, len(errors)):
        e0, e1, h0, h1 = errors[i - 1], errors[i], h[i - 1], h[i]
        if e0 > 0 and e1 > 0 and h0 != h1:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            rates.append(None)
    return rates


def fitted_rate(values: Sequence[float], h: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(h)``."""
    v = np.asarray(values, dtype=float)
    hh = np.asarray(h, dtype=float)
    if len(v) < 2 or np.any(v <= 0):
        raise InvalidArgumentError("need at least two positive values to fit a rate")
    return float(np.polyfit(np.log(hh), np.log(v), 1)[0])


# ---------------------------------------------------------------- convergence report

@dataclass
class ConvergenceRow:
    h_min: float
    h_max: float
    J_omega: int
    l2_error: float
    rate: float | None
    assembly_seconds: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    strategy: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def errors(self):
        return [r.l2_error for r in self.rows]

    @property
    def rates(self):
        return [r.rate for r in self.rows]

    def recomputed_rates(self):
        return observed_rates(self.errors, [r.h_max for r in self.rows])

    def relative_times(self) -> list:
        """Assembly times divided by the largest one, in percent."""
        t = [r.assembly_seconds for r in self.rows]
        top = max(t) if t else 0.0
        return [100.0 * s / top if top > 0 else 0.0 for s in t]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([repr(r.h_min), repr(r.h_max), r.J_omega, repr(r.l2_error),
                        "" if r.rate is None else repr(r.rate), repr(r.assembly_seconds)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceReport":
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            elif line.strip():
                body.append(line)
        reader = csv.reader(body)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise InvalidArgumentError(f"unexpected CSV header {header!r}")
        rows = []
        for rec in reader:
            if len(rec) != len(CSV_COLUMNS):
                raise InvalidArgumentError(f"malformed CSV row {rec!r}")
            rows.append(ConvergenceRow(float(rec[0]), float(rec[1]), int(rec[2]), float(rec[3]),
                                       None if rec[4] == "" else float(rec[4]), float(rec[5])))
        return cls(rows, meta.get("strategy", ""), meta)

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def run_convergence(config: StudyConfig, data=None, exact=None, kernel_factory=None,
                    progress: Callable[[str], None] | None = None,
                    observer: Callable | None = None) -> ConvergenceReport:
    """Assemble, solve and measure on every grid level in turn.

    Defaults to the cubic manufactured problem.  Non-monotone error
    sequences are reported as they are.  ``observer(mesh, system, report)``
    sees every level before its system is dropped.
    """
    kernel, mdata, mexact = manufactured_case(config.delta)
    data = mdata if data is None else data
    exact = mexact if exact is None else exact
    if kernel_factory is not None:
        kernel = kernel_factory(config.delta)
    rows = []
    for mesh in config.grids.build(config.delta):
        system = assemble(mesh, kernel, data, config.strategy, config.cap_triangles, config.workers)
        rep = solve(system, tol=config.tol)
        err = l2_error(mesh, system.full_solution(rep.solution), exact)
        rows.append(ConvergenceRow(mesh.h_min, mesh.h_max, mesh.n_interior, err, None,
                                   system.assembly_seconds))
        if observer is not None:
            observer(mesh, system, rep)
        if progress is not None:
            progress(f"{config.strategy.value} J={mesh.n_interior} err={err:.3e} "
                     f"t={system.assembly_seconds:.2f}s it={rep.iterations}")
    for r, rate in zip(rows, observed_rates([r.l2_error for r in rows], [r.h_max for r in rows])):
        r.rate = rate
    meta = {"strategy": config.strategy.value, "delta": repr(config.delta), "grids": str(config.grids),
            "cap_triangles": str(config.cap_triangles), "tol": repr(config.tol)}
    report = ConvergenceReport(rows, config.strategy.value, meta)
    if config.output is not None:
        report.write(config.output)
    return report


# ---------------------------------------------------------------- geometric error

@dataclass
class GeometricErrorRow:
    h_max: float
    sup_difference: float
    stderr: float
    samples: int


@dataclass
class GeometricErrorReport:
    strategy: str
    rows: list
    rate: float | None
    noise_floor: bool

    def to_csv(self) -> str:
        lines = [f"# strategy={self.strategy}", f"# rate={'' if self.rate is None else repr(self.rate)}",
                 "h_max,sup_difference,stderr,samples"]
        lines += [f"{r.h_max!r},{r.sup_difference!r},{r.stderr!r},{r.samples}" for r in self.rows]
        return "\n".join(lines) + "\n"


def sample_centers(n: int, seed: int = 0) -> np.ndarray:
    """``n`` uniformly distributed points in Omega."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(int(n), 2))


def run_geometric_error(config: StudyConfig, samples: int = 50, resolution: int = 4_000_000,
                        method: str = "sampling") -> GeometricErrorReport:
    """Largest ``|B Δ B_h|`` over random centers, per level, and its fitted rate.

    ``method="exact"`` replaces sampling by the area identities, which exist
    for the non-shifted balls only.
    """
    if len(config.grids.levels) < 3:
        raise InvalidArgumentError("a geometric-error study needs at least three levels")
    if samples < 1:
        raise InvalidArgumentError("need at least one sampled center")
    if method not in ("sampling", "exact"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    centers = sample_centers(samples, config.seed)
    rows = []
    for level, mesh in enumerate(config.grids.build(config.delta)):
        best, best_se = -1.0, 0.0
        for i, x in enumerate(centers):
            if method == "exact":
                v, se = exact_ball_difference_area(mesh, x, config.strategy, config.cap_triangles), 0.0
            else:
                v, se = ball_difference_area(mesh, x, config.strategy, resolution,
                                             seed=config.seed + 7919 * level + i,
                                             cap_triangles=config.cap_triangles)
            if v > best:
                best, best_se = v, se
        rows.append(GeometricErrorRow(mesh.h_max, best, best_se, samples))
    # exact balls only show sampler noise; a fitted slope would be meaningless
    floor = all(r.sup_difference <= 5.0 * r.stderr + 1e-12 * config.delta**2 for r in rows)
    rate = None if floor else fitted_rate([max(r.sup_difference, 1e-300) for r in rows],
                                          [r.h_max for r in rows])
    return GeometricErrorReport(config.strategy.value, rows, rate, floor)


# ---------------------------------------------------------------- patch tests

@dataclass
class PatchResult:
    name: str
    strategy: str
    J_omega: int
    error: float
    threshold: float | None

    @property
    def passed(self) -> bool | None:
        return None if self.threshold is None else self.error <= self.threshold


@dataclass
class PatchReport:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.results)

    def lines(self):
        for r in self.results:
            verdict = "info" if r.passed is None else ("pass" if r.passed else "FAIL")
            lim = "" if r.threshold is None else f" (limit {r.threshold:.0e})"
            yield f"{verdict:4s} {r.name:9s} {r.strategy:22s} J={r.J_omega:<6d} error={r.error:.3e}{lim}"


CONSTANT_TOL = 1e-9
LINEAR_TOL = 1e-8
LINEAR_G = (2.0, 3.0, -1.0)


def _linear_g(x0, x1):
    return LINEAR_G[0] + LINEAR_G[1] * x0 + LINEAR_G[2] * x1


def run_patch_tests(config: StudyConfig, strategies=None) -> PatchReport:
    """Constant and zero data for every strategy; linear data for all, judged for exactcaps only.

    Constant and zero data are judged by the largest nodal deviation, linear
    data by the L2 error against ``g`` itself.
    """
    strategies = [config.strategy] if strategies is None else [BallStrategy.parse(s) for s in strategies]
    kernel = Kernel.constant(config.delta)
    one, zero = constant_data(1.0), constant_data(0.0)
    lin = linear_data(*LINEAR_G)
    results = []
    for mesh in config.grids.build(config.delta):
        J = mesh.n_interior
        for s in strategies:
            def run(data, full=False):
                system = assemble(mesh, kernel, data, s, config.cap_triangles, config.workers)
                u = solve(system, tol=config.tol).solution
                return system.full_solution(u) if full else u
            results.append(PatchResult("constant", s.value, J, float(np.abs(run(one) - 1.0).max()),
                                       CONSTANT_TOL))
            results.append(PatchResult("zero", s.value, J, float(np.abs(run(zero)).max()), 0.0))
            lim = LINEAR_TOL if s is BallStrategy.EXACT_CAPS else None
            results.append(PatchResult("linear", s.value, J, l2_error(mesh, run(lin, True), _linear_g), lim))
    return PatchReport(results)
