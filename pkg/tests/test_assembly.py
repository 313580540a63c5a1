import math

import numpy as np
import pytest
import scipy.io
import sympy as sy
from scipy import integrate

from nlfem import (InvalidArgumentError, Kernel, Mesh, MeshValidationError, ProblemData, assemble,
                   build_uniform_grid, decompose_ball, manufactured_case, solve)
from nlfem.assembly import (absorption_integral, constant_data, energy_norm_diff, inner_integral_pair,
                            linear_data, manufactured_f, manufactured_u, zero_source)
from nlfem.geometry import element_containing
from oracles import grid_hat, mc_disk_region_area

STRATEGIES = ["exactcaps", "nocaps", "approxcaps", "barycenter", "overlap", "shifted-nocaps",
              "barycenter-nocaps", "barycenter-approxcaps"]


@pytest.fixture(scope="module")
def case():
    return manufactured_case(0.1)


# ---------------------------------------------------------------- data

def test_manufactured_values():
    assert manufactured_u(0.5, 0.5) == pytest.approx(0.375)
    assert float(manufactured_f(0.3, 0.7)) == pytest.approx(-3.4)
    x, y = sy.symbols("x y")
    u = x**2 * y + y**2
    assert sy.simplify(-(sy.diff(u, x, 2) + sy.diff(u, y, 2)) - (-2 * (y + 1))) == 0


def test_constant_kernel():
    k = Kernel.constant(0.1)
    assert k([0.2, 0.3], [0.25, 0.3]) == pytest.approx(4 / (math.pi * 1e-4))
    assert k.constant_scaled
    k.check(n=200)


def test_kernel_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        Kernel(0.0)
    with pytest.raises(InvalidArgumentError):
        Kernel(0.1, lambda x0, x1, y0, y1: x0 - y0)
    with pytest.raises(InvalidArgumentError):
        Kernel(0.1, lambda x0, x1, y0, y1: -1.0)


def test_problem_data_evaluation():
    d = linear_data(2.0, 3.0, -1.0)
    np.testing.assert_allclose(d.g_values([[0.1, 0.2], [1.0, 1.0]]), [2.1, 4.0])
    np.testing.assert_allclose(d.f_values(np.zeros((3, 4, 2))), np.zeros((3, 4)))
    with pytest.raises(InvalidArgumentError):
        ProblemData(None, manufactured_u)


# ---------------------------------------------------------------- inner integrals

def test_inner_integral_constant_integrand(uniform10):
    x = np.array([0.47, 0.52])
    dec = decompose_ball(uniform10, x, "exactcaps")
    v = inner_integral_pair(uniform10, x, dec, Kernel(0.1), 0, 0, integrand=lambda x, y: 1.0)
    assert v == pytest.approx(math.pi * 0.01, rel=1e-10)


def test_inner_integral_vanishes_far_from_supports(uniform10):
    x = np.array([0.5, 0.5])
    dec = decompose_ball(uniform10, x, "exactcaps")
    j = int(np.flatnonzero(np.all(np.isclose(uniform10.nodes, [0.9, 0.9]), axis=1))[0])
    assert inner_integral_pair(uniform10, x, dec, Kernel(0.1), j, j) == 0.0


def test_first_moment_of_exact_ball(uniform10):
    # the centered first moment vanishes: cells are Gauss3 on triangles, centroid on caps
    x = np.array([0.437, 0.561])
    dec = decompose_ball(uniform10, x, "exactcaps")
    for c in range(2):
        v = inner_integral_pair(uniform10, x, dec, Kernel(0.1), 0, 0,
                                integrand=lambda x, y, c=c: y[c] - x[c])
        assert abs(v) <= 1e-15


def _polar_reference(f, x, delta, epsrel=1e-11):
    ref, _ = integrate.dblquad(lambda r, t: r * f(x + r * np.array([math.cos(t), math.sin(t)])),
                               0, 2 * math.pi, 0, delta, epsabs=1e-13, epsrel=epsrel)
    return ref


@pytest.mark.parametrize("seed", range(3))
def test_inner_integral_affine_integrand_matches_adaptive(uniform10, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.3, 0.7, 2)
    a, b0, b1 = rng.normal(size=3)
    dec = decompose_ball(uniform10, x, "exactcaps")
    v = inner_integral_pair(uniform10, x, dec, Kernel(0.1), 0, 0,
                            integrand=lambda x, y: a + b0 * y[0] + b1 * y[1])
    ref = _polar_reference(lambda y: a + b0 * y[0] + b1 * y[1], x, 0.1)
    assert v == pytest.approx(ref, abs=1e-10)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("seed", range(3))
def test_inner_integral_hat_product_matches_adaptive(uniform10, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.3, 0.7, 2)
    k = element_containing(uniform10, x)
    j, j2 = uniform10.element_nodes[k][:2]
    a, b = uniform10.nodes[j], uniform10.nodes[j2]
    pa, pb = grid_hat(a, 0.1, x), grid_hat(b, 0.1, x)
    dec = decompose_ball(uniform10, x, "exactcaps")
    kern = Kernel(0.1)
    diag = []
    for jj, aa, pp in ((j, a, pa), (j2, b, pb)):
        # squared differences are quadratic on the caps, where the one-point rule is only
        # first-order exact; the gap is a small fraction of the value
        v = inner_integral_pair(uniform10, x, dec, kern, jj, jj, outer_element=k)
        ref = _polar_reference(lambda y: (grid_hat(aa, 0.1, y) - pp) ** 2, x, 0.1, 1e-5)
        assert v == pytest.approx(ref, rel=2e-2)
        diag.append(ref)
    v = inner_integral_pair(uniform10, x, dec, kern, j, j2, outer_element=k)
    ref = _polar_reference(lambda y: (grid_hat(a, 0.1, y) - pa) * (grid_hat(b, 0.1, y) - pb), x, 0.1, 1e-5)
    # the cross term is a difference of like-sized parts; measure it against the diagonal
    assert abs(v - ref) <= 2e-2 * math.sqrt(diag[0] * diag[1])


# ---------------------------------------------------------------- absorption

def test_absorption_far_from_boundary_is_zero(uniform10):
    x = [0.5, 0.5]
    dec = decompose_ball(uniform10, x, "exactcaps")
    assert absorption_integral(uniform10, x, dec, Kernel.constant(0.1)) == 0.0


def test_absorption_half_ball_on_straight_boundary(uniform10):
    k = Kernel.constant(0.1)
    x = [0.5, 0.0]
    dec = decompose_ball(uniform10, x, "exactcaps")
    assert absorption_integral(uniform10, x, dec, k) == pytest.approx(k.scale * math.pi * 0.01 / 2, rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_absorption_matches_sampling(uniform10, seed):
    rng = np.random.default_rng(seed)
    x = np.array([rng.uniform(0.0, 0.08), rng.uniform(0.05, 0.95)])
    k = Kernel.constant(0.1)
    dec = decompose_ball(uniform10, x, "exactcaps")
    v = absorption_integral(uniform10, x, dec, k) / k.scale
    L = uniform10.vertices.max()
    mrng = np.random.default_rng(100 + seed)
    total, se1 = mc_disk_region_area(x, 0.1, 1 - L, L, 10**6, mrng)
    inner, se2 = mc_disk_region_area(x, 0.1, 0.0, 1.0, 10**6, mrng)
    assert abs(v - (total - inner)) <= 3 * math.hypot(se1, se2)


# ---------------------------------------------------------------- assembled systems

@pytest.mark.parametrize("strategy", STRATEGIES)
def test_symmetric_and_positive_definite(uniform10, case, strategy):
    kernel, data, _ = case
    s = assemble(uniform10, kernel, data, strategy)
    A = s.matrix
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    rep = solve((A, np.random.default_rng(0).normal(size=A.shape[0])), method="cg")
    assert rep.residual <= 1e-12
    assert np.all(np.linalg.eigvalsh(A.toarray()) > 0)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_constants_are_reproduced(uniform10, strategy):
    s = assemble(uniform10, Kernel.constant(0.1), constant_data(1.0), strategy)
    u = solve(s).solution
    assert np.abs(u - 1.0).max() <= 1e-9
    z = assemble(uniform10, Kernel.constant(0.1), constant_data(0.0), strategy)
    assert np.all(z.rhs == 0.0)
    assert np.all(solve(z).solution == 0.0)


def test_assembly_is_deterministic_across_workers(uniform10, case):
    kernel, data, _ = case
    runs = [assemble(uniform10, kernel, data, "exactcaps", workers=w, chunk_size=16) for w in (1, 2, 8)]
    for r in runs[1:]:
        for attr in ("data", "indices", "indptr"):
            assert np.array_equal(getattr(r.matrix, attr), getattr(runs[0].matrix, attr))
        assert np.array_equal(r.rhs, runs[0].rhs)


def test_chunking_only_reorders_sums(uniform10, case):
    kernel, data, _ = case
    a = assemble(uniform10, kernel, data, "nocaps", chunk_size=7)
    b = assemble(uniform10, kernel, data, "nocaps", chunk_size=1000)
    assert abs(a.matrix - b.matrix).max() <= 1e-12 * abs(a.matrix).max()
    np.testing.assert_allclose(a.rhs, b.rhs, rtol=1e-12, atol=1e-12 * np.abs(a.rhs).max())


@pytest.mark.parametrize("strategy", ["exactcaps", "overlap", "barycenter-approxcaps"])
def test_sparsity_respects_support_bound(uniform20, case, strategy):
    kernel, data, _ = case
    s = assemble(uniform20, kernel, data, strategy)
    A = s.matrix.tocoo()
    x = uniform20.nodes
    d = np.hypot(*(x[A.row] - x[A.col]).T)
    assert d.max() <= 0.1 + 2 * uniform20.h_max


def test_nonzeros_grow_like_j_times_stencil_area(case):
    kernel, data, _ = case
    ratios = []
    for n in (10, 20, 40):
        m = build_uniform_grid(n, 0.1)
        A = assemble(m, kernel, data, "nocaps").matrix
        # a row couples every node within delta plus one cell
        ratios.append(A.nnz / (m.n_interior * (0.1 * n + 1) ** 2))
    assert max(ratios) / min(ratios) <= 2.0


def _thick_layer_mesh():
    # a layer four times wider than the horizon, so some nodes are never reached
    base = build_uniform_grid(10, 0.4)
    return Mesh(base.vertices, base.elements, base.regions, 0.1)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_far_constraint_values_are_never_used(strategy):
    from nlfem.mesh import distance_to_square

    m = _thick_layer_mesh()
    cut = m.delta + 2 * m.h_max
    far = distance_to_square(m.nodes) > cut
    assert far.sum() > 0

    def bumped(x0, x1):
        dx = max(-x0, 0.0, x0 - 1.0)
        dy = max(-x1, 0.0, x1 - 1.0)
        bump = 5.0 if math.sqrt(dx * dx + dy * dy) > cut else 0.0
        return x0 * x0 * x1 + x1 * x1 + bump

    kernel, data, _ = manufactured_case(0.1)
    a = assemble(m, kernel, data, strategy)
    b = assemble(m, kernel, ProblemData(data.f, bumped), strategy)
    assert not np.array_equal(a.constraint_values, b.constraint_values)
    assert np.array_equal(a.matrix.data, b.matrix.data)
    assert np.array_equal(a.rhs, b.rhs)


def test_linear_data_approximate_balls_converge(case):
    errs = []
    for n in (10, 20):
        m = build_uniform_grid(n, 0.1)
        s = assemble(m, Kernel.constant(0.1), linear_data(2.0, 3.0, -1.0), "nocaps")
        u = s.full_solution(solve(s).solution)
        exact = 2.0 + 3.0 * m.nodes[:, 0] - m.nodes[:, 1]
        errs.append(np.abs(u - exact).max())
    assert math.log2(errs[0] / errs[1]) >= 1.0


def test_cubic_solution_is_second_order(case):
    from nlfem.harness import l2_error

    kernel, data, exact = case
    errs = []
    for n in (10, 20):
        m = build_uniform_grid(n, 0.1)
        s = assemble(m, kernel, data, "exactcaps")
        errs.append(l2_error(m, s.full_solution(solve(s).solution), exact))
    assert 1.8 <= math.log2(errs[0] / errs[1]) <= 2.5


def test_assembly_argument_checks(uniform10, case):
    kernel, data, _ = case
    with pytest.raises(InvalidArgumentError):
        assemble(uniform10, Kernel.constant(0.2), data)
    with pytest.raises(InvalidArgumentError):
        assemble(uniform10, kernel, data, "roundish")
    with pytest.raises(InvalidArgumentError):
        assemble(uniform10, kernel, data, "approxcaps", cap_triangles=0)
    with pytest.raises(InvalidArgumentError):
        assemble(uniform10, kernel, data, workers=0)
    empty = Mesh(uniform10.vertices, uniform10.elements[uniform10.regions == 1],
                 uniform10.regions[uniform10.regions == 1], 0.1)
    object.__setattr__(empty, "n_interior", 0)
    with pytest.raises(MeshValidationError):
        assemble(empty, kernel, data)


def test_energy_norm_difference():
    A = np.diag([4.0, 2.0, 1.0])
    u = np.array([1.0, 2.0, 3.0])
    assert energy_norm_diff(A, u, u) == 0.0
    assert energy_norm_diff(A, u + [1, 0, 0], u) == pytest.approx(2.0)
    with pytest.raises(InvalidArgumentError):
        energy_norm_diff(A, u, u[:2])


def test_exports(tmp_path, uniform10, case):
    kernel, data, _ = case
    s = assemble(uniform10, kernel, data, "exactcaps")
    s.export_matrix(tmp_path / "A.mtx")
    s.export_rhs(tmp_path / "b.vec")
    head = (tmp_path / "A.mtx").read_text().splitlines()[0]
    assert head == "%%MatrixMarket matrix coordinate real symmetric"
    back = scipy.io.mmread(tmp_path / "A.mtx")
    assert abs(back - s.matrix).max() <= 1e-15 * abs(s.matrix).max()
    np.testing.assert_allclose(np.loadtxt(tmp_path / "b.vec"), s.rhs, rtol=1e-15)


def test_full_solution_appends_constraints(uniform10, case):
    kernel, data, _ = case
    s = assemble(uniform10, kernel, data, "nocaps")
    full = s.full_solution(np.zeros(s.n_unknowns))
    np.testing.assert_allclose(full[s.n_unknowns:], [manufactured_u(*p) for p in uniform10.nodes[81:]])
    with pytest.raises(InvalidArgumentError):
        s.full_solution(np.zeros(3))


def test_zero_source_shape():
    assert zero_source(np.zeros((2, 3)), 1.0).shape == (2, 3)
