import numpy as np
import pytest
import scipy.linalg

from edgesaddle.assembly import (
    assemble_curlcurl,
    assemble_edge_mass,
    derive_B_and_L,
    discrete_gradient,
    dof_maps,
    local_curlcurl,
    local_mass,
)
from edgesaddle.mesh import gen_lshape, gen_square

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))

# 7-point rule, exact for degree 5, barycentric points and weights summing to 1
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
QUAD_POINTS = np.array([[1 / 3, 1 / 3, 1 / 3],
                        [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
                        [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2]])
QUAD_WEIGHTS = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def whitney_values(points, bary):
    """Values of the three unsigned Whitney functions at barycentric points."""
    # lambda_i(x, y) = row i of inv([[x_j], [y_j], [1]]) applied to (x, y, 1)
    grads = np.linalg.inv(np.vstack([points.T, np.ones(3)]))[:, :2]
    out = np.empty((len(bary), 3, 2))
    for j, (a, b) in enumerate(LOCAL_EDGES):
        out[:, j] = bary[:, [a]] * grads[b] - bary[:, [b]] * grads[a]
    return out


def quad_mass(points):
    area = 0.5 * abs(np.linalg.det(np.column_stack([points[1] - points[0], points[2] - points[0]])))
    W = whitney_values(points, QUAD_POINTS)
    return area * np.einsum("q,qid,qjd->ij", QUAD_WEIGHTS, W, W)


def test_quadrature_rule_sanity():
    assert QUAD_WEIGHTS.sum() == pytest.approx(1.0, abs=1e-14)
    # exact on lambda_0^2: integral / area = 2/12
    assert QUAD_WEIGHTS @ QUAD_POINTS[:, 0] ** 2 == pytest.approx(1 / 6, abs=1e-14)


def test_local_curlcurl_reference_triangle():
    for s in ((1, 1, 1), (1, -1, 1), (-1, 1, -1)):
        assert np.allclose(local_curlcurl(REF, s), 2 * np.outer(s, s), atol=1e-14)


@pytest.mark.parametrize("points", [REF, np.array([[0.2, -0.1], [1.3, 0.4], [0.1, 0.9]])])
def test_local_mass_matches_quadrature(points):
    assert np.abs(local_mass(points) - quad_mass(points)).max() <= 1e-14
    s = (1, -1, 1)
    assert np.abs(local_mass(points, s) - np.outer(s, s) * quad_mass(points)).max() <= 1e-14


def test_single_dof_energy_matches_quadrature():
    mesh = gen_square(2)
    M = assemble_edge_mass(mesh)
    dofs = dof_maps(mesh)
    e = int(np.flatnonzero(dofs.edge_to_dof >= 0)[0])
    x = np.zeros(dofs.n)
    x[dofs.edge_to_dof[e]] = 1.0
    total = 0.0
    for t in np.flatnonzero((mesh.triangle_edge == e).any(axis=1)):
        j = int(np.flatnonzero(mesh.triangle_edge[t] == e)[0])
        total += quad_mass(mesh.vertices[mesh.triangles[t]])[j, j]
    assert x @ M @ x == pytest.approx(total, abs=1e-14)


def test_curlcurl_kernel_on_square_level_two():
    mesh = gen_square(2)
    A, C = assemble_curlcurl(mesh), discrete_gradient(mesh)
    assert np.abs((A @ C).toarray()).max() <= 1e-14
    ev = scipy.linalg.eigvalsh(A.toarray())
    assert np.count_nonzero(np.abs(ev) <= 1e-10 * ev.max()) == mesh.n_interior_vertices == 1


def test_discrete_gradient_square_level_two():
    mesh = gen_square(2)
    C = discrete_gradient(mesh).toarray()
    centre = int(np.flatnonzero(~mesh.boundary_vertex)[0])
    dofs = dof_maps(mesh)
    assert C.shape == (dofs.n, 1)
    for e, (a, b) in enumerate(mesh.edges):
        r = dofs.edge_to_dof[e]
        if r < 0:
            continue
        expected = -1.0 if a == centre else 1.0 if b == centre else 0.0
        assert C[r, 0] == expected
    assert np.count_nonzero(C) == 6  # four axis edges and two diagonals


@pytest.mark.parametrize("mesh", [gen_square(3), gen_lshape(3, 0.5)], ids=["square", "lshape"])
def test_gradient_spans_kernel(mesh):
    A, C = assemble_curlcurl(mesh).toarray(), discrete_gradient(mesh).toarray()
    m = C.shape[1]
    _, s, Vt = np.linalg.svd(A)
    Z = Vt[np.sum(s > 1e-10 * s[0]):].T
    assert Z.shape[1] == m
    assert np.linalg.matrix_rank(np.hstack([Z, C]), tol=1e-8) == m


@pytest.mark.parametrize("gen,level", [(gen_square, 1), (gen_square, 3), (gen_lshape, 2)])
def test_mass_is_spd(gen, level):
    M = assemble_edge_mass(gen(level)).toarray()
    assert np.allclose(M, M.T)
    assert scipy.linalg.eigvalsh(M)[0] > 0


def test_B_and_L():
    mesh = gen_square(3)
    M, C = assemble_edge_mass(mesh), discrete_gradient(mesh)
    B, L = derive_B_and_L(M, C)
    assert np.array_equal((M @ C).toarray(), B.T.toarray())
    Ld = L.toarray()
    assert np.allclose(Ld, Ld.T, atol=1e-15)
    assert np.allclose(Ld, (C.T @ M @ C).toarray(), atol=1e-14)
    assert scipy.linalg.eigvalsh(Ld)[0] > 0


def test_no_interior_vertices():
    mesh = gen_square(1)
    M, C = assemble_edge_mass(mesh), discrete_gradient(mesh)
    B, L = derive_B_and_L(M, C)
    assert B.shape == (0, 1) and L.shape == (0, 0) and C.shape == (1, 0)
