# tests/test_fe_space.py
import numpy as np
import pytest

from fe_space import (
    REF_NODES,
    Continuity,
    FeFunction,
    UnsupportedElementError,
    build_space,
    eval_basis,
    eval_function,
    gradient_components,
    interpolate,
    reference_basis,
    vertex_values,
)
from mesh import affine_map, mesh_edges


def _random_ref_points(rng, n):
    p = rng.uniform(0, 1, size=(n, 2))
    flip = p.sum(axis=1) > 1
    p[flip] = 1 - p[flip]
    return p


def test_dof_counts(paper_mesh):
    assert build_space(paper_mesh, 1).n_dofs == 25
    assert build_space(paper_mesh, 2).n_dofs == 81
    assert build_space(paper_mesh, 1, Continuity.DISCONTINUOUS).n_dofs == 96
    assert build_space(paper_mesh, 2, "discontinuous").n_dofs == 192


def test_boundary_dofs(paper_mesh):
    assert len(build_space(paper_mesh, 1).boundary_dofs) == 16
    assert len(build_space(paper_mesh, 2).boundary_dofs) == 32
    assert len(build_space(paper_mesh, 1, Continuity.DISCONTINUOUS).boundary_dofs) == 0


def test_unsupported_degree(paper_mesh):
    with pytest.raises(UnsupportedElementError):
        build_space(paper_mesh, 3)
    with pytest.raises(UnsupportedElementError):
        reference_basis(0, [[0.2, 0.2]])


@pytest.mark.parametrize("k", [1, 2])
def test_partition_of_unity(k, rng):
    values, grads = reference_basis(k, _random_ref_points(rng, 20))
    np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(grads.sum(axis=1), 0.0, atol=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_nodal_basis(k):
    values, _ = reference_basis(k, REF_NODES[k])
    np.testing.assert_allclose(values, np.eye(len(REF_NODES[k])), atol=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_reference_gradients_match_finite_differences(k, rng):
    p = _random_ref_points(rng, 5) * 0.8 + 0.05
    h = 1e-6
    _, grads = reference_basis(k, p)
    vx = (reference_basis(k, p + [h, 0])[0] - reference_basis(k, p - [h, 0])[0]) / (2 * h)
    vy = (reference_basis(k, p + [0, h])[0] - reference_basis(k, p - [0, h])[0]) / (2 * h)
    np.testing.assert_allclose(grads[..., 0], vx, atol=1e-8)
    np.testing.assert_allclose(grads[..., 1], vy, atol=1e-8)


@pytest.mark.parametrize(
    "k, fn, grad",
    [
        (1, lambda p: 2 * p[..., 0] - 3 * p[..., 1] + 1, lambda p: np.array([2.0, -3.0])),
        (2, lambda p: p[..., 0] ** 2 - p[..., 0] * p[..., 1] + 0.5, lambda p: np.array([2 * p[0] - p[1], -p[0]])),
    ],
)
@pytest.mark.parametrize("continuity", list(Continuity))
def test_interpolation_reproduces_polynomials(paper_mesh, rng, k, fn, grad, continuity):
    space = build_space(paper_mesh, k, continuity)
    fe = interpolate(space, fn)
    for t in rng.integers(0, paper_mesh.n_triangles, size=6):
        ref = _random_ref_points(rng, 1)[0]
        x = affine_map(paper_mesh, t)(ref)
        val, g = eval_function(fe, t, ref)
        assert val == pytest.approx(float(fn(x)), abs=1e-13)
        np.testing.assert_allclose(g, grad(x), atol=1e-12)


def test_eval_basis(paper_mesh):
    space = build_space(paper_mesh, 2)
    values, grads = eval_basis(space, 3, [0.5, 0.0])
    assert values.shape == (6,) and grads.shape == (6, 2)
    assert values[3] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        eval_basis(space, 32, [0.1, 0.1])


def test_continuous_dofs_are_shared(paper_mesh):
    space = build_space(paper_mesh, 2)
    # every global DOF is used, and more than once on interior edges/vertices
    counts = np.bincount(space.dof_map.ravel(), minlength=space.n_dofs)
    assert (counts >= 1).all()
    # local DOF coordinates match the global DOF coordinates
    t = 10
    amap = affine_map(paper_mesh, t)
    np.testing.assert_allclose(space.dof_coords[space.dof_map[t]], amap(REF_NODES[2]), atol=1e-15)


def test_fe_function_length_check(paper_mesh):
    space = build_space(paper_mesh, 1)
    with pytest.raises(ValueError):
        FeFunction(space, np.zeros(24))


@pytest.mark.parametrize("k", [1, 2])
def test_gradient_components_exact(paper_mesh, k):
    fn = (lambda p: 3 * p[..., 0] - p[..., 1]) if k == 1 else (lambda p: p[..., 0] ** 2 + p[..., 1] ** 2)
    fe = interpolate(build_space(paper_mesh, k), fn)
    gx, gy = gradient_components(fe)
    assert not gx.space.is_continuous and gx.space.degree == k
    x = gx.space.dof_coords
    if k == 1:
        np.testing.assert_allclose(gx.coefficients, 3.0, atol=1e-13)
        np.testing.assert_allclose(gy.coefficients, -1.0, atol=1e-13)
    else:
        np.testing.assert_allclose(gx.coefficients, 2 * x[:, 0], atol=1e-13)
        np.testing.assert_allclose(gy.coefficients, 2 * x[:, 1], atol=1e-13)


def test_vertex_values(paper_mesh):
    fn = lambda p: p[..., 0] + 2 * p[..., 1]  # noqa: E731
    cg = interpolate(build_space(paper_mesh, 2), fn)
    dg = interpolate(build_space(paper_mesh, 1, Continuity.DISCONTINUOUS), fn)
    expected = fn(paper_mesh.vertices)
    np.testing.assert_allclose(vertex_values(cg), expected, atol=1e-14)
    np.testing.assert_allclose(vertex_values(dg), expected, atol=1e-14)


REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("k", [1, 2])
def test_continuity_across_interior_edges(paper_mesh, rng, k):
    space = build_space(paper_mesh, k)
    fe = FeFunction(space, rng.standard_normal(space.n_dofs))
    _, tri_edges = mesh_edges(paper_mesh)
    samples = {}
    for t, tri in enumerate(paper_mesh.triangles):
        for j in range(3):
            a, b = tri[j], tri[(j + 1) % 3]
            for s in (0.25, 0.5, 0.75):
                # s runs from the lower-numbered vertex of the edge
                s_local = s if a < b else 1.0 - s
                ref = REF_VERTICES[j] + s_local * (REF_VERTICES[(j + 1) % 3] - REF_VERTICES[j])
                value, _ = eval_function(fe, t, ref)
                samples.setdefault((tri_edges[t, j], s), []).append(value)
    shared = [v for v in samples.values() if len(v) == 2]
    assert max(len(v) for v in samples.values()) == 2
    assert len(shared) == 3 * 40
    for v0, v1 in shared:
        assert abs(v0 - v1) <= 1e-12
