import math

import numpy as np
import pytest

from formkac import form_algebra as fa
from formkac.errors import DomainError, PreconditionError
from formkac.geometry import (
    MODELS,
    boundary_data_at,
    catalog,
    curvature_at,
    make_model,
    metric_at,
    orthonormal_boundary_frame_data,
    r_q_at,
    rho_q_at,
    signed_boundary_distance,
    tangential_curvatures,
)
from formkac.oracles import curvature_fd, hyperbolic_distance

ALL_MODELS = [
    ("euclidean", 3, {}),
    ("halfspace", 3, {}),
    ("slab", 3, {"a": 1.5}),
    ("ball", 3, {"r0": 2.0}),
    ("sphere", 3, {}),
    ("sphere_cap", 3, {"theta0": 1.0}),
    ("hyperbolic", 3, {}),
    ("hyperbolic_tube", 4, {"r": 0.8}),
]
BOUNDARY_MODELS = [m for m in ALL_MODELS if MODELS[m[0]].has_boundary]


def _id(m):
    return f"{m[0]}-{m[1]}"


def christoffel_from_metric(model, x, h=1e-5):
    """Gamma^l_jk = g^{lm}(d_j g_mk + d_k g_mj - d_m g_jk) / 2 by central differences."""
    n = model.dim
    dg = np.zeros((n, n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dg[i] = (model.metric(x + e) - model.metric(x - e)) / (2 * h)
    ginv = np.linalg.inv(model.metric(x))
    return 0.5 * np.einsum("lm,jmk->ljk", ginv, np.einsum("jmk->jmk", dg) + np.einsum("kmj->jmk", dg) - np.einsum("mjk->jmk", dg))


def hyperbolic_christoffel_oracle(x):
    """Closed form for g = y^{-2} I on the upper half-space."""
    n = len(x)
    y = x[-1]
    G = np.zeros((n, n, n))
    for i in range(n - 1):
        G[i, i, n - 1] = G[i, n - 1, i] = -1 / y
        G[n - 1, i, i] = 1 / y
    G[n - 1, n - 1, n - 1] = -1 / y
    return G


# metric


def test_flat_metric_is_identity():
    assert np.array_equal(metric_at(make_model("halfspace", 3), [0.2, -1.0, 0.7]), np.eye(3))


def test_hyperbolic_metric_examples():
    model = make_model("hyperbolic", 3)
    assert np.allclose(metric_at(model, [0.0, 0.0, 1.0]), np.eye(3))
    assert np.allclose(metric_at(model, [0.3, -0.2, 2.0]), 0.25 * np.eye(3))


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_metric_is_symmetric_positive_definite(m):
    model = make_model(m[0], m[1], **m[2])
    pts = model.sample_points(np.random.default_rng(1), 500)
    h = metric_at(model, pts)
    assert np.allclose(h, np.swapaxes(h, -1, -2))
    assert np.all(np.linalg.eigvalsh(h) > 0)


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_canonical_frame_is_orthonormal(m):
    model = make_model(m[0], m[1], **m[2])
    pts = model.sample_points(np.random.default_rng(2), 200)
    E = model.frame(pts)
    assert np.abs(np.swapaxes(E, -1, -2) @ model.metric(pts) @ E - np.eye(model.dim)).max() < 1e-12


def test_domain_errors():
    with pytest.raises(DomainError):
        metric_at(make_model("hyperbolic", 2), [0.0, -1.0])
    with pytest.raises(DomainError):
        metric_at(make_model("ball", 2), [2.0, 0.0])
    with pytest.raises(DomainError):
        curvature_at(make_model("halfspace", 2), [0.0, -0.1])
    with pytest.raises(DomainError):
        signed_boundary_distance(make_model("hyperbolic_tube", 3, r=0.5), [5.0, 0.0, 1.0])


def test_model_construction_errors():
    with pytest.raises(ValueError):
        make_model("ball", 7)
    with pytest.raises(ValueError):
        make_model("hyperbolic_tube", 2)
    with pytest.raises(ValueError):
        make_model("ball", 3, r0=-1.0)
    with pytest.raises(ValueError):
        make_model("ball", 3, radius=1.0)
    with pytest.raises(ValueError):
        make_model("torus", 3)


def test_catalog_is_stable_and_complete():
    cat = catalog()
    assert [c["model"] for c in cat] == list(MODELS)
    assert cat == catalog()
    tube = next(c for c in cat if c["model"] == "hyperbolic_tube")
    assert tube["params"]["r"]["min_exclusive"] == 0.0
    assert tube["dims"] == [3, 6]


# connection and curvature


def test_hyperbolic_christoffel_matches_closed_form():
    model = make_model("hyperbolic", 4)
    x = np.array([0.3, -0.1, 0.2, 1.7])
    assert np.allclose(model.christoffel(x), hyperbolic_christoffel_oracle(x), atol=1e-14)


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_christoffel_matches_metric_differences(m):
    model = make_model(m[0], m[1], **m[2])
    for x in model.sample_points(np.random.default_rng(3), 5):
        assert np.allclose(model.christoffel(x), christoffel_from_metric(model, x), atol=1e-7)


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_curvature_matches_christoffel_difference_oracle(m):
    model = make_model(m[0], m[1], **m[2])
    for x in model.sample_points(np.random.default_rng(4), 5):
        assert np.abs(curvature_at(model, x) - curvature_fd(model, x)).max() < 1e-6


@pytest.mark.parametrize("name,c", [("halfspace", 0.0), ("ball", 0.0), ("hyperbolic", -1.0), ("sphere_cap", 1.0), ("sphere", 1.0)])
def test_constant_curvature_examples(name, c):
    model = make_model(name, 4)
    x = model.sample_points(np.random.default_rng(5), 1)[0]
    assert np.allclose(curvature_at(model, x), fa.constant_curvature_tensor(4, c), atol=1e-12)


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_curvature_symmetries_on_sampled_points(m):
    model = make_model(m[0], m[1], **m[2])
    R = curvature_at(model, model.sample_points(np.random.default_rng(6), 1000))
    assert fa.curvature_symmetry_defect(R) < 1e-10


def test_r_q_examples():
    hyp = make_model("hyperbolic", 5)
    x = hyp.reference_point()
    for q in range(6):
        assert r_q_at(hyp, x, q) == pytest.approx(-q * (5 - q), abs=1e-12)
    assert r_q_at(make_model("sphere_cap", 3), np.zeros(3), 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        r_q_at(hyp, x, 6)


@pytest.mark.parametrize("m", ALL_MODELS, ids=_id)
def test_geodesic_step_preserves_frame_orthonormality(m):
    model = make_model(m[0], m[1], **m[2])
    rng = np.random.default_rng(7)
    x = model.sample_points(rng, 50)
    F = model.frame(x)
    v = 0.01 * np.einsum("bij,bj->bi", F, rng.standard_normal((50, model.dim)))
    x1, F1 = model.geodesic_step(x, v, F)
    err = np.abs(np.swapaxes(F1, -1, -2) @ model.metric(x1) @ F1 - np.eye(model.dim)).max()
    assert err < 1e-6


# boundary data


def test_halfspace_boundary_data():
    model = make_model("halfspace", 3)
    bd = boundary_data_at(model, [0.4, -2.0, 0.0])
    assert np.allclose(bd.normal, [0, 0, 1])
    assert np.array_equal(bd.shape_operator, np.zeros((3, 3)))
    assert np.array_equal(bd.principal_curvatures, np.zeros(2))
    for q in (1, 2):
        assert rho_q_at(model, [0.0, 0.0, 0.0], q) == 0.0


def test_ball_principal_curvatures_match_normal_field_differences():
    r0 = 1.7
    model = make_model("ball", 3, r0=r0)
    p = r0 * np.array([0.6, 0.0, 0.8])

    def nu_field(x):
        return -x / np.linalg.norm(x)

    h = 1e-6
    dnu = np.stack([(nu_field(p + h * e) - nu_field(p - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    A_fd = -dnu
    tangent = np.linalg.svd(np.outer(p, p))[0][:, 1:]
    rho_fd = np.sort(np.linalg.eigvalsh(tangent.T @ A_fd @ tangent))
    bd = boundary_data_at(model, p)
    assert np.allclose(bd.principal_curvatures, rho_fd, atol=1e-8)
    assert np.allclose(bd.principal_curvatures, 1 / r0, atol=1e-12)
    for q in (1, 2):
        assert rho_q_at(model, p, q) == pytest.approx(q / r0, abs=1e-12)


def test_sphere_cap_principal_curvatures():
    theta0 = 1.2
    model = make_model("sphere_cap", 3, theta0=theta0)
    p = model.sample_boundary_points(np.random.default_rng(8), 20)
    rho = boundary_data_at(model, p).principal_curvatures
    assert np.allclose(rho, 1 / math.tan(theta0), atol=1e-10)


def _axis_distance_hessian_frame(x, h=1e-4):
    """Covariant Hessian of the distance to the vertical geodesic, in the frame y * I."""

    def rho(z):
        return math.asinh(np.linalg.norm(z[:-1]) / z[-1])

    n = len(x)
    I = np.eye(n)
    grad = np.array([(rho(x + h * e) - rho(x - h * e)) / (2 * h) for e in I])
    d2 = np.array([[(rho(x + h * a + h * b) - rho(x + h * a - h * b) - rho(x - h * a + h * b) + rho(x - h * a - h * b)) / (4 * h * h) for b in I] for a in I])
    G = hyperbolic_christoffel_oracle(x)
    hess = d2 - np.einsum("kij,k->ij", G, grad)
    return x[-1] ** 2 * hess


@pytest.mark.parametrize("n", [3, 4, 5])
def test_tube_principal_curvatures_match_distance_hessian(n):
    r = 0.8
    model = make_model("hyperbolic_tube", n, r=r)
    p = model.sample_boundary_points(np.random.default_rng(9), 3)
    bd = boundary_data_at(model, p)
    expected = np.sort([math.tanh(r)] + [1 / math.tanh(r)] * (n - 2))
    assert np.allclose(bd.principal_curvatures, expected, atol=1e-10)
    for x, rho in zip(p, bd.principal_curvatures):
        w = np.linalg.eigvalsh(_axis_distance_hessian_frame(x))
        w = np.delete(w, np.argmin(np.abs(w)))
        assert np.allclose(np.sort(w), rho, atol=1e-5)
    if n >= 4:
        assert rho_q_at(model, p[0], 2) == pytest.approx(math.tanh(r) + 1 / math.tanh(r), abs=1e-10)


@pytest.mark.parametrize("m", BOUNDARY_MODELS, ids=_id)
def test_boundary_data_invariants(m):
    model = make_model(m[0], m[1], **m[2])
    p = model.sample_boundary_points(np.random.default_rng(10), 200)
    bd = boundary_data_at(model, p)
    h = model.metric(p)
    nu, A = bd.normal, bd.shape_operator
    assert np.allclose(np.einsum("bi,bij,bj->b", nu, h, nu), 1.0, atol=1e-12)
    assert np.abs(np.einsum("bij,bj->bi", A, nu)).max() < 1e-10
    hA = h @ A
    assert np.abs(hA - np.swapaxes(hA, -1, -2)).max() < 1e-10
    assert np.all(np.diff(bd.principal_curvatures, axis=-1) >= 0)
    assert bd.principal_curvatures.shape == (200, model.dim - 1)


@pytest.mark.parametrize("m", BOUNDARY_MODELS, ids=_id)
def test_distance_gradient_at_boundary_is_normal(m):
    model = make_model(m[0], m[1], **m[2])
    for p in model.sample_boundary_points(np.random.default_rng(11), 10):
        eps = 1e-6
        grad = np.array([(model.signed_distance(p + eps * e) - model.signed_distance(p - eps * e)) / (2 * eps) for e in np.eye(model.dim)])
        raised = np.linalg.solve(model.metric(p), grad)
        assert np.allclose(raised, boundary_data_at(model, p).normal, atol=1e-6)


@pytest.mark.parametrize("m", BOUNDARY_MODELS, ids=_id)
def test_convexity_is_monotone_in_q(m):
    model = make_model(m[0], m[1], **m[2])
    p = model.sample_boundary_points(np.random.default_rng(12), 1000)
    for q in range(1, model.dim - 1):
        low = rho_q_at(model, p, q)
        high = rho_q_at(model, p, q + 1)
        assert np.all(high[low > 0] > 0)


@pytest.mark.parametrize("m", BOUNDARY_MODELS, ids=_id)
def test_rho_and_r_are_frame_independent(m):
    model = make_model(m[0], m[1], **m[2])
    rng = np.random.default_rng(13)
    p = model.sample_boundary_points(rng, 50)
    n = model.dim
    O = np.linalg.qr(rng.standard_normal((50, n, n)))[0]
    F = model.frame(p) @ O
    _, A1 = orthonormal_boundary_frame_data(model, p)
    _, A2 = orthonormal_boundary_frame_data(model, p, F)
    assert np.abs(tangential_curvatures(A1) - tangential_curvatures(A2)).max() < 1e-10
    from formkac.functional import frame_curvature

    R1 = curvature_at(model, p)
    R2 = frame_curvature(model, p, F)
    for q in range(1, n):
        r1 = fa.r_q_min(fa.weitzenbock_matrix(R1, q, check=False))
        r2 = fa.r_q_min(fa.weitzenbock_matrix(R2, q, check=False))
        assert np.abs(r1 - r2).max() < 1e-10


def test_boundary_ops_reject_interior_points_and_bad_q():
    ball = make_model("ball", 3)
    with pytest.raises(PreconditionError):
        boundary_data_at(ball, [0.0, 0.0, 0.5])
    with pytest.raises(PreconditionError):
        boundary_data_at(make_model("hyperbolic", 3), [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        rho_q_at(ball, [0.0, 0.0, 1.0], 3)
    with pytest.raises(ValueError):
        rho_q_at(ball, [0.0, 0.0, 1.0], 0)


# signed distance


def test_signed_distance_examples():
    d, p = signed_boundary_distance(make_model("halfspace", 3), [1.0, 2.0, 0.3])
    assert d == pytest.approx(0.3)
    assert np.allclose(p, [1.0, 2.0, 0.0])
    d, _ = signed_boundary_distance(make_model("ball", 3, r0=1.0), np.zeros(3))
    assert d == pytest.approx(1.0)


def test_tube_axis_distance_matches_geodesic_distance():
    r = 0.8
    model = make_model("hyperbolic_tube", 3, r=r)
    axis = np.array([0.0, 0.0, 1.3])
    d, p = signed_boundary_distance(model, axis)
    assert d == pytest.approx(r, abs=1e-12)
    assert hyperbolic_distance(axis, p) == pytest.approx(r, abs=1e-12)


@pytest.mark.parametrize("m", BOUNDARY_MODELS, ids=_id)
def test_signed_distance_vanishes_on_boundary_and_projection_lands_there(m):
    model = make_model(m[0], m[1], **m[2])
    rng = np.random.default_rng(14)
    bp = model.sample_boundary_points(rng, 100)
    d, _ = signed_boundary_distance(model, bp)
    assert np.abs(d).max() < 1e-9
    ip = model.sample_points(rng, 100)
    d, proj = signed_boundary_distance(model, ip)
    assert np.all(d >= 0)
    assert np.abs(model.signed_distance(proj)).max() < 1e-9


def test_signed_distance_without_boundary_is_infinite():
    d, p = signed_boundary_distance(make_model("hyperbolic", 2), [0.0, 1.0])
    assert d == math.inf
    assert np.all(np.isnan(p))
