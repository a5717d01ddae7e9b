import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formkac import form_algebra as fa
from formkac.geometry import MODELS, curvature_at, make_model

# independent oracle: q-forms as fully antisymmetric tensors


def _perm_parity(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def to_tensor(n, q, coeffs):
    T = np.zeros((n,) * q)
    for c, I in zip(coeffs, fa.basis(n, q)):
        for perm in itertools.permutations(range(q)):
            T[tuple(I[k] for k in perm)] = _perm_parity(perm) * c
    return T


def from_tensor(n, q, T):
    return np.array([T[I] for I in fa.basis(n, q)]) if q else np.array([float(T)])


def tensor_wedge(n, p, q, A, B):
    """(a ^ b)(v_1..v_{p+q}) = sum over shuffles with p! q! normalization."""
    out = np.zeros((n,) * (p + q))
    for idx in itertools.product(range(n), repeat=p + q):
        if len(set(idx)) < p + q:
            continue
        s = 0.0
        for perm in itertools.permutations(range(p + q)):
            j = [idx[k] for k in perm]
            s += _perm_parity(perm) * A[tuple(j[:p])] * B[tuple(j[p:])]
        out[idx] = s / (math.factorial(p) * math.factorial(q))
    return out


def tensor_interior(v, T):
    return np.tensordot(v, T, axes=(0, 0))


def random_form(rng, n, q):
    return fa.FormCoefficients(n, q, rng.standard_normal(fa.dim(n, q)))


dims = st.integers(min_value=1, max_value=6)


# wedge and interior


def test_wedge_basis_example():
    w = fa.wedge(fa.FormCoefficients.basis_form(3, (0,)), fa.FormCoefficients.basis_form(3, (1,)))
    assert np.array_equal(w.coeffs, fa.FormCoefficients.basis_form(3, (0, 1)).coeffs)


def test_interior_basis_example():
    out = fa.interior([1.0, 0.0, 0.0], fa.FormCoefficients.basis_form(3, (0, 1)))
    assert np.array_equal(out.coeffs, fa.FormCoefficients.basis_form(3, (1,)).coeffs)


def test_wedge_matches_tensor_oracle(rng):
    for n, p, q in [(3, 1, 1), (4, 1, 2), (4, 2, 2), (5, 2, 1), (5, 1, 3)]:
        a, b = random_form(rng, n, p), random_form(rng, n, q)
        ref = from_tensor(n, p + q, tensor_wedge(n, p, q, to_tensor(n, p, a.coeffs), to_tensor(n, q, b.coeffs)))
        assert np.allclose(fa.wedge(a, b).coeffs, ref, atol=1e-12)


def test_interior_matches_tensor_oracle(rng):
    for n, q in [(3, 2), (4, 3), (5, 2), (6, 4)]:
        v = rng.standard_normal(n)
        w = random_form(rng, n, q)
        ref = from_tensor(n, q - 1, tensor_interior(v, to_tensor(n, q, w.coeffs)))
        assert np.allclose(fa.interior(v, w).coeffs, ref, atol=1e-12)


def test_interior_is_adjoint_of_wedge_on_random_triples(rng):
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        q = int(rng.integers(0, n))
        v = rng.standard_normal(n)
        a, b = random_form(rng, n, q), random_form(rng, n, q + 1)
        lhs = fa.wedge(fa.FormCoefficients(n, 1, v), a).coeffs @ b.coeffs
        rhs = a.coeffs @ fa.interior(v, b).coeffs
        worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-12


def test_wedge_degree_overflow_and_interior_of_function_raise():
    with pytest.raises(ValueError):
        fa.wedge(fa.FormCoefficients.basis_form(2, (0, 1)), fa.FormCoefficients.basis_form(2, (0,)))
    with pytest.raises(ValueError):
        fa.interior([1.0, 0.0], fa.FormCoefficients(2, 0, [1.0]))
    with pytest.raises(ValueError):
        fa.FormCoefficients(3, 1, [1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(n=dims, data=st.data())
def test_wedge_graded_commutativity(n, data):
    p = data.draw(st.integers(0, n))
    q = data.draw(st.integers(0, n - p))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    a, b = random_form(rng, n, p), random_form(rng, n, q)
    assert np.allclose(fa.wedge(a, b).coeffs, (-1) ** (p * q) * fa.wedge(b, a).coeffs, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=dims, seed=st.integers(0, 2**32 - 1))
def test_interior_squares_to_zero(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    for q in range(2, n + 1):
        assert np.abs(fa.interior_matrix(v, q - 1) @ fa.interior_matrix(v, q)).max(initial=0.0) < 1e-12


# Hodge star


def test_hodge_star_example_n3():
    star = fa.hodge_star(fa.FormCoefficients.basis_form(3, (0,)))
    assert np.array_equal(star.coeffs, fa.FormCoefficients.basis_form(3, (1, 2)).coeffs)


def test_star_star_sign_all_degrees():
    for n in range(1, 7):
        for q in range(n + 1):
            S2 = fa.hodge_star_matrix(n, n - q) @ fa.hodge_star_matrix(n, q)
            assert np.array_equal(S2, (-1) ** (q * (n - q)) * np.eye(fa.dim(n, q)))


def test_inner_product_volume_identity(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        q = int(rng.integers(0, n + 1))
        a, b = random_form(rng, n, q), random_form(rng, n, q)
        top = fa.wedge(a, fa.hodge_star(b)).coeffs[0]
        assert abs(top - a.coeffs @ b.coeffs) < 1e-12


def test_hodge_star_is_orthogonal():
    for n in range(1, 7):
        for q in range(n + 1):
            S = fa.hodge_star_matrix(n, q)
            assert np.array_equal(S.T @ S, np.eye(fa.dim(n, q)))


# compound matrices


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_compound_matrix_is_multiplicative(n, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    for q in range(n + 1):
        assert np.allclose(fa.compound_matrix(A @ B, q), fa.compound_matrix(A, q) @ fa.compound_matrix(B, q), atol=1e-9)


def test_compound_of_rotation_intertwines_wedge(rng):
    n = 4
    O, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a, b = random_form(rng, n, 1), random_form(rng, n, 2)
    C1, C2, C3 = (fa.compound_matrix(O, q) for q in (1, 2, 3))
    lhs = C3 @ fa.wedge(a, b).coeffs
    rhs = fa.wedge(fa.FormCoefficients(n, 1, C1 @ a.coeffs), fa.FormCoefficients(n, 2, C2 @ b.coeffs)).coeffs
    assert np.allclose(lhs, rhs, atol=1e-12)


# projections


def test_projection_example_normal_covector():
    nu = np.array([0.0, 0.0, 1.0])
    tan, nor = fa.projections(nu, 1)
    w = np.array([0.0, 0.0, 1.0])
    assert np.allclose(nor @ w, w)
    assert np.allclose(tan @ w, 0.0)


@settings(max_examples=60, deadline=None)
@given(n=dims, seed=st.integers(0, 2**32 - 1))
def test_fermionic_relation_and_projection_properties(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    nu = v / np.linalg.norm(v)
    for q in range(n + 1):
        tan, nor = fa.projections(nu, q)
        eye = np.eye(fa.dim(n, q))
        if q == 0:
            assert np.allclose(tan, eye, atol=1e-12)
            continue
        if q == n:
            assert np.allclose(nor, eye, atol=1e-12)
            continue
        assert np.abs(tan + nor - eye).max() < 1e-12
        for P in (tan, nor):
            assert np.abs(P @ P - P).max() < 1e-12
            assert np.abs(P - P.T).max() < 1e-12
        assert np.abs(tan @ nor).max() < 1e-12


def test_normal_projection_rank():
    for n in range(2, 7):
        for q in range(1, n):
            _, nor = fa.projections(np.eye(n)[-1], q)
            assert np.linalg.matrix_rank(nor) == math.comb(n - 1, q - 1)


def test_projection_rejects_non_unit_normal():
    with pytest.raises(ValueError):
        fa.projections([1.0, 1.0], 1)


def test_batched_normal_projection_matches_single(rng):
    nus = rng.standard_normal((5, 4))
    nus /= np.linalg.norm(nus, axis=1, keepdims=True)
    batch = fa.normal_projection(nus, 2)
    for k in range(5):
        assert np.allclose(batch[k], fa.projections(nus[k], 2)[1], atol=1e-12)


# shape matrices


def test_zero_shape_operator():
    assert np.array_equal(fa.shape_matrix(np.zeros((3, 3)), 2), np.zeros((3, 3)))


def test_ball_shape_matrix_eigenvalue():
    r0, n = 2.0, 4
    A = np.diag([1 / r0] * (n - 1) + [0.0])
    for q in range(1, n):
        Aq = fa.shape_matrix(A, q, nu=np.eye(n)[-1])
        for k, I in enumerate(fa.basis(n, q)):
            if n - 1 not in I:
                assert Aq[k, k] == pytest.approx(q / r0, abs=1e-14)


def test_shape_matrix_spectrum_matches_enumeration(rng):
    for n in range(2, 7):
        rho = rng.standard_normal(n - 1)
        A = np.diag(np.r_[rho, 0.0])
        O, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A_rot = O @ A @ O.T
        nu = O[:, -1]
        for q in range(1, n):
            Aq = fa.shape_matrix(A_rot, q, nu=nu)
            _, nor = fa.projections(nu, q)
            assert np.abs(nor @ Aq).max() < 1e-12
            tan = np.eye(len(Aq)) - nor
            w = np.linalg.eigvalsh(tan @ Aq @ tan)
            sums = sorted([sum(rho[list(I)]) for I in itertools.combinations(range(n - 1), q)] + [0.0] * math.comb(n - 1, q - 1))
            assert np.allclose(np.sort(w), sums, atol=1e-10)


def test_shape_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        fa.shape_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
    with pytest.raises(ValueError):
        fa.shape_matrix(np.diag([1.0, 1.0]), 1, nu=[0.0, 1.0])


def test_starred_shape_matrix_on_normal_forms(rng):
    """Conjugating A_{n-q} by the star gives tr(A) - A_{q-1} on normal forms nu ^ eta."""
    for n in range(2, 7):
        rho = rng.standard_normal(n - 1)
        A = np.diag(np.r_[rho, 0.0])
        nu = np.eye(n)[-1]
        for q in range(1, n + 1):
            S = fa.hodge_star_matrix(n, q)
            conj = S.T @ fa.shape_matrix(A, n - q) @ S
            ext = fa.exterior_matrix(nu, q - 1)
            embed = np.array([[1.0 if J == I else 0.0 for I in fa.basis(n - 1, q - 1)] for J in fa.basis(n, q - 1)])
            N = fa.normal_shape_matrix(np.diag(rho), q - 1)
            lhs = (ext @ embed).T @ conj @ (ext @ embed)
            assert np.abs(lhs - N).max() < 1e-12


# Weitzenbock term


def _catalog_tensors():
    out = []
    for name, cls in MODELS.items():
        for n in range(max(cls.min_dim, 2), cls.max_dim + 1):
            model = make_model(name, n)
            out.append((name, model.sectional, curvature_at(model, model.reference_point())))
    return out


@pytest.mark.parametrize("name,c,R", _catalog_tensors(), ids=lambda v: v if isinstance(v, str) else "")
def test_weitzenbock_pinning_on_catalog(name, c, R):
    n = R.shape[0]
    assert np.abs(fa.weitzenbock_matrix(R, 1) - fa.ricci(R)).max() < 1e-12
    for q in range(n + 1):
        Rq = fa.weitzenbock_matrix(R, q)
        assert np.abs(Rq - q * (n - q) * c * np.eye(len(Rq))).max() < 1e-12
        S = fa.hodge_star_matrix(n, q)
        assert np.abs(S @ Rq - fa.weitzenbock_matrix(R, n - q) @ S).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_weitzenbock_pinning_on_random_tensors(n, seed):
    R = fa.random_curvature_tensor(np.random.default_rng(seed), n)
    assert fa.curvature_symmetry_defect(R) < 1e-12
    scale = max(1.0, np.abs(R).max())
    assert np.abs(fa.weitzenbock_matrix(R, 1) - fa.ricci(R)).max() < 1e-12 * scale
    for q in range(n + 1):
        Rq = fa.weitzenbock_matrix(R, q)
        assert np.abs(Rq - Rq.T).max(initial=0.0) < 1e-12 * scale
        S = fa.hodge_star_matrix(n, q)
        assert np.abs(S @ Rq - fa.weitzenbock_matrix(R, n - q) @ S).max(initial=0.0) < 1e-12 * scale


def test_weitzenbock_vanishes_on_functions_and_top_forms(rng):
    R = fa.random_curvature_tensor(rng, 4)
    assert np.array_equal(fa.weitzenbock_matrix(R, 0), np.zeros((1, 1)))
    assert np.abs(fa.weitzenbock_matrix(R, 4)).max() < 1e-12


def test_weitzenbock_is_frame_covariant(rng):
    n = 5
    R = fa.random_curvature_tensor(rng, n)
    O, _ = np.linalg.qr(rng.standard_normal((n, n)))
    R_rot = np.einsum("abcd,ai,bj,ck,dl->ijkl", R, O, O, O, O)
    for q in range(n + 1):
        C = fa.compound_matrix(O, q)
        assert np.allclose(fa.weitzenbock_matrix(R_rot, q), C.T @ fa.weitzenbock_matrix(R, q) @ C, atol=1e-10)
        assert fa.r_q_min(fa.weitzenbock_matrix(R_rot, q)) == pytest.approx(fa.r_q_min(fa.weitzenbock_matrix(R, q)), abs=1e-10)


def test_weitzenbock_rejects_non_curvature_tensor(rng):
    with pytest.raises(ValueError):
        fa.weitzenbock_matrix(rng.standard_normal((3, 3, 3, 3)), 1)


def test_r_q_min_examples(rng):
    for n in range(2, 7):
        for q in range(1, n):
            assert fa.r_q_min(fa.weitzenbock_matrix(np.zeros((n,) * 4), q)) == 0.0
            hyp = fa.weitzenbock_matrix(fa.constant_curvature_tensor(n, -1.0), q)
            assert fa.r_q_min(hyp) == pytest.approx(-q * (n - q), abs=1e-12)
    R = fa.random_curvature_tensor(rng, 4)
    assert fa.r_q_min(fa.weitzenbock_matrix(R, 1)) == pytest.approx(np.linalg.eigvalsh(fa.ricci(R))[0], abs=1e-12)


def test_dump_csv_roundtrip(tmp_path, rng):
    M = rng.standard_normal((6, 6))
    fa.dump_csv(M, tmp_path / "m.csv")
    assert np.array_equal(np.loadtxt(tmp_path / "m.csv", delimiter=","), M)
