"""Exterior algebra of R^n as dense matrices on coefficient vectors.

A q-form is stored by its coefficients on the basis ``e^I = e^{i_1} ^ ... ^ e^{i_q}``
with ``I`` running over increasing index tuples in lexicographic order (0-based).
The basis is orthonormal, so the Euclidean norm of a coefficient vector is the
pointwise form norm in an orthonormal frame.

All endomorphisms are plain ``numpy`` arrays of shape ``(C(n,q), C(n,q))``;
functions taking matrices of tensors broadcast over leading batch axes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DIM = 6


@lru_cache(maxsize=None)
def basis(n: int, q: int) -> tuple[tuple[int, ...], ...]:
    """Increasing multi-indices of length ``q`` in ``range(n)``, lexicographic."""
    if q < 0 or q > n:
        return ()
    return tuple(itertools.combinations(range(n), q))


@lru_cache(maxsize=None)
def _index(n: int, q: int) -> dict[tuple[int, ...], int]:
    return {I: k for k, I in enumerate(basis(n, q))}


def dim(n: int, q: int) -> int:
    return math.comb(n, q) if 0 <= q <= n else 0


def _perm_sign(seq) -> int:
    sign = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class FormCoefficients:
    """A q-form on R^n given by its coefficient vector."""

    n: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (dim(self.n, self.degree),):
            raise ValueError(
                f"degree {self.degree} form on R^{self.n} needs {dim(self.n, self.degree)} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def basis_form(cls, n: int, indices) -> "FormCoefficients":
        I = tuple(sorted(indices))
        c = np.zeros(dim(n, len(I)))
        c[_index(n, len(I))[I]] = _perm_sign(indices)
        return cls(n, len(I), c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        if (self.n, self.degree) != (other.n, other.degree):
            raise ValueError("cannot add forms of different type")
        return FormCoefficients(self.n, self.degree, self.coeffs + other.coeffs)

    def __mul__(self, s):
        return FormCoefficients(self.n, self.degree, self.coeffs * s)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# elementary operators


@lru_cache(maxsize=None)
def _ext_basis(n: int, q: int) -> np.ndarray:
    """Stack ``(n, C(n,q+1), C(n,q))`` of the matrices of ``e^k ^`` on q-forms."""
    out = np.zeros((n, dim(n, q + 1), dim(n, q)))
    target = _index(n, q + 1)
    for col, I in enumerate(basis(n, q)):
        for k in range(n):
            if k in I:
                continue
            before = sum(1 for i in I if i < k)
            J = tuple(sorted(I + (k,)))
            out[k, target[J], col] = (-1) ** before
    out.setflags(write=False)
    return out


def exterior_matrix(v, q: int) -> np.ndarray:
    """Matrix of ``v ^ .`` from q-forms to (q+1)-forms."""
    v = np.asarray(v, dtype=float)
    return np.einsum("...k,kij->...ij", v, _ext_basis(v.shape[-1], q))


def interior_matrix(v, q: int) -> np.ndarray:
    """Matrix of ``v -| .`` from q-forms to (q-1)-forms (adjoint of wedging)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    if q < 1:
        return np.zeros(v.shape[:-1] + (0, dim(n, q)))
    return np.swapaxes(exterior_matrix(v, q - 1), -1, -2)


@lru_cache(maxsize=None)
def elementary_derivations(n: int, q: int) -> np.ndarray:
    """``E[a, b] = e^a ^ (e_b -| .)`` on q-forms, shape ``(n, n, C, C)``."""
    C = dim(n, q)
    if q == 0:
        out = np.zeros((n, n, C, C))
    else:
        ext = _ext_basis(n, q - 1)
        out = np.einsum("aij,bkj->abik", ext, ext)
    out.setflags(write=False)
    return out


def wedge(alpha: FormCoefficients, beta: FormCoefficients) -> FormCoefficients:
    if alpha.n != beta.n:
        raise ValueError("forms live on different spaces")
    n, p, q = alpha.n, alpha.degree, beta.degree
    if p + q > n:
        raise ValueError(f"wedge of degrees {p} and {q} exceeds dimension {n}")
    out = np.zeros(dim(n, p + q))
    target = _index(n, p + q)
    for a, I in zip(alpha.coeffs, basis(n, p)):
        if a == 0.0:
            continue
        for b, J in zip(beta.coeffs, basis(n, q)):
            if b == 0.0 or set(I) & set(J):
                continue
            out[target[tuple(sorted(I + J))]] += _perm_sign(I + J) * a * b
    return FormCoefficients(n, p + q, out)


def interior(v, omega: FormCoefficients) -> FormCoefficients:
    if omega.degree < 1:
        raise ValueError("interior product needs degree >= 1")
    v = np.asarray(v, dtype=float)
    if v.shape != (omega.n,):
        raise ValueError("vector and form dimension differ")
    return FormCoefficients(omega.n, omega.degree - 1, interior_matrix(v, omega.degree) @ omega.coeffs)


@lru_cache(maxsize=None)
def hodge_star_matrix(n: int, q: int) -> np.ndarray:
    """Hodge star from q-forms to (n-q)-forms, orientation ``e^{1...n}``."""
    out = np.zeros((dim(n, n - q), dim(n, q)))
    target = _index(n, n - q)
    for col, I in enumerate(basis(n, q)):
        Ic = tuple(i for i in range(n) if i not in I)
        out[target[Ic], col] = _perm_sign(I + Ic)
    out.setflags(write=False)
    return out


def hodge_star(omega: FormCoefficients) -> FormCoefficients:
    return FormCoefficients(omega.n, omega.n - omega.degree, hodge_star_matrix(omega.n, omega.degree) @ omega.coeffs)


def compound_matrix(M, q: int) -> np.ndarray:
    """q-th compound: entries ``det(M[I, J])`` for q-subsets I of rows, J of columns.

    For a frame ``u`` whose columns are vectors, ``compound_matrix(u, q).T @ w``
    evaluates the form with coefficients ``w`` on the frame vectors.
    """
    M = np.asarray(M, dtype=float)
    n, m = M.shape[-2:]
    rows, cols = basis(n, q), basis(m, q)
    batch = M.shape[:-2]
    if q == 0:
        return np.ones(batch + (1, 1))
    if not rows or not cols:
        return np.zeros(batch + (len(rows), len(cols)))
    ri = np.array(rows)
    ci = np.array(cols)
    sub = M[..., ri[:, None, :, None], ci[None, :, None, :]]
    return np.linalg.det(sub)


# ---------------------------------------------------------------------------
# boundary and curvature endomorphisms


def projections(nu, q: int, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Tangential and normal projections ``(nu -| nu ^, nu ^ nu -|)`` on q-forms."""
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > tol:
        raise ValueError(f"normal must be a unit vector, |nu| = {np.linalg.norm(nu)!r}")
    n = nu.shape[-1]
    tan = interior_matrix(nu, q + 1) @ exterior_matrix(nu, q) if q < n else np.zeros((1, 1))
    nor = exterior_matrix(nu, q - 1) @ interior_matrix(nu, q) if q > 0 else np.zeros((1, 1))
    return tan, nor


def normal_projection(nu, q: int) -> np.ndarray:
    """Batched ``nu ^ nu -|`` on q-forms for unit vectors of shape ``(..., n)``."""
    nu = np.asarray(nu, dtype=float)
    return np.einsum("...a,...b,abij->...ij", nu, nu, elementary_derivations(nu.shape[-1], q))


def derivation_matrix(A, q: int) -> np.ndarray:
    """Extension of an n x n matrix to q-forms as a derivation.

    ``(D omega)(X_1..X_q) = sum_i omega(X_1.., A X_i, ..X_q)`` for symmetric ``A``.
    """
    A = np.asarray(A, dtype=float)
    return np.einsum("...ab,abij->...ij", A, elementary_derivations(A.shape[-1], q))


def _check_symmetric(A, what, tol=1e-10):
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    err = float(np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0))
    if err > tol * scale:
        raise ValueError(f"{what} is not symmetric (asymmetry {err:.3g})")
    return A


def shape_matrix(A, q: int, nu=None) -> np.ndarray:
    """Shape operator acting on q-forms.

    Without ``nu`` this is the derivation extension of ``A``. With the unit
    normal ``nu`` (``A nu = 0``) it is compressed to tangential forms,
    ``Pi_tan D(A) Pi_tan``, so it annihilates normal forms and has eigenvalue
    ``sum_{i in I} rho_i`` on ``e^I`` in a principal frame.
    """
    A = _check_symmetric(A, "shape operator")
    D = derivation_matrix(A, q)
    if nu is None:
        return D
    nu = np.asarray(nu, dtype=float)
    resid = float(np.max(np.abs(A @ nu)))
    if resid > 1e-9 * max(1.0, float(np.max(np.abs(A)))):
        raise ValueError(f"shape operator must annihilate the normal (|A nu| = {resid:.3g})")
    tan = np.eye(dim(A.shape[-1], q)) - normal_projection(nu, q)
    return tan @ D @ tan


def normal_shape_matrix(A, q: int) -> np.ndarray:
    """``sum_j rho_j e_j -| e_j ^`` on q-forms, i.e. ``tr(A) - A_q``.

    This is the shape term acting on the normal part of a form written as
    ``nu ^ omega_nor``; it is conjugate to ``A_{m-q}`` by the Hodge star of the
    m-dimensional boundary.
    """
    A = _check_symmetric(A, "shape operator")
    m = A.shape[-1]
    tr = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
    return tr * np.eye(dim(m, q)) - derivation_matrix(A, q)


def curvature_symmetry_defect(R) -> float:
    """Largest violation of the algebraic curvature identities."""
    R = np.asarray(R, dtype=float)
    d = [
        R + np.swapaxes(R, -4, -3),
        R + np.swapaxes(R, -2, -1),
        R - np.moveaxis(R, (-2, -1), (-4, -3)),
        R + np.moveaxis(R, (-4, -3, -2), (-3, -2, -4)) + np.moveaxis(R, (-4, -3, -2), (-2, -4, -3)),
    ]
    return max(float(np.max(np.abs(x), initial=0.0)) for x in d)


def weitzenbock_matrix(R, q: int, check: bool = True) -> np.ndarray:
    """Weitzenbock curvature term on q-forms from ``R[i,j,k,l] = R_{ijkl}``.

    Convention: ``R_{ijij}`` is the sectional curvature of the plane ``e_i, e_j``.
    The operator is ``-sum R_{abcd} (e^a ^ e_b -|)(e^c ^ e_d -|)``, which is Ricci
    on 1-forms, ``q(n-q)c`` on constant curvature ``c`` and commutes with the
    Hodge star.
    """
    R = np.asarray(R, dtype=float)
    if check:
        scale = max(1.0, float(np.max(np.abs(R), initial=0.0)))
        defect = curvature_symmetry_defect(R)
        if defect > 1e-10 * scale:
            raise ValueError(f"tensor violates curvature symmetries (defect {defect:.3g})")
    E = elementary_derivations(R.shape[-1], q)
    K = np.einsum("...abcd,cdij->...abij", R, E)
    return -np.einsum("abij,...abjk->...ik", E, K)


def ricci(R) -> np.ndarray:
    return np.einsum("...babd->...ad", np.asarray(R, dtype=float))


def r_q_min(Rq) -> float:
    """Least eigenvalue of a symmetric endomorphism."""
    Rq = np.asarray(Rq, dtype=float)
    if Rq.shape[-1] == 0:
        return 0.0
    return np.linalg.eigvalsh(Rq)[..., 0]


def constant_curvature_tensor(n: int, c: float) -> np.ndarray:
    d = np.eye(n)
    return c * (np.einsum("ik,jl->ijkl", d, d) - np.einsum("il,jk->ijkl", d, d))


def kulkarni_nomizu(h, k) -> np.ndarray:
    return (
        np.einsum("ik,jl->ijkl", h, k)
        + np.einsum("jl,ik->ijkl", h, k)
        - np.einsum("il,jk->ijkl", h, k)
        - np.einsum("jk,il->ijkl", h, k)
    )


def random_curvature_tensor(rng: np.random.Generator, n: int, terms: int = 3) -> np.ndarray:
    """Random algebraic curvature tensor (sum of Kulkarni-Nomizu products)."""
    R = np.zeros((n, n, n, n))
    for _ in range(terms):
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        R += kulkarni_nomizu(a + a.T, b + b.T) / 4
    return R


def dump_csv(matrix, path) -> None:
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
