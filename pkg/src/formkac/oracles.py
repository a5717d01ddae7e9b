"""Deterministic reference computations.

* image-method heat kernels on the half-line and their action on profiles,
* a Crank-Nicolson solver for ``u_t = u''/2`` on a half-line grid,
* finite-difference exterior derivative, codifferential and curvature,
* quadrature evaluation of the integral identity for ``<d w, grad f ^ w>`` and
  of the distance-function estimate on hyperbolic space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from . import form_algebra as fa
from .errors import DomainError, PreconditionError
from .fields import FormField
from .geometry import Ball, HalfSpace, Hyperbolic, ManifoldModel

KINDS = ("neumann", "dirichlet")


def _kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return k


# ---------------------------------------------------------------------------
# image method
# ---------------------------------------------------------------------------
def gaussian_kernel(t, z):
    """Density of N(0, t) at ``z``."""
    return np.exp(-np.asarray(z, dtype=float) ** 2 / (2 * t)) / math.sqrt(2 * math.pi * t)


def halfspace_kernel(kind: str, t: float, x_n, y_n):
    """``phi_t(x - y) +- phi_t(x + y)``: Neumann (+) or Dirichlet (-) kernel."""
    kind = _kind(kind)
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    x_n, y_n = np.asarray(x_n, dtype=float), np.asarray(y_n, dtype=float)
    if np.any(x_n < 0) or np.any(y_n < 0):
        raise ValueError("half-line arguments must be >= 0")
    sign = 1.0 if kind == "neumann" else -1.0
    return gaussian_kernel(t, x_n - y_n) + sign * gaussian_kernel(t, x_n + y_n)


def halfspace_evolve(kind: str, t: float, x_n: float, profile: Callable[[float], float]) -> float:
    """``int_0^inf p_t(x_n, y) profile(y) dy`` by adaptive quadrature."""
    kind = _kind(kind)
    if t == 0:
        return float(profile(x_n))
    s = math.sqrt(t)
    lo, hi = max(0.0, x_n - 12 * s), x_n + 12 * s
    pts = [p for p in (x_n,) if lo < p < hi]

    def integrand(y):
        return float(halfspace_kernel(kind, t, x_n, y)) * float(profile(y))

    val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=400)
    # the image part reaches beyond x_n + 12 s only through phi_t(x + y), negligible
    tail, _ = integrate.quad(integrand, hi, np.inf, epsabs=1e-14, limit=200)
    return val + tail


def halfspace_form_oracle(omega: FormField, t: float, x) -> np.ndarray:
    """Absolute heat evolution of a half-space form whose chart coefficients depend on ``x_n`` only.

    Components containing ``dx^n`` evolve by the Dirichlet kernel, the others by
    the Neumann kernel.
    """
    x = np.asarray(x, dtype=float)
    n, q = omega.n, omega.degree
    if omega.basis != "chart":
        raise ValueError("half-space oracle expects chart coefficients")
    if x.shape != (n,) or x[-1] < 0:
        raise DomainError(f"need a point of the closed half-space in dimension {n}")
    out = np.zeros(fa.dim(n, q))
    for i, I in enumerate(fa.basis(n, q)):
        kind = "dirichlet" if (n - 1) in I else "neumann"

        def profile(y, i=i):
            p = x.copy()
            p[-1] = y
            return omega(p)[0, i]

        out[i] = halfspace_evolve(kind, t, float(x[-1]), profile)
    return out


# ---------------------------------------------------------------------------
# 1-D finite differences
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GridField:
    """Values on a uniform half-line grid with a boundary condition at ``grid[0]``.

    ``bc`` is ``"neumann"``, ``"dirichlet"`` or ``("robin", c)`` meaning
    ``u'(0) = c u(0)``. The far end is reflecting.
    """

    grid: np.ndarray
    values: np.ndarray
    bc: object = "neumann"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if g.ndim != 1 or len(g) < 3 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing with at least 3 nodes")
        if v.shape[0] != len(g):
            raise ValueError("values must match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if not np.allclose(np.diff(g), g[1] - g[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")
        self.robin_coefficient

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def robin_coefficient(self) -> float | None:
        """``c`` for Robin/Neumann (Neumann is c = 0), ``None`` for Dirichlet."""
        bc = self.bc
        if isinstance(bc, str):
            b = bc.lower()
            if b == "neumann":
                return 0.0
            if b == "dirichlet":
                return None
        elif isinstance(bc, (tuple, list)) and len(bc) == 2 and str(bc[0]).lower() == "robin":
            return float(bc[1])
        raise ValueError(f"unknown boundary condition {bc!r}")

    def mass(self) -> float:
        """Trapezoidal integral, the quantity conserved by the Neumann scheme."""
        w = np.full(len(self.grid), self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return float(w @ self.values)

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.values)


def _cn_operator(N, dx, c):
    """Matrix of ``u''/2`` with ghost nodes; ``c`` Robin coefficient or None (Dirichlet)."""
    main = np.full(N, -2.0)
    upper = np.ones(N - 1)
    lower = np.ones(N - 1)
    lower[-1] = 2.0  # reflecting far end
    if c is None:
        main[0], upper[0] = 0.0, 0.0
    else:
        upper[0] = 2.0
        main[0] = -2.0 - 2.0 * dx * c
    return sparse.diags([lower, main, upper], [-1, 0, 1], format="csc") * (0.5 / dx**2)


def pde_solve_1d(field: GridField, t: float, steps: int) -> GridField:
    """Crank-Nicolson evolution of ``u_t = u''/2`` up to time ``t`` in ``steps`` steps."""
    if t < 0 or steps < 1:
        raise ValueError("need t >= 0 and steps >= 1")
    dt = t / steps
    dx = field.dx
    if dt > dx * dx:
        raise ValueError(f"CFL violated: dt = {dt:.3g} > dx^2 = {dx * dx:.3g}")
    c = field.robin_coefficient
    N = len(field.grid)
    L = _cn_operator(N, dx, c)
    eye = sparse.identity(N, format="csc")
    lhs = splu((eye - 0.5 * dt * L).tocsc())
    rhs = (eye + 0.5 * dt * L).tocsr()
    u = field.values.astype(float).copy()
    if c is None:
        u[0] = 0.0
    for _ in range(steps):
        u = lhs.solve(rhs @ u)
    return GridField(field.grid, u, field.bc)


# ---------------------------------------------------------------------------
# numerical exterior calculus
# ---------------------------------------------------------------------------
def chart_coefficients(model, omega: FormField, x) -> np.ndarray:
    """Coefficients of ``omega`` on ``dx^I``."""
    c = omega(x)
    if omega.basis == "chart":
        return c
    Einv = np.linalg.inv(model.frame(x))
    return np.einsum("...ji,...j->...i", fa.compound_matrix(Einv, omega.degree), c)


def frame_coefficients(model, omega: FormField, x) -> np.ndarray:
    """Coefficients of ``omega`` on the canonical orthonormal coframe."""
    c = omega(x)
    if omega.basis == "frame":
        return c
    return np.einsum("...ji,...j->...i", fa.compound_matrix(model.frame(x), omega.degree), c)


def _stencil(model, x, k, h):
    e = np.zeros(model.dim)
    e[k] = h
    xp, xm = x + e, x - e
    if not (np.all(model.chart_valid(xp)) and np.all(model.chart_valid(xm))):
        raise DomainError("finite-difference stencil leaves the chart")
    return xp, xm


def exterior_derivative_fd(model, omega: FormField, x, h: float = 1e-4) -> np.ndarray:
    """Orthonormal-frame coefficients of ``d omega`` by central differences."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, q = model.dim, omega.degree
    if omega.n != n:
        raise ValueError("field and model dimensions differ")
    if q == n:
        return np.zeros((len(x), 0))
    dc = np.zeros((len(x), fa.dim(n, q + 1)))
    for k in range(n):
        xp, xm = _stencil(model, x, k, h)
        Dk = (chart_coefficients(model, omega, xp) - chart_coefficients(model, omega, xm)) / (2 * h)
        e = np.zeros(n)
        e[k] = 1.0
        dc += Dk @ fa.exterior_matrix(e, q).T
    return np.einsum("...ji,...j->...i", fa.compound_matrix(model.frame(x), q + 1), dc)


def codifferential_sign(n: int, q: int) -> int:
    """``d* = sign * (star d star)`` on q-forms in dimension n."""
    return (-1) ** (n * (q + 1) + 1)


def codifferential_fd(model, omega: FormField, x, h: float = 1e-4) -> np.ndarray:
    """Orthonormal-frame coefficients of ``d* omega`` (the L2 adjoint of d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, q = model.dim, omega.degree
    if q == 0:
        return np.zeros((len(x), 0))
    S = fa.hodge_star_matrix(n, q)
    star = FormField(n, n - q, lambda y: frame_coefficients(model, omega, y) @ S.T, "frame", "star")
    d_star = exterior_derivative_fd(model, star, x, h)
    return codifferential_sign(n, q) * d_star @ fa.hodge_star_matrix(n, n - q + 1).T


def curvature_fd(model, x, h: float = 1e-5) -> np.ndarray:
    """Curvature in the canonical orthonormal frame from finite differences of the Christoffels.

    Convention ``R_abcd = <R(e_a, e_b) e_d, e_c>`` so that ``R_abab`` is the
    sectional curvature.
    """
    x = np.asarray(x, dtype=float)
    n = model.dim
    G = model.christoffel(x)
    dG = np.zeros((n,) + G.shape)  # dG[i, l, j, k] = d_i Gamma^l_jk
    for i in range(n):
        xp, xm = _stencil(model, x[None], i, h)
        dG[i] = (model.christoffel(xp[0]) - model.christoffel(xm[0])) / (2 * h)
    # R^l_{kij}: R(d_i, d_j) d_k = R^l_{kij} d_l
    R = (
        np.einsum("iljk->lkij", dG)
        - np.einsum("jlik->lkij", dG)
        + np.einsum("lim,mjk->lkij", G, G)
        - np.einsum("ljm,mik->lkij", G, G)
    )
    g = model.metric(x)
    E = model.frame(x)
    # R_abcd = g(R(e_a, e_b) e_d, e_c)
    return np.einsum("lkij,lm,ia,jb,kd,mc->abcd", R, g, E, E, E, E)


# ---------------------------------------------------------------------------
# scalar test functions and quadrature
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ScalarField:
    """Function with analytic chart gradient and chart second derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


def quadratic_function(Q, b, c=0.0) -> ScalarField:
    """``f(x) = x^T Q x / 2 + b . x + c`` (Q symmetrized)."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    b = np.asarray(b, dtype=float)
    return ScalarField(
        lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + x @ b + c,
        lambda x: x @ Q + b,
        lambda x: np.broadcast_to(Q, x.shape[:-1] + Q.shape),
        "quadratic",
    )


def covariant_data(model, f: ScalarField, x):
    """Orthonormal-frame gradient, covariant Hessian and ``Delta_0 f = -tr Hess f``."""
    E = model.frame(x)
    dfc = f.gradient(x)
    Hc = f.hessian(x) - np.einsum("...kij,...k->...ij", model.christoffel(x), dfc)
    grad = np.einsum("...ia,...i->...a", E, dfc)
    H = np.einsum("...ia,...ij,...jb->...ab", E, Hc, E)
    return grad, H, -np.trace(H, axis1=-2, axis2=-1)


def gauss_legendre(lo, hi, cells=4, order=8):
    """Composite Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    z, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, cells + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * z + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel()


def tensor_rule(rules):
    """Tensor product of 1-D rules; returns points ``(m, d)`` and weights ``(m,)``."""
    nodes = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    weights = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in nodes], axis=-1)
    return pts, np.prod(np.stack([g.ravel() for g in weights], axis=-1), axis=-1)


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre: ``cells`` per axis, ``order`` nodes per cell."""

    cells: int = 3
    order: int = 8
    chunk: int = 40000

    def rule(self, lo, hi, scale=1):
        return gauss_legendre(lo, hi, self.cells * scale, self.order)


def _support(omega: FormField):
    p = omega.params
    if "center" not in p or "radius" not in p:
        raise PreconditionError("the form must declare a compact support (center, radius)")
    c, s = np.asarray(p["center"], dtype=float), float(p["radius"])
    if not (s > 0 and np.all(np.isfinite(c))):
        raise PreconditionError("support radius must be positive and finite")
    return c, s


def _check_support_in_chart(model, c, s, h):
    n = model.dim
    pts = [c]
    for k in range(n):
        for sign in (-1, 1):
            p = c.copy()
            p[k] += sign * (s + 2 * h)
            pts.append(p)
    if not np.all(model.chart_valid(np.array(pts))):
        raise PreconditionError("support of the form touches the chart edge")


def _ball_rules(model: Ball, quad: Quadrature):
    n, r0 = model.dim, model.r0
    r, wr = quad.rule(0, r0)
    if n == 2:
        ph, wp = quad.rule(0, 2 * np.pi, 2)
        P, W = tensor_rule([(r, wr), (ph, wp)])
        vol = P[:, 0] * np.stack([np.cos(P[:, 1]), np.sin(P[:, 1])], -1)
        bdry = r0 * np.stack([np.cos(ph), np.sin(ph)], -1)
        return vol, W * P[:, 0], bdry, wp * r0
    if n == 3:
        th, wt = quad.rule(0, np.pi)
        ph, wp = quad.rule(0, 2 * np.pi, 2)
        P, W = tensor_rule([(r, wr), (th, wt), (ph, wp)])
        u = np.stack([np.sin(P[:, 1]) * np.cos(P[:, 2]), np.sin(P[:, 1]) * np.sin(P[:, 2]), np.cos(P[:, 1])], -1)
        S, WS = tensor_rule([(th, wt), (ph, wp)])
        us = np.stack([np.sin(S[:, 0]) * np.cos(S[:, 1]), np.sin(S[:, 0]) * np.sin(S[:, 1]), np.cos(S[:, 0])], -1)
        return P[:, :1] * u, W * P[:, 0] ** 2 * np.sin(P[:, 1]), r0 * us, WS * r0**2 * np.sin(S[:, 0])
    raise ValueError("ball quadrature is implemented for n = 2, 3")


def _box_rules(model, c, s, quad):
    n = model.dim
    lo, hi = c - s, c + s
    bdry = bw = None
    if isinstance(model, HalfSpace):
        if hi[-1] <= 0:
            raise PreconditionError("support of the form misses the half-space")
        lo = lo.copy()
        if lo[-1] < 0:
            lo[-1] = 0.0
            if n > 1:
                bdry, bw = tensor_rule([quad.rule(lo[k], hi[k]) for k in range(n - 1)])
                bdry = np.concatenate([bdry, np.zeros((len(bdry), 1))], axis=1)
            else:
                bdry, bw = np.zeros((1, 1)), np.ones(1)
    pts, w = tensor_rule([quad.rule(lo[k], hi[k]) for k in range(n)])
    w = w * model.lam(pts) ** n
    if bdry is not None:
        bw = bw * model.lam(bdry) ** (n - 1)
    return pts, w, bdry, bw


def _inward_normal(model, p):
    """Orthonormal-frame components of the inward unit normal at boundary points."""
    if isinstance(model, Ball):
        return -p / np.linalg.norm(p, axis=-1, keepdims=True)
    nu = np.zeros_like(p)
    nu[:, -1] = 1.0
    return nu


def _ext(v, q):
    return np.einsum("...i,ijk->...jk", v, fa._ext_basis(v.shape[-1], q))


@dataclass(frozen=True)
class IntforResult:
    lhs: float
    rhs: float
    residual: float
    volume_terms: tuple = ()
    boundary_terms: tuple = ()
    n_nodes: int = 0


def intfor_check(model: ManifoldModel, f: ScalarField, omega: FormField, quad: Quadrature = Quadrature(), h: float = 1e-3) -> IntforResult:
    """Both sides of the integral identity for ``<d w, df ^ w> + <d* w, grad f _| w>``.

    lhs = int <d w, grad f ^ w> + <d* w, grad f _| w>
    rhs = int <Hess f . w, w> + |w|^2 Delta_0 f / 2
          + int_bdry <grad f _| w, nu _| w> - int_bdry |w|^2 <grad f, nu> / 2
    with ``nu`` the inward normal and ``Hess f`` acting as a derivation.
    Both boundary terms follow from the divergence theorem with the inward normal.
    Supported domains: the flat ball (n = 2, 3), the half-space and models without boundary.
    """
    n, q = model.dim, omega.degree
    if omega.n != n:
        raise ValueError("field and model dimensions differ")
    c, s = _support(omega)
    _check_support_in_chart(model, c, s, h)
    if isinstance(model, Ball):
        pts, w, bdry, bw = _ball_rules(model, quad)
    elif isinstance(model, HalfSpace) or not model.has_boundary:
        pts, w, bdry, bw = _box_rules(model, c, s, quad)
    else:
        raise ValueError(f"no quadrature for model {model.name!r}")
    keep = np.sum((pts - c) ** 2, axis=-1) < s * s
    pts, w = pts[keep], w[keep]

    vol = np.zeros(4)
    for lo in range(0, len(pts), quad.chunk):
        x, wx = pts[lo : lo + quad.chunk], w[lo : lo + quad.chunk]
        a = frame_coefficients(model, omega, x)
        grad, H, lap = covariant_data(model, f, x)
        da = exterior_derivative_fd(model, omega, x, h)
        term1 = np.einsum("bi,bij,bj->b", da, _ext(grad, q), a) if q < n else 0.0
        term2 = np.einsum("bi,bji,bj->b", codifferential_fd(model, omega, x, h), _ext(grad, q - 1), a) if q > 0 else 0.0
        hess = np.einsum("bi,bij,bj->b", a, fa.derivation_matrix(H, q), a) if q > 0 else 0.0
        vol += [np.sum(wx * term1), np.sum(wx * term2), np.sum(wx * hess), np.sum(wx * 0.5 * np.sum(a * a, -1) * lap)]

    bd = np.zeros(2)
    if bdry is not None:
        x = bdry
        a = frame_coefficients(model, omega, x)
        grad, _, _ = covariant_data(model, f, x)
        nu = _inward_normal(model, x)
        if q > 0:
            ig = np.einsum("bji,bj->bi", _ext(grad, q - 1), a)
            inu = np.einsum("bji,bj->bi", _ext(nu, q - 1), a)
            bd[0] = np.sum(bw * np.sum(ig * inu, -1))
        bd[1] = np.sum(bw * 0.5 * np.sum(a * a, -1) * np.sum(grad * nu, -1))
    lhs = vol[0] + vol[1]
    rhs = vol[2] + vol[3] + bd[0] - bd[1]
    return IntforResult(float(lhs), float(rhs), float(abs(lhs - rhs)), tuple(vol.tolist()), tuple(bd.tolist()), int(len(pts)))


# ---------------------------------------------------------------------------
# distance-function estimate on hyperbolic space
# ---------------------------------------------------------------------------
def hyperbolic_distance(x, y):
    """Distance in the upper half-space chart of curvature -1."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    u = 1 + np.sum((x - y) ** 2, axis=-1) / (2 * x[..., -1] * y[..., -1])
    return np.arccosh(np.maximum(u, 1.0))


def distance_function(center) -> ScalarField:
    """``d_center`` on hyperbolic space with its chart gradient and chart second derivatives."""
    c = np.asarray(center, dtype=float)

    def grad(x):
        y, yc = x[..., -1:], c[-1]
        diff = x - c
        r2 = np.sum(diff * diff, axis=-1, keepdims=True)
        u = 1 + r2 / (2 * y * yc)
        du = diff / (y * yc)
        du[..., -1:] -= r2 / (2 * y * y * yc)
        return du / np.sqrt(u * u - 1)

    def hess(x, h=1e-5):
        out = np.zeros(x.shape + (x.shape[-1],))
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = h
            out[..., k, :] = (grad(x + e) - grad(x - e)) / (2 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    return ScalarField(lambda x: hyperbolic_distance(x, c), grad, hess, "distance")


def distance_hessian_frame(x, center):
    """Orthonormal-frame gradient and Hessian of ``d_center``: ``coth d (I - grad grad^T)``."""
    d = hyperbolic_distance(x, center)
    g = distance_function(center).gradient(x) * x[..., -1:]
    n = x.shape[-1]
    H = (1 / np.tanh(d))[..., None, None] * (np.eye(n) - g[..., :, None] * g[..., None, :])
    return d, g, H


def dx_constant(n: int, p: int, kappa: float) -> float:
    """Limit constant ``((n - p - 1) sqrt(kappa) - p) / 2``."""
    return 0.5 * ((n - p - 1) * math.sqrt(kappa) - p)


def dx_intermediate(n: int, p: int, kappa: float, d):
    """``((n - p - 1) sqrt(kappa) coth(sqrt(kappa) d) - p coth d) / 2``."""
    d = np.asarray(d, dtype=float)
    sk = math.sqrt(kappa)
    return 0.5 * ((n - p - 1) * sk / np.tanh(sk * d) - p / np.tanh(d))


@dataclass(frozen=True)
class DXResult:
    distance: float
    center: tuple
    lhs: float
    mid: float
    rhs: float
    norm2: float
    constant: float
    identity_residual: float
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.lhs >= abs(self.mid) >= self.rhs

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def intermediate_constant(self) -> float:
        return self.rhs / self.norm2 if self.norm2 > 0 else float("nan")

    @property
    def relative_gap(self) -> float:
        """Relative distance of the intermediate constant from the limit constant."""
        if self.norm2 == 0:
            return 0.0
        return abs(self.intermediate_constant - self.constant) / abs(self.constant)


def dx_inequality_eval(model: Hyperbolic, p: int, kappa: float, omega: FormField, distances, quad: Quadrature = Quadrature(3, 6), h: float = 1e-4):
    """Evaluate the distance-function estimate for ``omega`` seen from centers at the given distances.

    The support of ``omega`` is the chart ball B(c, s), i.e. a geodesic ball; each
    center sits on the vertical geodesic through it at hyperbolic distance ``d``
    from the support. Per center:

    lhs = |w|_2 (|d w|_2 + |d* w|_2)
    mid = int <Hess d . w, w> + |w|^2 Delta_0 d / 2
    rhs = int ((n-p-1) sqrt(k) coth(sqrt(k) d) - p coth d) |w|^2 / 2
    """
    if not isinstance(model, Hyperbolic) or model.has_boundary:
        raise PreconditionError("the estimate is evaluated on hyperbolic space")
    if not 0 < kappa <= 1:
        raise PreconditionError(f"hyperbolic space is not {kappa}-pinched: need 0 < kappa <= 1")
    n = model.dim
    if omega.n != n or omega.degree != p:
        raise ValueError(f"need a {p}-form in dimension {n}")
    c, s = _support(omega)
    _check_support_in_chart(model, c, s, h)
    distances = np.atleast_1d(np.asarray(distances, dtype=float))
    if np.any(distances <= 0):
        raise PreconditionError("centers must lie at positive distance from the support")

    pts, w, _, _ = _box_rules(model, c, s, quad)
    keep = np.sum((pts - c) ** 2, axis=-1) < s * s
    pts, w = pts[keep], w[keep]
    a = frame_coefficients(model, omega, pts)
    da = exterior_derivative_fd(model, omega, pts, h)
    ca = codifferential_fd(model, omega, pts, h) if p > 0 else np.zeros((len(pts), 0))
    norm2 = float(np.sum(w * np.sum(a * a, -1)))
    lhs = math.sqrt(norm2) * (math.sqrt(np.sum(w * np.sum(da * da, -1))) + math.sqrt(np.sum(w * np.sum(ca * ca, -1))))

    h0 = math.sqrt(c[-1] ** 2 - s**2)
    rho = 0.5 * math.log((c[-1] + s) / (c[-1] - s))
    out = []
    for d in distances:
        center = c.copy()
        center[-1] = h0 * math.exp(d + rho)
        dist, g, H = distance_hessian_frame(pts, center)
        lap = -np.trace(H, axis1=-2, axis2=-1)
        hess = np.einsum("bi,bij,bj->b", a, fa.derivation_matrix(H, p), a) if p > 0 else 0.0
        mid = float(np.sum(w * (hess + 0.5 * np.sum(a * a, -1) * lap)))
        cs = np.einsum("bi,bij,bj->b", da, _ext(g, p), a) if p < n else 0.0
        if p > 0:
            cs = cs + np.einsum("bi,bji,bj->b", ca, _ext(g, p - 1), a)
        cs_int = float(np.sum(w * cs))
        rhs = float(np.sum(w * dx_intermediate(n, p, kappa, dist) * np.sum(a * a, -1)))
        out.append(
            DXResult(
                float(d),
                tuple(center.tolist()),
                float(lhs),
                mid,
                rhs,
                norm2,
                dx_constant(n, p, kappa),
                abs(cs_int - mid),
                {"min_distance": float(dist[np.sum(a * a, -1) > 0].min()) if norm2 > 0 else float(d)},
            )
        )
    return out


def write_csv(path, header, rows):
    """Plain CSV table."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
