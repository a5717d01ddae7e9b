"""Catalog of model manifolds, possibly with boundary, in a single global chart.

Every model exposes vectorized chart-level callables. Points are arrays of shape
``(B, n)``; frames are ``(B, n, n)`` with columns the frame vectors in chart
components. The lower-level methods do not validate their input (the walker
needs them slightly outside the manifold); the module-level functions
``metric_at``, ``curvature_at``, ``boundary_data_at`` and friends do.

Conventions: the shape operator is ``A X = -nabla_X nu`` with ``nu`` the inward
unit normal, so convex boundaries have positive principal curvatures, and the
curvature tensor satisfies ``R_{ijij} = K(e_i, e_j)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np

from . import form_algebra as fa
from .errors import DomainError, PreconditionError

BOUNDARY_TOL = 1e-9


def _rows(x, n):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
    return x, single


def _unit(v, axis=-1):
    nrm = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(nrm > 0, nrm, 1.0)


@dataclass(frozen=True)
class BoundaryData:
    """Inward normal and shape operator at a boundary point, in chart components."""

    normal: np.ndarray
    shape_operator: np.ndarray
    principal_curvatures: np.ndarray


@dataclass(frozen=True)
class ManifoldModel:
    """Base class; concrete models are conformally flat charts ``h = lam(x)^2 I``."""

    dim: int

    name: ClassVar[str] = ""
    has_boundary: ClassVar[bool] = False
    sectional: ClassVar[float] = 0.0
    flat_chart: ClassVar[bool] = False
    min_dim: ClassVar[int] = 2
    max_dim: ClassVar[int] = fa.MAX_DIM
    param_ranges: ClassVar[dict] = {}

    def __post_init__(self):
        if not (self.min_dim <= self.dim <= self.max_dim):
            raise ValueError(f"model {self.name!r} supports dim {self.min_dim}..{self.max_dim}, got {self.dim}")
        for key, (lo, hi) in self.param_ranges.items():
            val = getattr(self, key)
            if val is None:
                continue
            if not (lo < val < hi):
                raise ValueError(f"parameter {key}={val!r} of {self.name!r} outside ({lo}, {hi})")

    # -- description -------------------------------------------------------
    @property
    def params(self) -> dict:
        d = asdict(self)
        d.pop("dim")
        return d

    @property
    def chart_domain(self) -> str:
        return "R^n"

    @property
    def scale(self) -> float:
        return 1.0

    @property
    def totally_geodesic(self) -> bool:
        return False

    def describe(self) -> dict:
        return {
            "model": self.name,
            "dim": self.dim,
            "params": self.params,
            "chart_domain": self.chart_domain,
            "has_boundary": self.has_boundary,
            "sectional_curvature": self.sectional,
        }

    # -- conformal factor --------------------------------------------------
    def lam(self, x):
        return np.ones(x.shape[:-1])

    def grad_log_lam(self, x):
        return np.zeros_like(x)

    def chart_valid(self, x):
        return np.all(np.isfinite(x), axis=-1)

    # -- metric and connection --------------------------------------------
    def metric(self, x):
        lam = self.lam(x)
        return (lam**2)[..., None, None] * np.eye(self.dim)

    def frame(self, x):
        lam = self.lam(x)
        return np.eye(self.dim) / lam[..., None, None]

    def christoffel(self, x):
        """``G[..., k, i, j] = Gamma^k_{ij}``."""
        g = self.grad_log_lam(x)
        eye = np.eye(self.dim)
        return (
            np.einsum("ki,...j->...kij", eye, g)
            + np.einsum("kj,...i->...kij", eye, g)
            - np.einsum("ij,...k->...kij", eye, g)
        )

    def gamma(self, x, u, w):
        """``Gamma^k_{ij} u^i w^j``; ``w`` may carry a trailing column axis."""
        g = self.grad_log_lam(x)
        if w.ndim == u.ndim + 1:
            gu = np.sum(g * u, axis=-1)[..., None, None]
            gw = np.einsum("...k,...ka->...a", g, w)[..., None, :]
            uw = np.einsum("...k,...ka->...a", u, w)[..., None, :]
            return u[..., :, None] * gw + w * gu - g[..., :, None] * uw
        gu = np.sum(g * u, axis=-1, keepdims=True)
        gw = np.sum(g * w, axis=-1, keepdims=True)
        uw = np.sum(u * w, axis=-1, keepdims=True)
        return u * gw + w * gu - g * uw

    def curvature_tensor(self, x):
        """Curvature components in the canonical orthonormal frame."""
        R = fa.constant_curvature_tensor(self.dim, self.sectional)
        return np.broadcast_to(R, x.shape[:-1] + R.shape)

    # -- boundary ----------------------------------------------------------
    def signed_distance(self, x):
        return np.full(x.shape[:-1], np.inf)

    def distance_gradient(self, x):
        raise PreconditionError(f"model {self.name!r} has no boundary")

    def project(self, x):
        raise PreconditionError(f"model {self.name!r} has no boundary")

    def shape_operator(self, x):
        raise PreconditionError(f"model {self.name!r} has no boundary")

    # -- stepping ----------------------------------------------------------
    def geodesic_step(self, x, v, F):
        """Geodesic-Euler position update and RK4 parallel transport of ``F``."""
        x1 = x + v - 0.5 * self.gamma(x, v, v)
        if F is None:
            return x1, None
        dx = x1 - x

        def rhs(s, G):
            return -self.gamma(x + s * dx, dx, G)

        k1 = rhs(0.0, F)
        k2 = rhs(0.5, F + 0.5 * k1)
        k3 = rhs(0.5, F + 0.5 * k2)
        k4 = rhs(1.0, F + k3)
        return x1, F + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    def orthonormalize(self, x, F):
        """Polar projection ``F (F^T h F)^{-1/2}`` onto h-orthonormal frames."""
        lam = self.lam(x)
        G = F * lam[..., None, None]
        w, V = np.linalg.eigh(np.swapaxes(G, -1, -2) @ G)
        inv_sqrt = (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
        return F @ inv_sqrt

    def wrap(self, x):
        return x

    # -- sampling ----------------------------------------------------------
    def reference_point(self):
        return np.zeros(self.dim)

    def sample_points(self, rng, m):
        raise NotImplementedError

    def sample_boundary_points(self, rng, m):
        raise PreconditionError(f"model {self.name!r} has no boundary")


class _Flat(ManifoldModel):
    flat_chart: ClassVar[bool] = True

    def christoffel(self, x):
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def gamma(self, x, u, w):
        return np.zeros_like(w)

    def geodesic_step(self, x, v, F):
        return x + v, F

    def orthonormalize(self, x, F):
        return F

    def metric(self, x):
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def frame(self, x):
        return self.metric(x)


@dataclass(frozen=True)
class Euclidean(_Flat):
    """Flat R^n without boundary."""

    name: ClassVar[str] = "euclidean"
    min_dim: ClassVar[int] = 1

    def sample_points(self, rng, m):
        return rng.uniform(-2, 2, (m, self.dim))


@dataclass(frozen=True)
class HalfSpace(_Flat):
    """Flat half-space ``x_n >= 0``."""

    name: ClassVar[str] = "halfspace"
    has_boundary: ClassVar[bool] = True
    min_dim: ClassVar[int] = 2

    @property
    def chart_domain(self):
        return "x_n >= 0"

    @property
    def totally_geodesic(self):
        return True

    def signed_distance(self, x):
        return x[..., -1].copy()

    def distance_gradient(self, x):
        g = np.zeros_like(x)
        g[..., -1] = 1.0
        return g

    def project(self, x):
        p = x.copy()
        p[..., -1] = 0.0
        return p

    def shape_operator(self, x):
        return np.zeros(x.shape[:-1] + (self.dim, self.dim))

    def reference_point(self):
        x = np.zeros(self.dim)
        x[-1] = 1.0
        return x

    def sample_points(self, rng, m):
        x = rng.uniform(-2, 2, (m, self.dim))
        x[:, -1] = rng.uniform(0, 2, m)
        return x

    def sample_boundary_points(self, rng, m):
        return self.project(self.sample_points(rng, m))


@dataclass(frozen=True)
class HalfLine(HalfSpace):
    """The one-dimensional half-line ``x >= 0``."""

    name: ClassVar[str] = "halfline"
    min_dim: ClassVar[int] = 1
    max_dim: ClassVar[int] = 1

    @property
    def chart_domain(self):
        return "x >= 0"


@dataclass(frozen=True)
class Slab(_Flat):
    """Flat slab ``0 <= x_n <= a``, optionally periodic with period ``period``
    in the tangential coordinates."""

    a: float = 1.0
    period: float | None = None

    name: ClassVar[str] = "slab"
    has_boundary: ClassVar[bool] = True
    param_ranges: ClassVar[dict] = {"a": (0.0, math.inf), "period": (0.0, math.inf)}

    @property
    def chart_domain(self):
        return f"0 <= x_n <= {self.a}"

    @property
    def scale(self):
        return self.a

    @property
    def totally_geodesic(self):
        return True

    def signed_distance(self, x):
        return np.minimum(x[..., -1], self.a - x[..., -1])

    def distance_gradient(self, x):
        g = np.zeros_like(x)
        g[..., -1] = np.where(x[..., -1] <= 0.5 * self.a, 1.0, -1.0)
        return g

    def project(self, x):
        p = x.copy()
        p[..., -1] = np.where(x[..., -1] <= 0.5 * self.a, 0.0, self.a)
        return p

    def shape_operator(self, x):
        return np.zeros(x.shape[:-1] + (self.dim, self.dim))

    def wrap(self, x):
        if self.period is None:
            return x
        x = x.copy()
        x[..., :-1] = np.mod(x[..., :-1], self.period)
        return x

    def reference_point(self):
        x = np.zeros(self.dim)
        x[-1] = 0.5 * self.a
        return x

    def sample_points(self, rng, m):
        x = rng.uniform(0, self.period or 2.0, (m, self.dim))
        x[:, -1] = rng.uniform(0, self.a, m)
        return x

    def sample_boundary_points(self, rng, m):
        return self.project(self.sample_points(rng, m))


@dataclass(frozen=True)
class Ball(_Flat):
    """Flat ball of radius ``r0`` centered at the origin."""

    r0: float = 1.0

    name: ClassVar[str] = "ball"
    has_boundary: ClassVar[bool] = True
    param_ranges: ClassVar[dict] = {"r0": (0.0, math.inf)}

    @property
    def chart_domain(self):
        return f"|x| <= {self.r0}"

    @property
    def scale(self):
        return self.r0

    def signed_distance(self, x):
        return self.r0 - np.linalg.norm(x, axis=-1)

    def distance_gradient(self, x):
        return -_unit(x)

    def project(self, x):
        u = _unit(x)
        u[np.linalg.norm(u, axis=-1) == 0, 0] = 1.0
        return self.r0 * u

    def shape_operator(self, x):
        r = np.linalg.norm(x, axis=-1)
        u = _unit(x)
        P = np.eye(self.dim) - u[..., :, None] * u[..., None, :]
        return P / r[..., None, None]

    def sample_points(self, rng, m):
        u = _unit(rng.standard_normal((m, self.dim)))
        return u * (self.r0 * rng.uniform(0, 1, m) ** (1 / self.dim))[:, None]

    def sample_boundary_points(self, rng, m):
        return self.r0 * _unit(rng.standard_normal((m, self.dim)))


class _Stereographic(ManifoldModel):
    """Unit round sphere in the stereographic chart from the south pole.

    The chart origin is the north pole and ``|y| = tan(theta / 2)`` with theta
    the polar angle. Steps are exact great-circle arcs computed through the
    embedding in R^{n+1}.
    """

    sectional: ClassVar[float] = 1.0

    def lam(self, x):
        return 2.0 / (1.0 + np.sum(x * x, axis=-1))

    def grad_log_lam(self, x):
        return -2.0 * x / (1.0 + np.sum(x * x, axis=-1, keepdims=True))

    def embed(self, y):
        s = np.sum(y * y, axis=-1, keepdims=True)
        return np.concatenate([2 * y, 1 - s], axis=-1) / (1 + s)

    def unembed(self, z):
        return z[..., :-1] / (1 + z[..., -1:])

    def jacobian(self, y):
        s = np.sum(y * y, axis=-1)[..., None, None]
        n = self.dim
        top = 2 * np.eye(n) / (1 + s) - 4 * y[..., :, None] * y[..., None, :] / (1 + s) ** 2
        bottom = -4 * y[..., None, :] / (1 + s) ** 2
        return np.concatenate([top, bottom], axis=-2)

    def geodesic_step(self, x, v, F):
        J = self.jacobian(x)
        z = self.embed(x)
        V = np.einsum("...ij,...j->...i", J, v)
        s = np.linalg.norm(V, axis=-1, keepdims=True)
        T = V / np.where(s > 0, s, 1.0)
        z1 = np.cos(s) * z + np.sin(s) * T
        z1 /= np.linalg.norm(z1, axis=-1, keepdims=True)
        x1 = self.unembed(z1)
        if F is None:
            return x1, None
        W = J @ F
        TW = np.einsum("...i,...ia->...a", T, W)
        W1 = W + ((np.cos(s) - 1) * T - np.sin(s) * z)[..., :, None] * TW[..., None, :]
        J1 = self.jacobian(x1)
        lam1 = self.lam(x1)
        return x1, np.swapaxes(J1, -1, -2) @ W1 / (lam1**2)[..., None, None]

    def polar_angle(self, x):
        return 2.0 * np.arctan(np.linalg.norm(x, axis=-1))

    def sample_points(self, rng, m):
        z = _unit(rng.standard_normal((m, self.dim + 1)))
        z[:, -1] = np.abs(z[:, -1])
        return self.unembed(z)


@dataclass(frozen=True)
class Sphere(_Stereographic):
    """Closed unit round sphere (no boundary)."""

    name: ClassVar[str] = "sphere"


@dataclass(frozen=True)
class SphereCap(_Stereographic):
    """Geodesic cap ``theta <= theta0`` of the unit sphere about the north pole."""

    theta0: float = 1.0

    name: ClassVar[str] = "sphere_cap"
    has_boundary: ClassVar[bool] = True
    param_ranges: ClassVar[dict] = {"theta0": (0.0, math.pi)}

    @property
    def chart_domain(self):
        return f"|y| <= tan({self.theta0}/2)"

    def signed_distance(self, x):
        return self.theta0 - self.polar_angle(x)

    def distance_gradient(self, x):
        return -_unit(x) / self.lam(x)[..., None]

    def project(self, x):
        u = _unit(x)
        u[np.linalg.norm(u, axis=-1) == 0, 0] = 1.0
        return math.tan(self.theta0 / 2) * u

    def shape_operator(self, x):
        theta = self.polar_angle(x)
        u = _unit(x)
        P = np.eye(self.dim) - u[..., :, None] * u[..., None, :]
        return P / np.tan(theta)[..., None, None]

    def sample_points(self, rng, m):
        u = _unit(rng.standard_normal((m, self.dim)))
        c = rng.uniform(math.cos(self.theta0), 1.0, m)
        return u * np.tan(np.arccos(c) / 2)[:, None]

    def sample_boundary_points(self, rng, m):
        return self.project(rng.standard_normal((m, self.dim)))


@dataclass(frozen=True)
class Hyperbolic(ManifoldModel):
    """Hyperbolic space, upper half-space chart ``h = y^{-2} I`` with ``y = x_n > 0``."""

    name: ClassVar[str] = "hyperbolic"
    sectional: ClassVar[float] = -1.0

    @property
    def chart_domain(self):
        return "x_n > 0"

    def lam(self, x):
        return 1.0 / x[..., -1]

    def grad_log_lam(self, x):
        g = np.zeros_like(x)
        g[..., -1] = -1.0 / x[..., -1]
        return g

    def gamma(self, x, u, w):
        # grad log lam = -e_n / y
        y = x[..., -1]
        if w.ndim == u.ndim + 1:
            y2 = y[..., None, None]
            out = -(u[..., :, None] * w[..., -1:, :] + w * u[..., -1, None, None]) / y2
            out[..., -1, :] += np.einsum("...k,...ka->...a", u, w) / y[..., None]
            return out
        out = -(u * w[..., -1:] + w * u[..., -1:]) / y[..., None]
        out[..., -1] += np.sum(u * w, axis=-1) / y
        return out

    def chart_valid(self, x):
        return np.all(np.isfinite(x), axis=-1) & (x[..., -1] > 0)

    def reference_point(self):
        x = np.zeros(self.dim)
        x[-1] = 1.0
        return x

    def sample_points(self, rng, m):
        x = rng.uniform(-1, 1, (m, self.dim))
        x[:, -1] = np.exp(rng.uniform(-1, 1, m))
        return x


@dataclass(frozen=True)
class HyperbolicTube(Hyperbolic):
    """Tube of radius ``r`` about the vertical geodesic ``w = 0`` in the upper
    half-space chart ``x = (w, y)``; it is the cone ``|w| <= y sinh r``.

    Requires ``dim >= 3`` so that the cross-section is a disc ``D^{n-1}``.
    """

    r: float = 0.8

    name: ClassVar[str] = "hyperbolic_tube"
    has_boundary: ClassVar[bool] = True
    min_dim: ClassVar[int] = 3
    param_ranges: ClassVar[dict] = {"r": (0.0, 10.0)}

    @property
    def chart_domain(self):
        return f"x_n > 0, |(x_1..x_(n-1))| <= x_n sinh({self.r})"

    def axis_distance(self, x):
        return np.arcsinh(np.linalg.norm(x[..., :-1], axis=-1) / x[..., -1])

    def signed_distance(self, x):
        return self.r - self.axis_distance(x)

    def _what(self, x):
        w = x[..., :-1]
        nw = np.linalg.norm(w, axis=-1, keepdims=True)
        what = w / np.where(nw > 0, nw, 1.0)
        what[..., 0] = np.where(nw[..., 0] > 0, what[..., 0], 1.0)
        return what, nw[..., 0]

    def distance_gradient(self, x):
        what, nw = self._what(x)
        y = x[..., -1]
        s = nw / y
        g = np.concatenate([-y[..., None] * what, nw[..., None]], axis=-1)
        return g / np.sqrt(1 + s * s)[..., None]

    def project(self, x):
        what, _ = self._what(x)
        R = np.linalg.norm(x, axis=-1)
        w = (R * math.tanh(self.r))[..., None] * what
        y = R / math.cosh(self.r)
        return np.concatenate([w, y[..., None]], axis=-1)

    def shape_operator(self, x):
        rho = self.axis_distance(x)
        what, _ = self._what(x)
        n = self.dim
        X = x
        PX = X[..., :, None] * X[..., None, :] / np.sum(X * X, axis=-1)[..., None, None]
        Prot = np.zeros(x.shape[:-1] + (n, n))
        Prot[..., :-1, :-1] = np.eye(n - 1) - what[..., :, None] * what[..., None, :]
        return np.tanh(rho)[..., None, None] * PX + (1 / np.tanh(rho))[..., None, None] * Prot

    def from_tube_coords(self, R, rho, what):
        """Chart point at axis distance ``rho`` on the half-circle ``|x| = R``."""
        R = np.asarray(R, dtype=float)
        rho = np.asarray(rho, dtype=float)
        w = (R * np.tanh(rho))[..., None] * what
        return np.concatenate([w, (R / np.cosh(rho))[..., None]], axis=-1)

    def sample_points(self, rng, m):
        what = _unit(rng.standard_normal((m, self.dim - 1)))
        return self.from_tube_coords(np.exp(rng.uniform(-1, 1, m)), self.r * rng.uniform(0, 1, m) ** (1 / (self.dim - 1)), what)

    def sample_boundary_points(self, rng, m):
        what = _unit(rng.standard_normal((m, self.dim - 1)))
        return self.from_tube_coords(np.exp(rng.uniform(-1, 1, m)), np.full(m, self.r), what)


MODELS: dict[str, type[ManifoldModel]] = {
    cls.name: cls for cls in (Euclidean, HalfLine, HalfSpace, Slab, Ball, Sphere, SphereCap, Hyperbolic, HyperbolicTube)
}


def make_model(name: str, dim: int, **params) -> ManifoldModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {', '.join(MODELS)}") from None
    known = {f.name for f in fields(cls) if f.name != "dim"}
    extra = set(params) - known
    if extra:
        raise ValueError(f"model {name!r} does not take parameter(s) {sorted(extra)}")
    return cls(dim=dim, **params)


def catalog() -> list[dict]:
    """Stable-order description of every model id with parameter ranges."""
    out = []
    for name, cls in MODELS.items():
        params = {}
        for f in fields(cls):
            if f.name == "dim":
                continue
            lo, hi = cls.param_ranges.get(f.name, (-math.inf, math.inf))
            params[f.name] = {"default": f.default, "min_exclusive": lo, "max_exclusive": hi}
        out.append(
            {
                "model": name,
                "dims": [cls.min_dim, cls.max_dim],
                "params": params,
                "has_boundary": cls.has_boundary,
                "sectional_curvature": cls.sectional,
            }
        )
    return out


# ---------------------------------------------------------------------------
# checked public operations


def _check_domain(model, x):
    x, single = _rows(x, model.dim)
    ok = model.chart_valid(x)
    if model.has_boundary:
        ok &= model.signed_distance(x) >= -BOUNDARY_TOL * model.scale
    if not np.all(ok):
        bad = x[~ok][0]
        raise DomainError(f"point {bad.tolist()} outside the chart domain of {model.name!r} ({model.chart_domain})")
    return x, single


def metric_at(model: ManifoldModel, x) -> np.ndarray:
    x, single = _check_domain(model, x)
    h = model.metric(x)
    return h[0] if single else h


def curvature_at(model: ManifoldModel, x) -> np.ndarray:
    x, single = _check_domain(model, x)
    R = model.curvature_tensor(x)
    return np.array(R[0] if single else R)


def r_q_at(model: ManifoldModel, x, q: int) -> np.ndarray | float:
    """Least eigenvalue of the Weitzenbock term on q-forms."""
    if not 0 <= q <= model.dim:
        raise ValueError(f"degree {q} out of range for dimension {model.dim}")
    R = curvature_at(model, x)
    Rq = fa.weitzenbock_matrix(R, q, check=False)
    vals = fa.r_q_min(Rq)
    return float(vals) if np.ndim(vals) == 0 else vals


def signed_boundary_distance(model: ManifoldModel, x):
    """Distance to the boundary and the nearest boundary point."""
    x, single = _check_domain(model, x)
    if not model.has_boundary:
        d = np.full(len(x), np.inf)
        p = np.full_like(x, np.nan)
    else:
        d = np.maximum(model.signed_distance(x), 0.0)
        p = model.project(x)
    return (float(d[0]), p[0]) if single else (d, p)


def orthonormal_boundary_frame_data(model, p, F=None):
    """Normal and shape operator of boundary points ``p`` in an h-orthonormal frame.

    Returns ``(nu_hat, A_hat)`` with ``nu_hat`` a unit vector and ``A_hat`` a
    symmetric matrix; ``F`` defaults to the canonical frame at ``p``.
    """
    if F is None:
        F = model.frame(p)
    h = model.metric(p)
    Finv = np.swapaxes(F, -1, -2) @ h
    nu = np.einsum("...ij,...j->...i", Finv, model.distance_gradient(p))
    nu = _unit(nu)
    A = Finv @ model.shape_operator(p) @ F
    return nu, 0.5 * (A + np.swapaxes(A, -1, -2))


def tangential_curvatures(A_hat) -> np.ndarray:
    """Principal curvatures from an orthonormal-frame shape matrix with ``A nu = 0``."""
    w = np.linalg.eigvalsh(A_hat)
    drop = np.argmin(np.abs(w), axis=-1)
    keep = np.ones(w.shape, dtype=bool)
    np.put_along_axis(keep, drop[..., None], False, axis=-1)
    return np.sort(w[keep].reshape(w.shape[:-1] + (w.shape[-1] - 1,)), axis=-1)


def _check_boundary_point(model, x):
    if not model.has_boundary:
        raise PreconditionError(f"model {model.name!r} has no boundary")
    x, single = _check_domain(model, x)
    d = model.signed_distance(x)
    bad = np.abs(d) > BOUNDARY_TOL * model.scale
    if np.any(bad):
        raise PreconditionError(f"point {x[bad][0].tolist()} is not on the boundary (distance {d[bad][0]:.3g})")
    return x, single


def boundary_data_at(model: ManifoldModel, x) -> BoundaryData:
    x, single = _check_boundary_point(model, x)
    nu = model.distance_gradient(x)
    A = model.shape_operator(x)
    _, A_hat = orthonormal_boundary_frame_data(model, x)
    rho = tangential_curvatures(A_hat)
    if single:
        return BoundaryData(nu[0], A[0], rho[0])
    return BoundaryData(nu, A, rho)


def rho_q_from_curvatures(rho, q: int):
    return np.sum(np.asarray(rho)[..., :q], axis=-1)


def rho_q_at(model: ManifoldModel, x, q: int):
    """Sum of the q smallest principal curvatures at a boundary point."""
    if not 1 <= q <= model.dim - 1:
        raise ValueError(f"q must lie in 1..{model.dim - 1}, got {q}")
    bd = boundary_data_at(model, x)
    val = rho_q_from_curvatures(bd.principal_curvatures, q)
    return float(val) if np.ndim(val) == 0 else val
