"""Multiplicative functional acting on q-forms along reflecting paths.

Along a step from ``u_prev`` to ``u`` with local-time increment ``dl`` the
functional is right-multiplied by ``exp(-R_q(u_prev) dt / 2)`` and, when the
step touches the boundary, by

* ``exp(-(A_q + Pi_nor / eps) dl)`` in ``eps`` mode, or
* ``exp(-A_q dl) Pi_tan`` in ``projected`` mode,

with every endomorphism written in the moving orthonormal frame. Boundary
quantities are evaluated at the boundary projection of the step's end point.
The scalar ``exp(-int r_(q) ds / 2 - int rho_(q) dl)`` is tracked alongside.

In projected mode a step counts as touching when it reflected (``dl > 0``) or,
with ``band=True``, when it ends within the boundary band; the band corrects the
discrete-monitoring bias of the annihilation of normal components. With
``band=False`` projected mode is exactly the ``eps -> 0`` limit of the discrete
eps-mode recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import form_algebra as fa
from .development import PathSample, Step
from .geometry import orthonormal_boundary_frame_data, tangential_curvatures

MODES = ("projected", "eps")


@dataclass(frozen=True)
class FunctionalMatrix:
    degree: int
    M: np.ndarray
    mode: str
    eps: float | None
    t: float

    def norm(self) -> float:
        return float(np.linalg.norm(self.M, 2)) if self.M.size else 0.0


def sym_expm(S, scale=1.0):
    """``exp(scale * S)`` for a batch of symmetric matrices."""
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    w, V = np.linalg.eigh(S)
    scale = np.asarray(scale, dtype=float)[..., None]
    return (V * np.exp(scale * w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def frame_curvature(model, x, F):
    """Curvature components in the frame ``F`` at ``x``."""
    R = model.curvature_tensor(x)
    E = model.frame(x)
    O = np.linalg.solve(E, F)
    return np.einsum("...abcd,...ai,...bj,...ck,...dl->...ijkl", R, O, O, O, O)


def boundary_frame_data(model, x, F):
    """Unit normal and shape matrix in the frame carried to the boundary projection."""
    p = model.project(x)
    Fp = F if model.flat_chart else model.orthonormalize(p, F)
    return orthonormal_boundary_frame_data(model, p, Fp)


def _check_mode(mode, eps):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "eps" and not (eps is not None and eps > 0):
        raise ValueError("eps mode needs eps > 0")


class BatchedFunctional:
    """Evolves ``M`` and the scalar bound for a batch of paths step by step."""

    def __init__(self, model, q, B, dt, mode="projected", eps=None, generic_curvature=False, band=True):
        if not 0 <= q <= model.dim:
            raise ValueError(f"degree {q} does not fit dimension {model.dim}")
        _check_mode(mode, eps)
        self.model, self.q, self.dt = model, q, dt
        self.mode, self.eps = mode, eps
        self.C = fa.dim(model.dim, q)
        self.M = np.broadcast_to(np.eye(self.C), (B, self.C, self.C)).copy()
        self.log_bound = np.zeros(B)
        self.generic = generic_curvature
        self.band = band
        c = model.sectional
        self.r_const = q * (model.dim - q) * c

    def interior(self, x_prev, F_prev):
        if not self.generic:
            if self.r_const != 0.0:
                self.M *= np.exp(-0.5 * self.r_const * self.dt)
                self.log_bound -= 0.5 * self.r_const * self.dt
            return
        R = frame_curvature(self.model, x_prev, F_prev)
        Rq = fa.weitzenbock_matrix(R, self.q, check=False)
        self.M = self.M @ sym_expm(Rq, -0.5 * self.dt)
        self.log_bound -= 0.5 * self.dt * fa.r_q_min(Rq)

    def boundary(self, x, F, dl, touched):
        rows = np.flatnonzero(touched if self.mode == "projected" and self.band else dl > 0)
        if rows.size == 0 or self.q == 0:
            return
        nu, A = boundary_frame_data(self.model, x[rows], F[rows])
        d = dl[rows]
        if self.mode == "projected":
            factor = np.eye(self.C) - fa.normal_projection(nu, self.q)
            if not self.model.totally_geodesic:
                factor = sym_expm(fa.derivation_matrix(A, self.q), -d) @ factor
        else:
            P = fa.normal_projection(nu, self.q)
            tan = np.eye(self.C) - P
            G = tan @ fa.derivation_matrix(A, self.q) @ tan + P / self.eps
            factor = sym_expm(G, -d)
        self.M[rows] = self.M[rows] @ factor
        if self.q >= 1 and not self.model.totally_geodesic:
            rho = np.sum(tangential_curvatures(A)[:, : self.q], axis=-1)
            self.log_bound[rows] -= rho * d

    def update(self, step: Step):
        self.interior(step.x_prev, step.F_prev)
        if self.model.has_boundary:
            self.boundary(step.x, step.F, step.dl, step.touched)

    @property
    def bound(self):
        return np.exp(self.log_bound)


def _steps_of(path: PathSample, start: int, stop: int):
    for k in range(start, stop):
        yield Step(
            k + 1,
            (k + 1) * path.dt,
            path.x[k : k + 1],
            path.frame[k : k + 1],
            path.x[k + 1 : k + 2],
            path.frame[k + 1 : k + 2],
            path.dl[k : k + 1],
            path.touched[k : k + 1],
            path.ltime[k + 1 : k + 2],
        )


def _span(path, start, stop):
    stop = path.n_steps if stop is None else stop
    if not 0 <= start <= stop <= path.n_steps:
        raise ValueError(f"step range [{start}, {stop}] outside path with {path.n_steps} steps")
    return start, stop


def evolve_functional(
    path: PathSample,
    q: int,
    mode: str = "projected",
    eps: float | None = None,
    start: int = 0,
    stop: int | None = None,
    generic_curvature: bool = False,
    band: bool = True,
) -> list[FunctionalMatrix]:
    """Functional from step ``start`` (where it equals I) through step ``stop``."""
    start, stop = _span(path, start, stop)
    fn = BatchedFunctional(path.model, q, 1, path.dt, mode, eps, generic_curvature, band)
    out = [FunctionalMatrix(q, fn.M[0].copy(), mode, eps, start * path.dt)]
    for step in _steps_of(path, start, stop):
        fn.update(step)
        out.append(FunctionalMatrix(q, fn.M[0].copy(), mode, eps, step.t))
    return out


def bound_functional(path: PathSample, q: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``exp(-int r_(q) ds / 2 - int rho_(q) dl)`` at every step of the path."""
    start, stop = _span(path, start, stop)
    fn = BatchedFunctional(path.model, q, 1, path.dt)
    out = [1.0]
    for step in _steps_of(path, start, stop):
        fn.update(step)
        out.append(float(fn.bound[0]))
    return np.array(out)


def eps_convergence_probe(paths, q: int, eps_values) -> np.ndarray:
    """Max over paths of ``|M_eps(T) - M(T)|`` (operator norm) for each eps.

    Both functionals see the same contact steps (those with ``dl > 0``), so the
    deviation isolates the penalization limit.
    """
    if isinstance(paths, PathSample):
        paths = [paths]
    eps_values = [float(e) for e in eps_values]
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps sequence must be strictly decreasing")
    dev = np.zeros(len(eps_values))
    for path in paths:
        ref = evolve_functional(path, q, "projected", band=False)[-1].M
        for j, e in enumerate(eps_values):
            M = evolve_functional(path, q, "eps", e)[-1].M
            dev[j] = max(dev[j], float(np.linalg.norm(M - ref, 2)))
    return dev
