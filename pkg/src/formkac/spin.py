"""Clifford modules, spinor boundary projections and the spinor Feynman-Kac bound.

Conventions: ``gamma_i gamma_j + gamma_j gamma_i = -2 delta_ij I`` with
anti-Hermitian ``gamma_i``; for even n the chirality is
``Q = i^(n/2) gamma_1 ... gamma_n``. Only the pure spin case is modelled (the
auxiliary curvature form is zero), so the Lichnerowicz term is ``R / 4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable

import numpy as np

from .development import Observer, run_blocks
from .errors import PreconditionError
from .estimators import MIN_PATHS, mean_stderr
from .geometry import HalfLine, HalfSpace, ManifoldModel, make_model
from .oracles import GridField, pde_solve_1d

KINDS = ("chirality", "mit")

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _hermitian_generators(n):
    """n Hermitian matrices with ``s_i s_j + s_j s_i = 2 delta_ij``, size 2^(n // 2)."""
    if n == 1:
        return [np.ones((1, 1), dtype=complex)]
    gens = [_SX, _SY]
    m = 2
    while m + 2 <= n:
        gens = [np.kron(s, _SX) for s in gens] + [np.kron(np.eye(len(gens[0])), _SY), np.kron(np.eye(len(gens[0])), _SZ)]
        m += 2
    if m < n:
        # odd dimension: the (Hermitian) volume element anticommutes with all generators
        prod = reduce(np.matmul, gens)
        gens = gens + [(1j) ** (m // 2) * prod]
    return gens


@dataclass(frozen=True)
class CliffordModule:
    n: int
    gamma: tuple
    Q: np.ndarray | None

    @property
    def spinor_dim(self) -> int:
        return self.gamma[0].shape[0]

    def clifford(self, v) -> np.ndarray:
        """``gamma(v) = sum_j v_j gamma_j``."""
        v = np.asarray(v, dtype=float)
        return np.tensordot(v, np.array(self.gamma), axes=(-1, 0))

    def relation_defect(self) -> float:
        I = np.eye(self.spinor_dim)
        err = 0.0
        for i, a in enumerate(self.gamma):
            err = max(err, float(np.abs(a.conj().T + a).max()))
            for j, b in enumerate(self.gamma):
                err = max(err, float(np.abs(a @ b + b @ a + 2 * (i == j) * I).max()))
        return err

    def chirality_defect(self) -> float:
        if self.Q is None:
            return 0.0
        Q, I = self.Q, np.eye(self.spinor_dim)
        err = max(float(np.abs(Q @ Q - I).max()), float(np.abs(Q - Q.conj().T).max()))
        for g in self.gamma:
            err = max(err, float(np.abs(Q @ g + g @ Q).max()))
        return err


def build_clifford(n: int) -> CliffordModule:
    if not 1 <= n <= 6:
        raise ValueError(f"dimension {n} outside 1..6")
    gamma = tuple(1j * s for s in _hermitian_generators(n))
    Q = None
    if n % 2 == 0:
        Q = (1j) ** (n // 2) * reduce(np.matmul, gamma)
    return CliffordModule(n, gamma, Q)


@dataclass(frozen=True)
class SpinorBoundaryOps:
    kind: str
    nu: np.ndarray
    Q_hat: np.ndarray
    Pi_plus: np.ndarray
    Pi_minus: np.ndarray
    mean_curvature: float = 0.0
    lichnerowicz: float = 0.0

    def projection_defect(self) -> float:
        P, M = self.Pi_plus, self.Pi_minus
        I = np.eye(len(P))
        errs = [
            P @ P - P,
            M @ M - M,
            P - P.conj().T,
            M - M.conj().T,
            P + M - I,
            self.Q_hat @ self.Q_hat - I,
        ]
        rank_gap = abs(np.trace(P).real - np.trace(M).real)
        return max(max(float(np.abs(e).max()) for e in errs), rank_gap)


def boundary_projection(module: CliffordModule, nu=None, kind: str = "mit", mean_curvature: float = 0.0, lichnerowicz: float = 0.0) -> SpinorBoundaryOps:
    """``Pi_pm = (I -+ Q_hat) / 2`` with ``Q_hat = gamma(nu) Q`` or ``i gamma(nu)``.

    ``nu`` is a unit vector or an axis index; default the last axis.
    """
    n = module.n
    if nu is None:
        nu = n - 1
    if np.ndim(nu) == 0:
        e = np.zeros(n)
        e[int(nu)] = 1.0
        nu = e
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (n,) or abs(np.linalg.norm(nu) - 1) > 1e-12:
        raise ValueError("nu must be a unit vector of the module's dimension")
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    g = module.clifford(nu)
    if kind == "chirality":
        if module.Q is None:
            raise PreconditionError(f"no chirality operator in odd dimension {n}")
        Q_hat = g @ module.Q
    else:
        Q_hat = 1j * g
    I = np.eye(module.spinor_dim)
    return SpinorBoundaryOps(kind, nu, Q_hat, 0.5 * (I - Q_hat), 0.5 * (I + Q_hat), mean_curvature, lichnerowicz)


def tangential_symbol(module: CliffordModule, ops: SpinorBoundaryOps, xi) -> np.ndarray:
    """``sigma(xi) = sum_j xi_j gamma(e_j) gamma(nu)`` for tangential ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(np.abs(xi @ ops.nu) > 1e-12 * np.maximum(1, np.linalg.norm(xi, axis=-1))):
        raise ValueError("xi must be tangential (xi . nu = 0)")
    return module.clifford(xi) @ module.clifford(ops.nu)


def intertwine_certificate(module: CliffordModule, ops: SpinorBoundaryOps, xi) -> float:
    """Max residual of ``Pi_pm sigma = sigma Pi_mp`` and ``sigma gamma(nu) = -gamma(nu) sigma``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    S = tangential_symbol(module, ops, xi)
    g = module.clifford(ops.nu)
    r = [
        ops.Pi_plus @ S - S @ ops.Pi_minus,
        ops.Pi_minus @ S - S @ ops.Pi_plus,
        S @ g + g @ S,
    ]
    return max(float(np.abs(a).max()) for a in r)


def random_tangential(rng, n, m, nu_index=None):
    xi = rng.standard_normal((m, n))
    xi[:, n - 1 if nu_index is None else nu_index] = 0.0
    return xi


def scalar_curvature(model: ManifoldModel) -> float:
    n = model.dim
    return n * (n - 1) * model.sectional


def lichnerowicz(model: ManifoldModel) -> float:
    """Lichnerowicz term ``R / 4`` (pure spin case) of a constant-curvature model."""
    return scalar_curvature(model) / 4


def algebra_suite(dims=range(2, 7), n_xi=1000, seed=0) -> dict:
    """Max defects of the Clifford, projection and intertwining identities per check."""
    rng = np.random.default_rng(seed)
    out = {"clifford": 0.0, "chirality": 0.0, "projection": 0.0, "intertwine": 0.0}
    for n in dims:
        mod = build_clifford(n)
        out["clifford"] = max(out["clifford"], mod.relation_defect())
        out["chirality"] = max(out["chirality"], mod.chirality_defect())
        kinds = KINDS if mod.Q is not None else ("mit",)
        for kind in kinds:
            ops = boundary_projection(mod, kind=kind)
            out["projection"] = max(out["projection"], ops.projection_defect())
            out["intertwine"] = max(out["intertwine"], intertwine_certificate(mod, ops, random_tangential(rng, n, n_xi)))
    return out


# ---------------------------------------------------------------------------
# spinor heat flow on the flat half-space, profiles depending on x_n only
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SpinorProfile:
    """Spinor field ``psi0(x) = func(x_n)`` returning ``(B, spinor_dim)`` complex values."""

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1)
        return np.asarray(self.func(s), dtype=complex).reshape(len(s), self.dim)


def _unit_spinor(dim, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def constant_profile(module: CliffordModule, seed=0) -> SpinorProfile:
    v = _unit_spinor(module.spinor_dim, seed)
    return SpinorProfile(module.spinor_dim, lambda s: np.broadcast_to(v, (len(s), len(v))), "constant", {"seed": seed})


def gaussian_profile(module: CliffordModule, center=0.5, width=0.5, seed=1) -> SpinorProfile:
    v = _unit_spinor(module.spinor_dim, seed)
    return SpinorProfile(module.spinor_dim, lambda s: np.exp(-((s - center) / width) ** 2)[:, None] * v, "gaussian", {"center": center, "width": width, "seed": seed})


def mixed_profile(module: CliffordModule, ops: SpinorBoundaryOps, seed=2) -> SpinorProfile:
    """``s e^{-s^2} Pi_+ v + e^{-s^2} Pi_- w``, which satisfies ``Pi_+ psi0 = 0`` at the boundary."""
    v, w = _unit_spinor(module.spinor_dim, seed), _unit_spinor(module.spinor_dim, seed + 1)
    a, b = ops.Pi_plus @ v, ops.Pi_minus @ w
    return SpinorProfile(module.spinor_dim, lambda s: (s * np.exp(-s * s))[:, None] * a + np.exp(-s * s)[:, None] * b, "mixed", {"seed": seed})


def spinor_pde_oracle(ops: SpinorBoundaryOps, profile: SpinorProfile, t: float, x_n: float, L: float = 10.0, dx: float = 1e-2) -> np.ndarray:
    """``psi_t(x_n)``: Dirichlet flow of ``Pi_+ psi0`` plus Neumann flow of ``Pi_- psi0`` (flat, K = 0)."""
    if t < 0 or x_n < 0:
        raise ValueError("need t >= 0 and x_n >= 0")
    grid = np.arange(0.0, L + dx / 2, dx)
    psi = profile(grid)
    if t == 0:
        return profile(np.array([x_n]))[0]
    steps = max(1, int(math.ceil(t / (dx * dx))))
    out = np.zeros(profile.dim, dtype=complex)
    for P, bc in ((ops.Pi_plus, "dirichlet"), (ops.Pi_minus, "neumann")):
        part = psi @ P.T
        for k in range(profile.dim):
            for comp, unit in ((part[:, k].real, 1.0), (part[:, k].imag, 1j)):
                if np.any(comp != 0):
                    out[k] += unit * pde_solve_1d(GridField(grid, comp, bc), t, steps).at(x_n)
    return out


class SpinorObserver(Observer):
    """Tracks ``|psi0(x^t)|`` and the projected spinor functional ``M`` (flat, K = 0)."""

    def __init__(self, ops, profile, band=True):
        self.ops, self.profile, self.band = ops, profile, band

    def start(self, x0, F0):
        B = len(x0)
        self.M = np.broadcast_to(np.eye(self.profile.dim, dtype=complex), (B, self.profile.dim, self.profile.dim)).copy()
        self.x = x0

    def update(self, step):
        rows = np.flatnonzero(step.touched if self.band else step.dl > 0)
        if rows.size:
            self.M[rows] = self.M[rows] @ self.ops.Pi_minus
        self.x = step.x

    def result(self):
        psi = self.profile(self.x[:, -1])
        val = np.einsum("bij,bj->bi", self.M, psi)
        return {"value": val, "plain": np.linalg.norm(psi, axis=-1), "touched": np.any(self.M != np.eye(self.profile.dim), axis=(1, 2))}


def _halfline_model(model):
    if isinstance(model, HalfLine):
        return model
    if isinstance(model, HalfSpace):
        return make_model("halfline", 1)
    raise PreconditionError("spinor Feynman-Kac is implemented on the flat half-space only")


@dataclass(frozen=True)
class SpinorBoundReport:
    profile: str
    t: float
    x_n: float
    lhs: float
    rhs: float
    stderr: float
    mc_value: np.ndarray
    mc_stderr: float
    oracle_value: np.ndarray
    n_paths: int
    seed: int

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + 2 * self.stderr

    @property
    def mc_error(self) -> float:
        return float(np.linalg.norm(self.mc_value - self.oracle_value))


def spinor_fk_bound_check(model, ops: SpinorBoundaryOps, profile: SpinorProfile, x_n: float, t: float, n_paths: int = 20000, dt: float = 1e-3, seed: int = 0, threads: int = 1) -> SpinorBoundReport:
    """Check ``|psi_t(x)| <= E|psi0(x^t)|`` with ``psi_t`` from the 1-D PDE oracle.

    The flat half-space has zero Lichnerowicz term and zero mean curvature, so
    the exponential weight is 1. The Monte Carlo spinor functional estimate of
    ``psi_t`` is reported alongside.
    """
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be at least {MIN_PATHS}")
    if ops.mean_curvature != 0 or ops.lichnerowicz != 0:
        raise PreconditionError("the half-line reduction needs K = 0 and zero Lichnerowicz term")
    line = _halfline_model(model)
    lhs_vec = spinor_pde_oracle(ops, profile, t, x_n)
    if t == 0:
        v = profile(np.array([x_n]))[0]
        return SpinorBoundReport(profile.name, t, x_n, float(np.linalg.norm(lhs_vec)), float(np.linalg.norm(v)), 0.0, v, 0.0, lhs_vec, n_paths, seed)
    n_steps = max(1, int(round(t / dt)))
    res = run_blocks(line, np.array([x_n]), None, t / n_steps, n_steps, n_paths, seed, lambda: SpinorObserver(ops, profile), threads)
    rhs, se = (float(v) for v in mean_stderr(res["plain"]))
    val = res["value"]
    mc = val.mean(axis=0)
    mc_se = float(np.sqrt(np.sum(val.real.var(axis=0, ddof=1) + val.imag.var(axis=0, ddof=1)) / n_paths))
    return SpinorBoundReport(profile.name, t, x_n, float(np.linalg.norm(lhs_vec)), rhs, se, mc, mc_se, lhs_vec, n_paths, seed)


def spinor_domination_check(module: CliffordModule, ops: SpinorBoundaryOps, profile: SpinorProfile, x_n: float, t: float, n_paths: int = 20000, dt: float = 1e-3, seed: int = 0, threads: int = 1) -> dict:
    """``|E(M psi0(x^t))| <= 2^(n//2 + 1) E|psi0(x^t)|`` on matched paths (flat, K = 0)."""
    rep = spinor_fk_bound_check(make_model("halfline", 1), ops, profile, x_n, t, n_paths, dt, seed, threads)
    const = 2 ** (module.n // 2 + 1)
    lhs = float(np.linalg.norm(rep.mc_value))
    return {"lhs": lhs, "rhs": const * rep.rhs, "constant": const, "margin": const * rep.rhs - lhs, "passed": lhs <= const * rep.rhs + 2 * const * rep.stderr}
