"""Monte Carlo estimators built on the path simulator and the functional.

All estimators take a ``seed`` and derive every path from ``(seed, path index)``,
so two estimators called with the same seed, start point and step size see the
same paths (matched seeds). Means are exactly rounded sums (``math.fsum``), so
they do not depend on how paths were batched.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import form_algebra as fa
from .development import LocalTimeObserver, Observer, OccupationObserver, n_steps_for, run_blocks
from .errors import PreconditionError
from .fields import FormField, lift, pointwise_norm
from .functional import BatchedFunctional, boundary_frame_data
from .geometry import ManifoldModel, r_q_at, tangential_curvatures

MIN_PATHS = 100
EXP_CLIP = 700.0


@dataclass
class EstimateReport:
    value: np.ndarray | float
    stderr: np.ndarray | float
    n_paths: int
    seed: int
    t: float
    digest: str
    clipped: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_paths < MIN_PATHS:
            raise ValueError(f"an estimate needs at least {MIN_PATHS} paths")

    @property
    def ci(self):
        v, s = np.asarray(self.value), np.asarray(self.stderr)
        return v - 1.96 * s, v + 1.96 * s


def digest_of(**inputs) -> str:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, ManifoldModel):
            return o.describe()
        if isinstance(o, FormField):
            return {"field": o.name, "degree": o.degree, "basis": o.basis, "params": o.params}
        if callable(o):
            return getattr(o, "__qualname__", repr(o))
        raise TypeError(type(o))

    blob = json.dumps(inputs, default=conv, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def mean_stderr(samples):
    """Exactly rounded mean and standard error along axis 0."""
    a = np.asarray(samples, dtype=float)
    n = a.shape[0]
    flat = a.reshape(n, -1)
    mean = np.array([math.fsum(col) / n for col in flat.T])
    var = np.array([math.fsum((col - m) ** 2) / (n - 1) for col, m in zip(flat.T, mean)]) if n > 1 else np.zeros_like(mean)
    shape = a.shape[1:]
    mean, se = mean.reshape(shape), np.sqrt(var / n).reshape(shape)
    if shape == ():
        return float(mean), float(se)
    return mean, se


def _times(t):
    ts = [float(t)] if np.ndim(t) == 0 else [float(s) for s in t]
    if any(s < 0 for s in ts):
        raise ValueError("times must be nonnegative")
    return ts


def _check_paths(n_paths):
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be at least {MIN_PATHS}")


class FKObserver(Observer):
    """Records ``M^t omega0(u^t)``, the bound ``|omega0(x^t)| exp(...)`` and the
    largest ratio ``|M^t| / bound^t`` seen at any step."""

    def __init__(self, model, omega, dt, record_steps, mode="projected", eps=None, band=True):
        self.model, self.omega, self.dt = model, omega, dt
        self.record_steps = list(record_steps)
        self.mode, self.eps, self.band = mode, eps, band

    def start(self, x, F):
        B = len(x)
        R, C = len(self.record_steps), fa.dim(self.model.dim, self.omega.degree)
        self.fn = BatchedFunctional(self.model, self.omega.degree, B, self.dt, self.mode, self.eps, band=self.band)
        self.value = np.zeros((B, R, C))
        self.bound = np.zeros((B, R))
        self.ltime = np.zeros((B, R))
        self.plain = np.zeros((B, R))
        self.ratio = np.zeros(B)
        self._record(0, x, F, np.zeros(B))

    def _record(self, k, x, F, ltime):
        for j, s in enumerate(self.record_steps):
            if s == k:
                w = lift(self.model, self.omega, x, F)
                self.value[:, j] = np.einsum("bij,bj->bi", self.fn.M, w)
                self.plain[:, j] = np.linalg.norm(w, axis=-1)
                self.bound[:, j] = self.fn.bound * self.plain[:, j]
                self.ltime[:, j] = ltime

    def update(self, step):
        self.fn.update(step)
        M = self.fn.M
        if M.shape[-1]:
            top = np.sqrt(np.maximum(np.linalg.eigvalsh(np.swapaxes(M, -1, -2) @ M)[:, -1], 0.0))
            self.ratio = np.maximum(self.ratio, top / self.fn.bound)
        self._record(step.k, step.x, step.F, step.ltime)

    def result(self):
        return {"value": self.value, "bound": self.bound, "plain": self.plain, "ltime": self.ltime, "ratio": self.ratio}


def _to_chart(model, x0, F0, q, vec):
    """Frame coefficients at ``u0`` to chart coefficients."""
    C = fa.compound_matrix(np.linalg.inv(F0), q)
    return np.einsum("ji,...j->...i", C, vec)


def simulate_fk(model, omega, x0, t, n_paths, dt, seed, frame0=None, mode="projected", eps=None, threads=1, band=True):
    """Raw per-path arrays for the Feynman-Kac and bound functionals."""
    _check_paths(n_paths)
    ts = _times(t)
    steps = [n_steps_for(s, dt) for s in ts]
    res = run_blocks(
        model,
        x0,
        frame0,
        dt,
        max(steps),
        n_paths,
        seed,
        lambda: FKObserver(model, omega, dt, steps, mode, eps, band),
        threads=threads,
    )
    return ts, res


def fk_and_bound(model, omega: FormField, x0, t, n_paths, dt, seed, frame0=None, mode="projected", eps=None, threads=1, basis="frame", band=True):
    """Feynman-Kac estimate and pointwise bound on the same paths.

    Returns ``(fk_reports, bound_reports, max_norm_ratio)`` with one report per time.
    """
    q = omega.degree
    x0 = np.asarray(x0, dtype=float)
    ts, res = simulate_fk(model, omega, x0, t, n_paths, dt, seed, frame0, mode, eps, threads, band)
    F0 = model.frame(x0[None])[0] if frame0 is None else np.asarray(frame0, dtype=float)
    dig = digest_of(model=model, omega=omega, x0=x0, t=ts, n_paths=n_paths, dt=dt, seed=seed, mode=mode, eps=eps, basis=basis, frame0=F0)
    fks, bds = [], []
    for j, s in enumerate(ts):
        v = res["value"][:, j]
        if basis == "chart":
            v = _to_chart(model, x0, F0, q, v)
        elif basis != "frame":
            raise ValueError("basis must be 'frame' or 'chart'")
        m, se = mean_stderr(v)
        fks.append(EstimateReport(m, se, n_paths, seed, s, dig, extra={"mean_ltime": mean_stderr(res["ltime"][:, j])[0], "basis": basis}))
        bm, bse = mean_stderr(res["bound"][:, j])
        bds.append(EstimateReport(bm, bse, n_paths, seed, s, dig))
    return fks, bds, float(np.max(res["ratio"], initial=0.0))


def fk_expectation(model, omega: FormField, x0, t, q=None, n_paths=1000, dt=1e-3, seed=0, frame0=None, mode="projected", eps=None, basis="frame", threads=1):
    """Estimate of ``omega_t(u0)`` as the mean of ``M^t omega0(u^t)``.

    ``basis="frame"`` reports coefficients on the frame ``u0``; ``"chart"``
    converts them to ``dx^I`` coefficients. A list of times gives a list.
    """
    if q is not None and q != omega.degree:
        raise ValueError(f"field degree {omega.degree} does not match q={q}")
    fks, _, _ = fk_and_bound(model, omega, x0, t, n_paths, dt, seed, frame0, mode, eps, threads, basis)
    return fks if np.ndim(t) else fks[0]


def pointwise_bound(model, norm_field, x0, t, q, n_paths=1000, dt=1e-3, seed=0, frame0=None, threads=1):
    """Estimate of ``E[|omega0(x^t)| exp(-int r_(q) ds / 2 - int rho_(q) dl)]``.

    ``norm_field`` is a form field (its pointwise norm is used) or a callable
    returning ``|omega0|`` at chart points.
    """
    if isinstance(norm_field, FormField):
        def func(x):
            return pointwise_norm(model, norm_field, x)[:, None]
    else:
        def func(x):
            return np.asarray(norm_field(x), dtype=float).reshape(len(x), 1)
    scalar = FormField(model.dim, 0, func, "chart", getattr(norm_field, "name", "norm"))
    x0 = np.asarray(x0, dtype=float)
    ts, res = run_q_bound(model, scalar, q, x0, t, n_paths, dt, seed, frame0, threads)
    dig = digest_of(model=model, field=scalar, q=q, x0=x0, t=ts, n_paths=n_paths, dt=dt, seed=seed)
    out = []
    for j, s in enumerate(ts):
        m, se = mean_stderr(res["weighted"][:, j])
        out.append(EstimateReport(m, se, n_paths, seed, s, dig))
    return out if np.ndim(t) else out[0]


class _BoundObserver(Observer):
    def __init__(self, model, scalar, q, dt, record_steps):
        self.model, self.scalar, self.q, self.dt = model, scalar, q, dt
        self.record_steps = list(record_steps)

    def start(self, x, F):
        self.fn = BatchedFunctional(self.model, self.q, len(x), self.dt)
        self.out = np.zeros((len(x), len(self.record_steps)))
        self._record(0, x)

    def _record(self, k, x):
        for j, s in enumerate(self.record_steps):
            if s == k:
                self.out[:, j] = self.fn.bound * self.scalar(x)[:, 0]

    def update(self, step):
        self.fn.update(step)
        self._record(step.k, step.x)

    def result(self):
        return {"weighted": self.out}


def run_q_bound(model, scalar, q, x0, t, n_paths, dt, seed, frame0=None, threads=1):
    _check_paths(n_paths)
    ts = _times(t)
    steps = [n_steps_for(s, dt) for s in ts]
    res = run_blocks(model, x0, frame0, dt, max(steps), n_paths, seed, lambda: _BoundObserver(model, scalar, q, dt, steps), threads=threads)
    return ts, res


# ---------------------------------------------------------------------------
# exponential functionals: s.s.p. rate and theta_q


def curvature_weights(model: ManifoldModel, q: int):
    """``(alpha, beta) = (r_(q), rho_(q))`` as callables on chart points."""
    r = model.sectional * q * (model.dim - q)

    def alpha(x):
        return np.full(len(x), r)

    def beta(p):
        if q == 0:
            return np.zeros(len(p))
        _, A = boundary_frame_data(model, p, model.frame(p))
        return np.sum(tangential_curvatures(A)[:, :q], axis=-1)

    return alpha, beta


def _as_callable(f):
    if f is None:
        return lambda x: np.zeros(len(x))
    if callable(f):
        return f
    c = float(f)
    return lambda x: np.full(len(x), c)


class ExponentObserver(Observer):
    """Accumulates ``-int alpha ds / 2 - int beta dl`` (left endpoint in time,
    boundary projection for ``beta``)."""

    def __init__(self, model, alpha, beta, dt, record_steps):
        self.model, self.alpha, self.beta, self.dt = model, alpha, beta, dt
        self.record_steps = list(record_steps)

    def start(self, x, F):
        self.acc = np.zeros(len(x))
        self.out = np.zeros((len(x), len(self.record_steps)))
        self._record(0)

    def _record(self, k):
        for j, s in enumerate(self.record_steps):
            if s == k:
                self.out[:, j] = self.acc

    def update(self, step):
        self.acc -= 0.5 * self.dt * self.alpha(step.x_prev)
        rows = np.flatnonzero(step.dl > 0)
        if rows.size:
            p = self.model.project(step.x[rows])
            self.acc[rows] -= self.beta(p) * step.dl[rows]
        self._record(step.k)

    def result(self):
        return {"exponent": self.out}


def _log_mean_exp(E):
    """``log mean exp`` along axis 0 with clipping at ``EXP_CLIP``."""
    clipped = int(np.sum(E > EXP_CLIP))
    E = np.minimum(E, EXP_CLIP)
    m = np.max(E, axis=0)
    return m + np.log(np.mean(np.exp(E - m), axis=0)), clipped


def _exponents(model, alpha, beta, x0, t_grid, n_paths, dt, seed, threads):
    steps = [n_steps_for(s, dt) for s in t_grid]
    res = run_blocks(model, x0, None, dt, max(steps), n_paths, seed, lambda: ExponentObserver(model, alpha, beta, dt, steps), threads=threads)
    return res["exponent"]


@dataclass
class RateReport:
    slope: float
    ci: tuple[float, float]
    t: list
    log_mean: list
    ssp: bool
    clipped: int
    n_paths: int
    seed: int
    digest: str


def _slope(t, y):
    t = np.asarray(t)
    A = np.vstack([t, np.ones_like(t)]).T
    return float(np.linalg.lstsq(A, np.asarray(y), rcond=None)[0][0])


def ssp_rate(model, alpha, beta, x0s, t_grid, n_paths=1000, dt=1e-2, seed=0, n_boot=200, threads=1) -> RateReport:
    """Least-squares slope of ``sup_K log E[exp(-int alpha / 2 - int beta dl)]`` in t.

    ``x0s`` is the finite grid standing in for the compact set K. The CI comes
    from a path bootstrap; the pair is declared s.s.p. when the CI lies below 0.
    """
    _check_paths(n_paths)
    t_grid = [float(s) for s in t_grid]
    if len(t_grid) < 4 or any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("t grid must be increasing with at least 4 points")
    alpha, beta = _as_callable(alpha), _as_callable(beta)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    exps = [_exponents(model, alpha, beta, x0, t_grid, n_paths, dt, seed + 7919 * i, threads) for i, x0 in enumerate(x0s)]
    clipped = 0
    logs = []
    for E in exps:
        lm, c = _log_mean_exp(E)
        logs.append(lm)
        clipped += c
    sup = np.max(np.array(logs), axis=0)
    slope = _slope(t_grid, sup)
    rng = np.random.default_rng([seed, 0xB007])
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, n_paths, n_paths)
        bl = np.max([_log_mean_exp(E[idx])[0] for E in exps], axis=0)
        boots.append(_slope(t_grid, bl))
    lo, hi = (float(v) for v in np.percentile(boots, [2.5, 97.5]))
    if hi - lo == 0.0:
        lo = hi = slope
    dig = digest_of(model=model, alpha=alpha, beta=beta, x0s=x0s, t=t_grid, n_paths=n_paths, dt=dt, seed=seed)
    return RateReport(slope, (min(lo, slope), max(hi, slope)), t_grid, sup.tolist(), max(hi, slope) < 0, clipped, n_paths, seed, dig)


@dataclass
class ThetaReport:
    value: float
    stderr: float
    tail_rate: float
    tail: float
    finite: bool
    t: list
    mean: list
    clipped: int


def theta_q(model, q, x0, T_max, n_paths=1000, dt=1e-2, seed=0, n_grid=41, alpha=None, beta=None, threads=1) -> ThetaReport:
    """Truncated ``int_0^T E[exp(-int r_(q) / 2 - int rho_(q) dl)] dt`` and a tail fit.

    ``alpha`` and ``beta`` override the curvature weights. The tail is the
    exponential fitted to the second half of the grid; it is finite only when
    the fitted rate is negative.
    """
    _check_paths(n_paths)
    if T_max <= 0:
        raise ValueError("T_max must be positive")
    a0, b0 = curvature_weights(model, q)
    alpha = a0 if alpha is None else _as_callable(alpha)
    beta = b0 if beta is None else _as_callable(beta)
    grid = list(np.linspace(0.0, T_max, n_grid))
    E = _exponents(model, alpha, beta, x0, grid, n_paths, dt, seed, threads)
    clipped = int(np.sum(E > EXP_CLIP))
    W = np.exp(np.minimum(E, EXP_CLIP))
    mean = W.mean(axis=0)
    per_path = trapezoid(W, grid, axis=1)
    value, se = mean_stderr(per_path)
    half = n_grid // 2
    rate = _slope(grid[half:], np.log(mean[half:]))
    tail = float(mean[-1] / -rate) if rate < 0 else math.inf
    return ThetaReport(value, se, rate, tail, rate < 0, grid, mean.tolist(), clipped)


# ---------------------------------------------------------------------------
# semigroup domination


@dataclass
class DominationReport:
    passed: bool
    t: list
    lhs: list
    rhs: list
    margin: list
    stderr: list
    r_min: float


def sampled_rho_min(model, q, rng, m=1000):
    """Smallest sampled ``rho_(q)`` and the point where it occurs."""
    if not model.has_boundary or q == 0:
        return math.inf, None
    p = model.sample_boundary_points(rng, m)
    _, beta = curvature_weights(model, q)
    rho = beta(p)
    i = int(np.argmin(rho))
    return float(rho[i]), p[i]


def domination_check(model, q, omega: FormField, x0, t, n_paths=1000, dt=1e-3, seed=0, threads=1) -> DominationReport:
    """Checks ``|omega_t(x0)| <= C(n,q) exp(-t r_min / 2) E[|omega0(x^t)|]`` on shared paths."""
    if omega.degree != q:
        raise ValueError("field degree does not match q")
    rng = np.random.default_rng([seed, 0xD0])
    rho_min, witness = sampled_rho_min(model, q, rng)
    if rho_min < -1e-12:
        raise PreconditionError(f"rho_({q}) = {rho_min:.6g} < 0 at boundary point {np.asarray(witness).tolist()}")
    pts = model.sample_points(rng, 200)
    r_min = float(np.min(r_q_at(model, pts, q)))
    const = math.comb(model.dim, q)
    ts, res = simulate_fk(model, omega, x0, t, n_paths, dt, seed, threads=threads)
    lhs, rhs, margin, ses = [], [], [], []
    for j, s in enumerate(ts):
        v = res["value"][:, j]
        mean_v, _ = mean_stderr(v)
        nrm = float(np.linalg.norm(mean_v))
        e = mean_v / nrm if nrm > 0 else np.zeros_like(mean_v)
        plain = res["plain"][:, j]
        scale = const * math.exp(-s * r_min / 2)
        diff = scale * plain - v @ e
        m, se = mean_stderr(diff)
        lhs.append(nrm)
        rhs.append(mean_stderr(scale * plain)[0])
        margin.append(m)
        ses.append(se)
    passed = all(m - 2 * se >= 0 for m, se in zip(margin, ses))
    return DominationReport(passed, ts, lhs, rhs, margin, ses, r_min)


# ---------------------------------------------------------------------------
# long-time diagnostics


@dataclass
class OccupationReport:
    T: list
    occupation: list
    stderr: list
    increment_ratio: float
    transient: bool


def occupation_diagnostic(model, x0, center, radius, T_grid, n_paths=1000, dt=1e-2, seed=0, threshold=0.2, threads=1) -> OccupationReport:
    """Mean time spent in a chart ball up to each ``T``.

    The grid must end with two doublings ``T/4, T/2, T``. The indicator uses
    the relative growth over them, ``(occ(T) - occ(T/4)) / occ(T)``: it tends
    to 0 for transient motion and stays at ``1 - 4^{-1/2} = 0.5`` for
    one-dimensional recurrent motion.
    """
    _check_paths(n_paths)
    T_grid = [float(s) for s in T_grid]
    if len(T_grid) < 3 or not (math.isclose(T_grid[-2] * 2, T_grid[-1]) and math.isclose(T_grid[-3] * 4, T_grid[-1])):
        raise ValueError("T grid must end with T/4, T/2, T")
    steps = [n_steps_for(s, dt) for s in T_grid]
    res = run_blocks(model, x0, None, dt, max(steps), n_paths, seed, lambda: OccupationObserver(center, radius, dt, steps), threads=threads)
    occ, se = mean_stderr(res["occupation"])
    ratio = float((occ[-1] - occ[-3]) / occ[-1]) if occ[-1] > 0 else 0.0
    return OccupationReport(T_grid, occ.tolist(), se.tolist(), ratio, ratio < threshold)


@dataclass
class DecayReport:
    rate: float
    predicted: float
    ratio: float
    passed: bool
    t: list
    mean: list


def heat_decay_diagnostic(model, omega: FormField, x0, t_grid, n_paths=1000, dt=1e-2, seed=0, kappa=1.0, fraction=0.5, threads=1) -> DecayReport:
    """Fitted exponential decay rate of ``E[f(x^t)]`` against ``(n-1)^2 kappa / 8``."""
    if omega.degree != 0:
        raise ValueError("heat decay diagnostic takes a function")
    ts, res = simulate_fk(model, omega, x0, t_grid, n_paths, dt, seed, threads=threads)
    mean = res["value"][:, :, 0].mean(axis=0)
    rate = -_slope(ts, np.log(np.maximum(mean, 1e-300)))
    pred = (model.dim - 1) ** 2 * kappa / 8
    return DecayReport(rate, pred, rate / pred, rate >= fraction * pred, ts, mean.tolist())


def local_time_mean(model, x0, t, n_paths, dt, seed, threads=1):
    """Mean local time at each time in ``t`` with standard errors."""
    _check_paths(n_paths)
    ts = _times(t)
    steps = [n_steps_for(s, dt) for s in ts]
    res = run_blocks(model, x0, None, dt, max(steps), n_paths, seed, lambda: LocalTimeObserver(steps), threads=threads)
    return ts, *mean_stderr(res["ltime"])
