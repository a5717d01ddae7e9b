"""Horizontal reflecting Brownian motion by stochastic development.

One step moves the point by ``sqrt(dt) * F @ xi`` along a geodesic, transports
the frame, reflects any excursion outside the manifold back along the distance
gradient and adds twice the penetration depth to the local time. With this
normalization ``x_t = x_0 + B_t + int nu dl`` in the flat half-space, so that on
the half-line ``E[l_t] = sqrt(2 t / pi)``.

Noise comes from Philox streams keyed by ``(seed, i // RNG_BLOCK)``; each stream
emits arrays of shape ``(steps, RNG_BLOCK, n)`` and path ``i`` reads column
``i % RNG_BLOCK``. A path is therefore a deterministic function of ``(seed, i)``
whatever the number of paths, the chunking or the number of worker threads.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, StepFailure
from .geometry import HalfSpace, ManifoldModel, make_model

BAND_FACTOR = 0.5
MAX_HALVINGS = 4
CHUNK_ELEMS = 1 << 21
RNG_BLOCK = 4096


@dataclass(frozen=True)
class PathState:
    x: np.ndarray
    frame: np.ndarray
    ltime: float
    t: float


class Step(NamedTuple):
    """Arrays describing one batched step; ``k`` counts completed steps."""

    k: int
    t: float
    x_prev: np.ndarray
    F_prev: np.ndarray
    x: np.ndarray
    F: np.ndarray
    dl: np.ndarray
    touched: np.ndarray
    ltime: np.ndarray


def rng_for_block(seed: int, block: int) -> np.random.Generator:
    key = np.array([int(seed) % 2**64, int(block) % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class NoiseSource:
    """Standard normal increments for an arbitrary set of path indices."""

    def __init__(self, seed: int, path_ids, n: int):
        ids = np.asarray(path_ids, dtype=np.int64)
        self.n = n
        self.groups = []
        for blk in np.unique(ids // RNG_BLOCK):
            rows = np.flatnonzero(ids // RNG_BLOCK == blk)
            self.groups.append((rng_for_block(seed, int(blk)), rows, ids[rows] % RNG_BLOCK))
        self.B = len(ids)
        self.full = len(self.groups) == 1 and len(ids) == RNG_BLOCK and np.all(np.diff(ids) == 1)

    @property
    def chunk(self) -> int:
        return max(1, CHUNK_ELEMS // (RNG_BLOCK * self.n))

    def draw(self, c: int) -> np.ndarray:
        """Next ``c`` steps as an array ``(c, B, n)``."""
        if self.full:
            return self.groups[0][0].standard_normal((c, RNG_BLOCK, self.n))
        out = np.empty((c, self.B, self.n))
        for gen, rows, cols in self.groups:
            out[:, rows] = gen.standard_normal((c, RNG_BLOCK, self.n))[:, cols]
        return out


def n_steps_for(T: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return max(0, math.ceil(T / dt - 1e-9))


def boundary_band(dt: float) -> float:
    return BAND_FACTOR * math.sqrt(dt)


def _reflect(model, x, F):
    dl = np.zeros(len(x))
    if not model.has_boundary:
        return x, F, dl
    if isinstance(model, HalfSpace):
        xn = x[:, -1]
        dl = -2.0 * np.minimum(xn, 0.0)
        x = x.copy()
        x[:, -1] = np.abs(xn)
        return x, F, dl
    x = x.copy()
    F = F.copy()
    for _ in range(3):
        d = model.signed_distance(x)
        out = np.flatnonzero(d < 0)
        if out.size == 0:
            return x, F, dl
        depth = -d[out]
        g = model.distance_gradient(x[out])
        xo, Fo = model.geodesic_step(x[out], 2.0 * depth[:, None] * g, F[out])
        x[out] = xo
        F[out] = Fo
        dl[out] += 2.0 * depth
    d = model.signed_distance(x)
    out = np.flatnonzero(d < 0)
    if out.size:
        x[out] = model.project(x[out])
        dl[out] += -d[out]
    return x, F, dl


def _raw_step(model, x, F, dt, xi, ident=False):
    v = math.sqrt(dt) * (xi if ident else np.einsum("bij,bj->bi", F, xi))
    x1, F1 = model.geodesic_step(x, v, F)
    x1, F1, dl = _reflect(model, x1, F1)
    if not model.flat_chart:
        F1 = model.orthonormalize(x1, F1)
    return model.wrap(x1), F1, dl


def _valid(model, x, F):
    ok = model.chart_valid(x) & np.all(np.isfinite(F), axis=(-2, -1))
    if model.has_boundary:
        with np.errstate(invalid="ignore"):
            ok &= model.signed_distance(x) >= -1e-9 * model.scale
    return ok


def batch_step(model: ManifoldModel, x, F, dt: float, xi, ident: bool = False):
    """Advance a batch by one step; failing rows are retried with ``2^k`` substeps.

    ``ident`` asserts that every frame is the identity of a flat chart.
    """
    with np.errstate(all="ignore"):
        x1, F1, dl = _raw_step(model, x, F, dt, xi, ident)
    if model.flat_chart:
        # flat steps and reflections are exact and cannot leave the chart
        return x1, F1, dl
    bad = np.flatnonzero(~_valid(model, x1, F1))
    for k in range(1, MAX_HALVINGS + 1):
        if bad.size == 0:
            break
        m = 2**k
        xs, Fs, dls = x[bad], F[bad], np.zeros(bad.size)
        with np.errstate(all="ignore"):
            for _ in range(m):
                xs, Fs, d = _raw_step(model, xs, Fs, dt / m, xi[bad] / math.sqrt(m))
                dls += d
        good = _valid(model, xs, Fs)
        x1[bad[good]] = xs[good]
        F1[bad[good]] = Fs[good]
        dl[bad[good]] = dls[good]
        bad = bad[~good]
    if bad.size:
        raise StepFailure(f"step from {x[bad[0]].tolist()} left the chart of {model.name!r} after {MAX_HALVINGS} halvings")
    return x1, F1, dl


def touched_mask(model, x, dl, dt):
    if not model.has_boundary:
        return np.zeros(len(x), dtype=bool)
    return (dl > 0) | (model.signed_distance(x) < boundary_band(dt))


def develop_step(model: ManifoldModel, state: PathState, dt: float, noise) -> PathState:
    """Single-path step driven by the given standard normal vector."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    xi = np.asarray(noise, dtype=float).reshape(1, model.dim)
    x1, F1, dl = batch_step(model, state.x[None], state.frame[None], dt, xi)
    return PathState(x1[0], F1[0], state.ltime + float(dl[0]), state.t + dt)


# ---------------------------------------------------------------------------
# batched simulation with observers


class Observer:
    """Receives every step of a block of paths and returns per-path arrays."""

    def start(self, x, F):
        pass

    def update(self, step: Step):
        raise NotImplementedError

    def result(self) -> dict:
        raise NotImplementedError


def initial_frames(model, x0, frame0=None):
    if frame0 is None:
        return model.frame(x0)
    F = np.broadcast_to(np.asarray(frame0, dtype=float), x0.shape[:-1] + (model.dim, model.dim)).copy()
    h = model.metric(x0)
    err = np.max(np.abs(np.swapaxes(F, -1, -2) @ h @ F - np.eye(model.dim)))
    if err > 1e-8:
        raise ValueError(f"initial frame is not orthonormal (defect {err:.3g})")
    return F


def check_start(model, x0):
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[-1] != model.dim:
        raise ValueError(f"start point has dimension {x0.shape[-1]}, model has {model.dim}")
    ok = model.chart_valid(x0)
    if model.has_boundary:
        ok &= model.signed_distance(x0) >= -1e-9 * model.scale
    if not np.all(ok):
        raise DomainError(f"start point {x0[~ok][0].tolist()} outside {model.name!r}")
    return x0


def simulate_block(model, x0, F0, dt, n_steps, seed, path_ids, observer: Observer):
    """Run the paths ``path_ids`` for ``n_steps`` steps, feeding ``observer``."""
    B, n = len(path_ids), model.dim
    source = NoiseSource(seed, path_ids, n)
    x = np.array(x0, dtype=float)
    F = np.array(F0, dtype=float)
    ltime = np.zeros(B)
    ident = model.flat_chart and bool(np.all(F == np.eye(n)))
    observer.start(x, F)
    k = 0
    while k < n_steps:
        c = min(source.chunk, n_steps - k)
        noise = source.draw(c)
        for j in range(c):
            x1, F1, dl = batch_step(model, x, F, dt, noise[j], ident)
            ltime = ltime + dl
            k += 1
            observer.update(Step(k, k * dt, x, F, x1, F1, dl, touched_mask(model, x1, dl, dt), ltime))
            x, F = x1, F1
    return observer.result()


def run_blocks(
    model: ManifoldModel,
    x0,
    frame0,
    dt: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    make_observer: Callable[[], Observer],
    threads: int = 1,
) -> dict:
    """Simulate ``n_paths`` paths in blocks of ``RNG_BLOCK``, optionally on several threads.

    ``x0`` is one start point or one per path. The per-path arrays returned by
    the observers are concatenated in path order.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x0 = check_start(model, x0)
    if len(x0) == 1:
        x0 = np.repeat(x0, n_paths, axis=0)
    elif len(x0) != n_paths:
        raise ValueError("need one start point or one per path")
    F0 = initial_frames(model, x0, frame0)
    starts = range(0, n_paths, RNG_BLOCK)

    def work(s):
        ids = np.arange(s, min(s + RNG_BLOCK, n_paths))
        return simulate_block(model, x0[ids], F0[ids], dt, n_steps, seed, ids, make_observer())

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}


class Recorder(Observer):
    """Keeps the full state history."""

    def start(self, x, F):
        self.xs, self.Fs = [x.copy()], [F.copy()]
        self.ls = [np.zeros(len(x))]
        self.dls, self.touched = [], []

    def update(self, step):
        self.xs.append(step.x)
        self.Fs.append(step.F)
        self.ls.append(step.ltime)
        self.dls.append(step.dl)
        self.touched.append(step.touched)

    def result(self):
        B = len(self.xs[0])
        return {
            "x": np.stack(self.xs, axis=1),
            "frame": np.stack(self.Fs, axis=1),
            "ltime": np.stack(self.ls, axis=1),
            "dl": np.stack(self.dls, axis=1) if self.dls else np.zeros((B, 0)),
            "touched": np.stack(self.touched, axis=1) if self.touched else np.zeros((B, 0), bool),
        }


class LocalTimeObserver(Observer):
    """Local time (and optionally position) at selected step counts."""

    def __init__(self, record_steps):
        self.record_steps = list(record_steps)

    def start(self, x, F):
        self.out = np.zeros((len(x), len(self.record_steps)))
        self.pos = np.zeros((len(x), len(self.record_steps), x.shape[1]))
        self._check(0, np.zeros(len(x)), x)

    def _check(self, k, ltime, x):
        for j, s in enumerate(self.record_steps):
            if s == k:
                self.out[:, j] = ltime
                self.pos[:, j] = x

    def update(self, step):
        self._check(step.k, step.ltime, step.x)

    def result(self):
        return {"ltime": self.out, "x": self.pos}


class OccupationObserver(Observer):
    """Time spent in the chart ball ``|x - center| < radius``, left-endpoint rule."""

    def __init__(self, center, radius, dt, record_steps):
        self.center = np.asarray(center, dtype=float)
        self.radius = radius
        self.dt = dt
        self.record_steps = list(record_steps)

    def start(self, x, F):
        self.acc = np.zeros(len(x))
        self.out = np.zeros((len(x), len(self.record_steps)))

    def update(self, step):
        inside = np.sum((step.x_prev - self.center) ** 2, axis=-1) < self.radius**2
        self.acc += self.dt * inside
        for j, s in enumerate(self.record_steps):
            if s == step.k:
                self.out[:, j] = self.acc

    def result(self):
        return {"occupation": self.out}


# ---------------------------------------------------------------------------
# single-path samples


@dataclass
class PathSample:
    """A stored discretized path: positions, frames and local time at ``t_k = k dt``."""

    model: ManifoldModel
    dt: float
    seed: int
    path_index: int
    x: np.ndarray
    frame: np.ndarray
    ltime: np.ndarray
    dl: np.ndarray
    touched: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.dl)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def states(self) -> list[PathState]:
        return [PathState(self.x[k], self.frame[k], float(self.ltime[k]), float(k * self.dt)) for k in range(self.n_steps + 1)]

    _MAGIC = b"FKPATH\x00\x01"

    def save(self, path) -> None:
        """Binary dump: magic, little-endian header, then little-endian doubles."""
        name = self.model.name.encode()
        params = repr(sorted(self.model.params.items())).encode()
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<IIdqqII", self.model.dim, self.n_steps, self.dt, self.seed, self.path_index, len(name), len(params)))
            fh.write(name)
            fh.write(params)
            for arr in (self.x, self.frame, self.ltime, self.dl, self.touched.astype(float)):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PathSample":
        import ast

        with open(path, "rb") as fh:
            if fh.read(8) != cls._MAGIC:
                raise ValueError("not a path dump (bad magic or version)")
            n, N, dt, seed, idx, ln, lp = struct.unpack("<IIdqqII", fh.read(struct.calcsize("<IIdqqII")))
            name = fh.read(ln).decode()
            params = dict(ast.literal_eval(fh.read(lp).decode()))
            data = np.frombuffer(fh.read(), dtype="<f8")
        sizes = [(N + 1) * n, (N + 1) * n * n, N + 1, N, N]
        parts = np.split(data, np.cumsum(sizes)[:-1])
        return cls(
            make_model(name, n, **params),
            dt,
            seed,
            idx,
            parts[0].reshape(N + 1, n),
            parts[1].reshape(N + 1, n, n),
            parts[2].copy(),
            parts[3].copy(),
            parts[4].astype(bool),
        )


def sample_paths(model, x0, frame0, T, dt, seed, n_paths=1, first_index=0) -> list[PathSample]:
    """Full histories of paths ``first_index .. first_index + n_paths - 1``."""
    n_steps = n_steps_for(T, dt)
    x0 = check_start(model, x0)
    ids = np.arange(first_index, first_index + n_paths)
    xs = np.repeat(x0, n_paths, axis=0) if len(x0) == 1 else x0
    F0 = initial_frames(model, xs, frame0)
    res = simulate_block(model, xs, F0, dt, n_steps, seed, ids, Recorder())
    return [
        PathSample(model, dt, seed, int(i), res["x"][b], res["frame"][b], res["ltime"][b], res["dl"][b], res["touched"][b])
        for b, i in enumerate(ids)
    ]


def sample_path(model, x0, frame0, T, dt, seed, path_index=0) -> PathSample:
    return sample_paths(model, x0, frame0, T, dt, seed, 1, path_index)[0]
