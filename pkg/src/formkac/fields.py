"""Named q-form fields used as initial data.

A field maps chart points ``(B, n)`` to coefficient arrays ``(B, C(n,q))``.
Coefficients refer either to the chart coframe ``dx^I`` (``basis="chart"``)
or to the model's canonical orthonormal coframe (``basis="frame"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import form_algebra as fa


@dataclass(frozen=True)
class FormField:
    n: int
    degree: int
    func: Callable[[np.ndarray], np.ndarray]
    basis: str = "chart"
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis not in ("chart", "frame"):
            raise ValueError("basis must be 'chart' or 'frame'")
        if not 0 <= self.degree <= self.n:
            raise ValueError(f"degree {self.degree} does not fit dimension {self.n}")

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.asarray(self.func(x), dtype=float).reshape(len(x), fa.dim(self.n, self.degree))
        if not np.all(np.isfinite(out)):
            raise ValueError(f"field {self.name!r} produced non-finite values")
        return out

    def scaled(self, s: float) -> "FormField":
        return FormField(self.n, self.degree, lambda x: s * self.func(x), self.basis, self.name, {**self.params, "scale": s})


def lift(model, omega: FormField, x, F) -> np.ndarray:
    """Coefficients ``omega(u e_I)`` of the form on the frame ``F`` at ``x``."""
    q = omega.degree
    coeffs = omega(x)
    if omega.basis == "frame":
        F = np.linalg.solve(model.frame(x), F)
    return np.einsum("...ji,...j->...i", fa.compound_matrix(F, q), coeffs)


def pointwise_norm(model, omega: FormField, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.linalg.norm(lift(model, omega, x, model.frame(x)), axis=-1)


def _index(n, indices):
    return fa.basis(n, len(indices)).index(tuple(indices))


def constant(n, q, coeffs=None, basis="chart"):
    c = np.ones(fa.dim(n, q)) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (fa.dim(n, q),):
        raise ValueError(f"need {fa.dim(n, q)} coefficients")
    return FormField(n, q, lambda x: np.broadcast_to(c, (len(x), len(c))), basis, "constant", {"coeffs": c.tolist()})


def g_normal(s):
    """Profile ``s exp(-s^2)`` of the normal component."""
    return s * np.exp(-s * s)


def f_tangential(s):
    """Even profile ``exp(-s^2)``."""
    return np.exp(-s * s)


def normal_mix(n, normal_weight=1.0, tangential_weight=1.0):
    """1-form ``a g(x_n) dx^n + b f(x_n) dx^1`` on the half-space chart."""
    i_n = _index(n, (n - 1,))
    i_1 = _index(n, (0,))

    def func(x):
        out = np.zeros((len(x), n))
        s = x[:, -1]
        out[:, i_n] = normal_weight * g_normal(s)
        out[:, i_1] += tangential_weight * f_tangential(s)
        return out

    return FormField(n, 1, func, "chart", "normal_mix", {"normal_weight": normal_weight, "tangential_weight": tangential_weight})


def even_bump(n, width=1.0):
    """Function ``exp(-(x_n / width)^2)``, even in the normal coordinate."""
    return FormField(n, 0, lambda x: np.exp(-((x[:, -1] / width) ** 2))[:, None], "chart", "even_bump", {"width": width})


def gaussian(n, center, width=0.5):
    c = np.asarray(center, dtype=float)
    return FormField(n, 0, lambda x: np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width**2))[:, None], "chart", "gaussian", {"center": c.tolist(), "width": width})


def frame_wave(n, q, k=1.0, seed=0):
    """Bounded field with oscillating orthonormal-frame coefficients ``cos(k w_I . x + phi_I)``."""
    rng = np.random.default_rng(seed)
    C = fa.dim(n, q)
    W = rng.standard_normal((C, n))
    phi = rng.uniform(0, 2 * np.pi, C)

    def func(x):
        return np.cos(k * x @ W.T + phi) / np.sqrt(C)

    return FormField(n, q, func, "frame", "frame_wave", {"k": k, "seed": seed})


FIELDS = {
    "constant": constant,
    "normal_mix": normal_mix,
    "even_bump": even_bump,
    "gaussian": gaussian,
    "frame_wave": frame_wave,
}


def make_field(name: str, n: int, q: int, **params) -> FormField:
    if name not in FIELDS:
        raise ValueError(f"unknown field {name!r}; known: {', '.join(FIELDS)}")
    if name in ("constant", "frame_wave"):
        return FIELDS[name](n, q, **params)
    omega = FIELDS[name](n, **params)
    if omega.degree != q:
        raise ValueError(f"field {name!r} has degree {omega.degree}, not {q}")
    return omega


def smooth_bump(r2):
    """``exp(1 - 1 / (1 - r^2))`` for ``r^2 < 1``, else 0 (C-infinity, compact)."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(1 - 1 / (1 - r2[inside]))
    return out


def bump_form(n, q, center, radius, const, linear=None, basis="chart"):
    """Compactly supported form ``bump(|x - c| / radius) (a_I + b_I . (x - c))``."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(const, dtype=float)
    b = np.zeros((len(a), n)) if linear is None else np.asarray(linear, dtype=float)

    def func(x):
        y = x - c
        return smooth_bump(np.sum(y * y, axis=-1) / radius**2)[:, None] * (a + y @ b.T)

    params = {"center": c.tolist(), "radius": radius, "const": a.tolist(), "linear": b.tolist()}
    return FormField(n, q, func, basis, "bump_form", params)


def random_bump_form(rng, n, q, center, radius, basis="chart"):
    C = fa.dim(n, q)
    return bump_form(n, q, center, radius, rng.standard_normal(C), rng.standard_normal((C, n)) / radius, basis)
