import csv
import math

import numpy as np
import pytest
from scipy import integrate

from formkac import form_algebra as fa
from formkac.errors import DomainError, PreconditionError
from formkac.fields import FormField, bump_form, constant, even_bump, normal_mix, random_bump_form
from formkac.geometry import make_model
from formkac.oracles import (
    GridField,
    Quadrature,
    codifferential_fd,
    codifferential_sign,
    dx_constant,
    dx_inequality_eval,
    exterior_derivative_fd,
    halfspace_evolve,
    halfspace_form_oracle,
    halfspace_kernel,
    intfor_check,
    pde_solve_1d,
    quadratic_function,
    write_csv,
)


def neumann_gauss(t, x):
    """Heat flow of exp(-s^2) (even extension) at time t."""
    return np.exp(-(x**2) / (1 + 2 * t)) / np.sqrt(1 + 2 * t)


def dirichlet_sgauss(t, x):
    """Heat flow of s exp(-s^2) (odd extension) at time t."""
    return x * np.exp(-(x**2) / (1 + 2 * t)) / (1 + 2 * t) ** 1.5


# image kernels


@pytest.mark.parametrize("t,x", [(0.1, 0.0), (1.0, 0.5), (3.0, 2.0)])
def test_neumann_kernel_has_unit_mass(t, x):
    mass = integrate.quad(lambda y: halfspace_kernel("neumann", t, x, y), 0, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    assert abs(mass - 1.0) < 1e-10


def test_kernel_examples():
    assert halfspace_kernel("dirichlet", 0.7, 0.0, 1.3) == 0.0
    assert halfspace_kernel("neumann", 1.0, 0.0, 0.0) == pytest.approx(2 / math.sqrt(2 * math.pi), rel=1e-14)
    assert halfspace_kernel("Neumann", 1.0, 0.3, 0.4) == pytest.approx(halfspace_kernel("neumann", 1.0, 0.4, 0.3))


def test_kernel_argument_errors():
    with pytest.raises(ValueError):
        halfspace_kernel("neumann", 0.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        halfspace_kernel("neumann", 1.0, -0.1, 0.1)
    with pytest.raises(ValueError):
        halfspace_kernel("robin", 1.0, 0.1, 0.1)


@pytest.mark.parametrize("kind", ["neumann", "dirichlet"])
def test_kernel_semigroup_property(kind):
    t, s, x, z = 0.4, 0.7, 0.3, 1.1
    composed = integrate.quad(lambda y: halfspace_kernel(kind, t, x, y) * halfspace_kernel(kind, s, y, z), 0, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    assert abs(composed - halfspace_kernel(kind, t + s, x, z)) < 1e-8


@pytest.mark.parametrize("t", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("x", [0.0, 0.6, 2.0])
def test_halfspace_evolve_matches_gaussian_closed_forms(t, x):
    assert halfspace_evolve("neumann", t, x, lambda y: math.exp(-y * y)) == pytest.approx(neumann_gauss(t, x), abs=1e-10)
    assert halfspace_evolve("dirichlet", t, x, lambda y: y * math.exp(-y * y)) == pytest.approx(dirichlet_sgauss(t, x), abs=1e-10)
    assert halfspace_evolve("neumann", 0.0, x, lambda y: y + 1) == x + 1


def test_form_oracle_splits_normal_and_tangential_components():
    omega = normal_mix(3, normal_weight=2.0, tangential_weight=-1.0)
    t, x = 0.5, np.array([0.3, -0.2, 0.6])
    out = halfspace_form_oracle(omega, t, x)
    assert out == pytest.approx([-neumann_gauss(t, 0.6), 0.0, 2 * dirichlet_sgauss(t, 0.6)], abs=1e-10)
    assert halfspace_form_oracle(even_bump(2), t, [0.0, 0.6])[0] == pytest.approx(neumann_gauss(t, 0.6), abs=1e-10)


def test_form_oracle_errors():
    with pytest.raises(ValueError):
        halfspace_form_oracle(constant(2, 1, basis="frame"), 1.0, [0.0, 0.5])
    with pytest.raises(DomainError):
        halfspace_form_oracle(normal_mix(2), 1.0, [0.0, -0.5])
    with pytest.raises(DomainError):
        halfspace_form_oracle(normal_mix(2), 1.0, [0.5])


# 1-D finite differences


def _grid(L=8.0, N=401):
    return np.linspace(0.0, L, N)


def test_grid_field_validation():
    with pytest.raises(ValueError):
        GridField([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        GridField([0.0, 2.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        GridField([0.0, 1.0, 3.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        GridField([0.0, 1.0, 2.0], [1.0, np.nan, 1.0])
    with pytest.raises(ValueError):
        GridField([0.0, 1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        GridField([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], bc="periodic")
    assert GridField([0.0, 1.0, 2.0], [0, 0, 0], ("robin", 0.5)).robin_coefficient == 0.5
    assert GridField([0.0, 1.0, 2.0], [0, 0, 0], "dirichlet").robin_coefficient is None


def test_pde_constant_is_stationary_under_neumann():
    u = pde_solve_1d(GridField(_grid(), np.full(401, 3.0)), 1.0, 2500)
    assert np.abs(u.values - 3.0).max() < 1e-12


def test_pde_matches_free_gaussian_away_from_boundaries():
    g = _grid(16.0, 801)
    c = 8.0
    u0 = np.exp(-((g - c) ** 2))
    u = pde_solve_1d(GridField(g, u0), 0.5, 1250)
    assert np.abs(u.values - neumann_gauss(0.5, g - c)).max() < 1e-4


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_pde_dirichlet_matches_image_method(t):
    g = _grid()
    u = pde_solve_1d(GridField(g, g * np.exp(-g * g), "dirichlet"), t, int(2500 * t))
    xs = np.linspace(0.0, 4.0, 9)
    image = np.array([halfspace_evolve("dirichlet", t, x, lambda y: y * math.exp(-y * y)) for x in xs])
    assert np.abs(u.at(xs) - image).max() < 1e-4
    assert u.values[0] == 0.0


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_pde_neumann_matches_image_method_and_conserves_mass(t):
    g = _grid()
    f0 = GridField(g, np.exp(-g * g))
    u = pde_solve_1d(f0, t, int(2500 * t))
    assert np.abs(u.values[:201] - neumann_gauss(t, g[:201])).max() < 1e-4
    assert abs(u.mass() - f0.mass()) < 1e-10 * max(t, 1.0)


def test_pde_robin_zero_equals_neumann_and_positive_robin_loses_mass():
    g = _grid()
    u0 = np.exp(-g * g)
    a = pde_solve_1d(GridField(g, u0, "neumann"), 0.5, 1250)
    b = pde_solve_1d(GridField(g, u0, ("robin", 0.0)), 0.5, 1250)
    assert np.array_equal(a.values, b.values)
    c = pde_solve_1d(GridField(g, u0, ("robin", 1.0)), 0.5, 1250)
    assert c.mass() < a.mass()


def test_pde_argument_errors():
    f = GridField(_grid(), np.ones(401))
    with pytest.raises(ValueError, match="CFL"):
        pde_solve_1d(f, 1.0, 1)
    with pytest.raises(ValueError):
        pde_solve_1d(f, -1.0, 10)
    with pytest.raises(ValueError):
        pde_solve_1d(f, 1.0, 0)
    assert np.array_equal(pde_solve_1d(f, 0.0, 1).values, f.values)


# numerical exterior calculus


def test_exterior_derivative_of_x1_dx2():
    model = make_model("euclidean", 3)
    omega = FormField(3, 1, lambda x: np.stack([np.zeros(len(x)), x[:, 0], np.zeros(len(x))], -1))
    d = exterior_derivative_fd(model, omega, [[0.3, 0.1, -0.4]])[0]
    expected = np.zeros(3)
    expected[fa.basis(3, 2).index((0, 1))] = 1.0
    assert np.allclose(d, expected, atol=1e-8)


@pytest.mark.parametrize("name", ["euclidean", "hyperbolic"])
def test_d_squared_vanishes(name):
    model = make_model(name, 3)
    rng = np.random.default_rng(0)
    omega = random_bump_form(rng, 3, 1, [0.0, 0.0, 1.0], 0.6)
    x = np.array([[0.1, -0.15, 1.05], [0.0, 0.2, 0.9]])
    d_omega = FormField(3, 2, lambda y: exterior_derivative_fd(model, omega, y, 1e-4), "frame")
    dd = exterior_derivative_fd(model, d_omega, x, 1e-3)
    scale = np.abs(d_omega(x)).max()
    assert np.abs(dd).max() < 1e-5 * scale


def test_codifferential_of_function_times_dx1_is_minus_derivative():
    model = make_model("euclidean", 2)
    omega = FormField(2, 1, lambda x: np.stack([np.sin(x[:, 0]), np.zeros(len(x))], -1))
    x = np.array([[0.4, 0.0], [1.3, 2.0]])
    assert np.allclose(codifferential_fd(model, omega, x)[:, 0], -np.cos(x[:, 0]), atol=1e-8)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_codifferential_of_d_log_y_on_hyperbolic_space(n):
    # d* d f = -Laplace-Beltrami f, and Delta_H log y = -(n - 1)
    model = make_model("hyperbolic", n)
    omega = FormField(n, 1, lambda x: np.concatenate([np.zeros((len(x), n - 1)), 1 / x[:, -1:]], -1))
    x = model.sample_points(np.random.default_rng(1), 4)
    assert np.allclose(codifferential_fd(model, omega, x, 1e-4)[:, 0], n - 1, atol=1e-6)


def test_codifferential_sign_values():
    assert [codifferential_sign(2, q) for q in (1, 2)] == [-1, -1]
    assert [codifferential_sign(3, q) for q in (1, 2, 3)] == [-1, 1, -1]


def test_stencil_outside_chart_raises():
    model = make_model("hyperbolic", 2)
    with pytest.raises(DomainError):
        exterior_derivative_fd(model, constant(2, 1), [[0.0, 5e-5]], h=1e-4)


# integral identity


def _legendre_ball_norm2(omega, c, s, m=40):
    z, w = np.polynomial.legendre.leggauss(m)
    n = omega.n
    grids = np.meshgrid(*[c[k] + s * z for k in range(n)], indexing="ij")
    ws = np.meshgrid(*[s * w] * n, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], -1)
    wt = np.prod(np.stack([g.ravel() for g in ws], -1), -1)
    return float(np.sum(wt * np.sum(omega(pts) ** 2, -1)))


FINE = Quadrature(8, 10)


def test_intfor_zero_form():
    model = make_model("euclidean", 2)
    omega = bump_form(2, 1, [0.0, 0.0], 0.5, [0.0, 0.0])
    r = intfor_check(model, quadratic_function(np.eye(2), [0.0, 0.0]), omega)
    assert r.lhs == r.rhs == r.residual == 0.0


@pytest.mark.parametrize("q", [1, 2])
def test_intfor_linear_function_flat(q):
    rng = np.random.default_rng(2)
    model = make_model("euclidean", 3)
    omega = random_bump_form(rng, 3, q, [0.1, 0.0, -0.1], 0.8)
    r = intfor_check(model, quadratic_function(np.zeros((3, 3)), rng.standard_normal(3)), omega, FINE)
    assert r.residual < 1e-6
    assert r.volume_terms[2] == r.volume_terms[3] == 0.0


@pytest.mark.parametrize("q", [1, 2])
def test_intfor_half_square_norm_flat(q):
    n = 3
    rng = np.random.default_rng(3)
    model = make_model("euclidean", n)
    c = np.array([0.2, -0.1, 0.0])
    omega = random_bump_form(rng, n, q, c, 0.7)
    r = intfor_check(model, quadratic_function(np.eye(n), np.zeros(n)), omega, FINE)
    assert r.residual < 1e-5
    assert r.lhs == pytest.approx((q - n / 2) * _legendre_ball_norm2(omega, c, 0.7), rel=1e-4)


@pytest.mark.parametrize("name,params,center", [("ball", {"r0": 1.0}, [0.1, 0.2, 0.0]), ("halfspace", {}, [0.0, 0.1, 0.2])])
@pytest.mark.parametrize("q", [1, 2])
def test_intfor_with_boundary_terms(name, params, center, q):
    rng = np.random.default_rng(4)
    model = make_model(name, 3, **params)
    f = quadratic_function(rng.standard_normal((3, 3)), rng.standard_normal(3))
    omega = random_bump_form(rng, 3, q, center, 2.0 if name == "ball" else 0.8)
    quad = Quadrature() if name == "ball" else FINE
    coarse = intfor_check(model, f, omega, quad, h=2e-3)
    fine = intfor_check(model, f, omega, quad, h=1e-3)
    assert fine.residual < 1e-5
    assert any(b != 0 for b in fine.boundary_terms)
    assert math.log(coarse.residual / fine.residual) / math.log(2) >= 1.8


def test_intfor_on_hyperbolic_space():
    rng = np.random.default_rng(5)
    model = make_model("hyperbolic", 3)
    omega = random_bump_form(rng, 3, 1, [0.0, 0.0, 1.0], 0.4)
    r = intfor_check(model, quadratic_function(rng.standard_normal((3, 3)), rng.standard_normal(3)), omega, FINE)
    assert r.residual < 1e-5 * max(1.0, abs(r.lhs))


def test_intfor_preconditions():
    model = make_model("hyperbolic", 2)
    f = quadratic_function(np.eye(2), np.zeros(2))
    with pytest.raises(PreconditionError):
        intfor_check(model, f, bump_form(2, 1, [0.0, 0.5], 0.5, [1.0, 0.0]))
    with pytest.raises(PreconditionError):
        intfor_check(model, f, constant(2, 1))
    with pytest.raises(PreconditionError):
        intfor_check(make_model("halfspace", 2), f, bump_form(2, 1, [0.0, -1.0], 0.5, [1.0, 0.0]))


# distance-function estimate


def test_dx_zero_form_gives_zero():
    model = make_model("hyperbolic", 4)
    omega = bump_form(4, 1, [0, 0, 0, 1.0], 0.5, np.zeros(4), basis="frame")
    for r in dx_inequality_eval(model, 1, 1.0, omega, [1.0, 3.0]):
        assert r.lhs == r.mid == r.rhs == 0.0
        assert r.holds and r.relative_gap == 0.0


def test_dx_far_center_constant_is_close_to_limit():
    rng = np.random.default_rng(6)
    model = make_model("hyperbolic", 4)
    omega = random_bump_form(rng, 4, 1, [0, 0, 0, 1.0], 0.5, "frame")
    (r,) = dx_inequality_eval(model, 1, 1.0, omega, [5.0])
    assert r.constant == dx_constant(4, 1, 1.0) == 0.5
    assert r.relative_gap <= 1 / math.tanh(5.0) - 1
    assert r.extra["min_distance"] >= 5.0 - 1e-9


@pytest.mark.parametrize("n,p", [(3, 0), (4, 1)])
def test_dx_inequality_holds_for_random_forms(n, p):
    rng = np.random.default_rng(7 + n)
    model = make_model("hyperbolic", n)
    for _ in range(2):
        omega = random_bump_form(rng, n, p, np.r_[np.zeros(n - 1), 1.0], 0.5, "frame")
        for r in dx_inequality_eval(model, p, 1.0, omega, [3.0, 5.0]):
            assert r.holds
            assert r.identity_residual < 1e-3 * r.lhs
            ratio = r.intermediate_constant / r.constant
            assert math.tanh(r.distance) <= ratio <= 1 / math.tanh(r.distance)


def test_dx_preconditions():
    omega = bump_form(3, 1, [0, 0, 1.0], 0.5, np.ones(3), basis="frame")
    with pytest.raises(PreconditionError):
        dx_inequality_eval(make_model("euclidean", 3), 1, 1.0, omega, [3.0])
    with pytest.raises(PreconditionError):
        dx_inequality_eval(make_model("hyperbolic", 3), 1, 1.5, omega, [3.0])
    with pytest.raises(PreconditionError):
        dx_inequality_eval(make_model("hyperbolic", 3), 1, 1.0, omega, [0.0])
    with pytest.raises(ValueError):
        dx_inequality_eval(make_model("hyperbolic", 3), 2, 1.0, omega, [3.0])


def test_write_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1, 0.5], [2, "x"]])
    with open(path, newline="") as fh:
        assert list(csv.reader(fh)) == [["a", "b"], ["1", "0.5"], ["2", "x"]]
