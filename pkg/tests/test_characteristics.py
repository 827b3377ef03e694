import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughpme.characteristics import (CharacteristicContext, TestBump, pi_backward, small_time_horizon,
                                      transport_test_function, weight_field, weight_v, xi_forward,
                                      xi_forward_dxi)
from roughpme.domain import CoefficientSpec, build_coefficients, build_grid, solve_phi
from roughpme.errors import ParameterError
from roughpme.rough_paths import from_samples, mollify, sample_fbm


def const_ctx(c=1.0, values=(0.0, math.log(2.0))):
    g = build_grid(1, 1.0, 33)
    coeffs = build_coefficients(g, [CoefficientSpec("constant", {"c": c})])
    return CharacteristicContext(coeffs, from_samples([list(values)], 1.0))


def noisy_ctx(d=1, seed=0, n_steps=256):
    g = build_grid(d, (1.0,) * d, 33)
    coeffs = build_coefficients(g, [CoefficientSpec("cosine", {"a": 0.5, "b": 0.5}),
                                    CoefficientSpec("gaussian", {"amp": 0.3, "width": 0.2})])
    return CharacteristicContext(coeffs, sample_fbm(0.5, 2, n_steps, 2.0 / n_steps, seed=seed))


def test_zero_coefficients_identity():
    ctx = const_ctx(c=0.0)
    assert xi_forward(ctx, 0.3, 2.5, 0.0, 1.0) == 2.5
    assert pi_backward(ctx, 0.3, 2.5, 1.0, 0.0) == 2.5


def test_arithmetic_examples():
    ctx = const_ctx()
    assert xi_forward(ctx, 0.4, 3.0, 0.0, 1.0) == pytest.approx(6.0, abs=1e-14)
    assert pi_backward(ctx, 0.4, 6.0, 1.0, 0.0) == pytest.approx(3.0, abs=1e-14)
    assert xi_forward(ctx, 0.4, 3.0, 0.5, 0.5) == 3.0
    assert weight_v(ctx, 0.2, 0.7, 0.7) == 1.0
    unit = const_ctx(values=(0.0, 1.0))
    assert weight_v(unit, 0.2, 0.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_range_checks():
    ctx = const_ctx()
    with pytest.raises(ParameterError):
        xi_forward(ctx, 0.4, 1.0, 0.8, 0.2)
    with pytest.raises(ParameterError):
        xi_forward(ctx, 1.5, 1.0, 0.0, 0.5)
    with pytest.raises(ParameterError):
        xi_forward(ctx, 0.4, 1.0, 0.0, 2.0)


def test_weight_takes_no_velocity():
    import inspect
    params = list(inspect.signature(weight_v).parameters)
    assert params == ["ctx", "x", "s", "t"]


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(-10, 10), st.floats(0, 2), st.floats(0, 2), st.floats(0, 2),
       st.booleans())
def test_inverse_sign_and_cocycle(x, xi, a, b, c, mollified):
    ctx = noisy_ctx()
    if mollified:
        ctx = CharacteristicContext(ctx.coefficients, mollify(ctx.path, 0.05))
    s, t, u = sorted((a, b, c))
    fwd = xi_forward(ctx, x, xi, s, t)
    assert pi_backward(ctx, x, fwd, t, s) == pytest.approx(xi, abs=1e-12 * max(1, abs(xi)))
    assert xi_forward(ctx, x, pi_backward(ctx, x, xi, t, s), s, t) == pytest.approx(
        xi, abs=1e-12 * max(1, abs(xi)))
    assert np.sign(fwd) == np.sign(xi)
    assert weight_v(ctx, x, s, t) * xi_forward_dxi(ctx, x, s, t) == pytest.approx(1.0, abs=1e-12)
    assert weight_v(ctx, x, s, u) == pytest.approx(weight_v(ctx, x, s, t) * weight_v(ctx, x, t, u),
                                                   rel=1e-12)


def test_weight_cocycle_node_triples():
    ctx = noisy_ctx()
    nodes = ctx.path.times[::16]
    x = ctx.grid.coords[0]
    for i, s in enumerate(nodes):
        for t in nodes[i::3]:
            for u in nodes[nodes >= t][::4]:
                np.testing.assert_allclose(weight_v(ctx, x, s, u),
                                           weight_v(ctx, x, s, t) * weight_v(ctx, x, t, u), rtol=1e-12)


def test_mollified_characteristics_converge():
    ctx = noisy_ctx(seed=3, n_steps=2048)
    x = np.linspace(0, 1, 17)
    times = np.linspace(0.2, 1.8, 9)
    raw = np.array([xi_forward(ctx, x, 1.0, 0.1, t) for t in times])
    errs = []
    for k in range(4):
        m = CharacteristicContext(ctx.coefficients, mollify(ctx.path, 0.08 / 2**k))
        errs.append(np.abs(np.array([xi_forward(m, x, 1.0, 0.1, t) for t in times]) - raw).max())
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))


def test_transport_identity_without_noise():
    ctx = const_ctx(c=0.0)
    rho0 = TestBump((0.5,), (0.3,), 0.2, 0.5)
    rho = transport_test_function(ctx, rho0, 0.0, 1.0)
    pts = ctx.grid.points
    xi = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(rho(pts, xi), rho0.value(pts, xi), atol=1e-15)


def test_transport_at_equal_times():
    ctx = noisy_ctx()
    rho0 = TestBump((0.5,), (0.3,), 0.2, 0.5)
    rho = transport_test_function(ctx, rho0, 0.4, 0.4)
    pts = ctx.grid.points
    xi = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(rho(pts, xi), rho0.value(pts, xi), atol=1e-15)


def test_transport_preserves_velocity_mass():
    ctx = noisy_ctx()
    rho0 = TestBump((0.5,), (0.3,), 0.3, 0.4)
    rho = transport_test_function(ctx, rho0, 0.0, 1.5)
    pts = np.array([[0.3], [0.45], [0.6]])
    xi = np.linspace(-3, 3, 60001)
    mass = np.trapezoid(rho(pts, xi), xi, axis=1)
    B = rho0.value(pts, 0.3) / rho0.xi_parts(0.3)[0]
    np.testing.assert_allclose(mass, B * rho0.xi_mass(), rtol=1e-8)


def test_transport_rejects_boundary_support():
    ctx = noisy_ctx()
    with pytest.raises(ParameterError):
        transport_test_function(ctx, TestBump((0.2,), (0.25,)), 0.0, 0.5)


@pytest.mark.parametrize("d", [1, 2])
def test_on_grid_derivatives_match_differences(d):
    ctx = noisy_ctx(d=d)
    g = ctx.grid
    rho0 = TestBump((0.5,) * d, (0.35,) * d, 0.1, 0.6)
    rho = transport_test_function(ctx, rho0, 0.2, 1.3)
    xi = np.linspace(-0.6, 0.8, 9)
    val, lap, dxi = rho.on_grid(xi)
    flat = rho(g.points, xi).reshape(g.shape + (len(xi),))
    np.testing.assert_allclose(val, flat, atol=1e-14)
    e = 1e-6
    fd_xi = (rho(g.points, xi + e) - rho(g.points, xi - e)).reshape(val.shape) / (2 * e)
    np.testing.assert_allclose(dxi, fd_xi, atol=1e-7)
    # Laplacian by a fine central difference at a few points
    pts = g.points[g.interior.ravel()][::7]
    e = 1e-4
    fd = -2 * d * rho(pts, xi)
    for ax in range(d):
        step = np.zeros(d)
        step[ax] = e
        fd = fd + rho(pts + step, xi) + rho(pts - step, xi)
    fd /= e * e
    np.testing.assert_allclose(lap.reshape(-1, len(xi))[g.interior.ravel()][::7], fd, atol=2e-4)


def test_small_time_horizon_noiseless():
    ctx = const_ctx(c=0.0, values=np.linspace(0, 1, 11))
    phi = solve_phi(ctx.grid)
    assert small_time_horizon(ctx, phi, 1.0, 0.1) == pytest.approx(1.0)
    zero_path = CharacteristicContext(noisy_ctx().coefficients, from_samples(np.zeros((2, 11)), 0.2))
    assert small_time_horizon(zero_path, solve_phi(zero_path.grid), 2.0, 0.1) == pytest.approx(2.0)


def test_small_time_horizon_detects_steep_ramp():
    g = build_grid(1, 1.0, 65)
    coeffs = build_coefficients(g, [CoefficientSpec("cosine", {"a": 0.0, "b": 5.0})])
    path = from_samples([np.arange(101) * 0.5], 0.01)  # slope 50
    ctx = CharacteristicContext(coeffs, path)
    phi = solve_phi(g)
    dt = 0.01
    t_star = small_time_horizon(ctx, phi, 1.0, dt)
    assert 0 <= t_star < 1.0
    # the step after t* is the first with a positive interior value
    v = weight_field(ctx, 0.0, t_star + dt)
    assert g.laplacian(v * phi.values)[g.interior].max() > 0
    v = weight_field(ctx, 0.0, t_star)
    assert g.laplacian(v * phi.values)[g.interior].max() <= 0
