import math

import numpy as np
import pytest

from dtntdg.basis import (GlobalBasis, PlaneWaveSpace, default_directions, eval_basis, eval_grad,
                          segment_exp_integral, sinc)
from dtntdg.geometry import rectangle_mesh


def quad_segment(w, a, b, order=200):
    """High-order Gauss-Legendre reference for a segment integral."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    x, wt = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return 0.5 * np.hypot(*(b - a)) * np.sum(wt * np.exp(1j * pts @ w))


def test_default_directions():
    d = default_directions(7)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-14)
    assert np.allclose(d[-1], [1.0, 0.0])  # j = p gives angle 2 pi
    assert np.allclose(d[0], [math.cos(2 * math.pi / 7), math.sin(2 * math.pi / 7)])
    assert len({tuple(np.round(x, 12)) for x in d}) == 7


def test_eval_basis_values():
    space = PlaneWaveSpace(0, 5.0, np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert eval_basis(space, 0, np.zeros(2)) == 1
    assert eval_basis(space, 1, np.zeros(2)) == 1
    assert eval_basis(space, 0, np.array([math.pi / 5, 7.0])) == pytest.approx(-1.0, abs=1e-15)


def test_gradient_finite_differences(rng):
    space = PlaneWaveSpace(0, 3.0 + 0.4j, default_directions(6, 0.2))
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(-2, 2, size=2)
        j = int(rng.integers(6))
        fd = np.array([(eval_basis(space, j, x + h * e) - eval_basis(space, j, x - h * e)) / (2 * h)
                       for e in np.eye(2)])
        g = eval_grad(space, j, x)
        assert np.linalg.norm(fd - g) < 1e-8 * np.linalg.norm(g)
    x = rng.uniform(-1, 1, size=(5, 2))
    assert np.allclose(space.gradients(x)[:, 2], [eval_grad(space, 2, xx) for xx in x])


def test_helmholtz_residual(rng):
    kappa = 4.0
    space = PlaneWaveSpace(0, kappa, default_directions(5))
    h = 1e-3
    for _ in range(10):
        x = rng.uniform(-1, 1, size=2)
        for j in range(5):
            lap = sum(eval_basis(space, j, x + h * e) + eval_basis(space, j, x - h * e) for e in np.eye(2))
            lap = (lap - 4 * eval_basis(space, j, x)) / h**2
            assert abs(lap + kappa**2 * eval_basis(space, j, x)) < 1e-4 * kappa**2


def test_segment_integral_trivial():
    a, b = np.array([0.3, -0.2]), np.array([1.1, 0.4])
    assert segment_exp_integral(np.zeros(2), a, b) == pytest.approx(1.0)
    # w . (b - a) = 2 pi, w . m = 0 gives a full period
    a, b = np.array([-0.5, 0.0]), np.array([0.5, 0.0])
    assert abs(segment_exp_integral(np.array([2 * math.pi, 0.0]), a, b)) < 1e-15


def test_segment_integral_vs_quadrature(rng):
    for _ in range(40):
        w = rng.normal(scale=6, size=2) + 1j * rng.normal(scale=0.5, size=2)
        a, b = rng.uniform(-3, 3, size=(2, 2))
        exact = quad_segment(w, a, b)
        assert abs(segment_exp_integral(w, a, b) - exact) <= 1e-12 * max(abs(exact), 1e-3)


def test_segment_integral_near_tangent():
    a, b = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    for eps in (1e-3, 1e-5, 1e-9, 0.0):
        w = np.array([eps, 3.0])
        exact = quad_segment(w, a, b)
        assert segment_exp_integral(w, a, b) == pytest.approx(exact, rel=1e-13)


def test_sinc_switch_continuity():
    z = np.array([0.999999e-4, 1.000001e-4])
    assert np.allclose(sinc(z), np.sin(z) / z, rtol=1e-15)
    assert sinc(np.array([0.0]))[0] == 1


def test_conjugate_symmetry(rng):
    for _ in range(10):
        w = rng.normal(size=2) + 1j * rng.normal(size=2)
        a, b = rng.uniform(-1, 1, size=(2, 2))
        lhs = segment_exp_integral(w, a, b)
        rhs = np.conj(segment_exp_integral(-np.conj(w), a, b))
        assert lhs == pytest.approx(rhs, rel=1e-14)


def test_additivity(rng):
    for _ in range(10):
        w = rng.normal(scale=4, size=2) + 1j * rng.normal(size=2)
        a, b = rng.uniform(-2, 2, size=(2, 2))
        c = a + rng.uniform(0.1, 0.9) * (b - a)
        whole = segment_exp_integral(w, a, b)
        parts = segment_exp_integral(w, a, c) + segment_exp_integral(w, c, b)
        assert abs(whole - parts) <= 1e-13 * abs(whole)


def test_batched_shapes():
    w = np.ones((3, 4, 2))
    a = np.zeros((3, 1, 2))
    b = np.ones((3, 1, 2))
    assert segment_exp_integral(w, a, b).shape == (3, 4)


def test_global_basis_indexing(coarse_mesh):
    basis = GlobalBasis(coarse_mesh, 5)
    assert basis.N == 5 * coarse_mesh.n_elements == len(basis)
    for e in (0, 3, coarse_mesh.n_elements - 1):
        for j in (0, 4):
            i = basis.index(e, j)
            assert basis.locate(i) == (e, j)
            assert i in basis.indices(e)
    assert basis.slice(1) == slice(5, 10)


def test_test_wavevectors(lossy_config):
    mesh = rectangle_mesh(lossy_config, 3.0)
    basis = GlobalBasis(mesh, 4)
    for s in basis.spaces:
        assert np.allclose(s.test_wavevectors, np.conj(s.kappa) * s.directions)
        if s.kappa.imag == 0:
            assert np.array_equal(s.test_wavevectors, s.wavevectors)
