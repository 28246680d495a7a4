import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dupin.errors import DegenerateCloud, GridTooSmall, NotSymmetric
from dupin.numerics import (
    AffineFlat,
    Field,
    SphereFit,
    TensorGrid,
    fd_jet,
    sphere_fit,
    sym_eigen,
)


class TestFdJet:
    def test_linear_first_derivative(self):
        g = TensorGrid((11,), (0.1,))
        f = Field(g, g.axis_coords(0))
        d = fd_jet(f, 0, 1)
        assert np.allclose(d.values, 1.0, atol=1e-13)

    def test_quadratic_second_derivative_exact(self):
        g = TensorGrid((11,), (0.1,))
        u = g.axis_coords(0)
        d = fd_jet(Field(g, u**2), 0, 2)
        assert np.allclose(d.values, 2.0, atol=1e-11)

    def test_sine_against_cosine_oracle(self):
        g = TensorGrid((629,), (0.01,))
        u = g.axis_coords(0)
        d = fd_jet(Field(g, np.sin(u)), 0, 1)
        err = np.abs(d.values[1:-1] - np.cos(u)[1:-1]).max()
        assert err < 1e-4

    def test_polynomials_exact_at_interior(self):
        g = TensorGrid((9, 9), (0.2, 0.3))
        U, V = g.meshgrid()
        p = 1.0 + 2 * U - 0.5 * V + 0.25 * U * V + U**2 - V**2
        d1 = fd_jet(Field(g, p), 0, 1).values
        d2 = fd_jet(Field(g, p), 1, 2).values
        assert np.abs(d1 - (2 + 0.25 * V + 2 * U)).max() < 1e-12
        assert np.abs(d2 - (-2.0)).max() < 1e-11

    def test_too_small_grid(self):
        g = TensorGrid((4,), (0.1,))
        with pytest.raises(GridTooSmall):
            fd_jet(Field(g, np.zeros(4)), 0, 1)

    def test_mask_propagates(self):
        g = TensorGrid((11,), (0.1,))
        mask = np.ones(11, dtype=bool)
        mask[5] = False
        d = fd_jet(Field(g, g.axis_coords(0), mask=mask), 0, 1)
        assert not d.mask[4] and not d.mask[6]
        assert d.mask[1]


class TestSymEigen:
    def test_identity(self):
        r = sym_eigen(np.eye(3))
        assert np.allclose(r.values, 1.0)
        assert r.clusters == ((0, 1, 2),)

    def test_diagonal(self):
        r = sym_eigen(np.diag([2.0, -1.0]))
        assert np.allclose(r.values, [2.0, -1.0])
        assert np.allclose(np.abs(r.vectors), np.eye(2))

    def test_rotated_spectrum(self):
        th = np.pi / 6
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        M = R @ np.diag([3.0, 1.0]) @ R.T
        r = sym_eigen(M)
        assert np.allclose(r.values, [3.0, 1.0], atol=1e-12)
        assert abs(abs(r.vectors[:, 0] @ np.array([np.cos(th), np.sin(th)])) - 1) < 1e-12

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            sym_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 10**6))
    def test_reconstruction_and_orthonormality(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n))
        M = 0.5 * (A + A.T)
        r = sym_eigen(M)
        assert np.abs(M @ r.vectors - r.vectors * r.values).max() < 1e-12 * max(1, np.abs(M).max())
        assert np.abs(r.vectors.T @ r.vectors - np.eye(n)).max() < 1e-12


class TestSphereFit:
    def test_unit_sphere_exact(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(20, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        fit = sphere_fit(pts)
        assert isinstance(fit, SphereFit)
        assert np.abs(fit.center).max() < 1e-12
        assert abs(fit.radius - 1) < 1e-12
        assert fit.residual < 1e-12

    def test_collinear_points_flat(self):
        pts = np.outer(np.arange(10.0), [1.0, 2.0, -1.0])
        fit = sphere_fit(pts)
        assert isinstance(fit, AffineFlat)
        assert fit.dim == 1

    def test_jittered_sphere_recovery(self):
        rng = np.random.default_rng(3)
        center = np.array([1.0, 2.0, 3.0])
        pts = rng.normal(size=(40, 3))
        pts = center + 0.5 * pts / np.linalg.norm(pts, axis=1, keepdims=True)
        pts += 1e-8 * rng.normal(size=pts.shape)
        fit = sphere_fit(pts)
        assert np.abs(fit.center - center).max() < 1e-6
        assert abs(fit.radius - 0.5) < 1e-6

    def test_circle_in_3space(self):
        th = np.linspace(0, 2 * np.pi, 17, endpoint=False)
        pts = np.stack([0.7 * np.cos(th) + 1, 0.7 * np.sin(th) - 2, np.full_like(th, 0.5)], axis=1)
        fit = sphere_fit(pts)
        assert isinstance(fit, SphereFit)
        assert fit.sphere_dim == 1
        assert np.abs(fit.center - [1, -2, 0.5]).max() < 1e-10
        assert abs(fit.radius - 0.7) < 1e-10

    def test_fixed_point(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(25, 3))
        pts = np.array([0.3, -1, 2]) + 1.7 * pts / np.linalg.norm(pts, axis=1, keepdims=True)
        f1 = sphere_fit(pts)
        resampled = f1.center + f1.radius * (pts - f1.center) / np.linalg.norm(
            pts - f1.center, axis=1, keepdims=True)
        f2 = sphere_fit(resampled)
        assert np.abs(f2.center - f1.center).max() < 1e-10
        assert abs(f2.radius - f1.radius) < 1e-10

    def test_degenerate_cloud(self):
        with pytest.raises(DegenerateCloud):
            sphere_fit(np.ones((6, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_random_sphere_recovery(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(2, 5))
        center = rng.normal(size=N)
        radius = float(rng.uniform(0.2, 3.0))
        pts = rng.normal(size=(4 * N + 8, N))
        pts = center + radius * pts / np.linalg.norm(pts, axis=1, keepdims=True)
        fit = sphere_fit(pts)
        assert isinstance(fit, SphereFit)
        assert np.abs(fit.center - center).max() < 1e-8
        assert abs(fit.radius - radius) < 1e-8
