"""
Tests for chart manifolds, curvature and grid geometry operators.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from mapcalc.exceptions import ChartDomainError, CurvatureUnavailableError, DegenerateMetricError
from mapcalc.geometry import (
    ChartManifold,
    GridGeometry,
    SymTensorField,
    check_spd,
    christoffel,
    cigar,
    curvature_operator,
    derivative_consistency,
    div_symtensor,
    euclidean,
    grad_scalar,
    hessian_scalar,
    hyperbolic,
    laplacian_scalar,
    ricci,
    riemann,
    scalar_curvature,
    sphere,
)
from mapcalc.grid import Grid


@pytest.mark.unit
class TestBuiltinCharts:
    """Test curvature of the builtin charts at single points."""

    def test_euclidean_is_flat(self):
        """Test that the flat chart has vanishing Christoffel symbols and curvature."""
        M = euclidean(3, 2.0)
        assert np.allclose(christoffel(M, [0.1, 0.2, 0.3]).components, 0.0)
        assert np.allclose(riemann(M, [0.1, 0.2, 0.3]).components, 0.0)

    def test_cigar_scalar_curvature(self):
        """Test Scal = 4 / (1 + r^2) on the cigar."""
        M = cigar(4.0)
        assert scalar_curvature(M, [0.0, 0.0]) == pytest.approx(4.0, abs=1e-12)
        for x in ([1.0, 0.5], [-2.0, 3.0], [0.3, -0.7]):
            r2 = x[0] ** 2 + x[1] ** 2
            assert scalar_curvature(M, x) == pytest.approx(4.0 / (1.0 + r2), rel=1e-10)

    def test_sphere_scalar_curvature(self):
        """Test Scal = 2 / a^2 on the round sphere of radius a."""
        M = sphere(radius=2.0)
        assert scalar_curvature(M, [1.0, 0.3]) == pytest.approx(0.5, rel=1e-10)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_hyperbolic_scalar_curvature(self, dim):
        """Test Scal = -m(m - 1) on hyperbolic space."""
        M = hyperbolic(dim)
        point = [0.1] * (dim - 1) + [1.3]
        assert scalar_curvature(M, point) == pytest.approx(-dim * (dim - 1.0), rel=1e-10)

    def test_ricci_of_surface(self):
        """Test Ric = (Scal / 2) g on a surface."""
        M = cigar(4.0)
        x = [0.4, -1.1]
        ric = ricci(M, x).components
        assert ric == pytest.approx(0.5 * scalar_curvature(M, x) * M.metric_at(np.array(x)), abs=1e-12)

    def test_tensor_valence(self):
        """Test the valence recorded on single-point tensors."""
        T = riemann(cigar(4.0), [0.0, 0.0])
        assert T.valence == (3, 1)
        assert T.dim == 2
        assert T.components.shape == (2, 2, 2, 2)

    def test_curvature_operator_antisymmetric(self):
        """Test R(X, Y)Z = -R(Y, X)Z."""
        N = sphere()
        X, Y, Z = [1.0, 0.0], [0.0, 1.0], [0.3, 0.7]
        a = curvature_operator(N, [1.0, 0.2], X, Y, Z)
        b = curvature_operator(N, [1.0, 0.2], Y, X, Z)
        assert a == pytest.approx(-b)

    @pytest.mark.parametrize("M", [sphere().without_derivatives(), hyperbolic(3)], ids=["sphere-fd", "hyperbolic3"])
    def test_first_bianchi_identity(self, M):
        """Test R^l_ijk + R^l_jki + R^l_kij = 0 at seeded points."""
        rng = np.random.default_rng(11)
        lower, upper = np.array(M.lower), np.array(M.upper)
        for _ in range(20):
            x = lower + (upper - lower) * rng.uniform(0.1, 0.9, size=M.dim)
            R = riemann(M, x).components
            cyclic = R + np.einsum("ljki->lijk", R) + np.einsum("lkij->lijk", R)
            assert np.abs(cyclic).max() <= 10.0 * M.fd_step ** 2

    def test_outside_chart(self):
        """Test that single-point operations reject points outside the chart."""
        with pytest.raises(ChartDomainError):
            scalar_curvature(cigar(4.0), [5.0, 0.0])

    def test_derivative_consistency(self):
        """Test that analytic partials agree with finite differences."""
        assert derivative_consistency(cigar(4.0)) < 1e-5
        assert derivative_consistency(sphere()) < 1e-5

    def test_fd_partials_match_analytic_curvature(self):
        """Test curvature computed from differenced metric partials."""
        M = cigar(4.0).without_derivatives()
        assert scalar_curvature(M, [0.5, 0.5]) == pytest.approx(4.0 / 1.5, rel=1e-4)


@pytest.mark.unit
class TestMetricChecks:
    """Test positive-definiteness guards."""

    def test_degenerate_metric_raises(self):
        """Test that a singular metric is rejected."""
        g = np.array([[[1.0, 0.0], [0.0, 0.0]]])
        with pytest.raises(DegenerateMetricError):
            check_spd(g, np.zeros((1, 2)))

    def test_asymmetric_metric_raises(self):
        """Test that an asymmetric metric is rejected."""
        g = np.array([[[1.0, 0.5], [0.0, 1.0]]])
        with pytest.raises(DegenerateMetricError):
            check_spd(g, np.zeros((1, 2)))

    def test_custom_chart_without_partials(self):
        """Test a chart given by its metric callback alone."""

        def metric(x):
            w = np.exp(x[..., 0])
            return w[..., None, None] * np.eye(2)

        M = ChartManifold("exp", 2, (-1.0, -1.0), (1.0, 1.0), metric)
        assert not M.analytic
        # Conformal factor e^u with u = x: Scal = -e^-x Lap(x) = 0.
        assert scalar_curvature(M, [0.2, 0.1]) == pytest.approx(0.0, abs=1e-5)


@pytest.mark.unit
class TestGridGeometry:
    """Test the cached grid geometry and its operators."""

    def test_volume_of_flat_square(self, flat_geom):
        """Test the volume of [-1, 1]^2."""
        assert flat_geom.volume() == pytest.approx(4.0)

    def test_cigar_quadrature_against_radial_integral(self, cigar_geom):
        """Test int exp(-r^2) dv on the cigar against the one-dimensional radial integral."""
        radial, _ = quad(lambda t: 2.0 * np.pi * t * np.exp(-t * t) / (1.0 + t * t), 0.0, np.inf)
        r2 = np.sum(cigar_geom.points ** 2, axis=-1)
        assert cigar_geom.integrate(np.exp(-r2)) == pytest.approx(radial, rel=1e-6)

    def test_cigar_volume_error_is_second_order(self):
        """Test that halving h cuts the cigar volume error of [-2, 2]^2 by at least 3.5."""
        half = 2.0

        def strip(x):
            s = np.sqrt(1.0 + x * x)
            return 2.0 * np.arctan(half / s) / s

        exact, _ = quad(strip, -half, half, epsabs=1e-14, epsrel=1e-14)
        errors = [
            abs(GridGeometry.from_manifold(cigar(4.0), Grid.square(half, h)).volume() - exact)
            for h in (1.0 / 8.0, 1.0 / 16.0)
        ]
        assert errors[0] / errors[1] >= 3.5

    def test_cigar_scalar_field(self, cigar_geom):
        """Test the sampled scalar curvature on the cigar."""
        r2 = np.sum(cigar_geom.points ** 2, axis=-1)
        assert cigar_geom.scalar_curvature == pytest.approx(4.0 / (1.0 + r2), rel=1e-10)

    def test_perturbed_geometry_has_no_curvature(self, flat_geom):
        """Test that perturbed geometries refuse curvature requests."""
        dg = np.zeros(flat_geom.shape + (2, 2))
        perturbed = flat_geom.perturbed(dg, 0.1)
        with pytest.raises(CurvatureUnavailableError):
            _ = perturbed.ricci

    def test_perturbed_degenerate_raises(self, flat_geom):
        """Test that g + t dg losing definiteness raises."""
        dg = -np.broadcast_to(np.eye(2), flat_geom.shape + (2, 2)).copy()
        with pytest.raises(DegenerateMetricError):
            flat_geom.perturbed(dg, 1.0)

    def test_gradient_and_hessian_of_quadratic(self, flat_geom):
        """Test grad |x|^2 = 2x and Hess |x|^2 = 2 g on the flat square."""
        f = np.sum(flat_geom.points ** 2, axis=-1)
        inner = flat_geom.grid.interior_mask(2)
        assert grad_scalar(flat_geom, f)[inner] == pytest.approx(2.0 * flat_geom.points[inner])
        hess = hessian_scalar(flat_geom, f)
        assert hess.asymmetry == 0.0
        assert hess.values[inner] == pytest.approx(np.broadcast_to(2.0 * np.eye(2), (int(inner.sum()), 2, 2)))

    def test_laplacian_of_quadratic(self, flat_geom):
        """Test Lap |x|^2 = 4 on the flat square."""
        f = np.sum(flat_geom.points ** 2, axis=-1)
        lap = laplacian_scalar(flat_geom, f)
        inner = flat_geom.grid.interior_mask(2)
        assert lap[inner] == pytest.approx(4.0)

    def test_divergence_theorem(self, flat_geom):
        """Test that the divergence of a compactly supported tensor integrates to zero."""
        x = flat_geom.points
        bump = np.clip(1.0 - np.sum(x * x, axis=-1) / 0.64, 0.0, None) ** 6
        S = SymTensorField.symmetrized(bump[..., None, None] * np.array([[1.0, 0.3], [0.2, 2.0]]))
        assert S.asymmetry == 0.0
        div = div_symtensor(flat_geom, S)
        for j in range(2):
            assert flat_geom.integrate(div[..., j]) == pytest.approx(0.0, abs=1e-10)

    def test_from_manifold_rejects_large_grid(self):
        """Test that the grid box must lie inside the chart."""
        with pytest.raises(ChartDomainError):
            GridGeometry.from_manifold(cigar(2.0), Grid.square(3.0, 0.5))

    def test_dimension_mismatch(self):
        """Test that grid and manifold dimensions must agree."""
        with pytest.raises(ValueError):
            GridGeometry.from_manifold(euclidean(3), Grid.square(1.0, 0.5))
