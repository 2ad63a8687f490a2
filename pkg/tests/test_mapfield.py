"""
Tests for discrete maps, the pullback connection and the tension fields.
"""

import numpy as np
import pytest

from mapcalc.exceptions import ChartDomainError, MarginError, NonFiniteFieldError
from mapcalc.geometry import GridGeometry, euclidean, laplacian_scalar
from mapcalc.grid import Grid
from mapcalc.lagrangians import bienergy, dirichlet, dirichlet_b
from mapcalc.mapfield import (
    DEPTH_BITENSION,
    B_tension,
    DiscreteMap,
    L_tension,
    PullbackSection,
    bitension_LB,
    bitension_p2,
    bitension_pq,
    differential,
    energy_density,
    p_tension,
    p_tension_bound,
    pullback_connection,
    pullback_divergence,
    pullback_metric,
    required_margin,
    second_fundamental_form,
    section_norm,
    tension,
)
from tests.conftest import bump_map, random_deviation


@pytest.mark.unit
class TestDiscreteMap:
    """Test map construction and affine parts."""

    def test_constant_map(self, constant_map):
        """Test that a constant map has zero differential and tension."""
        assert constant_map.is_constant
        assert not np.any(differential(constant_map))
        assert not np.any(tension(constant_map).values)
        assert not np.any(energy_density(constant_map))

    def test_affine_energy_density(self, flat_geom, flat_target):
        """Test e = |A|^2 / 2 for an affine map between flat spaces."""
        A = np.array([[2.0, 0.0], [0.0, 1.0]])
        phi = DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (2,)), linear=A)
        assert energy_density(phi) == pytest.approx(np.full(flat_geom.shape, 2.5))
        assert differential(phi)[5, 5] == pytest.approx(A.T)

    def test_identity_pullback_metric(self, flat_geom, flat_target):
        """Test that the identity pulls the flat metric back to itself."""
        phi = DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (2,)), linear=np.eye(2))
        P = pullback_metric(phi).values
        assert P == pytest.approx(np.broadcast_to(np.eye(2), P.shape))

    def test_wrong_deviation_shape(self, flat_geom, flat_target):
        """Test that the deviation must match the grid and target dimension."""
        with pytest.raises(ValueError):
            DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (3,)))

    def test_value_outside_target_chart(self, flat_geom, flat_target):
        """Test that map values must stay inside the target chart."""
        with pytest.raises(ChartDomainError):
            DiscreteMap.constant(flat_geom, flat_target, [20.0, 0.0])

    def test_non_finite_deviation(self, flat_geom, flat_target):
        """Test that NaN deviations are rejected."""
        dev = np.zeros(flat_geom.shape + (2,))
        dev[10, 10, 0] = np.nan
        with pytest.raises(NonFiniteFieldError):
            DiscreteMap(flat_geom, flat_target, dev)

    def test_margin_violation(self, flat_geom, flat_target):
        """Test that a deviation touching the boundary cannot be differenced."""
        dev = np.zeros(flat_geom.shape + (2,))
        dev[1, 30, :] = 0.1
        phi = DiscreteMap(flat_geom, flat_target, dev)
        with pytest.raises(MarginError) as excinfo:
            tension(phi)
        assert excinfo.value.found == 1

    def test_random_data_leaves_bitension_margin(self, flat_map):
        """Test that the shared random deviation supports every operation."""
        flat_map.require_margin(DEPTH_BITENSION, "random data")
        assert required_margin(DEPTH_BITENSION, 1) == 5

    def test_displaced(self, flat_map):
        """Test phi + t v in target coordinates."""
        v = np.ones(flat_map.deviation.shape)
        moved = flat_map.displaced(v, 0.5)
        assert moved.values == pytest.approx(flat_map.values + 0.5)


@pytest.mark.unit
class TestTension:
    """Test tension fields against closed forms."""

    def test_flat_tension_is_laplacian(self, flat_map):
        """Test tau = Lap phi componentwise between flat spaces."""
        tau = tension(flat_map).values
        for a in range(2):
            assert tau[..., a] == pytest.approx(laplacian_scalar(flat_map.geom, flat_map.deviation[..., a]), abs=1e-10)

    def test_equator_is_harmonic(self, flat_geom, sphere_target):
        """Test that x -> (pi/2, x_0) into the sphere has zero tension."""
        linear = np.array([[0.0, 0.0], [1.0, 0.0]])
        phi = DiscreteMap(flat_geom, sphere_target, np.zeros(flat_geom.shape + (2,)), linear=linear,
                          offset=[0.5 * np.pi, 0.0])
        assert np.abs(tension(phi).values).max() < 1e-12

    def test_sphere_tension_closed_form(self, flat_geom, sphere_target):
        """Test tau^theta = -sin(theta) cos(theta) for theta = pi/2 + x_0 / 2, lon = x_1."""
        linear = np.array([[0.5, 0.0], [0.0, 1.0]])
        phi = DiscreteMap(flat_geom, sphere_target, np.zeros(flat_geom.shape + (2,)), linear=linear,
                          offset=[0.5 * np.pi, 0.0])
        theta = phi.values[..., 0]
        tau = tension(phi).values
        assert tau[..., 0] == pytest.approx(-np.sin(theta) * np.cos(theta), abs=1e-12)
        assert tau[..., 1] == pytest.approx(0.0, abs=1e-12)

    def test_p2_tension_is_tension(self, sphere_map):
        """Test tau_2 = tau."""
        assert p_tension(sphere_map, 2.0).values == pytest.approx(tension(sphere_map).values)

    def test_p_tension_rejects_small_p(self, flat_map):
        """Test that p < 2 is rejected."""
        with pytest.raises(ValueError):
            p_tension(flat_map, 1.5)

    def test_tension_bound_at_p2(self, sphere_map):
        """Test |tau| <= sqrt(m) |nabla dphi| at every node."""
        excess = section_norm(sphere_map, tension(sphere_map).values) - p_tension_bound(sphere_map, 2.0)
        assert excess.max() <= 1e-12

    @pytest.mark.slow
    @pytest.mark.parametrize("p", [3.0, 4.0])
    def test_p_tension_bound_excess_vanishes(self, sphere_target, p):
        """Test that the grid excess over (sqrt(m) + p - 2) |dphi|^(p-2) |nabla dphi| shrinks 3.5x per halving."""
        excess = []
        for h in (1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0):
            geom = GridGeometry.from_manifold(euclidean(2, 1.0), Grid.square(1.0, h))
            phi = bump_map(geom, sphere_target, offset=[0.5 * np.pi, 0.0])
            over = section_norm(phi, p_tension(phi, p).values) - p_tension_bound(phi, p)
            excess.append(max(float(over.max()), 0.0))
        assert excess[1] <= excess[0] / 3.5
        assert excess[2] <= excess[1] / 3.5

    def test_dirichlet_L_tension(self, sphere_map):
        """Test tau_L = tau for L = r."""
        assert L_tension(sphere_map, dirichlet()).values == pytest.approx(tension(sphere_map).values)

    def test_affine_second_fundamental_form_vanishes(self, flat_geom, flat_target):
        """Test that an affine map between flat spaces is totally geodesic."""
        A = np.array([[2.0, 0.0], [1.0, 1.0]])
        phi = DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (2,)), linear=A)
        assert not np.any(second_fundamental_form(phi))

    def test_tension_is_trace_of_second_fundamental_form(self, sphere_map):
        """Test tau = g^ij (nabla dphi)_ij."""
        hess = second_fundamental_form(sphere_map)
        assert hess.shape == sphere_map.geom.shape + (2, 2, 2)
        traced = np.einsum("...ij,...ija->...a", sphere_map.geom.ginv, hess)
        assert traced == pytest.approx(tension(sphere_map).values)
        assert pullback_divergence(sphere_map, sphere_map.differential) == pytest.approx(traced)

    def test_pullback_connection_direction(self, sphere_map):
        """Test that one direction is a slice of the full covariant derivative."""
        V = tension(sphere_map)
        full = pullback_connection(sphere_map, V)
        assert full.shape == sphere_map.geom.shape + (2, 2)
        assert pullback_connection(sphere_map, V, direction=1) == pytest.approx(full[..., 1, :])

    def test_pullback_connection_flat_target(self, flat_map):
        """Test that with a flat target the connection is the plain partial derivative."""
        V = tension(flat_map).values
        assert pullback_connection(flat_map, V) == pytest.approx(flat_map.geom.stencil.gradient(V))

    def test_B_tension_reductions(self, sphere_map):
        """Test tau_B = tau for B = r and tau_B = 0 for B = s."""
        assert B_tension(sphere_map, dirichlet_b(), dirichlet()).values == pytest.approx(tension(sphere_map).values)
        assert not np.any(B_tension(sphere_map, bienergy(), dirichlet()).values)


@pytest.mark.unit
class TestBitension:
    """Test the bitension fields and their reductions."""

    def test_flat_bitension_is_bilaplacian(self, flat_map):
        """Test tau_2 = -Lap^2 phi between flat spaces."""
        geom = flat_map.geom
        tau2 = bitension_p2(flat_map, 2.0).values
        for a in range(2):
            lap = laplacian_scalar(geom, flat_map.deviation[..., a])
            assert tau2[..., a] == pytest.approx(-laplacian_scalar(geom, lap), abs=1e-8)

    def test_pq_with_q2_is_p2(self, flat_map):
        """Test that q = 2 reduces tau_{2,p,q} to tau_{2,p}."""
        assert bitension_pq(flat_map, 3.0, 2.0).values == pytest.approx(bitension_p2(flat_map, 3.0).values)

    def test_LB_reduces_to_bitension(self, sphere_map):
        """Test that B = s, L = r gives the classical bitension."""
        assert bitension_LB(sphere_map, bienergy(), dirichlet()).values == pytest.approx(
            bitension_p2(sphere_map, 2.0).values, abs=1e-10
        )

    def test_constant_map_is_biharmonic(self, constant_map):
        """Test that constant maps have zero bitension for every p and q."""
        assert not np.any(bitension_pq(constant_map, 3.0, 3.0).values)

    def test_q_below_two(self, flat_map):
        """Test that q < 2 is rejected."""
        with pytest.raises(ValueError):
            bitension_pq(flat_map, 2.0, 1.0)


@pytest.mark.unit
class TestPullbackSection:
    """Test sections along a map."""

    def test_norm_uses_target_metric(self, flat_geom, sphere_target):
        """Test |V|_h on the sphere at theta = pi/2."""
        phi = DiscreteMap.constant(flat_geom, sphere_target, [0.5 * np.pi, 0.0])
        V = PullbackSection(np.broadcast_to([0.0, 2.0], flat_geom.shape + (2,)).copy())
        assert V.sup_norm(phi) == pytest.approx(2.0)

    def test_arithmetic(self, flat_map):
        """Test sums and scalar products of sections."""
        V = PullbackSection(random_deviation(flat_map.geom))
        assert (2.0 * V - V).values == pytest.approx(V.values)

    def test_non_finite(self):
        """Test that NaN sections are rejected."""
        with pytest.raises(NonFiniteFieldError):
            PullbackSection(np.array([[np.nan, 0.0]]))
