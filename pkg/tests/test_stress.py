"""
Tests for the stress-energy tensors, their traces and divergence identity,
and the integration-by-parts identity.
"""

import numpy as np
import pytest

from mapcalc.energy import delta_tau_p_squared, metric_variation_derivative
from mapcalc.geometry import GridGeometry, SymTensorField, euclidean
from mapcalc.grid import Grid
from mapcalc.lagrangians import dirichlet, f_energy
from mapcalc.presets import random_symmetric_tensor
from mapcalc.soliton import make_cutoff
from mapcalc.stress import (
    STRESS_KINDS,
    assemble,
    closed_form_trace,
    divergence_identity_residual,
    functional_for,
    liouville_ibp_identity,
    metric_variation_formula,
    trace,
)
from tests.conftest import identity_map


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture
def metric_variation(flat_geom):
    return random_symmetric_tensor(flat_geom, seed=21, amplitude=0.1, radius=0.8, modes=1)


@pytest.mark.unit
class TestAssembly:
    """Test stress tensor assembly."""

    @pytest.mark.parametrize("kind", STRESS_KINDS)
    def test_exactly_symmetric(self, flat_map, kind):
        """Test that every assembled tensor is symmetric."""
        S = assemble(kind, flat_map, p=3.0, q=3.0)
        assert S.tensor.asymmetry < 1e-14
        assert S.kind == kind

    def test_unknown_kind(self, flat_map):
        """Test that unknown tensor names raise."""
        with pytest.raises(ValueError):
            assemble("S_3", flat_map)

    def test_constant_map_has_zero_stress(self, constant_map):
        """Test that constant maps carry no stress."""
        assert not np.any(assemble("S_2p", constant_map, p=3.0).values)

    def test_S2L_dirichlet_is_S2p(self, sphere_map):
        """Test that L = r reduces S_2L to S_2."""
        a = assemble("S_2L", sphere_map, L=dirichlet()).values
        b = assemble("S_2p", sphere_map, p=2.0).values
        assert a == pytest.approx(b, abs=1e-10)

    def test_variants_agree_at_p2(self, flat_map):
        """Test that the printed and derived S_2p coincide for p = 2."""
        a = assemble("S_2p", flat_map, p=2.0, variant="derived").values
        b = assemble("S_2p", flat_map, p=2.0, variant="printed").values
        assert a == pytest.approx(b)

    def test_functional_for(self):
        """Test the functional paired with each tensor."""
        assert functional_for("S_2p", p=3.0).kind == "E_p"
        assert functional_for("S_2pq", p=3.0, q=4.0).q == 4.0
        assert functional_for("S_2L").B.name == "bienergy"
        assert functional_for("S_BL", B=f_energy()).B.name == "f-energy"


@pytest.mark.unit
class TestTrace:
    """Test traces against their closed forms."""

    @pytest.mark.parametrize("kind", STRESS_KINDS)
    def test_closed_form_trace(self, sphere_map, kind):
        """Test tr S against the expression written out without contraction."""
        S = assemble(kind, sphere_map, p=3.0, q=3.0)
        direct = trace(S, sphere_map.geom)
        closed = closed_form_trace(S, sphere_map)
        scale = max(float(np.abs(direct).max()), 1e-300)
        assert float(np.abs(direct - closed).max()) / scale < 1e-10

    def test_printed_trace_unavailable(self, flat_map):
        """Test that closed forms are only written for the derived tensors."""
        S = assemble("S_2p", flat_map, p=3.0, variant="printed")
        with pytest.raises(ValueError):
            closed_form_trace(S, flat_map)


@pytest.mark.unit
class TestMetricVariation:
    """Test stress tensors against the metric-variation oracle."""

    def test_bienergy_stress(self, flat_map, metric_variation):
        """Test 1/2 int <S_2, dg> against d/dt E_2 under g + t dg."""
        S = assemble("S_2p", flat_map, p=2.0)
        oracle = metric_variation_derivative(functional_for("S_2p", p=2.0), flat_map, metric_variation)
        formula = metric_variation_formula(S, flat_map, metric_variation)
        assert _rel(oracle.value, formula) < 0.05

    def test_delta_tau_p2_is_exact_on_flat_source(self, flat_map, metric_variation):
        """Test the pointwise variation of |tau|^2 with the volume form held fixed."""
        oracle = metric_variation_derivative(
            functional_for("S_2p", p=2.0), flat_map, metric_variation, fixed_volume=True
        )
        formula = 0.5 * flat_map.geom.integrate(delta_tau_p_squared(flat_map, 2.0, metric_variation))
        assert _rel(oracle.value, formula) < 1e-5

    def test_delta_tau_p3(self, fine_flat_geom, flat_target):
        """Test the variation of |tau_3|^2 to discretisation accuracy."""
        phi = identity_map(fine_flat_geom, flat_target)
        dg = random_symmetric_tensor(fine_flat_geom, seed=21, amplitude=0.1, radius=0.8, modes=1)
        oracle = metric_variation_derivative(functional_for("S_2p", p=3.0), phi, dg, fixed_volume=True)
        formula = 0.5 * fine_flat_geom.integrate(delta_tau_p_squared(phi, 3.0, dg))
        assert _rel(oracle.value, formula) < 0.05


@pytest.mark.unit
class TestDivergenceIdentity:
    """Test div S_2p + h(tau_{2,p}, dphi) = 0."""

    def test_residual_shape(self, flat_map):
        """Test that the residual is a finite covector field."""
        R, sup, l2 = divergence_identity_residual(flat_map, 2.0)
        assert R.shape == flat_map.geom.shape + (2,)
        assert np.isfinite(sup) and 0.0 <= l2

    @pytest.mark.slow
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_derived_variant_converges(self, flat_target, p):
        """Test that the residual shrinks at second order for the derived tensor."""
        sups = []
        for h in (1.0 / 32.0, 1.0 / 64.0):
            geom = GridGeometry.from_manifold(euclidean(2, 1.0), Grid.square(1.0, h))
            _, sup, _ = divergence_identity_residual(identity_map(geom, flat_target), p)
            sups.append(sup)
        assert sups[0] / sups[1] > 3.0


@pytest.mark.unit
class TestIntegrationByParts:
    """Test the cutoff integration-by-parts identity on the cigar."""

    def test_constant_tensor(self, cigar, cigar_geom):
        """Test that the three integrals cancel for a smooth symmetric tensor."""
        eta = make_cutoff(cigar, cigar_geom, [0.0, 0.0], 1.5, c_target=None)
        S = SymTensorField(np.broadcast_to([[1.0, 0.3], [0.3, 2.0]], cigar_geom.shape + (2, 2)).copy())
        result = liouville_ibp_identity(S, cigar, eta, cigar_geom)
        assert result.scale > 0
        assert result.relative_defect < 0.05

    def test_random_tensor(self, cigar, cigar_geom):
        """Test the identity for a seeded random tensor."""
        eta = make_cutoff(cigar, cigar_geom, [0.0, 0.0], 1.5, c_target=None)
        S = random_symmetric_tensor(cigar_geom, seed=5, radius=3.0, modes=1)
        assert liouville_ibp_identity(S, cigar, eta, cigar_geom).relative_defect < 0.05
