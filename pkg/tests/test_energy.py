"""
Tests for the energy functionals and the map-variation oracle.
"""

import numpy as np
import pytest

from mapcalc.energy import (
    Functional,
    OracleEstimate,
    evaluate,
    map_variation_derivative,
    map_variation_formula,
    metric_variation_derivative,
    richardson,
)
from mapcalc.exceptions import MarginError, StepUnderflowError
from mapcalc.geometry import GridGeometry, euclidean
from mapcalc.grid import Grid
from mapcalc.lagrangians import bienergy, dirichlet, f_energy, p_energy, potential
from mapcalc.mapfield import DiscreteMap
from mapcalc.presets import variation_field
from tests.conftest import bump_map, random_deviation


def _rel(oracle: OracleEstimate, formula: float) -> float:
    return abs(oracle.value - formula) / max(abs(oracle.value), abs(formula), 1e-300)


@pytest.mark.unit
class TestFunctional:
    """Test functional construction and quadrature."""

    def test_requires_lagrangian(self):
        """Test that E_L needs L and E_B needs B."""
        with pytest.raises(ValueError):
            Functional("E_L")
        with pytest.raises(ValueError):
            Functional("E_B", L=dirichlet())

    def test_rejects_small_exponents(self):
        """Test that p < 2 and q < 2 are rejected."""
        with pytest.raises(ValueError):
            Functional.energy_p(1.0)
        with pytest.raises(ValueError):
            Functional.energy_pq(2.0, 1.5)

    def test_params_echo(self):
        """Test the parameter dictionary reported with oracle records."""
        assert Functional.energy_pq(3.0, 4.0).params == {"kind": "E_pq", "p": 3.0, "q": 4.0}
        assert Functional.energy_B(bienergy(), dirichlet()).params["B"] == "bienergy"

    def test_dirichlet_energy_of_identity(self, flat_geom, flat_target):
        """Test E(id) = area of [-1, 1]^2."""
        phi = DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (2,)), linear=np.eye(2))
        assert evaluate(Functional.energy_L(dirichlet()), phi) == pytest.approx(4.0)

    def test_bienergy_of_affine_map(self, flat_geom, flat_target):
        """Test that affine maps between flat spaces are biharmonic with zero bienergy."""
        phi = DiscreteMap(flat_geom, flat_target, np.zeros(flat_geom.shape + (2,)), linear=np.eye(2))
        assert evaluate(Functional.energy_p(2.0), phi) == 0.0

    def test_evaluate_checks_margin(self, flat_geom, flat_target):
        """Test that evaluation refuses a deviation touching the boundary."""
        dev = np.zeros(flat_geom.shape + (2,))
        dev[0, 5, :] = 0.1
        with pytest.raises(MarginError):
            evaluate(Functional.energy_p(2.0), DiscreteMap(flat_geom, flat_target, dev))


@pytest.mark.unit
class TestRichardson:
    """Test the extrapolated central difference."""

    def test_cubic_is_exact(self):
        """Test that Richardson extrapolation removes the t^2 error of a cubic."""
        estimate = richardson(lambda t: t ** 3 + 2.0 * t + 1.0, 0.1)
        assert estimate.value == pytest.approx(2.0, abs=1e-12)
        assert estimate.step == 0.1

    def test_error_bar_covers_true_error(self):
        """Test that the error bar covers the actual error in at least 95 of 100 seeded trials."""
        covered = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            c, a, b = rng.uniform(0.0, 1e3), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)
            omega, theta, kappa = rng.uniform(0.5, 5.0), rng.uniform(0.0, 2.0 * np.pi), rng.uniform(-3.0, 3.0)
            estimate = richardson(lambda t: c + a * np.sin(omega * t + theta) + b * np.exp(kappa * t), 1e-3)
            exact = a * omega * np.cos(theta) + b * kappa
            covered += abs(estimate.value - exact) <= estimate.error_bar
        assert covered >= 95

    def test_underflow(self):
        """Test that a vanishing step raises."""
        with pytest.raises(StepUnderflowError):
            richardson(lambda t: t, 0.0)

    def test_zero_direction(self, flat_map):
        """Test that a zero variation returns an exact zero without evaluating."""
        estimate = map_variation_derivative(Functional.energy_p(2.0), flat_map, np.zeros(flat_map.deviation.shape))
        assert estimate.value == 0.0 and estimate.error_bar == 0.0

    def test_zero_metric_variation(self, flat_map):
        """Test that dg = 0 gives an exact zero."""
        estimate = metric_variation_derivative(Functional.energy_p(2.0), flat_map, np.zeros(flat_map.geom.shape + (2, 2)))
        assert estimate.value == 0.0


@pytest.mark.unit
class TestMapVariation:
    """Test first-variation formulas against the map-variation oracle."""

    @pytest.mark.parametrize(
        "functional",
        [
            Functional.energy_L(dirichlet()),
            Functional.energy_p(2.0),
            Functional.energy_p(3.0),
            Functional.energy_pq(3.0, 3.0),
        ],
        ids=["dirichlet", "bienergy", "p3-bienergy", "pq33"],
    )
    def test_flat_formulas_match(self, flat_map, functional):
        """Test flat-to-flat variations, where the discrete adjoint is exact."""
        v = random_deviation(flat_map.geom, seed=11, amplitude=1.0)
        oracle = map_variation_derivative(functional, flat_map, v)
        formula = map_variation_formula(functional, flat_map, v)
        assert _rel(oracle, formula) < 1e-5

    def test_potential_lagrangian(self, flat_map):
        """Test E_L for L = r + |y|^2 / 2."""
        F = Functional.energy_L(potential())
        v = random_deviation(flat_map.geom, seed=12, amplitude=1.0)
        assert _rel(map_variation_derivative(F, flat_map, v), map_variation_formula(F, flat_map, v)) < 1e-5

    def test_p_energy_lagrangian(self, flat_map):
        """Test E_L for the p-energy, where the product rule holds only to second order."""
        F = Functional.energy_L(p_energy(3.0))
        v = random_deviation(flat_map.geom, seed=12, amplitude=1.0)
        assert _rel(map_variation_derivative(F, flat_map, v), map_variation_formula(F, flat_map, v)) < 0.05

    @pytest.mark.parametrize(
        "functional",
        [
            Functional.energy_L(dirichlet()),
            Functional.energy_p(2.0),
            Functional.energy_B(f_energy(), dirichlet()),
        ],
        ids=["dirichlet", "bienergy", "f-energy"],
    )
    def test_sphere_formulas_match(self, sphere_map, functional):
        """Test variations into the round sphere to discretisation accuracy."""
        v = variation_field(sphere_map, seed=13, radius=0.8, modes=1)
        oracle = map_variation_derivative(functional, sphere_map, v)
        formula = map_variation_formula(functional, sphere_map, v)
        assert _rel(oracle, formula) < 0.1

    @pytest.mark.slow
    def test_sphere_error_is_second_order(self, sphere_target):
        """Test that the oracle/formula gap shrinks by about 4 when h halves."""
        errors = []
        for h in (1.0 / 32.0, 1.0 / 64.0):
            geom = GridGeometry.from_manifold(euclidean(2, 1.0), Grid.square(1.0, h))
            phi = bump_map(geom, sphere_target, offset=[0.5 * np.pi, 0.0])
            v = variation_field(phi, seed=13, radius=0.8, modes=1)
            F = Functional.energy_L(dirichlet())
            errors.append(abs(map_variation_derivative(F, phi, v).value - map_variation_formula(F, phi, v)))
        assert errors[0] / errors[1] > 3.0
