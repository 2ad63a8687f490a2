"""
Tests for Lagrangian presets and their consistency checks.
"""

import numpy as np
import pytest

from mapcalc.exceptions import LagrangianError, UnsupportedLagrangianError
from mapcalc.lagrangians import (
    LagrangianL,
    bienergy,
    dirichlet,
    f_energy,
    guarded_power,
    lagrangian_b_for,
    lagrangian_l_for,
    p_energy,
    potential,
)


@pytest.mark.unit
class TestGuardedPower:
    """Test the degenerate-point rule."""

    def test_zero_exponent_is_one(self):
        """Test that exponent 0 gives exactly 1, even at zero norm."""
        assert guarded_power(np.array([0.0, 2.0]), 0.0) == pytest.approx([1.0, 1.0])

    def test_negative_exponent_at_zero(self):
        """Test that a negative exponent yields 0 below eps instead of infinity."""
        out = guarded_power(np.array([0.0, 1e-12, 2.0]), -1.0)
        assert out == pytest.approx([0.0, 0.0, 0.5])

    def test_positive_exponent(self):
        """Test plain powers for positive exponents."""
        assert guarded_power(np.array([0.0, 3.0]), 2.0) == pytest.approx([0.0, 9.0])


@pytest.mark.unit
class TestPresets:
    """Test the shipped Lagrangians."""

    def test_p_energy_derivative(self):
        """Test L' = |dphi|^(p-2) with r = |dphi|^2 / 2."""
        L = p_energy(4.0)
        r = np.array([2.0])
        assert L.d_r(None, np.zeros((1, 2)), r) == pytest.approx([4.0])

    def test_p_energy_rejects_small_p(self):
        """Test that p < 2 is rejected."""
        with pytest.raises(LagrangianError):
            p_energy(1.5)

    def test_dirichlet_target_partials_vanish(self):
        """Test that y-independent Lagrangians return zero target partials."""
        L = dirichlet()
        y = np.ones((3, 2))
        assert L.partial_y(None, y, np.ones(3)).shape == (3, 2)
        assert not np.any(L.partial_yy(None, y, np.ones(3)))

    def test_potential_partials(self):
        """Test grad_y of |y|^2 / 2."""
        L = potential()
        y = np.array([[1.0, -2.0]])
        assert L.partial_y(None, y, np.ones(1)) == pytest.approx(y)
        assert L.partial_yy(None, y, np.ones(1))[0] == pytest.approx(np.eye(2))

    @pytest.mark.parametrize("name", ["dirichlet", "p-energy", "potential"])
    def test_l_lookup(self, name):
        """Test resolving L presets by name."""
        assert isinstance(lagrangian_l_for(name, p=3.0), LagrangianL)

    @pytest.mark.parametrize("name,expected", [("bienergy", "bienergy"), ("dirichlet", "dirichlet"),
                                               ("f-energy", "f-energy")])
    def test_b_lookup(self, name, expected):
        """Test resolving B presets by name."""
        assert lagrangian_b_for(name).name == expected

    def test_unknown_preset(self):
        """Test that unknown names raise."""
        with pytest.raises(LagrangianError):
            lagrangian_l_for("harmonic-ish")
        with pytest.raises(LagrangianError):
            lagrangian_b_for("harmonic-ish")

    def test_f_energy_values(self):
        """Test B = r + r^2 / 2 + s."""
        B = f_energy()
        assert B.value(None, None, np.array([2.0]), np.array([1.0])) == pytest.approx([5.0])
        assert bienergy().d_s(None, None, np.array([2.0]), np.array([1.0])) == pytest.approx([1.0])


@pytest.mark.unit
class TestConsistencyChecks:
    """Test the construction-time partial checks."""

    def test_wrong_partial_rejected(self):
        """Test that a supplied d_r inconsistent with the value is rejected."""
        with pytest.raises(LagrangianError):
            LagrangianL(
                "wrong",
                value=lambda x, y, r: np.asarray(r) + 1.0,
                d_r=lambda x, y, r: 2.0 * np.ones(np.shape(r)),
                d_rr=lambda x, y, r: np.zeros(np.shape(r)),
            )

    def test_nonpositive_rejected(self):
        """Test that L must be positive."""
        with pytest.raises(LagrangianError):
            LagrangianL(
                "negative",
                value=lambda x, y, r: np.asarray(r) - 10.0,
                d_r=lambda x, y, r: np.ones(np.shape(r)),
                d_rr=lambda x, y, r: np.zeros(np.shape(r)),
            )

    def test_missing_target_partial(self):
        """Test that a y-dependent L must supply d_y."""
        with pytest.raises(UnsupportedLagrangianError) as excinfo:
            LagrangianL(
                "no-dy",
                value=lambda x, y, r: np.asarray(r) + 1.0,
                d_r=lambda x, y, r: np.ones(np.shape(r)),
                d_rr=lambda x, y, r: np.zeros(np.shape(r)),
                depends_on_y=True,
            )
        assert excinfo.value.missing == "d_y"

    def test_missing_mixed_partial_on_use(self):
        """Test that d_ry is demanded only when used."""
        L = LagrangianL(
            "no-dry",
            value=lambda x, y, r: np.asarray(r) + np.sum(np.asarray(y) ** 2, axis=-1) + 1.0,
            d_r=lambda x, y, r: np.ones(np.shape(r)),
            d_rr=lambda x, y, r: np.zeros(np.shape(r)),
            d_y=lambda x, y, r: 2.0 * np.asarray(y),
            depends_on_y=True,
        )
        with pytest.raises(UnsupportedLagrangianError):
            L.partial_ry(None, np.zeros((1, 2)), np.ones(1))
