"""
Energy functionals over discrete maps and the two finite-difference oracles
(map variations and metric variations) their first-variation formulas are
checked against.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional, Union

import numpy as np

from .exceptions import DefinitenessError, DegenerateMetricError, StepUnderflowError
from .geometry import GridGeometry, SymTensorField, div_symtensor, inner_sym, trace_sym
from .grid import check_margin
from .lagrangians import LagrangianB, LagrangianL
from .mapfield import (
    DEPTH_BITENSION,
    DEPTH_DIFFERENTIAL,
    DEPTH_STRESS,
    DEPTH_TENSION,
    DiscreteMap,
    PullbackSection,
    Variant,
    B_tension,
    L_tension,
    bitension_LB,
    bitension_p2,
    bitension_pq,
    differential_norm,
    exponent_weight,
    p_tension,
    pullback_divergence,
    pullback_metric,
    required_margin,
    second_fundamental_form,
    section_inner,
    section_norm,
)

logger = logging.getLogger(__name__)

FunctionalKind = Literal["E_L", "E_B", "E_p", "E_pq"]

MIN_STEP = 1e-14


@dataclass(frozen=True)
class Functional:
    """One of E_L, E_B, E_p = 1/2 int |tau_p|^2 or E_pq = 1/q int |tau_p|^q."""

    kind: FunctionalKind
    p: float = 2.0
    q: float = 2.0
    L: Optional[LagrangianL] = None
    B: Optional[LagrangianB] = None
    variant: Variant = "derived"

    def __post_init__(self):
        if self.p < 2 or self.q < 2:
            raise ValueError("functionals need p >= 2 and q >= 2")
        if self.kind in ("E_L", "E_B") and self.L is None:
            raise ValueError(f"{self.kind} needs a Lagrangian L")
        if self.kind == "E_B" and self.B is None:
            raise ValueError("E_B needs a Lagrangian B")

    @classmethod
    def energy_L(cls, L: LagrangianL) -> "Functional":
        return cls("E_L", L=L)

    @classmethod
    def energy_B(cls, B: LagrangianB, L: LagrangianL, variant: Variant = "derived") -> "Functional":
        return cls("E_B", B=B, L=L, variant=variant)

    @classmethod
    def energy_p(cls, p: float) -> "Functional":
        return cls("E_p", p=p)

    @classmethod
    def energy_pq(cls, p: float, q: float) -> "Functional":
        return cls("E_pq", p=p, q=q)

    @property
    def depth(self) -> int:
        """Nested-difference depth of the integrand."""
        return {"E_L": DEPTH_DIFFERENTIAL, "E_B": DEPTH_TENSION, "E_p": DEPTH_TENSION,
                "E_pq": DEPTH_TENSION}[self.kind]

    @property
    def params(self) -> Dict[str, object]:
        params: Dict[str, object] = {"kind": self.kind}
        if self.kind in ("E_p", "E_pq"):
            params["p"] = self.p
        if self.kind == "E_pq":
            params["q"] = self.q
        if self.L is not None:
            params["L"] = self.L.name
        if self.B is not None:
            params["B"] = self.B.name
        return params

    def integrand(self, phi: DiscreteMap) -> np.ndarray:
        x, y = phi.geom.points, phi.values
        if self.kind == "E_L":
            e = 0.5 * differential_norm(phi) ** 2
            return np.asarray(self.L.value(x, y, e), dtype=float)
        if self.kind == "E_B":
            e = 0.5 * differential_norm(phi) ** 2
            tau_L = L_tension(phi, self.L).values
            s = 0.5 * section_inner(phi, tau_L, tau_L)
            return np.asarray(self.B.value(x, y, e, s), dtype=float)
        norm = section_norm(phi, p_tension(phi, self.p).values)
        if self.kind == "E_p":
            return 0.5 * norm ** 2
        return norm ** self.q / self.q

    def gradient(self, phi: DiscreteMap) -> PullbackSection:
        """G with d/dt F(phi + t v) = -int <G, v>_h dv_g."""
        if self.kind == "E_L":
            return L_tension(phi, self.L)
        if self.kind == "E_B":
            return B_tension(phi, self.B, self.L) + bitension_LB(phi, self.B, self.L, self.variant)
        if self.kind == "E_p":
            return bitension_p2(phi, self.p)
        return bitension_pq(phi, self.p, self.q)

    def gradient_depth(self) -> int:
        return DEPTH_TENSION if self.kind == "E_L" else DEPTH_BITENSION


def evaluate(F: Functional, phi: DiscreteMap) -> float:
    """Quadrature of the functional's integrand."""
    phi.require_margin(F.depth, F.kind)
    return phi.geom.integrate(F.integrand(phi))


def map_variation_formula(F: Functional, phi: DiscreteMap, v: np.ndarray) -> float:
    """-int <G, v>_h dv_g with G the assembled first-variation field."""
    G = F.gradient(phi)
    return -phi.geom.integrate(section_inner(phi, G.values, v))


@dataclass(frozen=True)
class OracleEstimate:
    """Richardson-extrapolated central difference with an error bar."""

    value: float
    error_bar: float
    step: float

    @classmethod
    def zero(cls) -> "OracleEstimate":
        return cls(0.0, 0.0, 0.0)


def richardson(energy: Callable[[float], float], t0: float) -> OracleEstimate:
    """
    Combine central differences at t0 and t0/2.

    The error bar is the larger of the extrapolation correction and the
    round-off floor of the energy values.
    """
    if not t0 >= MIN_STEP:
        raise StepUnderflowError(t0)
    e_plus, e_minus = energy(t0), energy(-t0)
    e_half_plus, e_half_minus = energy(0.5 * t0), energy(-0.5 * t0)
    coarse = (e_plus - e_minus) / (2.0 * t0)
    fine = (e_half_plus - e_half_minus) / t0
    value = (4.0 * fine - coarse) / 3.0
    scale = max(abs(e_plus), abs(e_minus), abs(e_half_plus), abs(e_half_minus))
    roundoff = 4.0 * np.finfo(float).eps * scale / t0
    return OracleEstimate(float(value), float(max(abs(value - fine), roundoff)), float(t0))


def map_variation_derivative(
    F: Functional,
    phi: DiscreteMap,
    v: Union[np.ndarray, PullbackSection],
    rel_step: float = 1e-4,
) -> OracleEstimate:
    """d/dt F(phi + t v) at t = 0 by finite differences."""
    v = np.asarray(getattr(v, "values", v), dtype=float)
    if not np.any(v):
        return OracleEstimate.zero()
    check_margin(v, phi.geom.grid, required_margin(F.depth, phi.geom.width), "map variation")
    t0 = rel_step * max(1.0, float(np.abs(phi.values).max())) / float(np.abs(v).max())
    estimate = richardson(lambda t: evaluate(F, phi.displaced(v, t)), t0)
    logger.debug(
        "Map variation oracle",
        extra={"functional": F.kind, "value": estimate.value, "error_bar": estimate.error_bar, "t0": t0},
    )
    return estimate


def metric_variation_derivative(
    F: Functional,
    phi: DiscreteMap,
    delta_g: Union[SymTensorField, np.ndarray],
    rel_step: float = 1e-4,
    fixed_volume: bool = False,
) -> OracleEstimate:
    """
    d/dt F under g_t = g + t dg with the whole source geometry rebuilt at each probe.

    ``fixed_volume`` integrates against the unperturbed volume form.
    """
    dg = np.asarray(getattr(delta_g, "values", delta_g), dtype=float)
    if not np.any(dg):
        return OracleEstimate.zero()
    geom = phi.geom
    check_margin(dg, geom.grid, required_margin(F.depth, geom.width), "metric variation")
    t0 = rel_step * max(1.0, float(np.abs(geom.g).max())) / float(np.abs(dg).max())

    def energy(t: float) -> float:
        try:
            geom_t = geom.perturbed(dg, t)
        except DegenerateMetricError as e:
            raise DefinitenessError(t) from e
        phi_t = phi.on(geom_t)
        phi_t.require_margin(F.depth, F.kind)
        integrand = F.integrand(phi_t)
        return geom.integrate(integrand) if fixed_volume else geom_t.integrate(integrand)

    estimate = richardson(energy, t0)
    logger.debug(
        "Metric variation oracle",
        extra={"functional": F.kind, "value": estimate.value, "error_bar": estimate.error_bar,
               "fixed_volume": fixed_volume},
    )
    return estimate


def delta_tau_p_squared(
    phi: DiscreteMap, p: float, delta_g: Union[SymTensorField, np.ndarray]
) -> np.ndarray:
    """
    Pointwise first variation of |tau_p|^2 under g + t dg, volume form excluded.

    xi = (div dg - d(tr dg) / 2)^# is the variation field of the Christoffel trace.
    """
    phi.require_margin(DEPTH_STRESS, "metric variation of |tau_p|^2")
    geom: GridGeometry = phi.geom
    dg = np.asarray(getattr(delta_g, "values", delta_g), dtype=float)
    dphi = phi.differential
    h = phi.target_metric
    T = p_tension(phi, p).values
    sigma = exponent_weight(phi, p - 2.0)

    div_dg = div_symtensor(geom, dg)
    d_trace = geom.stencil.gradient(trace_sym(geom, dg))
    xi = np.einsum("...ij,...j->...i", geom.ginv, div_dg - 0.5 * d_trace)
    hT_dphi = np.einsum("...ab,...ia,...b->...i", h, dphi, T)

    nabla_dphi = second_fundamental_form(phi)
    h_nabla_T = np.einsum("...ab,...ija,...b->...ij", h, nabla_dphi, T)
    out = -2.0 * sigma * inner_sym(geom, h_nabla_T, dg)
    out = out - 2.0 * sigma * np.einsum("...i,...i->...", xi, hT_dphi)
    if p == 2:
        return out

    X = differential_norm(phi)
    Q = inner_sym(geom, pullback_metric(phi).values, dg)
    tau = pullback_divergence(phi, dphi)
    w4 = exponent_weight(phi, p - 4.0)
    out = out - (p - 2.0) * w4 * Q * section_inner(phi, tau, T)

    dX = geom.stencil.gradient(X)
    grad_X = np.einsum("...ij,...j->...i", geom.ginv, dX)
    if p != 4:
        w5 = exponent_weight(phi, p - 5.0)
        out = out - (p - 2.0) * (p - 4.0) * w5 * Q * np.einsum("...i,...i->...", grad_X, hT_dphi)
    w3 = exponent_weight(phi, p - 3.0)
    dX_h = np.einsum("...i,...j->...ij", dX, hT_dphi)
    out = out - 2.0 * (p - 2.0) * w3 * inner_sym(geom, dX_h, dg)
    grad_Q = np.einsum("...ij,...j->...i", geom.ginv, geom.stencil.gradient(Q))
    out = out - (p - 2.0) * w4 * np.einsum("...i,...i->...", grad_Q, hT_dphi)
    return out
