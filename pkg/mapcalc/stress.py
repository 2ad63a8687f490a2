"""
Stress-energy tensors of the bienergy-type functionals.

Convention: for g_t = g + t dg, d/dt F = 1/2 int <S, dg> dv_g. Every
tensor is assembled from symmetric pieces, so it is exactly symmetric.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np

from .energy import Functional
from .geometry import GridGeometry, SymTensorField, div_symtensor, inner_sym, trace_sym
from .lagrangians import LagrangianB, LagrangianL, bienergy, dirichlet, guarded_power
from .mapfield import (
    DEPTH_BITENSION,
    DEPTH_STRESS,
    DiscreteMap,
    Variant,
    L_tension,
    bitension_p2,
    differential_norm,
    exponent_weight,
    family_contraction,
    p_tension,
    pq_weighted_tension,
    pullback_connection,
    pullback_metric,
    section_inner,
    section_norm,
)
from .soliton import CutoffFunction, SolitonStructure

logger = logging.getLogger(__name__)

StressKind = Literal["S_2p", "S_2pq", "S_2L", "S_BL"]
STRESS_KINDS: Tuple[StressKind, ...] = ("S_2p", "S_2pq", "S_2L", "S_BL")


@dataclass(frozen=True, eq=False)
class StressTensor:
    tensor: SymTensorField
    kind: StressKind
    params: Dict[str, object] = field(default_factory=dict)
    variant: Variant = "derived"

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values


def _sym_pair(phi: DiscreteMap, nabla_W: np.ndarray) -> np.ndarray:
    """h(dphi_i, nabla_j W) + h(dphi_j, nabla_i W)."""
    M = np.einsum("...ab,...ia,...jb->...ij", phi.target_metric, phi.differential, nabla_W)
    return M + np.swapaxes(M, -1, -2)


def _scalar(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float)[..., None, None]


def _s_2p(phi: DiscreteMap, p: float, variant: Variant) -> np.ndarray:
    g = phi.geom.g
    T = p_tension(phi, p).values
    nabla_T = pullback_connection(phi, T)
    sigma = exponent_weight(phi, p - 2.0)
    c = family_contraction(phi, nabla_T)
    T2 = section_inner(phi, T, T)
    S = -_scalar(0.5 * T2 + sigma * c) * g + _scalar(sigma) * _sym_pair(phi, nabla_T)
    if p != 2:
        if variant == "derived":
            weight = exponent_weight(phi, p - 4.0)
        else:
            weight = guarded_power(np.sqrt(T2), p - 4.0, phi.eps)
        S = S + (p - 2.0) * _scalar(weight * c) * pullback_metric(phi).values
    return S


def _s_2pq(phi: DiscreteMap, p: float, q: float, variant: Variant) -> np.ndarray:
    if variant == "printed":
        T = p_tension(phi, p).values
        prefactor = guarded_power(section_norm(phi, T), q - 2.0, phi.eps)
        return _scalar(prefactor) * _s_2p(phi, p, "printed")
    g = phi.geom.g
    T = p_tension(phi, p).values
    W = pq_weighted_tension(phi, p, q)
    nabla_W = pullback_connection(phi, W)
    sigma = exponent_weight(phi, p - 2.0)
    c = family_contraction(phi, nabla_W)
    Tq = section_norm(phi, T) ** q
    S = _scalar((1.0 / q - 1.0) * Tq - sigma * c) * g + _scalar(sigma) * _sym_pair(phi, nabla_W)
    if p != 2:
        S = S + (p - 2.0) * _scalar(exponent_weight(phi, p - 4.0) * c) * pullback_metric(phi).values
    return S


def _lagrangian_terms(phi: DiscreteMap, L: LagrangianL):
    x, y = phi.geom.points, phi.values
    e = 0.5 * differential_norm(phi) ** 2
    return (
        x, y, e,
        np.asarray(L.d_r(x, y, e), dtype=float),
        np.asarray(L.d_rr(x, y, e), dtype=float),
    )


def _directional(L: LagrangianL, x, y, e, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """V(L) and V(L') at phi, both zero for y-independent L."""
    if not L.depends_on_y:
        zero = np.zeros(V.shape[:-1])
        return zero, zero
    return (
        np.einsum("...a,...a->...", L.partial_y(x, y, e), V),
        np.einsum("...a,...a->...", L.partial_ry(x, y, e), V),
    )


def _s_2L(phi: DiscreteMap, L: LagrangianL, variant: Variant) -> np.ndarray:
    g = phi.geom.g
    x, y, e, Lp, Lpp = _lagrangian_terms(phi, L)
    T = L_tension(phi, L).values
    nabla_T = pullback_connection(phi, T)
    c = family_contraction(phi, nabla_T)
    T_L, T_Lp = _directional(L, x, y, e, T)
    P = pullback_metric(phi).values
    sign = 1.0 if variant == "derived" else -1.0
    return (
        -_scalar(0.5 * section_inner(phi, T, T) + T_L + Lp * c) * g
        + _scalar(Lp) * _sym_pair(phi, nabla_T)
        + _scalar(Lpp * c + sign * T_Lp) * P
    )


def _s_BL(phi: DiscreteMap, B: LagrangianB, L: LagrangianL, variant: Variant) -> np.ndarray:
    g = phi.geom.g
    x, y, e, Lp, Lpp = _lagrangian_terms(phi, L)
    T = L_tension(phi, L).values
    T2 = section_inner(phi, T, T)
    s = 0.5 * T2
    B_value = np.asarray(B.value(x, y, e, s), dtype=float)
    B_r = np.asarray(B.d_r(x, y, e, s), dtype=float)
    B_s = np.asarray(B.d_s(x, y, e, s), dtype=float)
    P = pullback_metric(phi).values
    if variant == "printed":
        L_value = np.asarray(L.value(x, y, e), dtype=float)
        return _scalar(B_r) * (_scalar(L_value) * g - _scalar(Lp) * P) + _scalar(B_s) * _s_2L(phi, L, "printed")
    W = B_s[..., None] * T
    nabla_W = pullback_connection(phi, W)
    c = family_contraction(phi, nabla_W)
    T_L, _ = _directional(L, x, y, e, T)
    _, W_Lp = _directional(L, x, y, e, W)
    return (
        _scalar(B_value) * g
        - _scalar(B_r) * P
        - _scalar(B_s * (T2 + T_L) + Lp * c) * g
        + _scalar(Lp) * _sym_pair(phi, nabla_W)
        + _scalar(Lpp * c + W_Lp) * P
    )


def assemble(
    kind: StressKind,
    phi: DiscreteMap,
    p: float = 2.0,
    q: float = 2.0,
    L: Optional[LagrangianL] = None,
    B: Optional[LagrangianB] = None,
    variant: Variant = "derived",
) -> StressTensor:
    """Assemble one stress tensor on the map's grid."""
    phi.require_margin(DEPTH_STRESS, kind)
    if kind == "S_2p":
        values, params = _s_2p(phi, p, variant), {"p": p}
    elif kind == "S_2pq":
        values, params = _s_2pq(phi, p, q, variant), {"p": p, "q": q}
    elif kind == "S_2L":
        L = L or dirichlet(phi.source_dim, phi.target_dim)
        values, params = _s_2L(phi, L, variant), {"L": L.name}
    elif kind == "S_BL":
        L = L or dirichlet(phi.source_dim, phi.target_dim)
        B = B or bienergy(phi.source_dim, phi.target_dim)
        values, params = _s_BL(phi, B, L, variant), {"L": L.name, "B": B.name}
    else:
        raise ValueError(f"unknown stress tensor {kind!r}")
    return StressTensor(SymTensorField(values, kind), kind, params, variant)


def functional_for(
    kind: StressKind,
    p: float = 2.0,
    q: float = 2.0,
    L: Optional[LagrangianL] = None,
    B: Optional[LagrangianB] = None,
    source_dim: int = 2,
    target_dim: int = 2,
) -> Functional:
    """The functional whose metric variation the stress tensor represents."""
    if kind == "S_2p":
        return Functional.energy_p(p)
    if kind == "S_2pq":
        return Functional.energy_pq(p, q)
    L = L or dirichlet(source_dim, target_dim)
    if kind == "S_2L":
        return Functional.energy_B(bienergy(source_dim, target_dim), L)
    return Functional.energy_B(B or bienergy(source_dim, target_dim), L)


def metric_variation_formula(
    S: StressTensor, phi: DiscreteMap, delta_g: Union[SymTensorField, np.ndarray]
) -> float:
    """1/2 int <S, dg> dv_g."""
    dg = np.asarray(getattr(delta_g, "values", delta_g), dtype=float)
    return 0.5 * phi.geom.integrate(inner_sym(phi.geom, S.values, dg))


def trace(S: StressTensor, geom: GridGeometry) -> np.ndarray:
    return trace_sym(geom, S.values)


def closed_form_trace(
    S: StressTensor,
    phi: DiscreteMap,
    L: Optional[LagrangianL] = None,
    B: Optional[LagrangianB] = None,
) -> np.ndarray:
    """Trace of the derived tensors written out without contracting the tensor."""
    if S.variant != "derived":
        raise ValueError("closed-form traces are written for the derived tensors")
    m = phi.source_dim
    X2 = differential_norm(phi) ** 2
    if S.kind in ("S_2p", "S_2pq"):
        p = float(S.params["p"])
        q = float(S.params.get("q", 2.0))
        T = p_tension(phi, p).values
        W = T if S.kind == "S_2p" else pq_weighted_tension(phi, p, q)
        sigma_p = exponent_weight(phi, p - 2.0)
        c = family_contraction(phi, pullback_connection(phi, W))
        if S.kind == "S_2p":
            head = -m * (0.5 * section_inner(phi, T, T) + sigma_p * c)
        else:
            head = m * ((1.0 / q - 1.0) * section_norm(phi, T) ** q - sigma_p * c)
        out = head + 2.0 * sigma_p * c
        if p != 2:
            out = out + (p - 2.0) * exponent_weight(phi, p - 4.0) * c * X2
        return out

    L = L or dirichlet(phi.source_dim, phi.target_dim)
    x, y, e, Lp, Lpp = _lagrangian_terms(phi, L)
    T = L_tension(phi, L).values
    T2 = section_inner(phi, T, T)
    T_L, T_Lp = _directional(L, x, y, e, T)
    if S.kind == "S_2L":
        c = family_contraction(phi, pullback_connection(phi, T))
        return -m * (0.5 * T2 + T_L + Lp * c) + 2.0 * Lp * c + (Lpp * c + T_Lp) * X2
    B = B or bienergy(phi.source_dim, phi.target_dim)
    s = 0.5 * T2
    B_value = np.asarray(B.value(x, y, e, s), dtype=float)
    B_r = np.asarray(B.d_r(x, y, e, s), dtype=float)
    B_s = np.asarray(B.d_s(x, y, e, s), dtype=float)
    W = B_s[..., None] * T
    c_W = family_contraction(phi, pullback_connection(phi, W))
    _, W_Lp = _directional(L, x, y, e, W)
    return (
        m * B_value - B_r * X2
        - m * (B_s * (T2 + T_L) + Lp * c_W)
        + 2.0 * Lp * c_W
        + (Lpp * c_W + W_Lp) * X2
    )


def divergence_identity_residual(
    phi: DiscreteMap, p: float, variant: Variant = "derived"
) -> Tuple[np.ndarray, float, float]:
    """
    R_j = (div S_2p)_j + h(tau_{2,p}, dphi_j).

    Returns the covector field, its sup |R|_g and its L2 norm.
    """
    phi.require_margin(DEPTH_BITENSION, "stress divergence")
    geom = phi.geom
    S = assemble("S_2p", phi, p=p, variant=variant)
    tau2 = bitension_p2(phi, p).values
    R = div_symtensor(geom, S.values) + np.einsum(
        "...ab,...a,...jb->...j", phi.target_metric, tau2, phi.differential
    )
    pointwise = np.sqrt(np.maximum(np.einsum("...ij,...i,...j->...", geom.ginv, R, R), 0.0))
    sup = float(pointwise.max(initial=0.0))
    l2 = float(np.sqrt(max(geom.integrate(pointwise ** 2), 0.0)))
    logger.debug(
        "Divergence identity residual",
        extra={"p": p, "variant": variant, "sup": sup, "l2": l2, "h": geom.h},
    )
    return R, sup, l2


@dataclass(frozen=True)
class IBPResult:
    hessian_term: float
    gradient_term: float
    divergence_term: float

    @property
    def defect(self) -> float:
        return self.hessian_term + self.gradient_term + self.divergence_term

    @property
    def scale(self) -> float:
        return abs(self.hessian_term) + abs(self.gradient_term) + abs(self.divergence_term)

    @property
    def relative_defect(self) -> float:
        return abs(self.defect) / self.scale if self.scale > 0 else 0.0


def liouville_ibp_identity(
    S: Union[StressTensor, SymTensorField, np.ndarray],
    soliton: SolitonStructure,
    eta: CutoffFunction,
    geom: GridGeometry,
) -> IBPResult:
    """
    int eta^2 <Hess f, S> + int S(grad f, grad eta^2) + int eta^2 <grad f, div S> = 0

    for any symmetric S, as long as eta^2 S vanishes near the box boundary.
    """
    values = np.asarray(getattr(S, "values", S), dtype=float)
    eta2 = eta.squared
    grad_f = soliton.gradient(geom)
    hess_f = soliton.hessian(geom).values
    grad_eta2 = eta.gradient_squared(geom)
    div_S = div_symtensor(geom, values)
    result = IBPResult(
        hessian_term=geom.integrate(eta2 * inner_sym(geom, hess_f, values)),
        gradient_term=geom.integrate(np.einsum("...ij,...i,...j->...", values, grad_f, grad_eta2)),
        divergence_term=geom.integrate(eta2 * np.einsum("...i,...i->...", grad_f, div_S)),
    )
    logger.debug(
        "Integration by parts identity",
        extra={"defect": result.defect, "relative_defect": result.relative_defect, "h": geom.h},
    )
    return result
