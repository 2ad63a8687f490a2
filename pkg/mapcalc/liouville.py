"""
Integral bookkeeping behind the Liouville-type vanishing argument for
p-biharmonic maps from a gradient Ricci soliton.

With S = S_2p, a = grad(eta^2) and b = grad f, integration by parts gives

    int eta^2 <Hess f, S> + int S(b, a) + int eta^2 <b, div S> = 0,

and each of the three pieces is expanded into named integrals. The ledger
evaluates every integral by quadrature so that a coefficient error shows
up in exactly one block.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import CutoffError
from .geometry import GridGeometry, div_symtensor, inner_sym
from .mapfield import (
    DEPTH_BITENSION,
    DiscreteMap,
    Variant,
    differential_norm,
    exponent_weight,
    family_contraction,
    family_derivative,
    p_tension,
    pullback_connection,
    pullback_metric,
    second_fundamental_form,
    section_inner,
)
from .schemas import LedgerEntry
from .soliton import CutoffFunction, SolitonStructure, make_cutoff
from .stress import assemble

logger = logging.getLogger(__name__)


@dataclass
class LedgerBlock:
    """One expansion: a directly evaluated side against its expanded form."""

    name: str
    direct: float
    expanded: float

    @property
    def defect(self) -> float:
        return self.direct - self.expanded

    @property
    def relative_defect(self) -> float:
        scale = max(abs(self.direct), abs(self.expanded))
        return abs(self.defect) / scale if scale > 0 else 0.0


@dataclass
class LedgerResult:
    entries: List[LedgerEntry] = field(default_factory=list)
    blocks: Dict[str, LedgerBlock] = field(default_factory=dict)
    sign_min: float = 0.0
    sign_max: float = 0.0

    def block(self, name: str) -> LedgerBlock:
        return self.blocks[name]


class _Integrals:
    """Every named integral of the ledger on one (map, soliton, cutoff) triple."""

    def __init__(self, phi: DiscreteMap, p: float, soliton: SolitonStructure, eta: CutoffFunction):
        geom = phi.geom
        self.geom = geom
        self.p = p
        self.lam = soliton.lam
        self.m = geom.dim
        h = phi.target_metric
        dphi = phi.differential

        self.eta2 = eta.squared
        self.a = eta.gradient_squared(geom)
        self.b = soliton.gradient(geom)
        self.lap_eta2 = eta.laplacian_squared(geom)
        self.T = p_tension(phi, p).values
        self.X = differential_norm(phi)
        self.sigma = exponent_weight(phi, p - 2.0)
        self.w4 = exponent_weight(phi, p - 4.0)
        self.c = family_contraction(phi, pullback_connection(phi, self.T))
        self.P = pullback_metric(phi).values
        self.ric = geom.ricci
        self.scal = geom.scalar_curvature
        ric_up = np.einsum("...ia,...jb,...ab->...ij", geom.ginv, geom.ginv, self.ric)
        self.ric_a = np.einsum("...ij,...jk,...k->...i", geom.ginv, self.ric, self.a)

        self.T2 = section_inner(phi, self.T, self.T)
        self.hT = np.einsum("...ab,...ia,...b->...i", h, dphi, self.T)
        # F[..., j, i, :] = nabla_j(sigma dphi_i)
        F = family_derivative(phi, self.sigma[..., None, None] * dphi)
        self.F_T = np.einsum("...jia,...ab,...b->...ji", F, h, self.T)
        self.ric_nabla = np.einsum("...ij,...ij->...", ric_up, self.F_T)
        nabla_dphi_T = np.einsum("...ija,...ab,...b->...ij", second_fundamental_form(phi), h, self.T)
        self.nabla_dphi_T = nabla_dphi_T
        self.dphi_ab = np.einsum("...ab,...ia,...jb,...i,...j->...", h, dphi, dphi, self.a, self.b)

    def integrate(self, field: np.ndarray) -> float:
        return self.geom.integrate(field)

    def along(self, vector: np.ndarray) -> np.ndarray:
        """h(dphi(V), T)."""
        return np.einsum("...i,...i->...", vector, self.hT)

    def named(self) -> Dict[str, float]:
        p, I = self.p, self.integrate
        a_dot_b = np.einsum("...ij,...i,...j->...", self.geom.g, self.a, self.b)
        values = {
            "A": I(self.eta2 * self.T2),
            "B": I(self.sigma * self.along(self.a)),
            "C": 0.0,
            "D": 0.0,
            "J4": 0.0,
            "K2": I(np.einsum("...j,...i,...ji->...", self.a, self.b, self.F_T)),
            "K3": I(np.einsum("...i,...j,...ji->...", self.a, self.b, self.F_T)),
            "ric_nabla": I(self.eta2 * self.ric_nabla),
            "scal_T2": I(self.eta2 * self.scal * self.T2),
            "scal_a": I(self.sigma * self.scal * self.along(self.a)),
            "ric_a": I(self.sigma * self.along(self.ric_a)),
            "ab_T2": I(a_dot_b * self.T2),
            "lap_b": I(self.lap_eta2 * self.sigma * self.along(self.b)),
            "sign_T2": I(self.eta2 * (self.lam * (self.m - 4) - self.scal) * self.T2),
            "printed_B": I(self.along(self.a)),
            "printed_ab_hess": I(self.sigma * np.einsum("...i,...j,...ij->...", self.a, self.b, self.nabla_dphi_T)),
        }
        if p != 2:
            ric_P = inner_sym(self.geom, self.ric, self.P)
            X2 = self.X ** 2
            values["C"] = I(self.eta2 * self.w4 * self.c * X2)
            values["D"] = I(self.eta2 * self.w4 * self.c * ric_P)
            values["J4"] = (p - 2.0) * I(self.w4 * self.c * self.dphi_ab)
            values["printed_C"] = I(self.w4 * self.c * X2)
            values["printed_D"] = I(self.w4 * self.c * ric_P)
        else:
            values["printed_C"] = 0.0
            values["printed_D"] = 0.0
        return values


def liouville_ledger(
    phi: DiscreteMap,
    p: float,
    soliton: SolitonStructure,
    eta: CutoffFunction,
    variant: Variant = "derived",
) -> LedgerResult:
    """
    Itemise every integral of the vanishing argument for S_2p.

    Blocks: ``ibp`` (the three integrals above sum to zero), ``trace``,
    ``ricci`` and ``gradient`` (each expansion against direct quadrature),
    ``identity`` (the assembled identity, div S term kept) and ``printed``
    (the identity with the alternative coefficient set; reported only).
    """
    phi.require_margin(DEPTH_BITENSION, "Liouville ledger")
    geom = phi.geom
    h_grid = geom.h
    R = eta.R
    p = float(p)
    lam, m = soliton.lam, geom.dim
    S = assemble("S_2p", phi, p=p, variant=variant).values
    n = _Integrals(phi, p, soliton, eta)
    v = n.named()

    hess_f = soliton.hessian(geom).values
    ibp_hess = geom.integrate(n.eta2 * inner_sym(geom, hess_f, S))
    ibp_grad = geom.integrate(np.einsum("...ij,...i,...j->...", S, n.b, n.a))
    ibp_div = geom.integrate(n.eta2 * np.einsum("...j,...j->...", n.b, div_symtensor(geom, S)))

    trace_direct = geom.integrate(n.eta2 * np.einsum("...ij,...ij->...", geom.ginv, S))
    trace_expanded = (0.5 * m - 2.0) * v["A"] + (m - 2.0) * v["B"] + (p - 2.0) * v["C"]

    ricci_direct = geom.integrate(n.eta2 * inner_sym(geom, n.ric, S))
    ricci_expanded = (
        0.5 * v["scal_T2"] + v["scal_a"] - 2.0 * v["ric_a"] - 2.0 * v["ric_nabla"] + (p - 2.0) * v["D"]
    )

    gradient_expanded = (
        0.5 * v["ab_T2"] - v["lap_b"] - (m * lam) * v["B"] + v["scal_a"] - v["K2"] - v["K3"] + v["J4"]
    )

    lhs = v["sign_T2"] + 4.0 * v["ric_nabla"] + 2.0 * (p - 2.0) * lam * v["C"] - 2.0 * (p - 2.0) * v["D"]
    rhs = (
        -4.0 * v["ric_a"] + 4.0 * lam * v["B"] - v["ab_T2"] + 2.0 * v["lap_b"]
        + 2.0 * v["K2"] + 2.0 * v["K3"] - 2.0 * v["J4"] - 2.0 * ibp_div
    )

    printed_lhs = (
        v["sign_T2"] + 4.0 * v["ric_nabla"] + 2.0 * (p - 2.0) * v["printed_D"]
        - (p - 2.0) * lam * v["printed_C"]
    )
    printed_rhs = (
        -4.0 * v["ric_a"] + 4.0 * lam * v["printed_B"] - v["ab_T2"] + 2.0 * v["lap_b"]
        + 4.0 * v["printed_ab_hess"]
    )

    result = LedgerResult()
    result.blocks = {
        "ibp": LedgerBlock("ibp", ibp_hess + ibp_grad, -ibp_div),
        "trace": LedgerBlock("trace", trace_direct, trace_expanded),
        "ricci": LedgerBlock("ricci", ricci_direct, ricci_expanded),
        "gradient": LedgerBlock("gradient", ibp_grad, gradient_expanded),
        "identity": LedgerBlock("identity", lhs, rhs),
        "printed": LedgerBlock("printed", printed_lhs, printed_rhs),
    }
    labels = {
        "A": "int eta^2 |tau_p|^2",
        "B": "int |dphi|^(p-2) <dphi(grad eta^2), tau_p>",
        "C": "int eta^2 |dphi|^(p-4) <dphi, nabla tau_p> |dphi|^2",
        "D": "int eta^2 |dphi|^(p-4) <dphi, nabla tau_p> <Ric, phi*h>",
        "J4": "(p-2) int |dphi|^(p-4) <dphi, nabla tau_p> <dphi(grad eta^2), dphi(grad f)>",
        "K2": "int a^j b^i <nabla_j(|dphi|^(p-2) dphi_i), tau_p>",
        "K3": "int a^i b^j <nabla_j(|dphi|^(p-2) dphi_i), tau_p>",
        "ric_nabla": "int eta^2 Ric^ij <nabla(|dphi|^(p-2) dphi)_ij, tau_p>",
        "scal_T2": "int eta^2 Scal |tau_p|^2",
        "scal_a": "int |dphi|^(p-2) Scal <dphi(grad eta^2), tau_p>",
        "ric_a": "int |dphi|^(p-2) <dphi(Ric(grad eta^2)), tau_p>",
        "ab_T2": "int <grad eta^2, grad f> |tau_p|^2",
        "lap_b": "int Lap(eta^2) |dphi|^(p-2) <dphi(grad f), tau_p>",
        "sign_T2": "int eta^2 (lambda(m-4) - Scal) |tau_p|^2",
        "printed_B": "int <dphi(grad eta^2), tau_p>",
        "printed_C": "int |dphi|^(p-4) <dphi, nabla tau_p> |dphi|^2",
        "printed_D": "int |dphi|^(p-4) <dphi, nabla tau_p> <Ric, phi*h>",
        "printed_ab_hess": "int |dphi|^(p-2) a^i b^j <nabla dphi_ij, tau_p>",
    }
    for key, value in v.items():
        result.entries.append(LedgerEntry(term_id=key, label=labels[key], value=value, R=R, h=h_grid))
    result.entries.extend([
        LedgerEntry(term_id="ibp.hessian", label="int eta^2 <Hess f, S>", value=ibp_hess, R=R, h=h_grid),
        LedgerEntry(term_id="ibp.gradient", label="int S(grad f, grad eta^2)", value=ibp_grad, R=R, h=h_grid),
        LedgerEntry(term_id="ibp.divergence", label="int eta^2 <grad f, div S>", value=ibp_div, R=R, h=h_grid),
        LedgerEntry(term_id="trace.direct", label="int eta^2 tr S", value=trace_direct, R=R, h=h_grid),
        LedgerEntry(term_id="ricci.direct", label="int eta^2 <Ric, S>", value=ricci_direct, R=R, h=h_grid),
    ])
    for block in result.blocks.values():
        result.entries.append(LedgerEntry(
            term_id=f"{block.name}.defect",
            label=f"{block.name}: direct minus expanded",
            value=block.defect,
            bound=None,
            R=R,
            h=h_grid,
        ))

    sign_field = lam * (m - 4) - geom.scalar_curvature
    result.sign_min = float(sign_field.min())
    result.sign_max = float(sign_field.max())
    logger.info(
        "Liouville ledger",
        extra={
            "p": p, "R": R, "h": h_grid,
            "identity_rel": result.blocks["identity"].relative_defect,
            "printed_rel": result.blocks["printed"].relative_defect,
        },
    )
    return result


# Rate each boundary integral is bounded by: C / R^k.
DECAY_TERMS = {
    "ricci_gradient": 1,
    "gradient": 1,
    "gradient_potential": 1,
    "laplacian": 2,
    "hessian": 1,
}


def _decay_integrals(phi: DiscreteMap, p: float, soliton: SolitonStructure, eta: CutoffFunction) -> Dict[str, float]:
    geom = phi.geom
    h = phi.target_metric
    T = p_tension(phi, p).values
    sigma = exponent_weight(phi, p - 2.0)
    hT = np.einsum("...ab,...ia,...b->...i", h, phi.differential, T)
    a = eta.gradient_squared(geom)
    b = soliton.gradient(geom)
    ric_a = np.einsum("...ij,...jk,...k->...i", geom.ginv, geom.ricci, a)
    a_dot_b = np.einsum("...ij,...i,...j->...", geom.g, a, b)
    hess_T = np.einsum("...ija,...ab,...b->...ij", second_fundamental_form(phi), h, T)
    I = geom.integrate
    return {
        "ricci_gradient": I(sigma * np.einsum("...i,...i->...", ric_a, hT)),
        "gradient": I(sigma * np.einsum("...i,...i->...", a, hT)),
        "gradient_potential": I(a_dot_b * section_inner(phi, T, T)),
        "laplacian": I(sigma * eta.laplacian_squared(geom) * np.einsum("...i,...i->...", b, hT)),
        "hessian": I(sigma * np.einsum("...i,...j,...ij->...", a, b, hess_T)),
    }


def decay_estimate_probe(
    phi: DiscreteMap,
    p: float,
    soliton: SolitonStructure,
    R_ladder: Sequence[float],
    x0: Optional[Sequence[float]] = None,
    metric_balls: bool = False,
    vanish_tol: float = 0.0,
) -> Dict[str, object]:
    """
    Evaluate the boundary integrals of the vanishing argument on a ladder of
    cutoff radii and fit each one's decay exponent k in |I(R)| ~ R^-k.
    """
    phi.require_margin(DEPTH_BITENSION, "decay probe")
    geom: GridGeometry = phi.geom
    x0 = np.zeros(geom.dim) if x0 is None else np.asarray(x0, dtype=float)
    rows: List[Dict[str, float]] = []
    series: Dict[str, List[float]] = {name: [] for name in DECAY_TERMS}
    radii = sorted(float(R) for R in R_ladder)
    for R in radii:
        try:
            eta = make_cutoff(soliton, geom, x0, R, c_target=None, metric_balls=metric_balls)
        except CutoffError:
            logger.error("Decay ladder exceeds the grid box", extra={"R": R, "h": geom.h})
            raise
        values = _decay_integrals(phi, p, soliton, eta)
        for name, value in values.items():
            series[name].append(value)
            rows.append({"R": R, "term": name, "value": value, "cutoff_constant": eta.constant})

    fits: Dict[str, Dict[str, object]] = {}
    for name, values in series.items():
        magnitudes = np.abs(np.asarray(values))
        if np.all(magnitudes <= vanish_tol):
            fits[name] = {"vanishes": True, "exponent": None, "required": DECAY_TERMS[name], "decays": True}
            continue
        usable = magnitudes > 0
        if usable.sum() < 2:
            fits[name] = {"vanishes": False, "exponent": None, "required": DECAY_TERMS[name], "decays": False}
            continue
        slope = np.polyfit(np.log(np.asarray(radii)[usable]), np.log(magnitudes[usable]), 1)[0]
        exponent = float(-slope)
        fits[name] = {
            "vanishes": False,
            "exponent": exponent,
            "required": DECAY_TERMS[name],
            "decays": exponent >= DECAY_TERMS[name],
        }
    logger.info(
        "Decay probe",
        extra={"p": p, "R_ladder": radii, "exponents": {k: f["exponent"] for k, f in fits.items()}},
    )
    return {"rows": rows, "fits": fits}
