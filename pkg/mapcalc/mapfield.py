"""
Discrete maps phi: (M, g) -> (N, h), the pullback bundle phi^-1 TN with its
connection, and the tension fields built from them.

Shapes: on a source grid of shape S with dim M = m and dim N = n,

* map values and sections along phi: ``(*S, n)``
* the differential ``dphi[..., i, a] = d_i phi^a``: ``(*S, m, n)``
* derivatives of dphi-indexed families ``A[..., j, a]``: ``(*S, m, m, n)``
  with the derivative index first.

Nested derivatives are always taken by differencing the assembled inner
field. A map is ``phi = A x + b + deviation`` with the affine part
differentiated exactly and the deviation compactly supported.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional, Sequence, Union

import numpy as np

from .exceptions import NonFiniteFieldError
from .geometry import ChartManifold, GridGeometry, SymTensorField
from .grid import check_margin
from .lagrangians import LagrangianB, LagrangianL, guarded_power

logger = logging.getLogger(__name__)

Variant = Literal["derived", "printed"]

# Nested-difference depth of each family of quantities.
DEPTH_DIFFERENTIAL = 1
DEPTH_TENSION = 2
DEPTH_STRESS = 3
DEPTH_BITENSION = 4


def required_margin(depth: int, width: int) -> int:
    """Empty outer layers a deviation needs so that ``depth`` nested differences stay exact."""
    return depth * width + 1


@dataclass(frozen=True, eq=False)
class PullbackSection:
    """Target-chart components V^a of a vector field along phi, shape (*S, n)."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError(self.label or "pullback section")

    def inner(self, phi: "DiscreteMap", other: Union["PullbackSection", np.ndarray]) -> np.ndarray:
        return section_inner(phi, self.values, _values(other))

    def norm(self, phi: "DiscreteMap") -> np.ndarray:
        return section_norm(phi, self.values)

    def sup_norm(self, phi: "DiscreteMap") -> float:
        return float(self.norm(phi).max(initial=0.0))

    def __add__(self, other):
        return PullbackSection(self.values + _values(other), self.label)

    def __sub__(self, other):
        return PullbackSection(self.values - _values(other), self.label)

    def __neg__(self):
        return PullbackSection(-self.values, self.label)

    def __mul__(self, scalar):
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim:
            scalar = scalar[..., None]
        return PullbackSection(self.values * scalar, self.label)

    __rmul__ = __mul__


def _values(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "values", obj), dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteMap:
    """
    A map sampled on the source grid: ``linear @ x + offset + deviation``.

    ``linear`` has shape (n, m). The deviation must vanish near the box
    boundary; every operation checks the margin it needs.
    """

    geom: GridGeometry
    target: ChartManifold
    deviation: np.ndarray
    linear: np.ndarray = field(default=None)
    offset: np.ndarray = field(default=None)
    eps: float = 1e-9

    def __post_init__(self):
        m, n = self.geom.dim, self.target.dim
        deviation = np.asarray(self.deviation, dtype=float)
        if deviation.shape != self.geom.shape + (n,):
            raise ValueError(
                f"deviation shape {deviation.shape} != grid shape {self.geom.shape} + ({n},)"
            )
        if not np.all(np.isfinite(deviation)):
            raise NonFiniteFieldError("map deviation")
        linear = np.zeros((n, m)) if self.linear is None else np.asarray(self.linear, dtype=float)
        offset = np.zeros(n) if self.offset is None else np.asarray(self.offset, dtype=float)
        if linear.shape != (n, m) or offset.shape != (n,):
            raise ValueError("affine base must have linear (n, m) and offset (n,)")
        object.__setattr__(self, "deviation", deviation)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "offset", offset)
        self.target.require_inside(self.values, what="map value")

    @classmethod
    def constant(cls, geom: GridGeometry, target: ChartManifold, point: Sequence[float]) -> "DiscreteMap":
        return cls(geom, target, np.zeros(geom.shape + (target.dim,)), offset=np.asarray(point, dtype=float))

    @property
    def source_dim(self) -> int:
        return self.geom.dim

    @property
    def target_dim(self) -> int:
        return self.target.dim

    @cached_property
    def values(self) -> np.ndarray:
        base = np.einsum("am,...m->...a", self.linear, self.geom.points) + self.offset
        return base + self.deviation

    @cached_property
    def support_mask(self) -> np.ndarray:
        """Nodes where the map differs from its affine base."""
        return np.any(self.deviation != 0.0, axis=-1)

    @cached_property
    def target_metric(self) -> np.ndarray:
        return self.target.metric_at(self.values)

    @cached_property
    def target_inverse(self) -> np.ndarray:
        hinv = np.linalg.inv(self.target_metric)
        return 0.5 * (hinv + np.swapaxes(hinv, -1, -2))

    @cached_property
    def target_christoffel(self) -> np.ndarray:
        return self.target.christoffel_at(self.values)

    @cached_property
    def target_riemann(self) -> np.ndarray:
        return self.target.riemann_at(self.values)

    @cached_property
    def is_constant(self) -> bool:
        return not np.any(self.linear) and not np.any(self.deviation)

    def require_margin(self, depth: int, what: str) -> None:
        check_margin(self.deviation, self.geom.grid, required_margin(depth, self.geom.width), what)

    def with_deviation(self, deviation: np.ndarray) -> "DiscreteMap":
        return DiscreteMap(self.geom, self.target, deviation, self.linear, self.offset, self.eps)

    def displaced(self, v: np.ndarray, t: float) -> "DiscreteMap":
        """phi + t v, a straight line in target coordinates."""
        return self.with_deviation(self.deviation + t * np.asarray(v, dtype=float))

    def on(self, geom: GridGeometry) -> "DiscreteMap":
        """The same node values over another source geometry on the same grid."""
        if geom.grid != self.geom.grid:
            raise ValueError("a map can only be moved to a geometry on the same grid")
        return DiscreteMap(geom, self.target, self.deviation, self.linear, self.offset, self.eps)

    @cached_property
    def differential(self) -> np.ndarray:
        dev = self.geom.stencil.gradient(self.deviation)
        return dev + np.swapaxes(self.linear, 0, 1)


# --- first-order quantities ------------------------------------------------


def differential(phi: DiscreteMap) -> np.ndarray:
    """dphi[..., i, a] = d_i phi^a."""
    phi.require_margin(DEPTH_DIFFERENTIAL, "differential")
    return phi.differential


def differential_norm_squared(phi: DiscreteMap) -> np.ndarray:
    """|dphi|^2 = g^ij h_ab d_i phi^a d_j phi^b."""
    dphi = phi.differential
    return np.einsum("...ij,...ab,...ia,...jb->...", phi.geom.ginv, phi.target_metric, dphi, dphi)


def differential_norm(phi: DiscreteMap) -> np.ndarray:
    return np.sqrt(np.maximum(differential_norm_squared(phi), 0.0))


def energy_density(phi: DiscreteMap) -> np.ndarray:
    phi.require_margin(DEPTH_DIFFERENTIAL, "energy density")
    return 0.5 * differential_norm_squared(phi)


def pullback_metric(phi: DiscreteMap) -> SymTensorField:
    """(phi*h)_ij = h_ab d_i phi^a d_j phi^b."""
    phi.require_margin(DEPTH_DIFFERENTIAL, "pullback metric")
    dphi = phi.differential
    P = np.einsum("...ab,...ia,...jb->...ij", phi.target_metric, dphi, dphi)
    return SymTensorField.symmetrized(P, "pullback_metric")


def section_inner(phi: DiscreteMap, V: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...a,...b->...", phi.target_metric, _values(V), _values(W))


def section_norm(phi: DiscreteMap, V: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(section_inner(phi, V, V), 0.0))


def raise_target(phi: DiscreteMap, covector: np.ndarray) -> np.ndarray:
    """h^ab w_b at phi."""
    return np.einsum("...ab,...b->...a", phi.target_inverse, covector)


def push_gradient(phi: DiscreteMap, f: np.ndarray) -> np.ndarray:
    """dphi(grad f) for a scalar field f on the grid."""
    df = phi.geom.stencil.gradient(f)
    return np.einsum("...ij,...j,...ia->...a", phi.geom.ginv, df, phi.differential)


def family_contraction(phi: DiscreteMap, family: np.ndarray) -> np.ndarray:
    """<A, dphi> = g^ij h(A_i, dphi_j) for a dphi-indexed family A of shape (*S, m, n)."""
    return np.einsum(
        "...ij,...ab,...ia,...jb->...", phi.geom.ginv, phi.target_metric, family, phi.differential
    )


def exponent_weight(phi: DiscreteMap, exponent: float) -> np.ndarray:
    """|dphi|^exponent under the degenerate-point rule."""
    return guarded_power(differential_norm(phi), exponent, phi.eps)


# --- the pullback connection -----------------------------------------------


def pullback_connection(
    phi: DiscreteMap, V: Union[PullbackSection, np.ndarray], direction: Optional[int] = None
) -> np.ndarray:
    """
    (nabla^phi_i V)^a = d_i V^a + Gamma^a_bc(phi) d_i phi^b V^c.

    Returns every direction, shape (*S, m, n), or one direction, shape (*S, n).
    """
    V = _values(V)
    out = phi.geom.stencil.gradient(V) + np.einsum(
        "...abc,...ib,...c->...ia", phi.target_christoffel, phi.differential, V
    )
    return out if direction is None else out[..., direction, :]


def family_derivative(phi: DiscreteMap, A: np.ndarray) -> np.ndarray:
    """(nabla A)_ij = nabla^phi_i A_j - Gamma^k_ij A_k for a family of shape (*S, m, n)."""
    A = np.asarray(A, dtype=float)
    return (
        phi.geom.stencil.gradient(A)
        + np.einsum("...abc,...ib,...jc->...ija", phi.target_christoffel, phi.differential, A)
        - np.einsum("...kij,...ka->...ija", phi.geom.christoffel, A)
    )


def pullback_divergence(phi: DiscreteMap, A: np.ndarray) -> np.ndarray:
    """g^ij (nabla A)_ij, shape (*S, n)."""
    return np.einsum("...ij,...ija->...a", phi.geom.ginv, family_derivative(phi, A))


def second_fundamental_form(phi: DiscreteMap) -> np.ndarray:
    """(nabla dphi)^a_ij, shape (*S, m, m, n)."""
    phi.require_margin(DEPTH_TENSION, "second fundamental form")
    return family_derivative(phi, phi.differential)


def curvature_trace(phi: DiscreteMap, W: np.ndarray) -> np.ndarray:
    """g^ij R^N(W, dphi_i) dphi_j."""
    return np.einsum(
        "...lijk,...i,...aj,...bk,...ab->...l",
        phi.target_riemann, _values(W), phi.differential, phi.differential, phi.geom.ginv,
    )


# --- tension fields --------------------------------------------------------


def tension(phi: DiscreteMap) -> PullbackSection:
    phi.require_margin(DEPTH_TENSION, "tension")
    return PullbackSection(pullback_divergence(phi, phi.differential), "tension")


def p_tension(phi: DiscreteMap, p: float) -> PullbackSection:
    """tau_p = div(|dphi|^(p-2) dphi); p = 2 is the tension itself."""
    if p < 2:
        raise ValueError("p-tension needs p >= 2")
    phi.require_margin(DEPTH_TENSION, "p-tension")
    sigma = exponent_weight(phi, p - 2.0)
    return PullbackSection(pullback_divergence(phi, sigma[..., None, None] * phi.differential), "p_tension")


def p_tension_bound(phi: DiscreteMap, p: float) -> np.ndarray:
    """(sqrt(m) + p - 2) |dphi|^(p-2) |nabla dphi|, a pointwise majorant of |tau_p|."""
    hess = second_fundamental_form(phi)
    ginv = phi.geom.ginv
    hess_sq = np.einsum("...ik,...jl,...ab,...ija,...klb->...", ginv, ginv, phi.target_metric, hess, hess)
    factor = np.sqrt(phi.geom.grid.dim) + p - 2.0
    return factor * exponent_weight(phi, p - 2.0) * np.sqrt(np.maximum(hess_sq, 0.0))


def _composed(phi: DiscreteMap):
    return phi.geom.points, phi.values, 0.5 * differential_norm_squared(phi)


def L_tension(phi: DiscreteMap, L: LagrangianL) -> PullbackSection:
    """tau_L = L' tau + dphi(grad^M L') - grad^N L, with L' composed along phi."""
    phi.require_margin(DEPTH_TENSION, "L-tension")
    x, y, e = _composed(phi)
    Lp = np.asarray(L.d_r(x, y, e), dtype=float)
    tau = pullback_divergence(phi, phi.differential)
    out = Lp[..., None] * tau + push_gradient(phi, Lp)
    if L.depends_on_y:
        out = out - raise_target(phi, L.partial_y(x, y, e))
    return PullbackSection(out, "L_tension")


def _s_of(phi: DiscreteMap, tau_L: np.ndarray) -> np.ndarray:
    return 0.5 * section_inner(phi, tau_L, tau_L)


def B_tension(phi: DiscreteMap, B: LagrangianB, L: LagrangianL) -> PullbackSection:
    """tau_B = B'_r tau + dphi(grad^M B'_r) - grad^N B, with B evaluated at s = |tau_L|^2 / 2."""
    phi.require_margin(DEPTH_STRESS, "B-tension")
    x, y, e = _composed(phi)
    s = _s_of(phi, L_tension(phi, L).values)
    Br = np.asarray(B.d_r(x, y, e, s), dtype=float)
    tau = pullback_divergence(phi, phi.differential)
    out = Br[..., None] * tau + push_gradient(phi, Br)
    if B.depends_on_y:
        out = out - raise_target(phi, B.partial_y(x, y, e, s))
    return PullbackSection(out, "B_tension")


def bitension_p2(phi: DiscreteMap, p: float) -> PullbackSection:
    """
    tau_{2,p} = -|dphi|^(p-2) tr R(tau_p, dphi)dphi - div(|dphi|^(p-2) nabla tau_p)
                - (p-2) div(<nabla tau_p, dphi> |dphi|^(p-4) dphi)
    """
    phi.require_margin(DEPTH_BITENSION, "p-bitension")
    T = p_tension(phi, p).values
    sigma = exponent_weight(phi, p - 2.0)
    nabla_T = pullback_connection(phi, T)
    out = -sigma[..., None] * curvature_trace(phi, T)
    out = out - pullback_divergence(phi, sigma[..., None, None] * nabla_T)
    if p != 2:
        c = family_contraction(phi, nabla_T)
        weight = c * exponent_weight(phi, p - 4.0)
        out = out - (p - 2.0) * pullback_divergence(phi, weight[..., None, None] * phi.differential)
    return PullbackSection(out, "bitension_p2")


def pq_weighted_tension(phi: DiscreteMap, p: float, q: float) -> np.ndarray:
    """W = |tau_p|^(q-2) tau_p."""
    T = p_tension(phi, p).values
    return guarded_power(section_norm(phi, T), q - 2.0, phi.eps)[..., None] * T


def bitension_pq(phi: DiscreteMap, p: float, q: float) -> PullbackSection:
    """The Euler-Lagrange field of (1/q) int |tau_p|^q; q = 2 gives bitension_p2."""
    if q < 2:
        raise ValueError("bitension needs q >= 2")
    phi.require_margin(DEPTH_BITENSION, "pq-bitension")
    W = pq_weighted_tension(phi, p, q)
    sigma = exponent_weight(phi, p - 2.0)
    nabla_W = pullback_connection(phi, W)
    out = -sigma[..., None] * curvature_trace(phi, W)
    out = out - pullback_divergence(phi, sigma[..., None, None] * nabla_W)
    if p != 2:
        c = family_contraction(phi, nabla_W)
        weight = c * exponent_weight(phi, p - 4.0)
        out = out - (p - 2.0) * pullback_divergence(phi, weight[..., None, None] * phi.differential)
    return PullbackSection(out, "bitension_pq")


def bitension_LB(
    phi: DiscreteMap, B: LagrangianB, L: LagrangianL, variant: Variant = "derived"
) -> PullbackSection:
    """
    The bitension of E_B with W = B'_s tau_L:

        -L' tr R(W, dphi)dphi - div(L' nabla W) + (nabla_W grad^N L)
        + <nabla W, dphi> grad^N L' - div(L'' <nabla W, dphi> dphi)

    The derived variant adds -div(<grad^N L', W> dphi), which vanishes
    unless L' depends on the target point.
    """
    phi.require_margin(DEPTH_BITENSION, "LB-bitension")
    x, y, e = _composed(phi)
    tau_L = L_tension(phi, L).values
    s = _s_of(phi, tau_L)
    W = np.asarray(B.d_s(x, y, e, s), dtype=float)[..., None] * tau_L
    Lp = np.asarray(L.d_r(x, y, e), dtype=float)
    Lpp = np.asarray(L.d_rr(x, y, e), dtype=float)
    nabla_W = pullback_connection(phi, W)
    c = family_contraction(phi, nabla_W)
    out = -Lp[..., None] * curvature_trace(phi, W)
    out = out - pullback_divergence(phi, Lp[..., None, None] * nabla_W)
    if L.depends_on_y:
        d_y = L.partial_y(x, y, e)
        d_yy = L.partial_yy(x, y, e)
        d_ry = L.partial_ry(x, y, e)
        hess = d_yy - np.einsum("...gab,...g->...ab", phi.target_christoffel, d_y)
        out = out + raise_target(phi, np.einsum("...ab,...b->...a", hess, W))
        out = out + c[..., None] * raise_target(phi, d_ry)
        if variant == "derived":
            coupling = np.einsum("...a,...a->...", d_ry, W)
            out = out - pullback_divergence(phi, coupling[..., None, None] * phi.differential)
    out = out - pullback_divergence(phi, (Lpp * c)[..., None, None] * phi.differential)
    return PullbackSection(out, "bitension_LB")
