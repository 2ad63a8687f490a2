"""
Chart-based Riemannian geometry.

Everything here is vectorised over leading axes: a point array of shape
``(..., m)`` produces a metric of shape ``(..., m, m)``. Index conventions:

* ``dg[..., a, b, c] = d_a g_bc`` and ``d2g[..., a, b, c, d] = d_a d_b g_cd``
* ``gamma[..., k, i, j] = Gamma^k_ij``
* ``riemann[..., l, i, j, k] = R^l_ijk`` with ``R(d_i, d_j) d_k = R^l_ijk d_l``
  and ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``
* ``Ric_jk = R^i_ijk``
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    ChartDomainError,
    CurvatureUnavailableError,
    DegenerateMetricError,
    GeometryError,
    NonFiniteFieldError,
)
from .grid import Grid, Quadrature, Stencil

logger = logging.getLogger(__name__)

MetricFn = Callable[[np.ndarray], np.ndarray]
ArrayLike = Union[np.ndarray, Sequence[float]]


def check_spd(g: np.ndarray, points: np.ndarray, eps: float = 1e-9) -> None:
    """Raise DegenerateMetricError unless every g is symmetric positive definite."""
    if not np.all(np.isfinite(g)):
        raise DegenerateMetricError(detail="non-finite components")
    scale = max(1.0, float(np.abs(g).max(initial=0.0)))
    asym = float(np.abs(g - np.swapaxes(g, -1, -2)).max(initial=0.0))
    if asym > 1e-10 * scale:
        raise DegenerateMetricError(detail=f"asymmetry {asym:.2e}")
    eig = np.linalg.eigvalsh(g)
    bad = eig[..., 0] <= eps * np.maximum(np.abs(eig[..., -1]), 1e-300)
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), bad.shape)
        point = np.asarray(points)[idx] if np.ndim(points) > 1 else points
        raise DegenerateMetricError(point=np.atleast_1d(point), detail="not positive definite")


def christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij), symmetrised in (i, j)."""
    lowered = (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    gamma = 0.5 * np.einsum("...kl,...lij->...kij", ginv, lowered)
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))


def christoffel_derivative(ginv: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> np.ndarray:
    """dgamma[..., a, k, i, j] = d_a Gamma^k_ij."""
    lowered = (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    d_lowered = (
        np.einsum("...aijl->...alij", d2g)
        + np.einsum("...ajil->...alij", d2g)
        - d2g
    )
    dginv = -np.einsum("...kb,...abc,...cl->...akl", ginv, dg, ginv)
    dgamma = 0.5 * (
        np.einsum("...akl,...lij->...akij", dginv, lowered)
        + np.einsum("...kl,...alij->...akij", ginv, d_lowered)
    )
    return 0.5 * (dgamma + np.swapaxes(dgamma, -1, -2))


def riemann_from(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_ip Gamma^p_jk - Gamma^l_jp Gamma^p_ik."""
    return (
        np.einsum("...iljk->...lijk", dgamma)
        - np.einsum("...jlik->...lijk", dgamma)
        + np.einsum("...lip,...pjk->...lijk", gamma, gamma)
        - np.einsum("...ljp,...pik->...lijk", gamma, gamma)
    )


def ricci_from(riemann: np.ndarray) -> np.ndarray:
    ric = np.einsum("...iijk->...jk", riemann)
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


@dataclass(frozen=True)
class Tensor:
    """Components of a tensor at a single base point."""

    valence: Tuple[int, int]
    components: np.ndarray
    point: Tuple[float, ...]

    def __post_init__(self):
        m = len(self.point)
        expected = m ** (self.valence[0] + self.valence[1])
        if np.size(self.components) != expected:
            raise ValueError(
                f"tensor of valence {self.valence} at a {m}-dimensional point "
                f"needs {expected} components, got {np.size(self.components)}"
            )

    @property
    def dim(self) -> int:
        return len(self.point)

    def __getitem__(self, index):
        return self.components[index]


@dataclass(frozen=True)
class ChartManifold:
    """
    A single coordinate chart with a metric.

    Analytic first and second metric partials may be supplied; otherwise
    they are taken by central differences of the metric callback with step
    ``fd_step`` (first partials) and ``10 * fd_step`` (second partials).
    """

    name: str
    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    metric: MetricFn
    metric_d1: Optional[MetricFn] = None
    metric_d2: Optional[MetricFn] = None
    fd_step: float = 1e-4
    degenerate_eps: float = 1e-9

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError("domain box must match the dimension")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")

    @property
    def analytic(self) -> bool:
        return self.metric_d1 is not None

    def without_derivatives(self) -> "ChartManifold":
        """Same chart with every partial taken by finite differences."""
        return replace(self, metric_d1=None, metric_d2=None)

    def with_fd_step(self, fd_step: float) -> "ChartManifold":
        return replace(self, fd_step=fd_step)

    # --- domain ---------------------------------------------------------

    def contains(self, points: ArrayLike, tol: float = 1e-12) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def require_inside(self, points: ArrayLike, what: str = "point") -> None:
        inside = self.contains(points)
        if not np.all(inside):
            pts = np.asarray(points, dtype=float)
            idx = np.unravel_index(np.argmin(inside), np.shape(inside)) if np.ndim(inside) else ()
            raise ChartDomainError(what, point=pts[idx] if idx else pts)

    # --- metric and partials ---------------------------------------------

    def _points(self, x: ArrayLike) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points with {self.dim} coordinates, got shape {pts.shape}")
        return pts

    def metric_at(self, x: ArrayLike, check: bool = True) -> np.ndarray:
        pts = self._points(x)
        g = np.asarray(self.metric(pts), dtype=float)
        if check:
            check_spd(g, pts, self.degenerate_eps)
        return g

    def _unit(self, axis: int) -> np.ndarray:
        e = np.zeros(self.dim)
        e[axis] = 1.0
        return e

    def fd_metric_partials(self, x: ArrayLike) -> np.ndarray:
        pts = self._points(x)
        step = self.fd_step
        parts = []
        for a in range(self.dim):
            shift = step * self._unit(a)
            parts.append((self.metric(pts + shift) - self.metric(pts - shift)) / (2.0 * step))
        return np.stack(parts, axis=-3)

    def fd_metric_second_partials(self, x: ArrayLike) -> np.ndarray:
        """Second partials by differencing; uses the analytic first partials when present."""
        pts = self._points(x)
        step = 10.0 * self.fd_step
        if self.metric_d1 is not None:
            parts = []
            for a in range(self.dim):
                shift = step * self._unit(a)
                parts.append((self.metric_d1(pts + shift) - self.metric_d1(pts - shift)) / (2.0 * step))
            return np.stack(parts, axis=-4)
        rows = []
        for a in range(self.dim):
            ea = step * self._unit(a)
            cols = []
            for b in range(self.dim):
                eb = step * self._unit(b)
                cols.append(
                    (
                        self.metric(pts + ea + eb)
                        - self.metric(pts + ea - eb)
                        - self.metric(pts - ea + eb)
                        + self.metric(pts - ea - eb)
                    )
                    / (4.0 * step * step)
                )
            rows.append(np.stack(cols, axis=-3))
        return np.stack(rows, axis=-4)

    def metric_partials(self, x: ArrayLike) -> np.ndarray:
        if self.metric_d1 is not None:
            return np.asarray(self.metric_d1(self._points(x)), dtype=float)
        return self.fd_metric_partials(x)

    def metric_second_partials(self, x: ArrayLike) -> np.ndarray:
        if self.metric_d2 is not None:
            return np.asarray(self.metric_d2(self._points(x)), dtype=float)
        return self.fd_metric_second_partials(x)

    # --- connection and curvature ----------------------------------------

    def christoffel_at(self, x: ArrayLike) -> np.ndarray:
        g = self.metric_at(x)
        return christoffel_from(np.linalg.inv(g), self.metric_partials(x))

    def riemann_at(self, x: ArrayLike) -> np.ndarray:
        g = self.metric_at(x)
        ginv = np.linalg.inv(g)
        dg = self.metric_partials(x)
        gamma = christoffel_from(ginv, dg)
        dgamma = christoffel_derivative(ginv, dg, self.metric_second_partials(x))
        return riemann_from(gamma, dgamma)

    def ricci_at(self, x: ArrayLike) -> np.ndarray:
        return ricci_from(self.riemann_at(x))

    def scalar_curvature_at(self, x: ArrayLike) -> np.ndarray:
        ginv = np.linalg.inv(self.metric_at(x))
        return np.einsum("...jk,...jk->...", ginv, self.ricci_at(x))


# --- single-point operations ---------------------------------------------


def _single_point(M: ChartManifold, x: ArrayLike) -> np.ndarray:
    pt = np.asarray(x, dtype=float).reshape(M.dim)
    M.require_inside(pt)
    return pt


def christoffel(M: ChartManifold, x: ArrayLike) -> Tensor:
    pt = _single_point(M, x)
    return Tensor((2, 1), M.christoffel_at(pt), tuple(pt))


def riemann(M: ChartManifold, x: ArrayLike) -> Tensor:
    pt = _single_point(M, x)
    return Tensor((3, 1), M.riemann_at(pt), tuple(pt))


def ricci(M: ChartManifold, x: ArrayLike) -> Tensor:
    pt = _single_point(M, x)
    return Tensor((2, 0), M.ricci_at(pt), tuple(pt))


def scalar_curvature(M: ChartManifold, x: ArrayLike) -> float:
    pt = _single_point(M, x)
    return float(M.scalar_curvature_at(pt))


def curvature_operator(
    N: ChartManifold, y: ArrayLike, X: ArrayLike, Y: ArrayLike, Z: ArrayLike
) -> np.ndarray:
    """R^N(X, Y)Z at y, in target-chart components."""
    pt = _single_point(N, y)
    rm = N.riemann_at(pt)
    return np.einsum("lijk,i,j,k->l", rm, np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float))


def derivative_consistency(M: ChartManifold, probes: int = 16, seed: int = 0) -> float:
    """Max discrepancy between analytic metric partials and their finite-difference estimates."""
    if not M.analytic:
        raise GeometryError(f"{M.name} has no analytic partials to compare")
    rng = np.random.default_rng(seed)
    lo = np.asarray(M.lower)
    hi = np.asarray(M.upper)
    pad = 0.1 * (hi - lo)
    pts = rng.uniform(lo + pad, hi - pad, size=(probes, M.dim))
    fd = M.without_derivatives()
    err1 = np.abs(M.metric_partials(pts) - fd.metric_partials(pts)).max()
    err2 = 0.0
    if M.metric_d2 is not None:
        err2 = np.abs(M.metric_second_partials(pts) - fd.metric_second_partials(pts)).max()
    worst = float(max(err1, err2))
    logger.debug(
        "Derivative consistency",
        extra={"manifold": M.name, "first": float(err1), "second": float(err2), "probes": probes},
    )
    return worst


# --- builtin charts -------------------------------------------------------


def euclidean(dim: int = 2, half_width: float = 1.0, fd_step: float = 1e-4) -> ChartManifold:
    eye = np.eye(dim)

    def metric(x):
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim)).copy()

    def d1(x):
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    def d2(x):
        return np.zeros(x.shape[:-1] + (dim, dim, dim, dim))

    return ChartManifold(
        name="euclidean",
        dim=dim,
        lower=(-half_width,) * dim,
        upper=(half_width,) * dim,
        metric=metric,
        metric_d1=d1,
        metric_d2=d2,
        fd_step=fd_step,
    )


def conformal(
    name: str,
    dim: int,
    lower: Sequence[float],
    upper: Sequence[float],
    w: Callable[[np.ndarray], np.ndarray],
    dw: Callable[[np.ndarray], np.ndarray],
    d2w: Callable[[np.ndarray], np.ndarray],
    fd_step: float = 1e-4,
) -> ChartManifold:
    """Metric w(x) * delta_ij from a conformal factor and its first two partials."""
    eye = np.eye(dim)

    def metric(x):
        return w(x)[..., None, None] * eye

    def d1(x):
        return dw(x)[..., :, None, None] * eye

    def d2(x):
        return d2w(x)[..., :, :, None, None] * eye

    return ChartManifold(
        name=name,
        dim=dim,
        lower=tuple(float(v) for v in lower),
        upper=tuple(float(v) for v in upper),
        metric=metric,
        metric_d1=d1,
        metric_d2=d2,
        fd_step=fd_step,
    )


def cigar(half_width: float = 4.0, fd_step: float = 1e-4) -> ChartManifold:
    """(dx^2 + dy^2) / (1 + x^2 + y^2) on the box [-A, A]^2."""

    def w(x):
        return 1.0 / (1.0 + np.sum(x * x, axis=-1))

    def dw(x):
        return -2.0 * x * (w(x) ** 2)[..., None]

    def d2w(x):
        wx = w(x)[..., None, None]
        return -2.0 * np.eye(2) * wx ** 2 + 8.0 * np.einsum("...a,...b->...ab", x, x) * wx ** 3

    return conformal("cigar", 2, (-half_width,) * 2, (half_width,) * 2, w, dw, d2w, fd_step)


def hyperbolic(
    dim: int = 2,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
    fd_step: float = 1e-4,
) -> ChartManifold:
    """Upper half-space model, metric delta / x_m^2."""
    if lower is None:
        lower = (-1.0,) * (dim - 1) + (0.5,)
    if upper is None:
        upper = (1.0,) * (dim - 1) + (2.5,)
    if lower[-1] <= 0:
        raise ValueError("hyperbolic chart needs a positive last coordinate")

    def w(x):
        return 1.0 / x[..., -1] ** 2

    def dw(x):
        out = np.zeros_like(x)
        out[..., -1] = -2.0 / x[..., -1] ** 3
        return out

    def d2w(x):
        out = np.zeros(x.shape + (dim,))
        out[..., -1, -1] = 6.0 / x[..., -1] ** 4
        return out

    return conformal("hyperbolic", dim, lower, upper, w, dw, d2w, fd_step)


def sphere(radius: float = 1.0, margin: float = 0.2, fd_step: float = 1e-4) -> ChartManifold:
    """Round 2-sphere in polar coordinates (theta, phi): a^2 (d theta^2 + sin^2 theta d phi^2)."""
    a2 = radius * radius

    def metric(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = a2
        out[..., 1, 1] = a2 * np.sin(x[..., 0]) ** 2
        return out

    def d1(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = a2 * np.sin(2.0 * x[..., 0])
        return out

    def d2(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        out[..., 0, 0, 1, 1] = 2.0 * a2 * np.cos(2.0 * x[..., 0])
        return out

    return ChartManifold(
        name="sphere",
        dim=2,
        lower=(margin, -np.pi),
        upper=(np.pi - margin, np.pi),
        metric=metric,
        metric_d1=d1,
        metric_d2=d2,
        fd_step=fd_step,
    )


# --- fields on grids ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Symmetric covariant 2-tensor sampled on a grid, shape (*S, m, m)."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.values.ndim < 2 or self.values.shape[-1] != self.values.shape[-2]:
            raise ValueError("symmetric tensor field needs trailing (m, m) axes")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError(self.label or "symmetric tensor field")

    @classmethod
    def symmetrized(cls, values: np.ndarray, label: str = "") -> "SymTensorField":
        values = np.asarray(values, dtype=float)
        return cls(0.5 * (values + np.swapaxes(values, -1, -2)), label)

    @property
    def asymmetry(self) -> float:
        return float(np.abs(self.values - np.swapaxes(self.values, -1, -2)).max(initial=0.0))

    def trace(self, geom: "GridGeometry") -> np.ndarray:
        return trace_sym(geom, self.values)

    def inner(self, geom: "GridGeometry", other: Union["SymTensorField", np.ndarray]) -> np.ndarray:
        return inner_sym(geom, self.values, _values(other))

    def norm(self, geom: "GridGeometry") -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(geom, self), 0.0))

    def __add__(self, other):
        return SymTensorField(self.values + _values(other), self.label)

    def __sub__(self, other):
        return SymTensorField(self.values - _values(other), self.label)

    def __mul__(self, scalar):
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim:
            scalar = scalar[..., None, None]
        return SymTensorField(self.values * scalar, self.label)

    __rmul__ = __mul__


def _values(field) -> np.ndarray:
    return np.asarray(getattr(field, "values", field), dtype=float)


class GridGeometry:
    """
    Source geometry cached on a grid: g, g^-1, sqrt(det g), partials of g and Gamma.

    Curvature is only available when the geometry is backed by a chart
    (perturbed geometries g + t*dg carry no second partials).
    """

    def __init__(
        self,
        grid: Grid,
        g: np.ndarray,
        dg: np.ndarray,
        manifold: Optional[ChartManifold] = None,
        stencil_order: int = 2,
        quadrature: str = "trapezoid",
        degenerate_eps: float = 1e-9,
    ):
        self.grid = grid
        self.manifold = manifold
        self.stencil = Stencil(grid, stencil_order)
        self.quadrature = Quadrature(grid, quadrature)
        self.degenerate_eps = degenerate_eps
        check_spd(g, grid.points, degenerate_eps)
        self.g = g
        self.dg = dg
        ginv = np.linalg.inv(g)
        self.ginv = 0.5 * (ginv + np.swapaxes(ginv, -1, -2))
        self.sqrt_det = np.sqrt(np.linalg.det(g))
        self.christoffel = christoffel_from(self.ginv, dg)

    @classmethod
    def from_manifold(
        cls,
        manifold: ChartManifold,
        grid: Grid,
        stencil_order: int = 2,
        quadrature: str = "trapezoid",
    ) -> "GridGeometry":
        if grid.dim != manifold.dim:
            raise ValueError(f"grid dimension {grid.dim} != manifold dimension {manifold.dim}")
        manifold.require_inside(np.array([grid.lower, grid.upper]), what="grid box")
        pts = grid.points
        geom = cls(
            grid,
            manifold.metric_at(pts, check=False),
            manifold.metric_partials(pts),
            manifold=manifold,
            stencil_order=stencil_order,
            quadrature=quadrature,
            degenerate_eps=manifold.degenerate_eps,
        )
        logger.debug(
            "Grid geometry built",
            extra={"manifold": manifold.name, "shape": list(grid.shape), "h": grid.h,
                   "analytic": manifold.analytic},
        )
        return geom

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.grid.shape

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def width(self) -> int:
        return self.stencil.width

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def perturbed(self, delta_g: Union[SymTensorField, np.ndarray], t: float) -> "GridGeometry":
        """Geometry of g + t*dg; partials of dg are taken on the grid."""
        dvals = _values(delta_g)
        return GridGeometry(
            self.grid,
            self.g + t * dvals,
            self.dg + t * self.stencil.gradient(dvals),
            manifold=None,
            stencil_order=self.stencil.order,
            quadrature=self.quadrature.rule,
            degenerate_eps=self.degenerate_eps,
        )

    def _require_manifold(self) -> ChartManifold:
        if self.manifold is None:
            raise CurvatureUnavailableError()
        return self.manifold

    @cached_property
    def riemann(self) -> np.ndarray:
        return self._require_manifold().riemann_at(self.points)

    @cached_property
    def ricci(self) -> np.ndarray:
        self._require_manifold()
        return ricci_from(self.riemann)

    @cached_property
    def scalar_curvature(self) -> np.ndarray:
        return np.einsum("...jk,...jk->...", self.ginv, self.ricci)

    def integrate(self, field: np.ndarray) -> float:
        return self.quadrature.integrate(field, self.sqrt_det)

    def volume(self) -> float:
        return self.integrate(np.ones(self.shape))


# --- grid operators --------------------------------------------------------


def grad_scalar(geom: GridGeometry, f: np.ndarray, df: Optional[np.ndarray] = None) -> np.ndarray:
    """grad f = g^ij d_j f, shape (*S, m)."""
    if df is None:
        df = geom.stencil.gradient(f)
    return np.einsum("...ij,...j->...i", geom.ginv, df)


def hessian_scalar(
    geom: GridGeometry,
    f: np.ndarray,
    df: Optional[np.ndarray] = None,
    d2f: Optional[np.ndarray] = None,
) -> SymTensorField:
    """Hess f_ij = d_i d_j f - Gamma^k_ij d_k f."""
    if df is None:
        df = geom.stencil.gradient(f)
    if d2f is None:
        d2f = geom.stencil.gradient(df)
    hess = d2f - np.einsum("...kij,...k->...ij", geom.christoffel, df)
    return SymTensorField.symmetrized(hess, "hessian")


def laplacian_scalar(
    geom: GridGeometry,
    f: np.ndarray,
    df: Optional[np.ndarray] = None,
    d2f: Optional[np.ndarray] = None,
) -> np.ndarray:
    return hessian_scalar(geom, f, df, d2f).trace(geom)


def div_vector(geom: GridGeometry, X: np.ndarray) -> np.ndarray:
    """div X = d_i X^i + Gamma^i_ik X^k."""
    dX = geom.stencil.gradient(X)
    return np.einsum("...ii->...", dX) + np.einsum("...iik,...k->...", geom.christoffel, X)


def covariant_derivative_covector(geom: GridGeometry, w: np.ndarray) -> np.ndarray:
    """(nabla w)_ij = d_i w_j - Gamma^k_ij w_k."""
    return geom.stencil.gradient(w) - np.einsum("...kij,...k->...ij", geom.christoffel, w)


def div_symtensor(geom: GridGeometry, S: Union[SymTensorField, np.ndarray]) -> np.ndarray:
    """(div S)_j = g^ik (d_i S_kj - Gamma^l_ik S_lj - Gamma^l_ij S_kl)."""
    s = _values(S)
    ds = geom.stencil.gradient(s)
    gamma = geom.christoffel
    nabla = (
        ds
        - np.einsum("...lik,...lj->...ikj", gamma, s)
        - np.einsum("...lij,...kl->...ikj", gamma, s)
    )
    return np.einsum("...ik,...ikj->...j", geom.ginv, nabla)


def lower_index(geom: GridGeometry, X: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", geom.g, X)


def raise_index(geom: GridGeometry, w: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", geom.ginv, w)


def vector_norm(geom: GridGeometry, X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("...ij,...i,...j->...", geom.g, X, X), 0.0))


def trace_sym(geom: GridGeometry, S: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", geom.ginv, _values(S))


def inner_sym(geom: GridGeometry, S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """<S, T> = g^ia g^jb S_ij T_ab."""
    return np.einsum("...ia,...jb,...ij,...ab->...", geom.ginv, geom.ginv, _values(S), _values(T))


def integrate(geom: GridGeometry, field: np.ndarray) -> float:
    """Quadrature of a scalar field with sqrt(det g) weights."""
    return geom.integrate(field)
