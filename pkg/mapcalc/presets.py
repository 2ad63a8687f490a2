"""
Named sources, targets and maps addressable from experiment configs, plus the
seeded band-limited generators used for variation fields and metric
variations.

Every generated field is a smooth function times the bump (1 - s^2)^8 with
s = |x - c| / radius, so it vanishes identically outside the support ball.
"""

import itertools
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import ManifoldSection, MapSection, NumericsDefaults, ParamsSection, TargetSection
from .exceptions import ConfigurationError, MarginError
from .geometry import ChartManifold, GridGeometry, SymTensorField, euclidean, hyperbolic, sphere
from .grid import Grid, check_margin
from .mapfield import DEPTH_BITENSION, DiscreteMap, required_margin
from .soliton import SolitonStructure, make_cigar, make_einstein, make_gaussian, make_trivial, smoothstep5

logger = logging.getLogger(__name__)

BUMP_POWER = 8
TARGET_HALF_WIDTH = 10.0


def bump(s: np.ndarray) -> np.ndarray:
    """(1 - s^2)^8 on s < 1, zero outside."""
    return np.where(s < 1.0, np.clip(1.0 - s * s, 0.0, None) ** BUMP_POWER, 0.0)


def grid_center(grid: Grid) -> np.ndarray:
    return 0.5 * (np.asarray(grid.lower) + np.asarray(grid.upper))


def band_limited(
    grid: Grid,
    components: int,
    seed: int,
    modes: int = 2,
    center: Optional[Sequence[float]] = None,
    radius: float = 0.7,
) -> np.ndarray:
    """
    Seeded random Fourier series in (x - c) / radius, damped by 1/(1 + |k|^2),
    times the support bump. Shape (*S, components).

    Each component is divided by the sum of its absolute coefficients, so
    |field| <= 1 and the same seed gives the same function on every grid.
    """
    rng = np.random.default_rng(seed)
    c = grid_center(grid) if center is None else np.asarray(center, dtype=float)
    x = (grid.points - c) / radius
    s = np.linalg.norm(x, axis=-1)
    out = np.zeros(grid.shape + (components,))
    for comp in range(components):
        c0 = rng.normal()
        series = np.full(grid.shape, c0)
        total = abs(c0)
        for k in itertools.product(range(modes + 1), repeat=grid.dim):
            if not any(k):
                continue
            wave = np.pi * np.asarray(k, dtype=float)
            coeff = rng.normal() / (1.0 + float(np.dot(k, k)))
            total += abs(coeff)
            series += coeff * np.cos(x @ wave + rng.uniform(0.0, 2.0 * np.pi))
        out[..., comp] = series / total if total > 0 else series
    return out * bump(s)[..., None]


# --- sources ---------------------------------------------------------------


def _source_manifold(section: ManifoldSection, params: ParamsSection, fd_step: float) -> Tuple[ChartManifold, Optional[SolitonStructure]]:
    preset = section.preset
    if preset == "euclidean":
        return euclidean(section.dim, section.half_width, fd_step=fd_step), None
    if preset == "euclidean-trivial":
        S = make_trivial(section.dim, section.half_width)
        return S.manifold, S
    if preset == "gaussian":
        S = make_gaussian(params.lam, section.dim, section.half_width)
        return S.manifold, S
    if preset == "cigar":
        S = make_cigar(section.half_width, analytic=section.analytic, fd_step=fd_step)
        return S.manifold, S
    if preset == "sphere":
        M = sphere(section.radius, fd_step=fd_step)
        return M, make_einstein(M, 1.0 / section.radius ** 2)
    if preset == "hyperbolic":
        M = hyperbolic(section.dim, fd_step=fd_step)
        return M, make_einstein(M, -(section.dim - 1.0))
    raise ConfigurationError(f"Unknown manifold preset: {preset}")


def build_source(
    section: ManifoldSection,
    numerics: NumericsDefaults,
    params: Optional[ParamsSection] = None,
    h: Optional[float] = None,
) -> Tuple[GridGeometry, Optional[SolitonStructure]]:
    """
    Grid geometry over the preset's chart box, and its soliton structure when
    the preset carries one (plain ``euclidean`` does not).
    """
    params = params or ParamsSection()
    fd_step = section.fd_step or numerics.fd_step
    M, S = _source_manifold(section, params, fd_step)
    grid = Grid.from_spacing(M.lower, M.upper, h or section.h)
    geom = GridGeometry.from_manifold(
        M,
        grid,
        stencil_order=section.stencil_order or numerics.stencil_order,
        quadrature=section.quadrature or numerics.quadrature,
    )
    logger.info(
        "Source built",
        extra={"preset": section.preset, "shape": list(grid.shape), "h": grid.h,
               "soliton": S.name if S is not None else None},
    )
    return geom, S


# --- targets ---------------------------------------------------------------


def build_target(section: TargetSection, fd_step: float = 1e-4) -> Tuple[ChartManifold, np.ndarray]:
    """Target chart and the base point maps are centred on."""
    if section.preset == "euclidean":
        return euclidean(section.dim, TARGET_HALF_WIDTH, fd_step=fd_step), np.zeros(section.dim)
    if section.preset == "sphere":
        return sphere(section.radius, fd_step=fd_step), np.array([0.5 * np.pi, 0.0])
    if section.preset == "hyperbolic":
        M = hyperbolic(section.dim, fd_step=fd_step)
        return M, 0.5 * (np.asarray(M.lower) + np.asarray(M.upper))
    raise ConfigurationError(f"Unknown target preset: {section.preset}")


# --- maps ------------------------------------------------------------------


def _linear_part(section: MapSection, n: int, m: int) -> np.ndarray:
    if section.preset == "constant":
        return np.zeros((n, m))
    if section.preset == "linear":
        if section.linear is not None:
            A = np.asarray(section.linear, dtype=float)
            if A.shape != (n, m):
                raise ConfigurationError(f"map.linear must have shape ({n}, {m}), got {A.shape}")
            return A
        A = np.eye(n, m)
        A[0, 0] = 2.0
        return A
    if section.base == "identity" or section.preset == "identity":
        return np.eye(n, m)
    return np.zeros((n, m))


def _deviation(section: MapSection, geom: GridGeometry, target: ChartManifold, center: np.ndarray) -> np.ndarray:
    grid = geom.grid
    n = target.dim
    x = grid.points - center
    s = np.linalg.norm(x, axis=-1) / section.support_radius
    preset = section.preset
    if preset in ("constant", "identity", "linear"):
        return np.zeros(grid.shape + (n,))
    if preset == "bump":
        return section.amplitude * bump(s)[..., None] * np.ones(n) / np.sqrt(n)
    if preset == "sphere-bump":
        if target.name != "sphere":
            raise ConfigurationError("map preset 'sphere-bump' needs a sphere target")
        out = np.zeros(grid.shape + (2,))
        out[..., 0] = section.amplitude * bump(s)
        out[..., 1] = section.amplitude * bump(s) * x[..., 0] / section.support_radius
        return out
    if preset == "random-smooth":
        field = band_limited(grid, n, section.seed, section.modes, center, section.support_radius)
        return section.amplitude * field
    if preset == "gaussian-tail":
        # Tapered to zero only between half and all of the usable radius.
        r = np.linalg.norm(x, axis=-1)
        gauss = np.exp(-0.5 * (r / section.tail_width) ** 2)
        edge = _usable_half_width(geom)
        taper = 1.0 - smoothstep5((r - 0.5 * edge) / (0.5 * edge))
        return section.amplitude * (gauss * taper)[..., None] * np.ones(n) / np.sqrt(n)
    raise ConfigurationError(f"Unknown map preset: {preset}")


def _margin_width(geom: GridGeometry) -> float:
    return (required_margin(DEPTH_BITENSION, geom.width) + 1) * geom.h


def _usable_half_width(geom: GridGeometry) -> float:
    grid = geom.grid
    return min(hi - lo for lo, hi in zip(grid.lower, grid.upper)) / 2.0 - _margin_width(geom)


def build_map(
    section: MapSection,
    geom: GridGeometry,
    target: ChartManifold,
    base_point: Sequence[float],
) -> DiscreteMap:
    """
    phi(x) = A (x - c) + base_point + deviation with c the support centre.

    The deviation must leave room for the deepest nested derivative; a
    support reaching the boundary layers is a configuration error.
    """
    grid = geom.grid
    center = grid_center(grid) if section.center is None else np.asarray(section.center, dtype=float)
    if center.shape != (grid.dim,):
        raise ConfigurationError(f"map.center must have {grid.dim} coordinates")
    A = _linear_part(section, target.dim, grid.dim)
    deviation = _deviation(section, geom, target, center)
    try:
        check_margin(deviation, grid, required_margin(DEPTH_BITENSION, geom.width), "map deviation")
    except MarginError as e:
        raise ConfigurationError(
            f"map support (radius {section.support_radius}) reaches the outer {e.required} grid layers"
        ) from e
    offset = np.asarray(base_point, dtype=float) - A @ center
    phi = DiscreteMap(geom, target, deviation, linear=A, offset=offset)
    logger.debug(
        "Map built",
        extra={"preset": section.preset, "base": section.base, "seed": section.seed,
               "target": target.name, "sup_deviation": float(np.abs(deviation).max(initial=0.0))},
    )
    return phi


# --- variations ------------------------------------------------------------


def variation_field(
    phi: DiscreteMap,
    seed: int,
    amplitude: float = 1.0,
    radius: Optional[float] = None,
    center: Optional[Sequence[float]] = None,
    modes: int = 2,
) -> np.ndarray:
    """Random compactly supported section along phi, bounded by ``amplitude``."""
    radius = radius or _default_radius(phi.geom)
    field = band_limited(phi.geom.grid, phi.target_dim, seed, modes, center, radius)
    return amplitude * field


def random_symmetric_tensor(
    geom: GridGeometry,
    seed: int,
    amplitude: float = 1.0,
    radius: Optional[float] = None,
    center: Optional[Sequence[float]] = None,
    modes: int = 2,
) -> SymTensorField:
    """Random compactly supported symmetric 2-tensor, bounded by ``amplitude``."""
    radius = radius or _default_radius(geom)
    m = geom.dim
    raw = band_limited(geom.grid, m * m, seed, modes, center, radius).reshape(geom.shape + (m, m))
    return SymTensorField.symmetrized(amplitude * raw, label=f"random symmetric tensor (seed {seed})")


def _default_radius(geom: GridGeometry) -> float:
    """A centred support radius that keeps the bitension margin with room to spare."""
    return 0.8 * _usable_half_width(geom)
