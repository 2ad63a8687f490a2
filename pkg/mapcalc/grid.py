"""
Uniform rectangular grids in chart coordinates, central-difference stencils
and quadrature rules.

Field layout: a field sampled on a grid of shape ``S`` has array shape
``(*S, *C)`` where ``C`` are component axes. Derivative indices are inserted
directly after the grid axes, so the gradient of a ``(*S, n)`` field has shape
``(*S, m, n)``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence, Tuple

import numpy as np

from .exceptions import MarginError, QuadratureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box sampled uniformly, vertex- or cell-centered."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    shape: Tuple[int, ...]
    cell_centered: bool = False

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.shape)):
            raise ValueError("lower, upper and shape must have the same length")
        if any(n < 3 for n in self.shape):
            raise ValueError("each axis needs at least 3 nodes")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("upper corner must exceed lower corner on every axis")

    @classmethod
    def from_spacing(
        cls,
        lower: Sequence[float],
        upper: Sequence[float],
        h: float,
        cell_centered: bool = False,
    ) -> "Grid":
        """Build a grid whose spacing is h (rounded to fit the box exactly)."""
        shape = []
        for lo, hi in zip(lower, upper):
            cells = max(2, int(round((hi - lo) / h)))
            shape.append(cells if cell_centered else cells + 1)
        return cls(tuple(map(float, lower)), tuple(map(float, upper)), tuple(shape), cell_centered)

    @classmethod
    def square(cls, half_width: float, h: float, dim: int = 2) -> "Grid":
        return cls.from_spacing([-half_width] * dim, [half_width] * dim, h)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @cached_property
    def spacing(self) -> Tuple[float, ...]:
        cells = [n if self.cell_centered else n - 1 for n in self.shape]
        return tuple((hi - lo) / c for lo, hi, c in zip(self.lower, self.upper, cells))

    @property
    def h(self) -> float:
        """Largest spacing across axes."""
        return max(self.spacing)

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        offset = 0.5 if self.cell_centered else 0.0
        return tuple(
            lo + (np.arange(n) + offset) * dh
            for lo, n, dh in zip(self.lower, self.shape, self.spacing)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack(mesh, axis=-1)
        pts.setflags(write=False)
        return pts

    def refine(self) -> "Grid":
        """Grid over the same box with half the spacing."""
        if self.cell_centered:
            shape = tuple(2 * n for n in self.shape)
        else:
            shape = tuple(2 * n - 1 for n in self.shape)
        return Grid(self.lower, self.upper, shape, self.cell_centered)

    def interior_mask(self, layers: int) -> np.ndarray:
        """Boolean mask of nodes at least ``layers`` nodes away from every face."""
        mask = np.ones(self.shape, dtype=bool)
        if layers <= 0:
            return mask
        for axis, n in enumerate(self.shape):
            index = [slice(None)] * self.dim
            index[axis] = slice(0, min(layers, n))
            mask[tuple(index)] = False
            index[axis] = slice(max(n - layers, 0), n)
            mask[tuple(index)] = False
        return mask

    def radius(self, center: Sequence[float]) -> np.ndarray:
        """Chart (Euclidean) distance of every node from ``center``."""
        return np.linalg.norm(self.points - np.asarray(center, dtype=float), axis=-1)


def empty_margin(field: np.ndarray, grid: Grid, tol: float = 0.0) -> int:
    """Number of outer node layers on which ``field`` vanishes (|value| <= tol)."""
    support = np.abs(field) > tol
    extra = support.ndim - grid.dim
    if extra:
        support = support.reshape(grid.shape + (-1,)).any(axis=-1)
    if not support.any():
        return min(grid.shape) // 2
    layers = 0
    while layers < min(grid.shape) // 2:
        ring = ~grid.interior_mask(layers + 1)
        if (support & ring).any():
            break
        layers += 1
    return layers


def check_margin(field: np.ndarray, grid: Grid, layers: int, what: str = "field") -> None:
    """Raise MarginError unless ``field`` vanishes on the outer ``layers`` layers."""
    found = empty_margin(field, grid)
    if found < layers:
        logger.debug(
            "Margin violation",
            extra={"what": what, "required": layers, "found": found},
        )
        raise MarginError(what, layers, found)


class Stencil:
    """
    Central differences of order 2 or 4 along grid axes.

    Interior nodes get the central difference; the outer ``width`` ghost layers
    along the differentiated axis are set to zero. For compactly supported
    fields with enough margin this is the exact zero-extension result.
    """

    _ORDERS = {2: 1, 4: 2}

    def __init__(self, grid: Grid, order: Literal[2, 4] = 2):
        if order not in self._ORDERS:
            raise ValueError(f"unsupported stencil order {order}")
        self.grid = grid
        self.order = order
        self.width = self._ORDERS[order]

    def _along(self, field: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
        index = [slice(None)] * field.ndim
        index[axis] = slice(start, stop)
        return field[tuple(index)]

    def partial(self, field: np.ndarray, axis: int) -> np.ndarray:
        """First partial derivative of ``field`` along grid axis ``axis``."""
        field = np.asarray(field, dtype=float)
        n = field.shape[axis]
        h = self.grid.spacing[axis]
        out = np.zeros_like(field)
        target = [slice(None)] * field.ndim
        target[axis] = slice(self.width, n - self.width)
        if self.order == 2:
            diff = (self._along(field, axis, 2, n) - self._along(field, axis, 0, n - 2)) / (2.0 * h)
        else:
            diff = (
                -self._along(field, axis, 4, n)
                + 8.0 * self._along(field, axis, 3, n - 1)
                - 8.0 * self._along(field, axis, 1, n - 3)
                + self._along(field, axis, 0, n - 4)
            ) / (12.0 * h)
        out[tuple(target)] = diff
        return out

    def gradient(self, field: np.ndarray) -> np.ndarray:
        """All first partials; the derivative index follows the grid axes."""
        m = self.grid.dim
        parts = [self.partial(field, axis) for axis in range(m)]
        return np.stack(parts, axis=m)


@dataclass(frozen=True)
class Quadrature:
    """Node quadrature with sqrt(det g) weights supplied at integration time."""

    grid: Grid
    rule: Literal["trapezoid", "midpoint"] = "trapezoid"

    @cached_property
    def weights(self) -> np.ndarray:
        weights = np.full(self.grid.shape, float(np.prod(self.grid.spacing)))
        if self.rule == "trapezoid" and not self.grid.cell_centered:
            for axis in range(self.grid.dim):
                index = [slice(None)] * self.grid.dim
                index[axis] = 0
                weights[tuple(index)] *= 0.5
                index[axis] = -1
                weights[tuple(index)] *= 0.5
        return weights

    def integrate(self, field: np.ndarray, sqrt_det: np.ndarray) -> float:
        """Sum of field * sqrt(det g) * cell weight over all nodes."""
        field = np.asarray(field, dtype=float)
        if not np.all(np.isfinite(field)):
            raise QuadratureError("integrand contains NaN or infinite values")
        return float(np.sum(field * sqrt_det * self.weights))
