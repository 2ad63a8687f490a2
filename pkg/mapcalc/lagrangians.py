"""
Lagrangians L(x, y, r) and B(x, y, r, s) of the generalised energies.

x is a source point, y a target point, r the energy density e(phi) and s
the half squared norm of tau_L. Target partials are coordinate partials
in the target chart; raising with h^-1 happens where they are used.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import LagrangianError, UnsupportedLagrangianError

logger = logging.getLogger(__name__)

LFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
BFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

CONSISTENCY_SAMPLES = 16
CONSISTENCY_STEP = 1e-5
CONSISTENCY_RTOL = 1e-6


def guarded_power(norm: np.ndarray, exponent: float, eps: float = 1e-9) -> np.ndarray:
    """
    norm**exponent with the degenerate-point rule.

    Exponent 0 gives exactly 1. A negative exponent at nodes with
    norm < eps gives 0 there instead of an infinity.
    """
    norm = np.asarray(norm, dtype=float)
    if exponent == 0:
        return np.ones_like(norm)
    if exponent > 0:
        return np.power(np.maximum(norm, 0.0), exponent)
    safe = np.where(norm < eps, 1.0, norm)
    return np.where(norm < eps, 0.0, np.power(safe, exponent))


def _zeros_like_y(y: np.ndarray) -> np.ndarray:
    return np.zeros(np.shape(y))


def _zeros_yy(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    return np.zeros(y.shape + (y.shape[-1],))


@dataclass(frozen=True)
class LagrangianL:
    """
    L: M x N x R -> (0, inf) with the partials the tension fields need.

    ``depends_on_y=False`` declares every target partial identically zero.
    """

    name: str
    value: LFn
    d_r: LFn
    d_rr: LFn
    d_y: Optional[LFn] = None
    d_ry: Optional[LFn] = None
    d_yy: Optional[LFn] = None
    depends_on_y: bool = False
    source_dim: int = 2
    target_dim: int = 2
    check: bool = True

    def __post_init__(self):
        if self.depends_on_y and self.d_y is None:
            raise UnsupportedLagrangianError(self.name, "d_y")
        if self.check:
            check_lagrangian_l(self)

    def partial_y(self, x, y, r) -> np.ndarray:
        if not self.depends_on_y:
            return _zeros_like_y(y)
        return self.d_y(x, y, r)

    def partial_ry(self, x, y, r) -> np.ndarray:
        if not self.depends_on_y:
            return _zeros_like_y(y)
        if self.d_ry is None:
            raise UnsupportedLagrangianError(self.name, "d_ry")
        return self.d_ry(x, y, r)

    def partial_yy(self, x, y, r) -> np.ndarray:
        if not self.depends_on_y:
            return _zeros_yy(y)
        if self.d_yy is None:
            raise UnsupportedLagrangianError(self.name, "d_yy")
        return self.d_yy(x, y, r)


@dataclass(frozen=True)
class LagrangianB:
    """B: M x N x R x R -> (0, inf); r is e(phi) and s is |tau_L|^2 / 2."""

    name: str
    value: BFn
    d_r: BFn
    d_rr: BFn
    d_s: BFn
    d_ss: BFn
    d_y: Optional[BFn] = None
    depends_on_y: bool = False
    source_dim: int = 2
    target_dim: int = 2
    check: bool = True

    def __post_init__(self):
        if self.depends_on_y and self.d_y is None:
            raise UnsupportedLagrangianError(self.name, "d_y")
        if self.check:
            check_lagrangian_b(self)

    def partial_y(self, x, y, r, s) -> np.ndarray:
        if not self.depends_on_y:
            return _zeros_like_y(y)
        return self.d_y(x, y, r, s)


def _samples(source_dim: int, target_dim: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, (CONSISTENCY_SAMPLES, source_dim))
    y = rng.uniform(-1.0, 1.0, (CONSISTENCY_SAMPLES, target_dim))
    r = rng.uniform(0.1, 2.0, CONSISTENCY_SAMPLES)
    s = rng.uniform(0.1, 2.0, CONSISTENCY_SAMPLES)
    return x, y, r, s


def _compare(name: str, label: str, numeric: np.ndarray, supplied: np.ndarray) -> None:
    numeric = np.asarray(numeric, dtype=float)
    supplied = np.asarray(supplied, dtype=float)
    err = np.abs(numeric - supplied) / np.maximum(1.0, np.abs(supplied))
    worst = float(err.max(initial=0.0))
    if not np.isfinite(worst) or worst > CONSISTENCY_RTOL:
        raise LagrangianError(
            f"Lagrangian {name}: supplied {label} disagrees with finite differences ({worst:.2e})",
            name=name,
        )


def _fd_r(fn, args, index):
    step = CONSISTENCY_STEP
    plus = list(args)
    minus = list(args)
    plus[index] = args[index] + step
    minus[index] = args[index] - step
    return (fn(*plus) - fn(*minus)) / (2.0 * step)


def _fd_y(fn, args):
    """Partials with respect to args[1] = y, stacked on a new trailing axis."""
    step = CONSISTENCY_STEP
    x, y = args[0], args[1]
    parts = []
    for a in range(y.shape[-1]):
        e = np.zeros(y.shape[-1])
        e[a] = step
        plus = (x, y + e) + tuple(args[2:])
        minus = (x, y - e) + tuple(args[2:])
        parts.append((np.asarray(fn(*plus)) - np.asarray(fn(*minus))) / (2.0 * step))
    return np.stack(parts, axis=-1)


def check_lagrangian_l(L: LagrangianL, seed: int = 0) -> None:
    """Positivity of L and central-difference consistency of every supplied partial."""
    x, y, r, _ = _samples(L.source_dim, L.target_dim, seed)
    args = (x, y, r)
    values = np.asarray(L.value(*args), dtype=float)
    if not np.all(values > 0):
        raise LagrangianError(f"Lagrangian {L.name} is not positive on its sample points", name=L.name)
    _compare(L.name, "d_r", _fd_r(L.value, args, 2), L.d_r(*args))
    _compare(L.name, "d_rr", _fd_r(L.d_r, args, 2), L.d_rr(*args))
    if L.depends_on_y:
        _compare(L.name, "d_y", _fd_y(L.value, args), L.d_y(*args))
        if L.d_ry is not None:
            _compare(L.name, "d_ry", _fd_y(L.d_r, args), L.d_ry(*args))
        if L.d_yy is not None:
            _compare(L.name, "d_yy", _fd_y(L.d_y, args), L.d_yy(*args))
    logger.debug("Lagrangian partials consistent", extra={"lagrangian": L.name})


def check_lagrangian_b(B: LagrangianB, seed: int = 0) -> None:
    x, y, r, s = _samples(B.source_dim, B.target_dim, seed)
    args = (x, y, r, s)
    values = np.asarray(B.value(*args), dtype=float)
    if not np.all(values > 0):
        raise LagrangianError(f"Lagrangian {B.name} is not positive on its sample points", name=B.name)
    _compare(B.name, "d_r", _fd_r(B.value, args, 2), B.d_r(*args))
    _compare(B.name, "d_rr", _fd_r(B.d_r, args, 2), B.d_rr(*args))
    _compare(B.name, "d_s", _fd_r(B.value, args, 3), B.d_s(*args))
    _compare(B.name, "d_ss", _fd_r(B.d_s, args, 3), B.d_ss(*args))
    if B.depends_on_y:
        _compare(B.name, "d_y", _fd_y(B.value, args), B.d_y(*args))
    logger.debug("Lagrangian partials consistent", extra={"lagrangian": B.name})


# --- presets ---------------------------------------------------------------


def _const(c: float):
    def fn(*args):
        return np.full(np.shape(args[2]), c, dtype=float)

    return fn


def dirichlet(source_dim: int = 2, target_dim: int = 2) -> LagrangianL:
    """L = r, the Dirichlet energy density."""
    return LagrangianL(
        "dirichlet",
        value=lambda x, y, r: np.asarray(r, dtype=float),
        d_r=_const(1.0),
        d_rr=_const(0.0),
        source_dim=source_dim,
        target_dim=target_dim,
    )


def p_energy(p: float, source_dim: int = 2, target_dim: int = 2, eps: float = 1e-9) -> LagrangianL:
    """L = (2r)^(p/2) / p, so that L' = |dphi|^(p-2)."""
    if p < 2:
        raise LagrangianError("p-energy Lagrangian needs p >= 2", name="p-energy")

    def value(x, y, r):
        return np.power(2.0 * np.asarray(r, dtype=float), 0.5 * p) / p

    def d_r(x, y, r):
        return guarded_power(2.0 * np.asarray(r, dtype=float), 0.5 * p - 1.0, eps)

    def d_rr(x, y, r):
        if p == 2:
            return np.zeros(np.shape(r))
        return (p - 2.0) * guarded_power(2.0 * np.asarray(r, dtype=float), 0.5 * p - 2.0, eps)

    return LagrangianL(
        f"p-energy(p={p:g})", value, d_r, d_rr, source_dim=source_dim, target_dim=target_dim
    )


def potential(
    y0: Optional[np.ndarray] = None, source_dim: int = 2, target_dim: int = 2
) -> LagrangianL:
    """L = r + |y - y0|^2 / 2 in target coordinates."""
    y0 = np.zeros(target_dim) if y0 is None else np.asarray(y0, dtype=float)

    def value(x, y, r):
        return np.asarray(r, dtype=float) + 0.5 * np.sum((y - y0) ** 2, axis=-1)

    def d_y(x, y, r):
        return np.asarray(y, dtype=float) - y0

    def d_yy(x, y, r):
        return np.broadcast_to(np.eye(target_dim), np.shape(y) + (target_dim,)).copy()

    return LagrangianL(
        "potential",
        value,
        d_r=_const(1.0),
        d_rr=_const(0.0),
        d_y=d_y,
        d_ry=lambda x, y, r: _zeros_like_y(y),
        d_yy=d_yy,
        depends_on_y=True,
        source_dim=source_dim,
        target_dim=target_dim,
    )


def bienergy(source_dim: int = 2, target_dim: int = 2) -> LagrangianB:
    """B = s."""
    return LagrangianB(
        "bienergy",
        value=lambda x, y, r, s: np.asarray(s, dtype=float),
        d_r=_const(0.0),
        d_rr=_const(0.0),
        d_s=_const(1.0),
        d_ss=_const(0.0),
        source_dim=source_dim,
        target_dim=target_dim,
    )


def dirichlet_b(source_dim: int = 2, target_dim: int = 2) -> LagrangianB:
    """B = r."""
    return LagrangianB(
        "dirichlet",
        value=lambda x, y, r, s: np.asarray(r, dtype=float),
        d_r=_const(1.0),
        d_rr=_const(0.0),
        d_s=_const(0.0),
        d_ss=_const(0.0),
        source_dim=source_dim,
        target_dim=target_dim,
    )


def f_energy(source_dim: int = 2, target_dim: int = 2) -> LagrangianB:
    """B = F(r) + s with F(r) = r + r^2 / 2."""
    return LagrangianB(
        "f-energy",
        value=lambda x, y, r, s: np.asarray(r, dtype=float) + 0.5 * np.asarray(r) ** 2 + s,
        d_r=lambda x, y, r, s: 1.0 + np.asarray(r, dtype=float),
        d_rr=_const(1.0),
        d_s=_const(1.0),
        d_ss=_const(0.0),
        source_dim=source_dim,
        target_dim=target_dim,
    )


def lagrangian_l_for(name: str, p: float = 2.0, source_dim: int = 2, target_dim: int = 2) -> LagrangianL:
    """Resolve an L preset name from an experiment config."""
    if name == "dirichlet":
        return dirichlet(source_dim, target_dim)
    if name == "p-energy":
        return p_energy(p, source_dim, target_dim)
    if name == "potential":
        return potential(None, source_dim, target_dim)
    raise LagrangianError(f"unknown Lagrangian preset {name!r}", name=name)


def lagrangian_b_for(name: str, source_dim: int = 2, target_dim: int = 2) -> LagrangianB:
    if name == "bienergy":
        return bienergy(source_dim, target_dim)
    if name == "dirichlet":
        return dirichlet_b(source_dim, target_dim)
    if name == "f-energy":
        return f_energy(source_dim, target_dim)
    raise LagrangianError(f"unknown B preset {name!r}", name=name)
