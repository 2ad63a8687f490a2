"""
Shared plumbing for command modules: the experiment context every command
receives, the result it returns and the registry the CLI dispatches on.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import Defaults, ExperimentConfig, ToleranceDefaults
from ..exceptions import ConfigurationError
from ..geometry import ChartManifold, GridGeometry
from ..lagrangians import LagrangianB, LagrangianL, lagrangian_b_for, lagrangian_l_for
from ..mapfield import DiscreteMap
from ..presets import build_map, build_source, build_target
from ..schemas import CheckResult, Report
from ..soliton import SolitonStructure

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    report: Report
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.report.passed


CommandFn = Callable[["Experiment"], CommandResult]

COMMANDS: Dict[str, CommandFn] = {}


def command(name: str) -> Callable[[CommandFn], CommandFn]:
    """Register a command function under its CLI name."""

    def decorator(fn: CommandFn) -> CommandFn:
        if name in COMMANDS:
            raise ValueError(f"command {name!r} registered twice")
        COMMANDS[name] = fn
        return fn

    return decorator


class Experiment:
    """
    One validated experiment: config, shipped defaults and the objects built
    from them. Geometry is built lazily and cached per grid spacing.
    """

    def __init__(self, config: ExperimentConfig, defaults: Defaults):
        self.config = config
        self.defaults = defaults
        self.tolerances: ToleranceDefaults = config.resolved_tolerances(defaults)
        self._sources: Dict[float, Tuple[GridGeometry, Optional[SolitonStructure]]] = {}

    @property
    def h(self) -> float:
        return self.config.manifold.h

    @property
    def seed(self) -> int:
        return self.config.map.seed

    @property
    def params(self):
        return self.config.params

    def source(self, h: Optional[float] = None) -> Tuple[GridGeometry, Optional[SolitonStructure]]:
        h = float(h or self.h)
        if h not in self._sources:
            self._sources[h] = build_source(self.config.manifold, self.defaults.numerics, self.params, h=h)
        return self._sources[h]

    def geometry(self, h: Optional[float] = None) -> GridGeometry:
        return self.source(h)[0]

    def soliton(self, h: Optional[float] = None) -> SolitonStructure:
        S = self.source(h)[1]
        if S is None:
            raise ConfigurationError(
                f"manifold preset {self.config.manifold.preset!r} carries no soliton structure"
            )
        return S

    @cached_property
    def target(self) -> Tuple[ChartManifold, np.ndarray]:
        return build_target(self.config.target, self.defaults.numerics.fd_step)

    def map(self, h: Optional[float] = None) -> DiscreteMap:
        M, base_point = self.target
        return build_map(self.config.map, self.geometry(h), M, base_point)

    def spacings(self) -> List[float]:
        """h alone, or h and h/2 when the refinement ladder is on."""
        return [self.h, 0.5 * self.h] if self.params.refine else [self.h]

    def lagrangian_l(self, phi: DiscreteMap) -> LagrangianL:
        return lagrangian_l_for(self.params.lagrangian, self.params.p, phi.source_dim, phi.target_dim)

    def lagrangian_b(self, phi: DiscreteMap) -> LagrangianB:
        return lagrangian_b_for(self.params.b_lagrangian, phi.source_dim, phi.target_dim)

    def center(self, geom: GridGeometry) -> np.ndarray:
        if self.params.x0 is not None:
            return np.asarray(self.params.x0, dtype=float)
        return 0.5 * (np.asarray(geom.grid.lower) + np.asarray(geom.grid.upper))

    def report(self, command: str, checks: Sequence[CheckResult], data: Optional[Dict[str, Any]] = None) -> Report:
        return Report(
            command=command,
            config=self.config.model_dump(mode="json"),
            tolerances=self.tolerances.model_dump(),
            checks=list(checks),
            data=data or {},
        )


def ladder_check(
    name: str,
    errors: Sequence[float],
    factor: float,
    floor: float = 0.0,
    seed: Optional[int] = None,
) -> Optional[CheckResult]:
    """
    Reduction factor of an error between h and h/2.

    Returns None without a second rung. Errors at or below ``floor`` on the
    coarse grid are already resolved and pass outright.
    """
    if len(errors) < 2:
        return None
    coarse, fine = abs(errors[0]), abs(errors[1])
    if coarse <= floor:
        return CheckResult(name=name, value=None, tolerance=factor, passed=True, seed=seed,
                           detail=f"coarse error {coarse:.3e} at resolution floor")
    ratio = coarse / fine if fine > 0 else float("inf")
    return CheckResult.at_least(name, min(ratio, 1e300), factor, seed=seed)
