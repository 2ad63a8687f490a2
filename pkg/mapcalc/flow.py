"""
Gradient descent of E_pq over discrete maps.

The descent direction is the assembled bitension tau_{2,p,q}, restricted
to the nodes that keep the deviation's support margin, so that
d/d(alpha) E(phi + alpha d) = -int |d|_h^2 dv_g at alpha = 0.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import FlowSection
from .energy import Functional, evaluate, map_variation_derivative
from .exceptions import ChartDomainError, CheckpointError, FlowError, GradientCheckError
from .mapfield import DEPTH_BITENSION, DiscreteMap, bitension_pq, p_tension, required_margin, section_inner
from .schemas import FlowRecord
from .store import save_arrays

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12

FlowStatus = Literal["converged", "stalled", "stagnated", "max_iterations", "trivial"]


class FlowConfig(BaseModel):
    """Descent parameters; defaults follow the shipped [flow] section."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p: float = Field(default=2.0, ge=2.0)
    q: float = Field(default=2.0, ge=2.0)
    alpha0: float = Field(default=1e-2, gt=0)
    policy: Literal["fixed", "backtracking"] = "backtracking"
    beta: float = Field(default=0.5, gt=0, lt=1)
    armijo_c: float = Field(default=1e-4, gt=0, lt=1)
    max_iterations: int = Field(default=500, ge=0)
    tau_tolerance: float = Field(default=1e-3, gt=0)
    energy_tolerance: float = Field(default=1e-14, gt=0)
    gradient_mode: Literal["assembled", "finite_difference"] = "assembled"
    seed: int = 0
    log_every: int = Field(default=50, ge=1)
    checkpoint_every: int = Field(default=50, ge=1)

    @classmethod
    def from_section(cls, section: FlowSection, p: float, q: float, seed: int = 0) -> "FlowConfig":
        return cls(
            p=p,
            q=q,
            alpha0=section.alpha0,
            policy=section.policy,
            beta=section.beta,
            armijo_c=section.armijo_c,
            max_iterations=section.max_iterations,
            tau_tolerance=section.tau_tolerance,
            energy_tolerance=section.energy_tolerance,
            gradient_mode=section.gradient_mode,
            seed=seed,
            log_every=section.log_every,
            checkpoint_every=section.checkpoint_every,
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; stored in checkpoints."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class FlowTrace:
    records: List[FlowRecord] = field(default_factory=list)
    status: FlowStatus = "max_iterations"
    start_iteration: int = 0

    @property
    def energies(self) -> List[float]:
        return [r.energy for r in self.records]

    @property
    def iterations(self) -> int:
        return self.records[-1].iter if self.records else 0

    def is_monotone(self) -> bool:
        e = self.energies
        return all(b <= a for a, b in zip(e, e[1:]))

    def rows(self) -> List[Dict[str, Any]]:
        return [r.model_dump() for r in self.records]


def _functional(cfg: FlowConfig) -> Functional:
    return Functional.energy_pq(cfg.p, cfg.q)


def descent_mask(phi: DiscreteMap) -> np.ndarray:
    """Nodes a descent step may move without breaking the bitension margin."""
    return phi.geom.grid.interior_mask(required_margin(DEPTH_BITENSION, phi.geom.width))


def assembled_direction(phi: DiscreteMap, cfg: FlowConfig) -> np.ndarray:
    return bitension_pq(phi, cfg.p, cfg.q).values * descent_mask(phi)[..., None]


def finite_difference_direction(phi: DiscreteMap, cfg: FlowConfig, step: float = 1e-6) -> np.ndarray:
    """
    -h^-1 dE/dphi divided by the node's quadrature weight, node by node.

    Costs two energy evaluations per masked node and component.
    """
    F = _functional(cfg)
    mask = descent_mask(phi)
    weights = phi.geom.quadrature.weights * phi.geom.sqrt_det
    grad = np.zeros_like(phi.deviation)
    for node in zip(*np.nonzero(mask)):
        for a in range(phi.target_dim):
            bump = np.zeros_like(phi.deviation)
            bump[node + (a,)] = step
            plus = evaluate(F, phi.with_deviation(phi.deviation + bump))
            minus = evaluate(F, phi.with_deviation(phi.deviation - bump))
            grad[node + (a,)] = (plus - minus) / (2.0 * step)
    scaled = np.where(mask[..., None], grad / weights[..., None], 0.0)
    return -np.einsum("...ab,...b->...a", phi.target_inverse, scaled)


def direction(phi: DiscreteMap, cfg: FlowConfig) -> np.ndarray:
    if cfg.gradient_mode == "finite_difference":
        return finite_difference_direction(phi, cfg)
    return assembled_direction(phi, cfg)


@dataclass(frozen=True)
class GradientCheck:
    oracle: float
    formula: float
    error_bar: float
    rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_err <= self.tolerance


def gradient_check(phi: DiscreteMap, cfg: FlowConfig, tolerance: float = 0.01) -> GradientCheck:
    """Compare -int |d|_h^2 with the FD derivative of E_pq along d."""
    F = _functional(cfg)
    d = assembled_direction(phi, cfg)
    formula = -phi.geom.integrate(section_inner(phi, d, d))
    estimate = map_variation_derivative(F, phi, d)
    scale = max(abs(formula), abs(estimate.value))
    rel_err = abs(formula - estimate.value) / scale if scale > 0 else 0.0
    check = GradientCheck(estimate.value, formula, estimate.error_bar, rel_err, tolerance)
    logger.info(
        "Gradient check",
        extra={"oracle": check.oracle, "formula": check.formula, "rel_err": rel_err,
               "tolerance": tolerance, "passed": check.passed},
    )
    return check


def save_checkpoint(path: Path, phi: DiscreteMap, cfg: FlowConfig, iteration: int, step: float) -> None:
    save_arrays(
        Path(path),
        deviation=phi.deviation,
        iteration=np.array(iteration),
        step=np.array(step),
        config_hash=np.array(cfg.config_hash()),
    )
    logger.debug("Checkpoint written", extra={"path": str(path), "iteration": iteration})


def load_checkpoint(path: Path, phi: DiscreteMap, cfg: FlowConfig) -> Tuple[DiscreteMap, int, float]:
    """Restore the deviation of a run with the same configuration."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    with np.load(path) as data:
        stored_hash = str(data["config_hash"])
        if stored_hash != cfg.config_hash():
            raise CheckpointError("Checkpoint was written with a different flow configuration")
        deviation = data["deviation"]
        if deviation.shape != phi.deviation.shape:
            raise CheckpointError("Checkpoint grid does not match the map's grid")
        return phi.with_deviation(deviation), int(data["iteration"]), float(data["step"])


def _tau_inf(phi: DiscreteMap, cfg: FlowConfig) -> float:
    tau = p_tension(phi, cfg.p)
    return float((tau.norm(phi) * descent_mask(phi)).max(initial=0.0))


def _record(phi: DiscreteMap, cfg: FlowConfig, iteration: int, energy: float, d: np.ndarray, step: float) -> FlowRecord:
    bitension_inf = float(np.sqrt(np.maximum(section_inner(phi, d, d), 0.0)).max(initial=0.0))
    return FlowRecord(iter=iteration, energy=energy, tau_inf=_tau_inf(phi, cfg),
                      bitension_inf=bitension_inf, step=step)


def _try_step(F: Functional, phi: DiscreteMap, d: np.ndarray, alpha: float) -> Optional[Tuple[DiscreteMap, float]]:
    try:
        candidate = phi.displaced(d, alpha)
    except ChartDomainError:
        return None
    return candidate, evaluate(F, candidate)


def descend(
    phi0: DiscreteMap,
    cfg: FlowConfig,
    checkpoint: Optional[Path] = None,
    resume: bool = False,
) -> Tuple[DiscreteMap, FlowTrace]:
    """
    Iterate phi_{k+1} = phi_k + alpha_k d_k.

    Backtracking starts each iteration at min(alpha0, alpha_prev / beta) and
    halves by beta until the Armijo condition holds; a step leaving the
    target chart counts as a failed trial.
    """
    F = _functional(cfg)
    phi = phi0
    trace = FlowTrace()
    alpha = cfg.alpha0
    if resume and checkpoint is not None and Path(checkpoint).exists():
        phi, trace.start_iteration, alpha = load_checkpoint(Path(checkpoint), phi0, cfg)
        logger.info("Flow resumed", extra={"iteration": trace.start_iteration, "step": alpha})

    energy = evaluate(F, phi)
    if energy == 0.0:
        trace.status = "trivial"
        trace.records.append(FlowRecord(iter=trace.start_iteration, energy=0.0, tau_inf=0.0,
                                        bitension_inf=0.0, step=0.0))
        logger.info("Flow skipped: initial energy is zero")
        return phi, trace

    d = direction(phi, cfg)
    trace.records.append(_record(phi, cfg, trace.start_iteration, energy, d, 0.0))
    iteration = trace.start_iteration
    for _ in range(cfg.max_iterations):
        if trace.records[-1].tau_inf <= cfg.tau_tolerance:
            trace.status = "converged"
            break
        slope = phi.geom.integrate(section_inner(phi, d, d))
        if cfg.policy == "fixed":
            trial = _try_step(F, phi, d, alpha)
            if trial is None:
                raise FlowError(f"fixed step {alpha:.3e} leaves the target chart")
            accepted, new_energy = trial
        else:
            alpha = min(cfg.alpha0, alpha / cfg.beta)
            accepted = None
            while alpha >= MIN_STEP:
                trial = _try_step(F, phi, d, alpha)
                if trial is not None and trial[1] <= energy - cfg.armijo_c * alpha * slope:
                    accepted, new_energy = trial
                    break
                alpha *= cfg.beta
            if accepted is None:
                trace.status = "stagnated"
                logger.warning("Flow stagnated", extra={"iteration": iteration, "energy": energy})
                break

        iteration += 1
        decrement = energy - new_energy
        phi, energy = accepted, new_energy
        d = direction(phi, cfg)
        trace.records.append(_record(phi, cfg, iteration, energy, d, alpha))
        if iteration % cfg.log_every == 0:
            logger.info(
                "Flow progress",
                extra={"iteration": iteration, "energy": energy, "tau_inf": trace.records[-1].tau_inf,
                       "step": alpha},
            )
        if checkpoint is not None and iteration % cfg.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint), phi, cfg, iteration, alpha)
        if trace.records[-1].tau_inf <= cfg.tau_tolerance:
            trace.status = "converged"
            break
        if 0 <= decrement < cfg.energy_tolerance:
            trace.status = "stalled"
            break
    else:
        trace.status = "max_iterations"

    if checkpoint is not None:
        save_checkpoint(Path(checkpoint), phi, cfg, iteration, alpha)
    logger.info(
        "Flow finished",
        extra={"status": trace.status, "iterations": iteration, "energy": energy,
               "tau_inf": trace.records[-1].tau_inf},
    )
    return phi, trace


def run_flow(
    phi0: DiscreteMap,
    cfg: FlowConfig,
    check: bool = True,
    force: bool = False,
    tolerance: float = 0.01,
    checkpoint: Optional[Path] = None,
    resume: bool = False,
) -> Tuple[DiscreteMap, FlowTrace, Optional[GradientCheck]]:
    """gradient_check first, then descend; a failed check stops the run unless forced."""
    report = None
    if check:
        report = gradient_check(phi0, cfg, tolerance)
        if not report.passed:
            if not force:
                raise GradientCheckError(report.rel_err, tolerance)
            logger.warning("Gradient check failed, continuing because the run is forced",
                           extra={"rel_err": report.rel_err})
    phi, trace = descend(phi0, cfg, checkpoint=checkpoint, resume=resume)
    return phi, trace, report
