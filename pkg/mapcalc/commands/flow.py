"""Gradient descent of E_pq, preceded by a gradient check."""

import logging
from pathlib import Path
from typing import Optional

from ..config import get_settings
from ..dependencies import get_report_store
from ..exceptions import GradientCheckError
from ..flow import FlowConfig, run_flow
from ..schemas import CheckResult
from ..store import FileReportStore
from .base import CommandResult, Experiment, command

logger = logging.getLogger(__name__)


def _checkpoint_path(exp: Experiment) -> Optional[Path]:
    """Relative checkpoint names live beside the reports."""
    name = exp.config.flow.checkpoint
    if name is None:
        return None
    path = Path(name)
    if path.is_absolute():
        return path
    store = get_report_store()
    if isinstance(store, FileReportStore):
        return store.directory / path
    return Path(exp.config.output.directory or get_settings().output_dir) / path


@command("flow")
def flow(exp: Experiment) -> CommandResult:
    tol = exp.tolerances
    section = exp.config.flow
    cfg = FlowConfig.from_section(section, exp.params.p, exp.params.q, seed=exp.seed)
    phi0 = exp.map()
    h = phi0.geom.h
    try:
        _, trace, grad_check = run_flow(
            phi0,
            cfg,
            check=section.gradient_check,
            force=section.force,
            tolerance=tol.gradient_check_rel,
            checkpoint=_checkpoint_path(exp),
            resume=section.resume,
        )
    except GradientCheckError as e:
        check = CheckResult.at_most("gradient_check", e.rel_err, e.tolerance, h=h, seed=exp.seed,
                                    detail="flow not started")
        return CommandResult(exp.report("flow", [check], {"status": "not_started"}))

    checks = []
    if grad_check is not None:
        checks.append(CheckResult.at_most("gradient_check", grad_check.rel_err, grad_check.tolerance,
                                          h=h, seed=exp.seed))
    checks.append(CheckResult(name="energy_monotone", passed=trace.is_monotone(), h=h, seed=exp.seed))
    first, final = trace.records[0], trace.records[-1]
    if section.require_convergence:
        checks.append(CheckResult.at_most("tau_inf", final.tau_inf, cfg.tau_tolerance, h=h, seed=exp.seed,
                                          detail=f"status {trace.status}"))
    else:
        # A run that starts converged has nothing left to decrease.
        decreased = final.tau_inf < first.tau_inf or final.tau_inf <= cfg.tau_tolerance
        checks.append(CheckResult(name="tau_decreasing", value=final.tau_inf, tolerance=first.tau_inf,
                                  passed=decreased, h=h, seed=exp.seed, detail=f"status {trace.status}"))
    data = {
        "status": trace.status,
        "iterations": trace.iterations,
        "start_iteration": trace.start_iteration,
        "initial_energy": first.energy,
        "final_energy": final.energy,
        "initial_tau_inf": first.tau_inf,
        "final_tau_inf": final.tau_inf,
        "config_hash": cfg.config_hash(),
    }
    return CommandResult(exp.report("flow", checks, data), trace.rows())
