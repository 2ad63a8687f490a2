"""Metric-variation oracles, trace and divergence identities of the stress tensors."""

import logging
from typing import Dict, List, Tuple

import numpy as np

from ..energy import Functional, delta_tau_p_squared, metric_variation_derivative
from ..geometry import inner_sym
from ..mapfield import bitension_p2, energy_density, pullback_metric
from ..presets import random_symmetric_tensor
from ..schemas import CheckResult, OracleRecord
from ..soliton import make_cutoff
from ..stress import (
    STRESS_KINDS,
    StressKind,
    assemble,
    closed_form_trace,
    divergence_identity_residual,
    functional_for,
    liouville_ibp_identity,
    metric_variation_formula,
    trace,
)
from .base import CommandResult, Experiment, command, ladder_check

logger = logging.getLogger(__name__)

METRIC_VARIATION_AMPLITUDE = 0.1
LADDER_FLOOR = 1e-7
IBP_LADDER_FLOOR = 1e-10


def _kinds(exp: Experiment) -> Tuple[StressKind, ...]:
    return STRESS_KINDS if exp.params.stress == "all" else (exp.params.stress,)


def _oracle_checks(exp: Experiment, records: Dict[str, List[OracleRecord]], tolerance_of) -> List[CheckResult]:
    checks = []
    for name, series in records.items():
        first = series[0]
        checks.append(CheckResult.at_most(f"{name}.rel_err", first.rel_err, tolerance_of(first.h),
                                          h=first.h, seed=exp.seed))
        ladder = ladder_check(f"{name}.ladder", [r.rel_err for r in series], exp.tolerances.ladder_factor,
                              floor=LADDER_FLOOR, seed=exp.seed)
        if ladder is not None:
            checks.append(ladder)
    return checks


@command("stress-check")
def stress_check(exp: Experiment) -> CommandResult:
    """
    d/dt F(g + t dg) against 1/2 int <S, dg> for each stress tensor, the
    classical Dirichlet stress e g - phi*h, and the pointwise variation of
    |tau_p|^2 under a fixed volume form.
    """
    tol = exp.tolerances
    p, q, variant = exp.params.p, exp.params.q, exp.params.variant
    rel_step = exp.defaults.numerics.richardson_t0
    stress_records: Dict[str, List[OracleRecord]] = {}
    tau_records: Dict[str, List[OracleRecord]] = {}

    for h in exp.spacings():
        phi = exp.map(h)
        geom = phi.geom
        L, B = exp.lagrangian_l(phi), exp.lagrangian_b(phi)
        dg = random_symmetric_tensor(geom, exp.seed + 2, amplitude=METRIC_VARIATION_AMPLITUDE)

        for kind in _kinds(exp):
            S = assemble(kind, phi, p=p, q=q, L=L, B=B, variant=variant)
            F = functional_for(kind, p, q, L, B, phi.source_dim, phi.target_dim)
            estimate = metric_variation_derivative(F, phi, dg, rel_step=rel_step)
            formula = metric_variation_formula(S, phi, dg)
            stress_records.setdefault(kind, []).append(OracleRecord.compare(
                kind, estimate.value, formula, geom.h, seed=exp.seed,
                params={**S.params, "variant": variant}, error_bar=estimate.error_bar,
            ))

        if exp.params.lagrangian == "dirichlet":
            classical = energy_density(phi)[..., None, None] * geom.g - pullback_metric(phi).values
            estimate = metric_variation_derivative(Functional.energy_L(L), phi, dg, rel_step=rel_step)
            formula = 0.5 * geom.integrate(inner_sym(geom, classical, dg.values))
            stress_records.setdefault("S_dirichlet", []).append(OracleRecord.compare(
                "S_dirichlet", estimate.value, formula, geom.h, seed=exp.seed, error_bar=estimate.error_bar,
            ))

        estimate = metric_variation_derivative(Functional.energy_p(p), phi, dg, rel_step=rel_step, fixed_volume=True)
        formula = 0.5 * geom.integrate(delta_tau_p_squared(phi, p, dg))
        tau_records.setdefault("delta_tau_p", []).append(OracleRecord.compare(
            "delta_tau_p", estimate.value, formula, geom.h, seed=exp.seed, params={"p": p},
            error_bar=estimate.error_bar,
        ))

    checks = _oracle_checks(exp, stress_records, tol.oracle)
    checks += _oracle_checks(exp, tau_records, lambda h: tol.delta_tau_rel)
    all_records = [r for series in (*stress_records.values(), *tau_records.values()) for r in series]
    rows = [{**r.model_dump(mode="json"), "params": ";".join(f"{k}={v}" for k, v in r.params.items())}
            for r in all_records]
    data = {"records": [r.model_dump(mode="json") for r in all_records], "variant": variant}
    return CommandResult(exp.report("stress-check", checks, data), rows)


@command("div-check")
def div_check(exp: Experiment) -> CommandResult:
    """
    div S_2p + h(tau_{2,p}, dphi) = 0 for both exponent variants; the
    configured variant is judged, the other is reported for comparison.
    """
    tol = exp.tolerances
    p = exp.params.p
    rows: List[Dict[str, object]] = []
    sups: Dict[str, List[float]] = {"derived": [], "printed": []}
    relative: Dict[str, List[float]] = {"derived": [], "printed": []}
    for h in exp.spacings():
        phi = exp.map(h)
        coupling = np.einsum("...ab,...a,...jb->...j", phi.target_metric, bitension_p2(phi, p).values,
                             phi.differential)
        scale = float(np.sqrt(np.maximum(
            np.einsum("...ij,...i,...j->...", phi.geom.ginv, coupling, coupling), 0.0)).max(initial=0.0))
        for variant in ("derived", "printed"):
            _, sup, l2 = divergence_identity_residual(phi, p, variant)
            rel = sup / scale if scale > 0 else 0.0
            sups[variant].append(sup)
            relative[variant].append(rel)
            rows.append({"variant": variant, "h": phi.geom.h, "p": p, "sup": sup, "l2": l2, "relative": rel})

    chosen = exp.params.variant
    checks = [CheckResult.at_most(f"div_{chosen}.relative", relative[chosen][0], tol.div_rel,
                                  h=exp.h, seed=exp.seed)]
    ladder = ladder_check(f"div_{chosen}.ladder", sups[chosen], tol.ladder_factor, seed=exp.seed)
    if ladder is not None:
        checks.append(ladder)

    converging = {
        variant: (len(values) > 1 and values[1] > 0 and values[0] / values[1] >= tol.ladder_factor)
        or (len(values) > 0 and values[0] == 0.0)
        for variant, values in sups.items()
    }
    data = {"p": p, "variant": chosen, "converging": converging, "sup": sups, "relative": relative}
    logger.info("Divergence identity", extra={"p": p, "converging": converging})
    return CommandResult(exp.report("div-check", checks, data), rows)


@command("trace-check")
def trace_check(exp: Experiment) -> CommandResult:
    """Contracted trace of each derived stress tensor against its closed form."""
    tol = exp.tolerances
    phi = exp.map()
    L, B = exp.lagrangian_l(phi), exp.lagrangian_b(phi)
    checks, rows = [], []
    for kind in _kinds(exp):
        S = assemble(kind, phi, p=exp.params.p, q=exp.params.q, L=L, B=B, variant="derived")
        contracted = trace(S, phi.geom)
        closed = closed_form_trace(S, phi, L=L, B=B)
        scale = float(np.abs(contracted).max(initial=0.0))
        diff = float(np.abs(contracted - closed).max(initial=0.0))
        rel = diff / scale if scale > 0 else diff
        checks.append(CheckResult.at_most(f"{kind}.trace", rel, tol.trace_rel, h=phi.geom.h, seed=exp.seed))
        rows.append({"kind": kind, "max_abs_diff": diff, "scale": scale, "relative": rel, "h": phi.geom.h})
    return CommandResult(exp.report("trace-check", checks, {"variant": "derived"}), rows)


@command("ibp-check")
def ibp_check(exp: Experiment) -> CommandResult:
    """
    int eta^2 <Hess f, T> + int T(grad f, grad eta^2) + int eta^2 <grad f, div T> = 0
    for ``n_tensors`` seeded random symmetric tensors on the soliton.
    """
    tol = exp.tolerances
    params = exp.params
    c_target = params.c_target if params.c_target is not None else tol.cutoff_constant
    rows: List[Dict[str, object]] = []
    worst: List[float] = []
    total_defect: List[float] = []
    for h in exp.spacings():
        geom = exp.geometry(h)
        S = exp.soliton(h)
        eta = make_cutoff(S, geom, exp.center(geom), params.R, c_target=c_target, metric_balls=params.metric_balls)
        rel_max, defect_sum = 0.0, 0.0
        for i in range(params.n_tensors):
            T = random_symmetric_tensor(geom, exp.seed + i)
            result = liouville_ibp_identity(T, S, eta, geom)
            rel_max = max(rel_max, result.relative_defect)
            defect_sum += abs(result.defect)
            rows.append({
                "h": geom.h, "tensor": i, "seed": exp.seed + i,
                "hessian_term": result.hessian_term, "gradient_term": result.gradient_term,
                "divergence_term": result.divergence_term, "defect": result.defect,
                "relative_defect": result.relative_defect,
            })
        worst.append(rel_max)
        total_defect.append(defect_sum)

    checks = [CheckResult.at_most("ibp.relative_defect", worst[0], tol.ibp_rel, h=exp.h, seed=exp.seed)]
    ladder = ladder_check("ibp.ladder", total_defect, tol.ladder_factor, floor=IBP_LADDER_FLOOR, seed=exp.seed)
    if ladder is not None:
        checks.append(ladder)
    data = {"n_tensors": params.n_tensors, "R": params.R, "worst_relative": worst, "total_defect": total_defect}
    return CommandResult(exp.report("ibp-check", checks, data), rows)
