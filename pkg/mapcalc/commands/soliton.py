"""Soliton certification, the Hamilton identity and the curvature-decay probe."""

import logging

import numpy as np

from ..exceptions import CertificationError
from ..geometry import scalar_curvature
from ..schemas import CheckResult
from ..soliton import certify, hamilton_identity, shi_decay_probe, soliton_residual
from .base import CommandResult, Experiment, command
from .geometry import CIGAR_SCALAR_AT_ORIGIN

logger = logging.getLogger(__name__)


def _node_rows(geom, **fields):
    points = geom.points.reshape(-1, geom.dim)
    flat = {name: np.asarray(values).ravel() for name, values in fields.items()}
    return [
        {**{f"x{i}": float(x[i]) for i in range(geom.dim)}, **{k: float(v[n]) for k, v in flat.items()}}
        for n, x in enumerate(points)
    ]


@command("verify-soliton")
def verify_soliton(exp: Experiment) -> CommandResult:
    geom = exp.geometry()
    S = exp.soliton()
    tol = exp.tolerances
    residual = soliton_residual(S, geom)
    worst = float(residual.max())
    checks = [CheckResult.at_most("soliton_residual", worst, tol.soliton_residual, h=geom.h,
                                  detail=f"{S.name}, lambda = {S.lam}")]
    if S.name == "cigar":
        origin = scalar_curvature(S.manifold, np.zeros(2))
        checks.append(CheckResult.at_most("scal_origin", abs(origin - CIGAR_SCALAR_AT_ORIGIN),
                                          tol.scal_origin, h=geom.h))
    data = {"soliton": S.name, "lam": S.lam, "steady": S.steady, "analytic": S.analytic,
            "residual_max": worst, "h": geom.h}
    return CommandResult(exp.report("verify-soliton", checks, data), _node_rows(geom, residual=residual))


@command("hamilton")
def hamilton(exp: Experiment) -> CommandResult:
    """Scal + |grad f|^2 - 2 lambda f must be constant on a certified soliton."""
    geom = exp.geometry()
    tol = exp.tolerances
    try:
        S = certify(exp.soliton(), geom, tol.soliton_residual)
    except CertificationError as e:
        check = CheckResult.at_most("soliton_residual", e.residual, e.threshold, h=geom.h,
                                    detail="soliton not certified; Hamilton identity not evaluated")
        return CommandResult(exp.report("hamilton", [check], {"certified": False}))
    field, defect = hamilton_identity(S, geom)
    valid = S.valid_mask(geom)
    constant = float(np.mean(field[valid]))
    checks = [CheckResult.at_most("hamilton_defect", defect, tol.hamilton_defect, h=geom.h,
                                  detail=f"constant = {constant:.12g}")]
    data = {"soliton": S.name, "certified": True, "constant": constant, "defect": defect, "h": geom.h}
    return CommandResult(exp.report("hamilton", checks, data), _node_rows(geom, hamilton=field))


@command("shi-probe")
def shi_probe(exp: Experiment) -> CommandResult:
    """Whether R sup |grad Scal| stays bounded over the annuli of the R ladder."""
    S = exp.soliton()
    tol = exp.tolerances
    x0 = exp.params.x0 if exp.params.x0 is not None else [0.0] * S.manifold.dim
    result = shi_decay_probe(S, x0, exp.params.R_ladder, h=exp.h, growth_factor=tol.shi_growth_factor)
    rows = result["rows"]
    largest = max(row["R_sup_annulus"] for row in rows)
    first = max(rows[0]["R_sup_annulus"], 1e-300)
    checks = [CheckResult(
        name="shi_bounded", value=largest / first, tolerance=tol.shi_growth_factor,
        passed=bool(result["bounded"]), h=result["h"],
        detail="largest R sup|grad Scal| over annuli relative to the first rung",
    )]
    data = {"soliton": S.name, "bounded": result["bounded"], "ball_bounded": result["ball_bounded"],
            "R_ladder": list(exp.params.R_ladder), "h": result["h"]}
    return CommandResult(exp.report("shi-probe", checks, data), rows)
