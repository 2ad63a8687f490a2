"""Curvature dumps of the source geometry."""

import logging

import numpy as np

from ..geometry import derivative_consistency, scalar_curvature
from ..schemas import CheckResult
from ..soliton import two_dimensional_defect
from .base import CommandResult, Experiment, command

logger = logging.getLogger(__name__)

CIGAR_SCALAR_AT_ORIGIN = 4.0


@command("curvature")
def curvature(exp: Experiment) -> CommandResult:
    """
    Scalar curvature at every node. Flat presets must give Scal = 0, the
    cigar Scal(0) = 4, and every surface 2 Ric = Scal g.
    """
    geom = exp.geometry()
    M = geom.manifold
    tol = exp.tolerances
    scal = geom.scalar_curvature
    checks = []
    h = geom.h

    if np.allclose(geom.dg, 0.0):
        checks.append(CheckResult.at_most("flat_scalar", float(np.abs(scal).max()), tol.flat_scalar, h=h))
    if exp.config.manifold.preset == "cigar":
        origin = scalar_curvature(M, np.zeros(2))
        checks.append(CheckResult.at_most(
            "scal_origin", abs(origin - CIGAR_SCALAR_AT_ORIGIN), tol.scal_origin, h=h,
            detail=f"Scal(0) = {origin:.12g}",
        ))
    if geom.dim == 2:
        checks.append(CheckResult.at_most("two_d_identity", two_dimensional_defect(geom), tol.two_d_identity, h=h))

    consistency = derivative_consistency(M, seed=exp.seed) if M.analytic else None

    points = geom.points.reshape(-1, geom.dim)
    rows = [
        {**{f"x{i}": float(x[i]) for i in range(geom.dim)}, "scal": float(s)}
        for x, s in zip(points, scal.ravel())
    ]
    data = {
        "manifold": M.name,
        "h": h,
        "shape": list(geom.shape),
        "scal_min": float(scal.min()),
        "scal_max": float(scal.max()),
        "derivative_consistency": consistency,
    }
    logger.info("Curvature computed", extra={"manifold": M.name, "scal_max": data["scal_max"]})
    return CommandResult(exp.report("curvature", checks, data), rows)
