"""Map-variation oracles against the assembled tension fields."""

import logging
from typing import Dict, List

from ..energy import Functional, map_variation_derivative, map_variation_formula
from ..schemas import CheckResult, OracleRecord
from ..presets import variation_field
from .base import CommandResult, Experiment, command, ladder_check

logger = logging.getLogger(__name__)

# Below this relative error both rungs sit at the round-off floor.
LADDER_FLOOR = 1e-7


def _functionals(exp: Experiment, phi) -> Dict[str, Functional]:
    p, q = exp.params.p, exp.params.q
    L = exp.lagrangian_l(phi)
    B = exp.lagrangian_b(phi)
    return {
        "E_pq": Functional.energy_pq(p, q),
        "E_L": Functional.energy_L(L),
        "E_B": Functional.energy_B(B, L, exp.params.variant),
    }


@command("variation-check")
def variation_check(exp: Experiment) -> CommandResult:
    """
    d/dt F(phi + t v) by Richardson differences against -int <G, v> for
    E_pq, E_L and E_B, on h and (with ``refine``) on h/2.
    """
    tol = exp.tolerances
    seed = exp.seed
    records: Dict[str, List[OracleRecord]] = {}
    for h in exp.spacings():
        phi = exp.map(h)
        v = variation_field(phi, seed + 1)
        for name, F in _functionals(exp, phi).items():
            estimate = map_variation_derivative(F, phi, v, rel_step=exp.defaults.numerics.richardson_t0)
            formula = map_variation_formula(F, phi, v)
            record = OracleRecord.compare(
                name, estimate.value, formula, phi.geom.h, seed=seed, params=F.params,
                error_bar=estimate.error_bar,
            )
            records.setdefault(name, []).append(record)
            logger.info(
                "Variation oracle",
                extra={"functional": name, "h": record.h, "rel_err": record.rel_err, "seed": seed},
            )

    checks = []
    for name, series in records.items():
        first = series[0]
        checks.append(CheckResult.at_most(
            f"{name}.rel_err", first.rel_err, tol.oracle(first.h), h=first.h, seed=seed,
        ))
        ladder = ladder_check(f"{name}.ladder", [r.rel_err for r in series], tol.ladder_factor,
                              floor=LADDER_FLOOR, seed=seed)
        if ladder is not None:
            checks.append(ladder)

    rows = [record.model_dump(mode="json") for series in records.values() for record in series]
    for row in rows:
        row["params"] = ";".join(f"{k}={v}" for k, v in row["params"].items())
    data = {"records": [r.model_dump(mode="json") for series in records.values() for r in series]}
    return CommandResult(exp.report("variation-check", checks, data), rows)
