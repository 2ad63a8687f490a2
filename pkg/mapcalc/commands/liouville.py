"""The Liouville integral ledger and the boundary-term decay probe."""

import logging
from typing import Dict, List

from ..liouville import decay_estimate_probe, liouville_ledger
from ..schemas import CheckResult
from ..soliton import make_cutoff
from .base import CommandResult, Experiment, command, ladder_check

logger = logging.getLogger(__name__)

# Blocks whose balance is asserted; "printed" is reported only.
ASSERTED_BLOCKS = ("ibp", "trace", "ricci", "gradient", "identity")
LADDER_FLOOR = 1e-10


@command("liouville-ledger")
def ledger(exp: Experiment) -> CommandResult:
    tol = exp.tolerances
    params = exp.params
    c_target = params.c_target if params.c_target is not None else tol.cutoff_constant
    results = []
    for h in exp.spacings():
        phi = exp.map(h)
        S = exp.soliton(h)
        eta = make_cutoff(S, phi.geom, exp.center(phi.geom), params.R, c_target=c_target,
                          metric_balls=params.metric_balls)
        results.append(liouville_ledger(phi, params.p, S, eta, params.variant))

    first = results[0]
    checks = [
        CheckResult.at_most(f"{name}.relative_defect", first.block(name).relative_defect, tol.ledger_rel,
                            h=exp.h, seed=exp.seed)
        for name in ASSERTED_BLOCKS
    ]
    ladder = ladder_check("identity.ladder", [abs(r.block("identity").defect) for r in results],
                          tol.ladder_factor, floor=LADDER_FLOOR, seed=exp.seed)
    if ladder is not None:
        checks.append(ladder)

    rows: List[Dict[str, object]] = [entry.model_dump(mode="json") for r in results for entry in r.entries]
    data = {
        "p": params.p,
        "R": params.R,
        "variant": params.variant,
        "blocks": {
            name: {"direct": b.direct, "expanded": b.expanded, "defect": b.defect,
                   "relative_defect": b.relative_defect}
            for name, b in first.blocks.items()
        },
        "printed_discrepancy": first.block("printed").relative_defect,
        "sign_min": first.sign_min,
        "sign_max": first.sign_max,
    }
    return CommandResult(exp.report("liouville-ledger", checks, data), rows)


@command("decay-probe")
def decay_probe(exp: Experiment) -> CommandResult:
    """Fitted decay exponent of each boundary integral over the R ladder."""
    tol = exp.tolerances
    params = exp.params
    phi = exp.map()
    S = exp.soliton()
    result = decay_estimate_probe(phi, params.p, S, params.R_ladder, x0=exp.center(phi.geom),
                                  metric_balls=params.metric_balls)
    checks = []
    for name, fit in result["fits"].items():
        required = tol.decay_exponent_laplacian if name == "laplacian" else tol.decay_exponent
        if fit["vanishes"]:
            checks.append(CheckResult(name=f"{name}.decay", value=0.0, tolerance=required, passed=True,
                                      h=phi.geom.h, seed=exp.seed, detail="vanishes identically"))
        elif fit["exponent"] is None:
            checks.append(CheckResult(name=f"{name}.decay", value=None, tolerance=required, passed=False,
                                      h=phi.geom.h, seed=exp.seed, detail="fewer than two non-zero rungs"))
        else:
            checks.append(CheckResult.at_least(f"{name}.decay", fit["exponent"], required,
                                               h=phi.geom.h, seed=exp.seed))
    data = {"p": params.p, "R_ladder": list(params.R_ladder), "fits": result["fits"]}
    return CommandResult(exp.report("decay-probe", checks, data), result["rows"])
