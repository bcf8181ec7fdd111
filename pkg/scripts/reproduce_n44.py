"""Run the segmentation planner on a Nordic 44 case and compare with the reference plan.

The N44 network data is not bundled.  Convert it to the gridseg case schema
and pass the file as the first argument (or set GRIDSEG_N44_CASE).

Expected outcome: two iterations cutting 5100-6500 and then the 3359-5101
corridor (both parallel circuits), with pivots 6500 and 3359.  Exact N44
eigenvalues are not checked because the reference results come from a
different machine-model stack.  If the two
edge buses come out differently, the printed coherent groups show whether
the difference is a single borderline group member.
"""

from __future__ import annotations

import argparse
import os
import sys

from gridseg.case import Case, load_case
from gridseg.config import load_config
from gridseg.modal import mode_shape
from gridseg.segmenter import SegmentationPlan, analyze, identify_edges, plan_from_mode

ENV_CASE = "GRIDSEG_N44_CASE"
EXPECTED_CUTS = (frozenset({5100, 6500}), frozenset({3359, 5101}))
EXPECTED_PIVOTS = (6500, 3359)


def _as_int(bus):
    try:
        return int(bus)
    except (TypeError, ValueError):
        return bus


def check_plan(plan: SegmentationPlan) -> dict[str, bool]:
    """Named pass/fail checks of a plan against the reference N44 result."""
    cuts = tuple(frozenset({_as_int(c.from_bus), _as_int(c.to_bus)}) for c in plan.cuts)
    return {
        "iterations == 2": plan.iterations == 2,
        "cut corridors 5100-6500, 3359-5101": set(cuts) == set(EXPECTED_CUTS) and len(cuts) == 2,
        "pivots 6500 then 3359": tuple(_as_int(c.pivot) for c in plan.cuts) == EXPECTED_PIVOTS,
    }


def reproduce(case: Case, config=None) -> tuple[SegmentationPlan, dict[str, bool]]:
    an = analyze(case, config)
    mode = an.critical
    shape = mode_shape(mode, an.model)
    edges = identify_edges(shape, dict(zip(an.model.machine_ids, an.model.machine_buses)), config)
    print(f"critical mode: {100 * mode.damping_ratio:.2f}% at {mode.frequency_hz:.3f} Hz")
    print(f"edges: E1={edges.e1} ({edges.ge1})  E2={edges.e2} ({edges.ge2})")
    print(f"group 1: {', '.join(edges.group1)}")
    print(f"group 2: {', '.join(edges.group2)}")
    plan = plan_from_mode(an.case, an.model, mode, config)
    for c in plan.cuts:
        print(f"cut {c.iteration}: {c.branch} ({c.from_bus}-{c.to_bus}, circuits {', '.join(c.circuits)}), pivot {c.pivot}")
    return plan, check_plan(plan)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("case", nargs="?", default=os.environ.get(ENV_CASE), help=f"N44 case file (default: ${ENV_CASE})")
    parser.add_argument("--config", help="JSON run configuration")
    args = parser.parse_args(argv)
    if not args.case:
        parser.error(f"no case given and ${ENV_CASE} is unset")
    _, checks = reproduce(load_case(args.case), load_config(args.config))
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
