"""Regenerate the DC-segmented variants of test system 1.

Each variant removes one corridor branch and replaces it with a pair of
constant active-power injections taken from the intact-grid power flow
(reactive injections zero).  Slack buses are reassigned per island.
"""

from pathlib import Path

from gridseg.case import load_case, serialize_case
from gridseg.powerflow import solve_power_flow
from gridseg.segmenter import segmented_case

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "gridseg" / "fixtures"
VARIANTS = {"ts1_dcseg1.json": "35-40", "ts1_dcseg2.json": "40-50"}


def main() -> None:
    base = load_case(FIXTURES / "ts1.json")
    sol = solve_power_flow(base)
    for name, branch in VARIANTS.items():
        case = segmented_case(base, sol, [branch])
        (FIXTURES / name).write_text(serialize_case(case))
        print(f"wrote {name} (cut {branch})")


if __name__ == "__main__":
    main()
