"""``gridseg`` command-line interface.

Exit status: 0 on success, 1 on a domain error (for instance a diverging power
flow), 2 when the command line or an input file is unusable.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .case import CaseError, adjacency, load_case
from .config import ENV_VAR, ConfigError, RunConfig, load_config
from .linearizer import LinearizationError
from .modal import EigenError, group_label, mode_shape, observability
from .pathfinder import PathError, find_path
from .powerflow import PowerFlowError
from .segmenter import (
    SegmentationError,
    SegmentationPlan,
    analyze,
    evaluate_plan,
    identify_edges,
    manual_plan,
    plan_from_mode,
)

log = logging.getLogger("gridseg")

DOMAIN_ERRORS = (PowerFlowError, LinearizationError, EigenError, PathError, SegmentationError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        if x == 0:
            return "0"
        return f"{float(x):.9g}"
    return str(x)


class Writer:
    def __init__(self, out_dir: str, command: str, config: RunConfig):
        self.out_dir = Path(out_dir)
        self.command = command
        self.config = config

    def meta(self) -> dict:
        return {"command": self.command, "config": self.config.overrides()}

    def _atomic(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        meta = json.dumps(self.meta(), sort_keys=True)
        lines = [f"# {meta}", ",".join(header)]
        lines.extend(",".join(fmt(v) for v in row) for row in rows)
        return self._atomic(name, "\n".join(lines) + "\n")

    def json(self, name: str, doc: dict) -> Path:
        body = {"meta": self.meta(), **doc}
        return self._atomic(name, json.dumps(body, indent=2, sort_keys=False) + "\n")


def _deg(z: complex) -> float:
    return math.degrees(math.atan2(z.imag, z.real))


def _mode_table(modes) -> list[str]:
    lines = [f"{'mode':>4} {'real':>9} {'imag':>9} {'damp %':>7} {'freq Hz':>8}  oscillation"]
    for k, (m, groups) in enumerate(modes, start=1):
        lam = m.eigenvalue
        lines.append(f"{k:>4} {lam.real:>9.3f} {lam.imag:>9.3f} {100 * m.damping_ratio:>7.2f} {m.frequency_hz:>8.3f}  {groups}")
    return lines


def _labelled(an, modes, cfg: RunConfig):
    kw = dict(magnitude=cfg.shape_magnitude, group_deg=cfg.group_phase_deg, opposing_deg=cfg.opposing_phase_deg)
    return [(m, group_label(mode_shape(m, an.model), **kw)) for m in modes]


# ---------------------------------------------------------------------------
# subcommands


def cmd_pf(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    case, sol = an.case, an.solution
    base = case.system_base_mva
    rows = []
    print(f"{'machine':>8} {'bus':>6} {'P MW':>9} {'Q Mvar':>9} {'V pu':>7} {'theta deg':>10}")
    for m in case.machines:
        s = sol.machine_power[m.id]
        v = sol.voltage(m.bus)
        row = (m.id, m.bus, s.real * base, s.imag * base, abs(v), _deg(v))
        rows.append(row)
        print(f"{m.id:>8} {str(m.bus):>6} {row[2]:>9.2f} {row[3]:>9.2f} {row[4]:>7.4f} {row[5]:>10.2f}")
    out.csv("pf.csv", ["machine", "bus", "p_mw", "q_mvar", "v_pu", "theta_deg"], rows)
    return 0


def cmd_linearize(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    mdl = an.model
    states = list(mdl.state_labels)
    out.csv("A.csv", ["state", *states], ([s, *row] for s, row in zip(states, mdl.A)))
    out.csv("C_v.csv", ["bus", *states], ([b, *row] for b, row in zip(mdl.bus_ids, mdl.C_V)))
    out.csv("C_f.csv", ["bus", *states], ([b, *row] for b, row in zip(mdl.bus_ids, mdl.C_f)))
    out.csv("C_i.csv", ["branch", *states], ([b, *row] for b, row in zip(mdl.branch_ids, mdl.C_I)))
    print(f"{mdl.n_states} states, {len(mdl.bus_ids)} buses, {len(mdl.branch_ids)} branches")
    if mdl.regularized_branches:
        print("regularized (near-zero flow): " + ", ".join(mdl.regularized_branches))
    return 0


def cmd_modes(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    table = _labelled(an, an.em_modes, cfg)
    print("\n".join(_mode_table(table)))
    out.csv(
        "modes.csv",
        ["mode", "real", "imag", "damping_pct", "frequency_hz", "oscillation"],
        (
            [k, m.eigenvalue.real, m.eigenvalue.imag, 100 * m.damping_ratio, m.frequency_hz, g]
            for k, (m, g) in enumerate(table, start=1)
        ),
    )
    return 0


def _pick_mode(an, k: int):
    if not 1 <= k <= len(an.em_modes):
        raise UsageError(f"--mode must lie in 1..{len(an.em_modes)}")
    return an.em_modes[k - 1]


def cmd_shape(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    mode = _pick_mode(an, args.mode)
    shape = mode_shape(mode, an.model)
    obs = observability(mode, an.model, shape)
    hdr = ["id", "magnitude", "phase_deg"]
    out.csv("shape.csv", hdr, ([g, abs(v), _deg(v)] for g, v in zip(shape.machine_ids, shape.values)))
    out.csv("obs_v.csv", hdr, ([b, abs(v), _deg(v)] for b, v in zip(obs.bus_ids, obs.phi_V)))
    out.csv("obs_f.csv", hdr, ([b, abs(v), _deg(v)] for b, v in zip(obs.bus_ids, obs.phi_f)))
    out.csv("obs_i.csv", hdr, ([b, abs(v), _deg(v)] for b, v in zip(obs.branch_ids, obs.phi_I)))
    for g, v in zip(shape.machine_ids, shape.values):
        print(f"{g:>8} {abs(v):8.4f} {_deg(v):8.1f}")
    return 0


def cmd_path(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    mode = _pick_mode(an, args.mode)
    shape = mode_shape(mode, an.model)
    obs = observability(mode, an.model, shape)
    edges = identify_edges(shape, dict(zip(an.model.machine_ids, an.model.machine_buses)), cfg)
    phi_f, phi_I = obs.phi_f_map(), obs.phi_I_map()
    path = find_path(
        adjacency(an.case), phi_f, phi_I, edges.e1, edges.e2, tie_tol=cfg.tie_tol, opposing_deg=cfg.opposing_phase_deg
    )

    def role(b):
        tags = [t for t, hit in (("E1", b == path.e1), ("PB", b == path.pivot), ("A", b == path.ascent_start), ("E2", b == path.e2)) if hit]
        return "+".join(tags)

    out.csv(
        "path.csv",
        ["bus", "phi_f_magnitude", "phi_f_phase_deg", "role"],
        ([b, abs(phi_f[b]), _deg(phi_f[b]), role(b)] for b in path.buses),
    )
    out.csv(
        "path_branches.csv",
        ["branch", "phi_i_magnitude", "phi_i_phase_deg"],
        ([br, abs(phi_I[br]), _deg(phi_I[br])] for br in path.branches),
    )
    print("path: " + "-".join(str(b) for b in path.buses))
    print(f"pivot: {path.pivot}  ascent: {path.ascent_start}  backtracks: {path.backtracks}")
    return 0


def cmd_segment(args, cfg: RunConfig, out: Writer) -> int:
    an = analyze(load_case(args.case), cfg)
    plan = plan_from_mode(an.case, an.model, an.critical, cfg)
    for c in plan.cuts:
        print(f"cut: {c.branch}  (iteration {c.iteration}, pivot {c.pivot}, {c.rating_mva:g} MVA)")
    print(f"iterations: {plan.iterations}")
    for k, isl in enumerate(plan.islands, start=1):
        print(f"island {k}: " + " ".join(str(b) for b in isl))
    out.json("plan.json", plan.to_dict())
    return 0


def cmd_evaluate(args, cfg: RunConfig, out: Writer) -> int:
    case = load_case(args.case)
    if args.plan:
        doc = json.loads(Path(args.plan).read_text())
        plan = SegmentationPlan.from_dict(doc)
    elif args.cut:
        try:
            plan = manual_plan(case, args.cut)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
    else:
        raise UsageError("evaluate needs --plan or --cut")
    rep = evaluate_plan(case, plan, cfg)
    print("before:")
    print("\n".join(_mode_table((m, "") for m in rep.base_modes)))
    print("after (cuts: " + ", ".join(plan.cut_ids) + "):")
    print("\n".join(_mode_table((m, "") for m in rep.modes)))
    print(f"target {100 * rep.target_damping:.2f}% at {rep.target_frequency_hz:.3f} Hz: {rep.verdict}")
    rows = [
        [stage, k, m.eigenvalue.real, m.eigenvalue.imag, 100 * m.damping_ratio, m.frequency_hz, rep.verdict]
        for stage, modes in (("before", rep.base_modes), ("after", rep.modes))
        for k, m in enumerate(modes, start=1)
    ]
    out.csv("eval.csv", ["stage", "mode", "real", "imag", "damping_pct", "frequency_hz", "verdict"], rows)
    return 0


COMMANDS = {
    "pf": (cmd_pf, "solve the power flow"),
    "linearize": (cmd_linearize, "write the state-space matrices"),
    "modes": (cmd_modes, "list electromechanical modes"),
    "shape": (cmd_shape, "mode shape and observability factors"),
    "path": (cmd_path, "trace the inter-area oscillation path"),
    "segment": (cmd_segment, "plan the DC segmentation"),
    "evaluate": (cmd_evaluate, "modes after applying a plan"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("case", help="case file (JSON)")
        p.add_argument("--out", help="output directory (default: config out_dir)")
        p.add_argument("--config", help=f"JSON config file (default: ${ENV_VAR})")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name in ("shape", "path"):
            p.add_argument("--mode", type=int, default=1, help="electromechanical mode number (1 = least damped)")
        if name == "evaluate":
            p.add_argument("--plan", help="plan.json from `gridseg segment`")
            p.add_argument("--cut", action="append", help="branch id to cut (repeatable)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg = cfg.with_overrides({"out_dir": args.out})
        if args.verbose:
            cfg = cfg.with_overrides({"verbosity": args.verbose})
        logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity, 2), format="%(levelname)s %(name)s: %(message)s")
        func = COMMANDS[args.command][0]
        return func(args, cfg, Writer(cfg.out_dir, args.command, cfg))
    except FileNotFoundError as exc:
        print(f"gridseg: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (CaseError, ConfigError, UsageError, json.JSONDecodeError) as exc:
        print(f"gridseg: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(f"gridseg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
