"""DC segmentation planning and evaluation of the segmented grid.

The planner analyses the intact grid once (power flow up to eigenanalysis), then repeatedly traces the oscillation path between the two
edge buses and cuts the path branch at the pivot bus with the strongest
branch-current footprint, until the edges sit in different AC islands.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .case import BusId, BusKind, Case, Injection, adjacency, id_key, islands, normalize
from .config import RunConfig
from .linearizer import StateSpaceModel, build_linear_model
from .modal import (
    Mode,
    ModeShape,
    ObservabilityFactors,
    coherent_groups,
    critical_mode,
    eigen_analysis,
    electromechanical_filter,
    mode_shape,
    observability,
)
from .pathfinder import OscillationPath, connected, find_path
from .powerflow import PowerFlowSolution, solve_power_flow, with_slacks

log = logging.getLogger(__name__)


class SegmentationError(RuntimeError):
    pass


class NoOpposingGroupError(SegmentationError):
    """The mode shape has no machine in antiphase with the dominant one."""


class IterationCapError(SegmentationError):
    pass


@dataclass(frozen=True)
class EdgeReport:
    e1: BusId
    e2: BusId
    ge1: str
    ge2: str
    group1: tuple[str, ...]
    group2: tuple[str, ...]


@dataclass(frozen=True)
class Cut:
    branch: str
    iteration: int
    from_bus: BusId
    to_bus: BusId
    circuits: tuple[str, ...]
    rating_mva: float
    pivot: BusId
    path: tuple[BusId, ...]


@dataclass(frozen=True)
class SegmentationPlan:
    cuts: tuple[Cut, ...]
    islands: tuple[tuple[BusId, ...], ...]
    iterations: int
    e1: BusId | None = None
    e2: BusId | None = None
    critical_damping: float | None = None
    critical_frequency_hz: float | None = None
    paths: tuple[OscillationPath, ...] = field(default=(), compare=False)

    @property
    def cut_ids(self) -> tuple[str, ...]:
        return tuple(c.branch for c in self.cuts)

    def to_dict(self) -> dict:
        return {
            "e1": self.e1,
            "e2": self.e2,
            "iterations": self.iterations,
            "critical_mode": {"damping_ratio": self.critical_damping, "frequency_hz": self.critical_frequency_hz},
            "cuts": [
                {
                    "branch": c.branch,
                    "iteration": c.iteration,
                    "from_bus": c.from_bus,
                    "to_bus": c.to_bus,
                    "circuits": list(c.circuits),
                    "rating_mva": c.rating_mva,
                    "pivot": c.pivot,
                    "path": list(c.path),
                }
                for c in self.cuts
            ],
            "islands": [list(isl) for isl in self.islands],
            "paths": [
                {
                    "buses": list(p.buses),
                    "branches": list(p.branches),
                    "pivot": p.pivot,
                    "ascent_start": p.ascent_start,
                    "log": [[ev.branch, ev.reason, ev.bus] for ev in p.log],
                }
                for p in self.paths
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SegmentationPlan":
        cm = doc.get("critical_mode") or {}
        cuts = tuple(
            Cut(
                branch=str(c["branch"]),
                iteration=int(c.get("iteration", k + 1)),
                from_bus=c.get("from_bus"),
                to_bus=c.get("to_bus"),
                circuits=tuple(c.get("circuits", (c["branch"],))),
                rating_mva=float(c.get("rating_mva", 0.0)),
                pivot=c.get("pivot"),
                path=tuple(c.get("path", ())),
            )
            for k, c in enumerate(doc.get("cuts", []))
        )
        return cls(
            cuts=cuts,
            islands=tuple(tuple(i) for i in doc.get("islands", [])),
            iterations=int(doc.get("iterations", len(cuts))),
            e1=doc.get("e1"),
            e2=doc.get("e2"),
            critical_damping=cm.get("damping_ratio"),
            critical_frequency_hz=cm.get("frequency_hz"),
        )


@dataclass(frozen=True)
class Analysis:
    """Result of the one-off small-signal analysis of a case."""

    case: Case
    solution: PowerFlowSolution
    model: StateSpaceModel
    modes: tuple[Mode, ...]
    em_modes: tuple[Mode, ...]

    @property
    def critical(self) -> Mode:
        return critical_mode(self.em_modes)


def prepare_case(case: Case) -> Case:
    """Normalize and make sure every island has exactly one slack bus."""
    case = normalize(case)
    parts = islands(case)
    kinds = {b.id: b.kind for b in case.buses}
    if all(sum(kinds[b] == BusKind.SLACK for b in isl) == 1 for isl in parts):
        return case
    return with_slacks(case, parts)


def analyze(case: Case, config: RunConfig | None = None) -> Analysis:
    cfg = config or RunConfig()
    case = prepare_case(case)
    sol = solve_power_flow(case, tol=cfg.pf_tol, max_iter=cfg.pf_max_iter)
    model = build_linear_model(case, sol, zero_flow_eps=cfg.zero_flow_eps)
    modes = eigen_analysis(model, residual_tol=cfg.eig_residual_tol)
    em = electromechanical_filter(
        modes,
        model,
        freq_band=(cfg.em_freq_min_hz, cfg.em_freq_max_hz),
        min_abs_lambda=cfg.em_min_abs_lambda,
        speed_share=cfg.em_speed_participation,
    )
    return Analysis(case=case, solution=sol, model=model, modes=tuple(modes), em_modes=tuple(em))


def identify_edges(shape: ModeShape, machine_bus: dict, config: RunConfig | None = None) -> EdgeReport:
    cfg = config or RunConfig()
    ge1, g1, ge2, g2 = coherent_groups(
        shape, magnitude=cfg.shape_magnitude, group_deg=cfg.group_phase_deg, opposing_deg=cfg.opposing_phase_deg
    )
    if ge2 is None:
        raise NoOpposingGroupError(f"no machine oscillates against {ge1} (mode is not inter-area)")
    return EdgeReport(e1=machine_bus[ge1], e2=machine_bus[ge2], ge1=ge1, ge2=ge2, group1=g1, group2=g2)


def select_cut(path: OscillationPath, phi_I: dict) -> str:
    """Path branch at the pivot with the largest |phi_I| (lowest id on ties)."""
    candidates = path.pivot_branches()
    if not candidates:
        raise SegmentationError("path has no branches")
    return min(candidates, key=lambda b: (-abs(phi_I[b]), id_key(b)))


def is_segmented(case_or_adj, cuts: Iterable[str], e1: BusId, e2: BusId) -> bool:
    adj = adjacency(case_or_adj) if isinstance(case_or_adj, Case) else case_or_adj
    return not connected(adj, e1, e2, cuts)


def plan_from_mode(case: Case, model: StateSpaceModel, mode: Mode, config: RunConfig | None = None) -> SegmentationPlan:
    """Run the cut loop for a given (already analysed) mode."""
    cfg = config or RunConfig()
    shape = mode_shape(mode, model)
    obs: ObservabilityFactors = observability(mode, model, shape)
    edges = identify_edges(shape, dict(zip(model.machine_ids, model.machine_buses)), cfg)
    phi_f = obs.phi_f_map()
    phi_I = obs.phi_I_map()
    adj = adjacency(case)
    cap = len(case.branches)
    cuts: list[Cut] = []
    paths: list[OscillationPath] = []
    cut_ids: list[str] = []
    while not is_segmented(adj, cut_ids, edges.e1, edges.e2):
        if len(cuts) >= cap:
            raise IterationCapError(f"no split after {cap} iterations")
        path = find_path(
            adj, phi_f, phi_I, edges.e1, edges.e2, pre_excluded=cut_ids,
            tie_tol=cfg.tie_tol, opposing_deg=cfg.opposing_phase_deg,
        )
        chosen = select_cut(path, phi_I)
        br = case.branch(chosen)
        cut = Cut(
            branch=chosen,
            iteration=len(cuts) + 1,
            from_bus=br.from_bus,
            to_bus=br.to_bus,
            circuits=case.original_circuits(chosen),
            rating_mva=br.rating_mva,
            pivot=path.pivot,
            path=path.buses,
        )
        log.info("iteration %d: path %s, pivot %s, cut %s", cut.iteration, path.buses, path.pivot, chosen)
        cuts.append(cut)
        paths.append(path)
        cut_ids.append(chosen)
    return SegmentationPlan(
        cuts=tuple(cuts),
        islands=tuple(tuple(isl) for isl in islands(case, cut_ids)),
        iterations=len(cuts),
        e1=edges.e1,
        e2=edges.e2,
        critical_damping=mode.damping_ratio,
        critical_frequency_hz=mode.frequency_hz,
        paths=tuple(paths),
    )


def run_segmentation(case: Case, config: RunConfig | None = None) -> SegmentationPlan:
    an = analyze(case, config)
    return plan_from_mode(an.case, an.model, an.critical, config)


def manual_plan(case: Case, cut_ids: Sequence[str]) -> SegmentationPlan:
    """Plan consisting of user-chosen cuts (no path provenance)."""
    case = normalize(case)
    lookup = {}
    for br in case.branches:
        for orig in case.original_circuits(br.id):
            lookup[orig] = br.id
    cuts = []
    for k, cid in enumerate(cut_ids):
        if cid not in lookup:
            raise KeyError(f"unknown branch {cid!r}")
        br = case.branch(lookup[cid])
        cuts.append(
            Cut(br.id, k + 1, br.from_bus, br.to_bus, case.original_circuits(br.id), br.rating_mva, None, ())
        )
    ids = [c.branch for c in cuts]
    return SegmentationPlan(cuts=tuple(cuts), islands=tuple(tuple(i) for i in islands(case, ids)), iterations=len(cuts))


def segmented_case(case: Case, sol: PowerFlowSolution, cut_ids: Sequence[str]) -> Case:
    """Replace each cut branch by converter injections carrying its base-case active power.

    Reactive injections are zero.  Slack buses are reassigned per island.
    """
    cut_set = set(cut_ids)
    injections = list(case.injections)
    for br in case.branches:
        if br.id in cut_set:
            fl = sol.flow(br.id)
            injections.append(Injection(bus=br.from_bus, p=-fl.s_from.real, q=0.0, link=br.id))
            injections.append(Injection(bus=br.to_bus, p=-fl.s_to.real, q=0.0, link=br.id))
    reduced = replace(
        case,
        branches=tuple(br for br in case.branches if br.id not in cut_set),
        injections=tuple(injections),
    )
    return with_slacks(reduced)


@dataclass(frozen=True)
class EvaluationReport:
    base_modes: tuple[Mode, ...]
    modes: tuple[Mode, ...]
    target_damping: float
    target_frequency_hz: float
    suppressed: bool
    islands: tuple[tuple[BusId, ...], ...]
    case: Case = field(compare=False, repr=False)

    @property
    def verdict(self) -> str:
        return "suppressed" if self.suppressed else "not suppressed"


def evaluate_plan(case: Case, plan: SegmentationPlan | Sequence[str], config: RunConfig | None = None) -> EvaluationReport:
    cfg = config or RunConfig()
    base = analyze(case, cfg)
    target = base.critical
    cut_ids = list(plan.cut_ids if isinstance(plan, SegmentationPlan) else plan)
    if cut_ids:
        seg = segmented_case(base.case, base.solution, cut_ids)
        after = analyze(seg, cfg)
    else:
        seg, after = base.case, base
    residual = [
        m
        for m in after.em_modes
        if abs(m.frequency_hz - target.frequency_hz) <= cfg.suppression_window_hz
        and m.damping_ratio < cfg.suppression_damping
    ]
    return EvaluationReport(
        base_modes=base.em_modes,
        modes=after.em_modes,
        target_damping=target.damping_ratio,
        target_frequency_hz=target.frequency_hz,
        suppressed=not residual,
        islands=tuple(tuple(i) for i in islands(seg)),
        case=seg,
    )


def cut_flows(sol: PowerFlowSolution, cut_ids: Sequence[str]) -> dict[str, tuple[complex, complex]]:
    return {c: (sol.flow(c).s_from, sol.flow(c).s_to) for c in cut_ids}

