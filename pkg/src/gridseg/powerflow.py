"""Newton-Raphson AC power flow in polar coordinates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .case import BusId, BusKind, Case, id_key, islands

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    pass


class DivergenceError(PowerFlowError):
    def __init__(self, iterations: int, residual: float, bus: BusId):
        self.iterations = iterations
        self.residual = residual
        self.bus = bus
        super().__init__(
            f"power flow did not converge in {iterations} iterations "
            f"(max mismatch {residual:.3e} pu at bus {bus!r})"
        )


class SingularJacobianError(PowerFlowError):
    def __init__(self, iteration: int, bus: BusId):
        self.iteration = iteration
        self.bus = bus
        super().__init__(f"singular power-flow Jacobian at iteration {iteration} (worst bus {bus!r})")


class UnservableIslandError(PowerFlowError):
    def __init__(self, island: Sequence[BusId]):
        self.island = list(island)
        super().__init__(f"unservable island without machines: {self.island}")


@dataclass(frozen=True)
class BranchFlow:
    branch: str
    from_bus: BusId
    to_bus: BusId
    s_from: complex
    s_to: complex
    i_from: complex
    i_to: complex

    @property
    def losses(self) -> complex:
        return self.s_from + self.s_to


@dataclass(frozen=True)
class PowerFlowSolution:
    bus_ids: tuple
    v: np.ndarray  # complex bus voltages
    s_injection: np.ndarray  # net complex injection per bus
    flows: tuple[BranchFlow, ...]
    machine_power: dict  # machine id -> complex output
    iterations: int
    max_residual: float
    residual_history: tuple[float, ...]

    @property
    def vm(self) -> np.ndarray:
        return np.abs(self.v)

    @property
    def va(self) -> np.ndarray:
        return np.angle(self.v)

    @property
    def p(self) -> np.ndarray:
        return self.s_injection.real

    @property
    def q(self) -> np.ndarray:
        return self.s_injection.imag

    def voltage(self, bus: BusId) -> complex:
        return complex(self.v[self.bus_ids.index(bus)])

    def flow(self, branch: str) -> BranchFlow:
        for fl in self.flows:
            if fl.branch == branch:
                return fl
        raise KeyError(branch)


def build_ybus(case: Case, include_loads: bool = False, v: np.ndarray | None = None) -> np.ndarray:
    """Dense bus admittance matrix.

    With ``include_loads`` the loads are added as constant admittances
    evaluated at voltage magnitudes ``v`` (nominal if omitted).
    """
    idx = case.bus_index()
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        yff, yft, ytf, ytt = br.admittances()
        y[i, i] += yff
        y[i, j] += yft
        y[j, i] += ytf
        y[j, j] += ytt
    if include_loads:
        for ld in case.loads:
            i = idx[ld.bus]
            vm = 1.0 if v is None else abs(v[i])
            y[i, i] += complex(ld.p, -ld.q) / vm**2
    return y


def scheduled_injections(case: Case) -> np.ndarray:
    """Complex scheduled injection per bus (loads at constant power)."""
    idx = case.bus_index()
    s = np.array([complex(b.p_set, b.q_set) for b in case.buses])
    for ld in case.loads:
        s[idx[ld.bus]] -= complex(ld.p, ld.q)
    for inj in case.injections:
        s[idx[inj.bus]] += complex(inj.p, inj.q)
    return s


def assign_slacks(case: Case, partition: Sequence[Sequence[BusId]] | None = None) -> dict[int, BusId]:
    """Pick one slack bus per island: largest machine rating, lowest id on ties.

    Returns ``{island index: bus id}``.
    """
    if partition is None:
        partition = islands(case)
    rating: dict[BusId, float] = {}
    for m in case.machines:
        rating[m.bus] = rating.get(m.bus, 0.0) + m.rating_mva
    out = {}
    for k, island in enumerate(partition):
        candidates = [b for b in island if b in rating]
        if not candidates:
            raise UnservableIslandError(island)
        out[k] = min(candidates, key=lambda b: (-rating[b], id_key(b)))
    return out


def with_slacks(case: Case, partition: Sequence[Sequence[BusId]] | None = None) -> Case:
    """Copy of ``case`` whose bus kinds follow :func:`assign_slacks`.

    The chosen slack keeps (or adopts) its voltage setpoint; any other former
    slack bus hosting a machine becomes PV.
    """
    slacks = set(assign_slacks(case, partition).values())
    machine_buses = {m.bus for m in case.machines}
    buses = []
    for b in case.buses:
        if b.id in slacks:
            kind = BusKind.SLACK
        elif b.kind == BusKind.SLACK:
            kind = BusKind.PV if b.id in machine_buses else BusKind.PQ
        else:
            kind = b.kind
        v = b.v_setpoint if b.v_setpoint is not None else 1.0
        buses.append(replace(b, kind=kind, v_setpoint=v if kind != BusKind.PQ else b.v_setpoint))
    return replace(case, buses=tuple(buses))


def _check_slacks(case: Case) -> list[int]:
    idx = case.bus_index()
    slack = []
    for island in islands(case):
        s = [b for b in island if case.buses[idx[b]].kind == BusKind.SLACK]
        if len(s) != 1:
            raise PowerFlowError(
                f"island {island} has {len(s)} slack buses; exactly one required (see assign_slacks)"
            )
        slack.append(idx[s[0]])
    return slack


def solve_power_flow(
    case: Case,
    tol: float = 1e-8,
    max_iter: int = 30,
    initial: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Solve the AC power flow from a flat start (or from ``initial``)."""
    slack = _check_slacks(case)
    n = len(case.buses)
    kinds = [b.kind for b in case.buses]
    pv = [i for i in range(n) if kinds[i] == BusKind.PV]
    pq = [i for i in range(n) if kinds[i] == BusKind.PQ]
    pvpq = sorted(pv + pq)
    ybus = build_ybus(case)
    s_sched = scheduled_injections(case)

    if initial is None:
        vm = np.ones(n)
        va = np.zeros(n)
    else:
        vm = np.abs(initial).astype(float)
        va = np.angle(initial)
    for i, b in enumerate(case.buses):
        if kinds[i] != BusKind.PQ:
            vm[i] = b.v_setpoint
        if kinds[i] == BusKind.SLACK and initial is None:
            va[i] = 0.0

    history: list[float] = []
    it = 0
    while True:
        v = vm * np.exp(1j * va)
        ibus = ybus @ v
        mis = v * np.conj(ibus) - s_sched
        f = np.r_[mis.real[pvpq], mis.imag[pq]]
        worst = float(np.max(np.abs(f))) if f.size else 0.0
        history.append(worst)
        if worst <= tol:
            break
        if it >= max_iter:
            k = int(np.argmax(np.abs(f)))
            bus = case.buses[(pvpq + pq)[k]].id
            raise DivergenceError(it, worst, bus)
        it += 1
        diag_v = np.diag(v)
        vnorm = v / np.abs(v)
        ds_dva = 1j * diag_v @ np.conj(np.diag(ibus) - ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(ybus @ np.diag(vnorm)) + np.conj(np.diag(ibus)) @ np.diag(vnorm)
        jac = np.block(
            [
                [ds_dva.real[np.ix_(pvpq, pvpq)], ds_dvm.real[np.ix_(pvpq, pq)]],
                [ds_dva.imag[np.ix_(pq, pvpq)], ds_dvm.imag[np.ix_(pq, pq)]],
            ]
        )
        try:
            if np.linalg.cond(jac) > 1e14:
                raise np.linalg.LinAlgError
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            k = int(np.argmax(np.abs(f)))
            raise SingularJacobianError(it, case.buses[(pvpq + pq)[k]].id) from None
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq) :]
        log.debug("pf iteration %d: max mismatch %.3e", it, worst)

    v = vm * np.exp(1j * va)
    s_inj = v * np.conj(ybus @ v)
    sol = PowerFlowSolution(
        bus_ids=tuple(case.bus_ids),
        v=v,
        s_injection=s_inj,
        flows=(),
        machine_power={},
        iterations=it,
        max_residual=history[-1],
        residual_history=tuple(history),
    )
    return replace(sol, flows=tuple(branch_flows(case, sol)), machine_power=_machine_power(case, sol))


def branch_flows(case: Case, sol: PowerFlowSolution) -> list[BranchFlow]:
    """Sending/receiving power and current of every branch (pi model)."""
    idx = case.bus_index()
    out = []
    for br in case.branches:
        vf, vt = sol.v[idx[br.from_bus]], sol.v[idx[br.to_bus]]
        yff, yft, ytf, ytt = br.admittances()
        i_f = yff * vf + yft * vt
        i_t = ytf * vf + ytt * vt
        out.append(
            BranchFlow(
                branch=br.id,
                from_bus=br.from_bus,
                to_bus=br.to_bus,
                s_from=complex(vf * np.conj(i_f)),
                s_to=complex(vt * np.conj(i_t)),
                i_from=complex(i_f),
                i_to=complex(i_t),
            )
        )
    return out


def _machine_power(case: Case, sol: PowerFlowSolution) -> dict:
    idx = case.bus_index()
    static = np.zeros(len(case.buses), dtype=complex)
    for ld in case.loads:
        static[idx[ld.bus]] += complex(ld.p, ld.q)
    for inj in case.injections:
        static[idx[inj.bus]] -= complex(inj.p, inj.q)
    return {m.id: complex(sol.s_injection[idx[m.bus]] + static[idx[m.bus]]) for m in case.machines}


def static_injections(case: Case, sol: PowerFlowSolution) -> np.ndarray:
    """Constant-power injection held at each bus during dynamics.

    Buses without a machine keep whatever net power (beyond their loads)
    the power flow gave them; machine buses keep only explicit injections.
    """
    idx = case.bus_index()
    machine_buses = {m.bus for m in case.machines}
    s = np.zeros(len(case.buses), dtype=complex)
    for i, bus in enumerate(case.buses):
        if bus.id not in machine_buses:
            s[i] = sol.s_injection[i]
    for ld in case.loads:
        i = idx[ld.bus]
        if ld.bus not in machine_buses:
            s[i] += complex(ld.p, ld.q)
    for inj in case.injections:
        if inj.bus in machine_buses:
            s[idx[inj.bus]] += complex(inj.p, inj.q)
    return s
