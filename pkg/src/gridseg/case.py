"""Grid data model and JSON case files, plus pre-analysis normalization.

All network quantities held by a :class:`Case` are per unit on the system
MVA base.  Machine parameters stay on their own rating base, exactly as
manufacturers quote them; :func:`machine_on_system_base` performs the
conversion when the dynamic model is assembled.

A case file is a JSON document::

    {
      "system":   {"base_mva": 100, "frequency_hz": 50},
      "buses":    [{"id": 1, "kind": "slack", "v_setpoint": 1.0}, ...],
      "branches": [{"id": "1-10", "from_bus": 1, "to_bus": 10,
                    "r": 0.0, "x": 0.15, "base_mva": 200, "rating_mva": 200},
                   {"from_bus": 10, "to_bus": 20, "length_km": 25,
                    "per_km": {"r": 1e-4, "x": 1e-3, "b": 1.75e-3}}, ...],
      "machines": [{"id": "G1", "bus": 1, "rating_mva": 200, "H": 6.5, ...,
                    "exciter": {"Tr": 0.01, "Ka": 200}}, ...],
      "loads":    [{"bus": 35, "p": 6.0, "q": 0.0}],
      "injections": [...]          # optional, static converter injections
    }
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Union

BusId = Union[int, str]

MACHINE_REACTANCES = ("Ra", "Xd", "Xq", "Xd_p", "Xq_p", "Xd_pp", "Xq_pp", "Xl")
MACHINE_TIME_CONSTANTS = ("Td0_p", "Td0_pp", "Tq0_p", "Tq0_pp")


class CaseError(ValueError):
    """Invalid case content.  ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class BusKind(str, Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


def id_key(value: BusId) -> tuple:
    """Sort key giving a total order over mixed int/str identifiers."""
    if isinstance(value, int):
        return (0, value, "")
    return (1, 0, str(value))


@dataclass(frozen=True)
class Bus:
    id: BusId
    kind: BusKind = BusKind.PQ
    v_setpoint: float | None = None
    p_set: float = 0.0
    q_set: float = 0.0


@dataclass(frozen=True)
class Branch:
    """Pi-model branch, impedances on the system base.

    ``tap_ratio`` is the off-nominal ratio on the ``from_bus`` side.
    """

    id: str
    from_bus: BusId
    to_bus: BusId
    r: float
    x: float
    b_shunt: float = 0.0
    tap_ratio: float = 1.0
    rating_mva: float = 0.0

    def admittances(self) -> tuple[complex, complex, complex, complex]:
        """Return (Yff, Yft, Ytf, Ytt) of the two-port."""
        ys = 1.0 / complex(self.r, self.x)
        bc = 0.5j * self.b_shunt
        t = self.tap_ratio
        return (ys + bc) / (t * t), -ys / t, -ys / t, ys + bc


@dataclass(frozen=True)
class Exciter:
    Tr: float
    Ka: float


@dataclass(frozen=True)
class Machine:
    """Synchronous machine; reactances and H on the machine's own rating."""

    id: str
    bus: BusId
    rating_mva: float
    H: float
    D: float
    Ra: float
    Xd: float
    Xq: float
    Xd_p: float
    Xq_p: float
    Xd_pp: float
    Xq_pp: float
    Xl: float
    Td0_p: float
    Td0_pp: float
    Tq0_p: float
    Tq0_pp: float
    exciter: Exciter


@dataclass(frozen=True)
class Load:
    bus: BusId
    p: float
    q: float
    model: str = "constant_impedance"


@dataclass(frozen=True)
class Injection:
    """Constant-power injection (a converter station of a DC link)."""

    bus: BusId
    p: float
    q: float = 0.0
    link: str = ""


@dataclass(frozen=True)
class Case:
    system_base_mva: float
    frequency_hz: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    machines: tuple[Machine, ...]
    loads: tuple[Load, ...] = ()
    injections: tuple[Injection, ...] = ()
    # merged branch id -> original circuit ids (filled by normalize)
    branch_origin: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    # merged machine id -> original machine ids
    machine_origin: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _validate(self)

    @property
    def bus_ids(self) -> list[BusId]:
        return [b.id for b in self.buses]

    def bus_index(self) -> dict[BusId, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def branch(self, branch_id: str) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(branch_id)

    def machine_at(self, bus: BusId) -> Machine | None:
        for m in self.machines:
            if m.bus == bus:
                return m
        return None

    def original_circuits(self, branch_id: str) -> tuple[str, ...]:
        return tuple(self.branch_origin.get(branch_id, (branch_id,)))


def _validate(case: Case) -> None:
    if not case.system_base_mva > 0:
        raise CaseError("base must be positive", "system.base_mva")
    if not case.frequency_hz > 0:
        raise CaseError("frequency must be positive", "system.frequency_hz")
    if not case.buses:
        raise CaseError("at least one bus is required", "buses")
    seen: set = set()
    for k, bus in enumerate(case.buses):
        if bus.id in seen:
            raise CaseError(f"duplicate bus id {bus.id!r}", f"buses[{k}].id")
        seen.add(bus.id)
        if bus.kind in (BusKind.SLACK, BusKind.PV):
            v = bus.v_setpoint
            if v is None or not 0.5 < v < 1.5:
                raise CaseError("v_setpoint must lie in (0.5, 1.5)", f"buses[{k}].v_setpoint")
    branch_ids: set = set()
    for k, br in enumerate(case.branches):
        if br.id in branch_ids:
            raise CaseError(f"duplicate branch id {br.id!r}", f"branches[{k}].id")
        branch_ids.add(br.id)
        for end in ("from_bus", "to_bus"):
            if getattr(br, end) not in seen:
                raise CaseError(f"unknown bus {getattr(br, end)!r}", f"branches[{k}].{end}")
        if br.from_bus == br.to_bus:
            raise CaseError("branch endpoints must differ", f"branches[{k}]")
        if br.x == 0:
            raise CaseError("series reactance must be nonzero", f"branches[{k}].x")
        if not br.tap_ratio > 0:
            raise CaseError("tap ratio must be positive", f"branches[{k}].tap_ratio")
    machine_ids: set = set()
    for k, m in enumerate(case.machines):
        where = f"machines[{k}]"
        if m.id in machine_ids:
            raise CaseError(f"duplicate machine id {m.id!r}", f"{where}.id")
        machine_ids.add(m.id)
        if m.bus not in seen:
            raise CaseError(f"unknown bus {m.bus!r}", f"{where}.bus")
        _validate_machine(m, where)
    for k, ld in enumerate(case.loads):
        if ld.bus not in seen:
            raise CaseError(f"unknown bus {ld.bus!r}", f"loads[{k}].bus")
        if ld.model != "constant_impedance":
            raise CaseError("only constant_impedance loads are supported", f"loads[{k}].model")
    for k, inj in enumerate(case.injections):
        if inj.bus not in seen:
            raise CaseError(f"unknown bus {inj.bus!r}", f"injections[{k}].bus")


def _validate_machine(m: Machine, where: str) -> None:
    if not m.rating_mva > 0:
        raise CaseError("rating must be positive", f"{where}.rating_mva")
    if not m.H > 0:
        raise CaseError("inertia must be positive", f"{where}.H")
    if not m.Xd > m.Xd_p > m.Xd_pp > m.Xl > 0:
        raise CaseError("require Xd > Xd_p > Xd_pp > Xl > 0", f"{where}.Xd")
    if not m.Xq > m.Xq_p > m.Xq_pp > m.Xl:
        raise CaseError("require Xq > Xq_p > Xq_pp > Xl", f"{where}.Xq")
    for name in MACHINE_TIME_CONSTANTS:
        if not getattr(m, name) > 0:
            raise CaseError("time constant must be positive", f"{where}.{name}")
    if m.Ra < 0 or m.D < 0:
        raise CaseError("Ra and D must be non-negative", where)
    if not (m.exciter.Tr > 0 and m.exciter.Ka > 0):
        raise CaseError("exciter Tr and Ka must be positive", f"{where}.exciter")


# ---------------------------------------------------------------------------
# per-unit helpers


def branch_km_expand(length_km: float, per_km: Mapping[str, float]) -> tuple[float, float, float]:
    """Total (r, x, b) of a line from per-kilometre parameters."""
    if not length_km > 0:
        raise CaseError(f"line length must be positive, got {length_km}", "length_km")
    return (
        per_km.get("r", 0.0) * length_km,
        per_km["x"] * length_km,
        per_km.get("b", 0.0) * length_km,
    )


def change_base(z_pu: float, old_mva: float, new_mva: float) -> float:
    """Re-express an impedance from ``old_mva`` to ``new_mva`` (same kV base)."""
    return z_pu * new_mva / old_mva


@dataclass(frozen=True)
class MachineParams:
    """Machine data on the system base, as used by the dynamic model."""

    id: str
    bus: BusId
    H: float
    D: float
    Ra: float
    Xd: float
    Xq: float
    Xd_p: float
    Xq_p: float
    Xd_pp: float
    Xq_pp: float
    Xl: float
    Td0_p: float
    Td0_pp: float
    Tq0_p: float
    Tq0_pp: float
    Tr: float
    Ka: float


def machine_on_system_base(m: Machine, system_base_mva: float) -> MachineParams:
    k = system_base_mva / m.rating_mva
    scaled = {name: getattr(m, name) * k for name in MACHINE_REACTANCES}
    # H and D scale with the rating: stored energy and damping power are physical.
    return MachineParams(
        id=m.id,
        bus=m.bus,
        H=m.H / k,
        D=m.D / k,
        Td0_p=m.Td0_p,
        Td0_pp=m.Td0_pp,
        Tq0_p=m.Tq0_p,
        Tq0_pp=m.Tq0_pp,
        Tr=m.exciter.Tr,
        Ka=m.exciter.Ka,
        **scaled,
    )


def machine_from_system_base(p: MachineParams, rating_mva: float, system_base_mva: float) -> Machine:
    k = system_base_mva / rating_mva
    return Machine(
        id=p.id,
        bus=p.bus,
        rating_mva=rating_mva,
        H=p.H * k,
        D=p.D * k,
        Td0_p=p.Td0_p,
        Td0_pp=p.Td0_pp,
        Tq0_p=p.Tq0_p,
        Tq0_pp=p.Tq0_pp,
        exciter=Exciter(Tr=p.Tr, Ka=p.Ka),
        **{name: getattr(p, name) / k for name in MACHINE_REACTANCES},
    )


# ---------------------------------------------------------------------------
# parsing / serialization


def _require(obj: Mapping, key: str, path: str) -> Any:
    if not isinstance(obj, Mapping):
        raise CaseError("expected an object", path)
    if key not in obj:
        raise CaseError("missing required field", f"{path}.{key}" if path else key)
    return obj[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CaseError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise CaseError("non-finite number", path)
    return float(value)


def _ident(value: Any, path: str) -> BusId:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise CaseError(f"expected an integer or string id, got {value!r}", path)
    return value


def _list(doc: Mapping, key: str, required: bool = True) -> list:
    if key not in doc:
        if required:
            raise CaseError("missing required field", key)
        return []
    value = doc[key]
    if not isinstance(value, list):
        raise CaseError("expected a list", key)
    return value


def _parse_bus(d: Any, path: str) -> Bus:
    bus_id = _ident(_require(d, "id", path), f"{path}.id")
    try:
        kind = BusKind(d.get("kind", "pq"))
    except ValueError:
        raise CaseError(f"unknown bus kind {d.get('kind')!r}", f"{path}.kind") from None
    v = d.get("v_setpoint")
    return Bus(
        id=bus_id,
        kind=kind,
        v_setpoint=None if v is None else _number(v, f"{path}.v_setpoint"),
        p_set=_number(d.get("p_set", 0.0), f"{path}.p_set"),
        q_set=_number(d.get("q_set", 0.0), f"{path}.q_set"),
    )


def _parse_branch(d: Any, path: str, system_base: float) -> Branch:
    f = _ident(_require(d, "from_bus", path), f"{path}.from_bus")
    t = _ident(_require(d, "to_bus", path), f"{path}.to_bus")
    if "per_km" in d or "length_km" in d:
        per_km = _require(d, "per_km", path)
        length = _number(_require(d, "length_km", path), f"{path}.length_km")
        try:
            r, x, b = branch_km_expand(length, per_km)
        except CaseError as exc:
            raise CaseError(str(exc).split(": ", 1)[-1], f"{path}.length_km") from None
        except KeyError:
            raise CaseError("missing required field", f"{path}.per_km.x") from None
    else:
        r = _number(d.get("r", 0.0), f"{path}.r")
        x = _number(_require(d, "x", path), f"{path}.x")
        b = _number(d.get("b_shunt", 0.0), f"{path}.b_shunt")
    if "base_mva" in d:
        own = _number(d["base_mva"], f"{path}.base_mva")
        if not own > 0:
            raise CaseError("base must be positive", f"{path}.base_mva")
        r, x = change_base(r, own, system_base), change_base(x, own, system_base)
        b = b * own / system_base
    return Branch(
        id=str(d.get("id", f"{f}-{t}")),
        from_bus=f,
        to_bus=t,
        r=r,
        x=x,
        b_shunt=b,
        tap_ratio=_number(d.get("tap_ratio", 1.0), f"{path}.tap_ratio"),
        rating_mva=_number(d.get("rating_mva", 0.0), f"{path}.rating_mva"),
    )


def _parse_machine(d: Any, path: str) -> Machine:
    bus = _ident(_require(d, "bus", path), f"{path}.bus")
    params = {}
    for name in ("rating_mva", "H", "D") + MACHINE_REACTANCES + MACHINE_TIME_CONSTANTS:
        if name == "Xq_pp" and name not in d:
            # subtransient saliency is commonly neglected when not quoted
            params[name] = _number(_require(d, "Xd_pp", path), f"{path}.Xd_pp")
            continue
        if name == "D" and name not in d:
            params[name] = 0.0
            continue
        params[name] = _number(_require(d, name, path), f"{path}.{name}")
    exc = _require(d, "exciter", path)
    exciter = Exciter(
        Tr=_number(_require(exc, "Tr", f"{path}.exciter"), f"{path}.exciter.Tr"),
        Ka=_number(_require(exc, "Ka", f"{path}.exciter"), f"{path}.exciter.Ka"),
    )
    return Machine(id=str(d.get("id", f"G{bus}")), bus=bus, exciter=exciter, **params)


def parse_case(text: str | bytes) -> Case:
    """Parse and validate a JSON case document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, Mapping):
        raise CaseError("case document must be a JSON object")
    system = _require(doc, "system", "")
    base = _number(_require(system, "base_mva", "system"), "system.base_mva")
    freq = _number(_require(system, "frequency_hz", "system"), "system.frequency_hz")
    if not base > 0:
        raise CaseError("base must be positive", "system.base_mva")
    buses = tuple(_parse_bus(d, f"buses[{k}]") for k, d in enumerate(_list(doc, "buses")))
    if not buses:
        raise CaseError("at least one bus is required", "buses")
    branches = tuple(
        _parse_branch(d, f"branches[{k}]", base) for k, d in enumerate(_list(doc, "branches"))
    )
    machines = tuple(_parse_machine(d, f"machines[{k}]") for k, d in enumerate(_list(doc, "machines")))
    loads = tuple(
        Load(
            bus=_ident(_require(d, "bus", f"loads[{k}]"), f"loads[{k}].bus"),
            p=_number(d.get("p", 0.0), f"loads[{k}].p"),
            q=_number(d.get("q", 0.0), f"loads[{k}].q"),
            model=d.get("model", "constant_impedance"),
        )
        for k, d in enumerate(_list(doc, "loads", required=False))
    )
    injections = tuple(
        Injection(
            bus=_ident(_require(d, "bus", f"injections[{k}]"), f"injections[{k}].bus"),
            p=_number(_require(d, "p", f"injections[{k}]"), f"injections[{k}].p"),
            q=_number(d.get("q", 0.0), f"injections[{k}].q"),
            link=str(d.get("link", "")),
        )
        for k, d in enumerate(_list(doc, "injections", required=False))
    )
    origin = {str(k): tuple(v) for k, v in doc.get("branch_origin", {}).items()}
    morigin = {str(k): tuple(v) for k, v in doc.get("machine_origin", {}).items()}
    conversions = {m.id: base / m.rating_mva for m in machines}
    return Case(
        system_base_mva=base,
        frequency_hz=freq,
        buses=buses,
        branches=branches,
        machines=machines,
        loads=loads,
        injections=injections,
        branch_origin=origin,
        machine_origin=morigin,
        meta={"machine_base_to_system_base": conversions},
    )


def load_case(path) -> Case:
    with open(path, "rb") as fh:
        return parse_case(fh.read())


def case_to_dict(case: Case) -> dict:
    """Plain-JSON representation; all impedances are written explicitly in pu."""
    doc: dict[str, Any] = {
        "system": {"base_mva": case.system_base_mva, "frequency_hz": case.frequency_hz},
        "buses": [],
        "branches": [asdict(br) for br in case.branches],
        "machines": [],
        "loads": [asdict(ld) for ld in case.loads],
    }
    for bus in case.buses:
        d = asdict(bus)
        d["kind"] = bus.kind.value
        if d["v_setpoint"] is None:
            del d["v_setpoint"]
        doc["buses"].append(d)
    for m in case.machines:
        d = {f.name: getattr(m, f.name) for f in fields(m) if f.name != "exciter"}
        d["exciter"] = asdict(m.exciter)
        doc["machines"].append(d)
    if case.injections:
        doc["injections"] = [asdict(inj) for inj in case.injections]
    if case.branch_origin:
        doc["branch_origin"] = {k: list(v) for k, v in case.branch_origin.items()}
    if case.machine_origin:
        doc["machine_origin"] = {k: list(v) for k, v in case.machine_origin.items()}
    return doc


def serialize_case(case: Case) -> str:
    return json.dumps(case_to_dict(case), indent=2)


# ---------------------------------------------------------------------------
# normalization


def _merge_branches(group: list[Branch]) -> Branch:
    first = group[0]
    y = 0j
    b = 0.0
    for br in group:
        if br.from_bus != first.from_bus and br.tap_ratio != 1.0:
            raise CaseError(f"cannot merge reversed off-nominal branch {br.id!r}", "branches")
        y += 1.0 / complex(br.r, br.x)
        b += br.b_shunt
    z = 1.0 / y
    return Branch(
        id=first.id,
        from_bus=first.from_bus,
        to_bus=first.to_bus,
        r=z.real,
        x=z.imag,
        b_shunt=b,
        tap_ratio=first.tap_ratio,
        rating_mva=sum(br.rating_mva for br in group),
    )


def _merge_machines(group: list[Machine], system_base: float) -> Machine:
    """Aggregate co-located machines into one equivalent unit.

    Reactances are paralleled on the system base.  Inertia and damping are
    summed as physical quantities; time constants are rating-weighted.
    """
    rating = sum(m.rating_mva for m in group)
    params = [machine_on_system_base(m, system_base) for m in group]
    weights = [m.rating_mva / rating for m in group]
    merged = {name: 1.0 / sum(1.0 / getattr(p, name) for p in params) for name in MACHINE_REACTANCES if name != "Ra"}
    ra = [p.Ra for p in params]
    merged["Ra"] = 0.0 if any(r == 0 for r in ra) else 1.0 / sum(1.0 / r for r in ra)
    for name in MACHINE_TIME_CONSTANTS:
        merged[name] = sum(w * getattr(m, name) for w, m in zip(weights, group))
    lead = max(group, key=lambda m: (m.rating_mva, -group.index(m)))
    sys_params = MachineParams(
        id=group[0].id,
        bus=group[0].bus,
        H=sum(p.H for p in params),
        D=sum(p.D for p in params),
        Tr=lead.exciter.Tr,
        Ka=lead.exciter.Ka,
        **merged,
    )
    return machine_from_system_base(sys_params, rating, system_base)


def normalize(case: Case) -> Case:
    """Merge parallel circuits and co-located machines.

    Returns the case itself when there is nothing to merge, so the operation
    is idempotent.  Original element ids stay reachable through
    ``branch_origin`` / ``machine_origin``.
    """
    by_pair: dict[frozenset, list[Branch]] = defaultdict(list)
    for br in case.branches:
        by_pair[frozenset((br.from_bus, br.to_bus))].append(br)
    by_bus: dict[BusId, list[Machine]] = defaultdict(list)
    for m in case.machines:
        by_bus[m.bus].append(m)
    if all(len(g) == 1 for g in by_pair.values()) and all(len(g) == 1 for g in by_bus.values()):
        return case

    branch_origin = dict(case.branch_origin)
    branches = []
    emitted: set = set()
    for br in case.branches:
        key = frozenset((br.from_bus, br.to_bus))
        if key in emitted:
            continue
        emitted.add(key)
        group = by_pair[key]
        if len(group) == 1:
            branches.append(br)
            continue
        merged = _merge_branches(group)
        origins: list[str] = []
        for g in group:
            origins.extend(branch_origin.pop(g.id, (g.id,)))
        branch_origin[merged.id] = tuple(origins)
        branches.append(merged)

    machine_origin = dict(case.machine_origin)
    machines = []
    done: set = set()
    for m in case.machines:
        if m.bus in done:
            continue
        done.add(m.bus)
        group = by_bus[m.bus]
        if len(group) == 1:
            machines.append(m)
            continue
        merged_m = _merge_machines(group, case.system_base_mva)
        origins = []
        for g in group:
            origins.extend(machine_origin.pop(g.id, (g.id,)))
        machine_origin[merged_m.id] = tuple(origins)
        machines.append(merged_m)

    return replace(
        case,
        branches=tuple(branches),
        machines=tuple(machines),
        branch_origin=branch_origin,
        machine_origin=machine_origin,
    )


def adjacency(case: Case, exclude: Iterable[str] = ()) -> dict[BusId, list[tuple[str, BusId]]]:
    """Bus -> [(branch id, neighbour bus)], skipping branches in ``exclude``."""
    skip = set(exclude)
    adj: dict[BusId, list[tuple[str, BusId]]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        if br.id in skip:
            continue
        adj[br.from_bus].append((br.id, br.to_bus))
        adj[br.to_bus].append((br.id, br.from_bus))
    return adj


def islands(case: Case, exclude: Iterable[str] = ()) -> list[list[BusId]]:
    """Connected components (in case bus order) of the graph minus ``exclude``."""
    adj = adjacency(case, exclude)
    seen: set = set()
    out = []
    for bus in case.bus_ids:
        if bus in seen:
            continue
        comp = []
        stack = [bus]
        seen.add(bus)
        while stack:
            u = stack.pop()
            comp.append(u)
            for _, v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        order = case.bus_index()
        out.append(sorted(comp, key=order.__getitem__))
    return out
