"""Tracing the dominant inter-area oscillation path between two edge buses.

The search walks from ``e1`` along the branch with the largest branch-current
observability magnitude.  While descending it only accepts buses whose
bus-frequency observability magnitude drops; the first bus that is not lower
but lies more than 90 degrees in phase away from ``e1`` starts the ascent,
after which magnitudes must rise until ``e2`` is reached.  Branches that
fail the test are excluded; a bus with no feasible branch left is stepped
back from.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .case import BusId, id_key
from .modal import phase_gap_deg

Adjacency = Mapping[BusId, Sequence[tuple[str, BusId]]]

# backtrack-log reasons
TAKE = "take"
ASCENT = "ascent"
DEAD_END = "dead_end"
BACKTRACK = "backtrack"


class PathError(RuntimeError):
    def __init__(self, message: str, log: Sequence["PathEvent"] = ()):
        self.log = tuple(log)
        super().__init__(message)


class ExhaustedError(PathError):
    """Every branch out of ``e1`` was tried without reaching an ascent."""


class NoAcPathError(PathError):
    """``e1`` and ``e2`` are not connected once pre-excluded branches are removed."""


@dataclass(frozen=True)
class PathEvent:
    branch: str
    reason: str
    bus: BusId  # bus the search stood on when the event happened


@dataclass(frozen=True)
class OscillationPath:
    e1: BusId
    e2: BusId
    buses: tuple[BusId, ...]
    branches: tuple[str, ...]
    pivot: BusId
    ascent_start: BusId | None
    excluded: frozenset[str]
    log: tuple[PathEvent, ...] = field(default=())

    @property
    def backtracks(self) -> int:
        return sum(1 for ev in self.log if ev.reason == BACKTRACK)

    @property
    def dead_ends(self) -> int:
        return sum(1 for ev in self.log if ev.reason == DEAD_END)

    def pivot_branches(self) -> list[str]:
        """Path branches touching the pivot bus (one or two)."""
        k = self.buses.index(self.pivot)
        out = []
        if k > 0:
            out.append(self.branches[k - 1])
        if k < len(self.branches):
            out.append(self.branches[k])
        return out

    @property
    def pivot_before_ascent(self) -> bool:
        if self.ascent_start is None:
            return True
        return self.buses.index(self.pivot) <= self.buses.index(self.ascent_start)


def connected(adj: Adjacency, a: BusId, b: BusId, exclude: Iterable[str] = ()) -> bool:
    """Breadth-first reachability of ``b`` from ``a`` avoiding ``exclude``."""
    skip = set(exclude)
    seen = {a}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            return True
        for br, v in adj.get(u, ()):
            if br not in skip and v not in seen:
                seen.add(v)
                queue.append(v)
    return False


def find_path(
    adj: Adjacency,
    phi_f: Mapping[BusId, complex],
    phi_I: Mapping[str, complex],
    e1: BusId,
    e2: BusId,
    pre_excluded: Iterable[str] = (),
    tie_tol: float = 1e-12,
    opposing_deg: float = 90.0,
) -> OscillationPath:
    if e1 == e2:
        raise ValueError("e1 and e2 must differ")
    pre = frozenset(pre_excluded)
    if not connected(adj, e1, e2, pre):
        raise NoAcPathError(f"no AC path between {e1!r} and {e2!r}")

    excluded = set(pre)
    buses: list[BusId] = [e1]
    branches: list[str] = []
    ascending = False
    ascent_start: BusId | None = None
    log: list[PathEvent] = []
    # every step pushes, pops or excludes; pops and exclusions each consume a branch
    n_branches = sum(len(v) for v in adj.values()) // 2
    budget = 3 * n_branches + len(adj) + 1

    for _ in range(budget):
        i = buses[-1]
        if i == e2:
            break
        on_path = set(buses)
        feasible = [(br, j) for br, j in adj[i] if br not in excluded and j not in on_path]
        if not feasible:
            if not branches:
                raise ExhaustedError(f"all branches at {e1!r} exhausted", log)
            br = branches.pop()
            left = buses.pop()
            excluded.add(br)
            log.append(PathEvent(br, BACKTRACK, left))
            if left == ascent_start:
                ascending = False
                ascent_start = None
            continue
        br, j = min(feasible, key=lambda c: (-abs(phi_I[c[0]]), id_key(c[0])))
        fi, fj = abs(phi_f[i]), abs(phi_f[j])
        if not ascending:
            if fj < fi - tie_tol:
                reason = TAKE
            elif phase_gap_deg(phi_f[j], phi_f[e1]) > opposing_deg:
                reason = ASCENT
                ascending = True
                ascent_start = j
            else:
                reason = DEAD_END
        else:
            reason = TAKE if fj > fi + tie_tol else DEAD_END
        log.append(PathEvent(br, reason, i))
        if reason == DEAD_END:
            excluded.add(br)
        else:
            branches.append(br)
            buses.append(j)
    else:  # pragma: no cover - the search always terminates well within the budget
        raise PathError("path search did not terminate", log)

    if ascent_start is None and phase_gap_deg(phi_f[e2], phi_f[e1]) > opposing_deg:
        # the descent ran straight into an antiphase e2; it opens (and ends) the ascent
        ascent_start = e2
    pivot = min(buses, key=lambda b: abs(phi_f[b]))
    return OscillationPath(
        e1=e1,
        e2=e2,
        buses=tuple(buses),
        branches=tuple(branches),
        pivot=pivot,
        ascent_start=ascent_start,
        excluded=frozenset(excluded),
        log=tuple(log),
    )
