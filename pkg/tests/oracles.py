"""Independent reference implementations used by the tests."""

from __future__ import annotations

import math
import random

import numpy as np


def central_difference(func, x0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Jacobian of ``func`` at ``x0`` (columns = inputs) by central differences."""
    cols = []
    for k in range(len(x0)):
        step = np.zeros_like(x0)
        step[k] = h
        cols.append((np.asarray(func(x0 + step)) - np.asarray(func(x0 - step))) / (2 * h))
    return np.column_stack(cols)


def column_relative_error(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-6) -> float:
    """Worst column error relative to the reference column's size (or ``floor``)."""
    worst = 0.0
    for k in range(reference.shape[1]):
        scale = max(float(np.max(np.abs(reference[:, k]))), floor)
        err = float(np.max(np.abs(analytic[:, k] - reference[:, k]))) / scale
        worst = max(worst, err)
    return worst


def network_outputs(case, op, x):
    """|V|, angle and |I_from| after solving the nonlinear network for states x."""
    from gridseg.linearizer import solve_network

    v = solve_network(op, x)
    idx = case.bus_index()
    cur = []
    for br in case.branches:
        yff, yft, _, _ = br.admittances()
        cur.append(abs(yff * v[idx[br.from_bus]] + yft * v[idx[br.to_bus]]))
    return np.abs(v), np.angle(v), np.array(cur)


def output_blocks_by_differences(analysis, h: float = 1e-6) -> dict:
    """C_V, C_theta, C_I and C_f of an analysed case, rebuilt from the nonlinear model."""
    from gridseg.linearizer import reduced_dynamics

    mdl, case, op = analysis.model, analysis.case, analysis.model.op
    cols = ([], [], [])
    for k in range(mdl.n_states):
        step = np.zeros(mdl.n_states)
        step[k] = h
        plus = network_outputs(case, op, op.x0 + step)
        minus = network_outputs(case, op, op.x0 - step)
        for store, p, m in zip(cols, plus, minus):
            store.append((p - m) / (2 * h))
    c_v, c_t, c_i = (np.column_stack(c) for c in cols)
    a_fd = central_difference(lambda x: reduced_dynamics(op, x), op.x0)
    c_f = c_t @ a_fd / (2 * math.pi * case.frequency_hz)
    return {"C_V": c_v, "C_theta": c_t, "C_I": c_i, "C_f": c_f, "A": a_fd}


# ---------------------------------------------------------------------------
# path-search oracle on small radial grids


def random_tree(n: int, rng: random.Random):
    """Random labelled tree on buses 0..n-1; branch ids 'b00', 'b01', ..."""
    edges = []
    for v in range(1, n):
        edges.append((rng.randrange(v), v))
    rng.shuffle(edges)
    adj = {b: [] for b in range(n)}
    branches = {}
    for k, (u, v) in enumerate(edges):
        bid = f"b{k:02d}"
        branches[bid] = (u, v)
        adj[u].append((bid, v))
        adj[v].append((bid, u))
    return adj, branches


def simple_paths(adj, a, b):
    """All simple bus paths a -> b, as (buses, branches), by depth-first enumeration."""
    out = []

    def walk(buses, brs):
        u = buses[-1]
        if u == b:
            out.append((tuple(buses), tuple(brs)))
            return
        for br, v in adj[u]:
            if v not in buses:
                walk(buses + [v], brs + [br])

    walk([a], [])
    return out


def synthetic_fields(adj, path_buses, path_branches, rng: random.Random):
    """phi_f / phi_I following a descent-then-ascent profile along ``path_buses``.

    The pivot is an interior bus (or e1 when the path has one branch); buses up to
    the pivot sit near phase 0, the rest near 180 degrees.  Off-path buses get
    arbitrary values.
    """
    k = len(path_buses) - 1
    pivot_pos = rng.randrange(0, k)  # at least one bus after the pivot
    mags = {}
    top = 1.0
    for i in range(pivot_pos + 1):
        mags[path_buses[i]] = top - i * (0.8 / (pivot_pos + 1)) - rng.uniform(0, 0.05)
    low = mags[path_buses[pivot_pos]]
    for j, i in enumerate(range(pivot_pos + 1, k + 1), start=1):
        mags[path_buses[i]] = low + j * (0.8 / (k - pivot_pos)) + rng.uniform(0, 0.02)
    phi_f = {}
    for i, bus in enumerate(path_buses):
        ph = rng.uniform(-30, 30) + (0.0 if i <= pivot_pos else 180.0)
        phi_f[bus] = mags[bus] * complex(math.cos(math.radians(ph)), math.sin(math.radians(ph)))
    for bus in adj:
        if bus not in phi_f:
            ph = rng.uniform(-180, 180)
            phi_f[bus] = rng.uniform(0.01, 1.2) * complex(math.cos(math.radians(ph)), math.sin(math.radians(ph)))
    phi_I = {}
    for bus in adj:
        for br, _ in adj[bus]:
            if br not in phi_I:
                phi_I[br] = complex(rng.uniform(0.1, 5.0), rng.uniform(-5.0, 5.0))
    return phi_f, phi_I, path_buses[pivot_pos], path_buses[pivot_pos + 1]


def replay_greedy(adj, phi_I, e1, log, pre_excluded=()):
    """Replay a search log and check every step took a max-|phi_I| feasible branch.

    Returns the reconstructed (buses, branches); raises AssertionError if a
    step was not greedy-maximal or the log is inconsistent.
    """
    excluded = set(pre_excluded)
    buses, branches = [e1], []
    for ev in log:
        here = buses[-1]
        if ev.reason == "backtrack":
            assert branches and branches[-1] == ev.branch, "backtrack must undo the last branch"
            branches.pop()
            buses.pop()
            excluded.add(ev.branch)
            continue
        assert ev.bus == here, "event recorded at the wrong bus"
        feasible = [(br, v) for br, v in adj[here] if br not in excluded and v not in buses]
        assert feasible, "a step was taken with no feasible branch"
        best = max(abs(phi_I[br]) for br, _ in feasible)
        chosen = dict(feasible).get(ev.branch)
        assert chosen is not None, "chosen branch was not feasible"
        assert abs(phi_I[ev.branch]) >= best, "chosen branch was not greedy-maximal"
        if ev.reason == "dead_end":
            excluded.add(ev.branch)
        else:
            branches.append(ev.branch)
            buses.append(chosen)
    return tuple(buses), tuple(branches)
