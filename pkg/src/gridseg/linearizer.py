"""Small-signal state-space model of a multi-machine grid.

Every machine contributes seven states, ordered globally as
``[all delta, all omega, then per machine (e_q', e_d', psi_1d, psi_2q, v_filt)]``.

Machine model: two-axis sixth-order model with one field and one damper
circuit on the d axis and two rotor circuits on the q axis.  Stator
transients and saturation are neglected.  Mechanical power is held
constant (torque ``Pm / omega``).  The static exciter produces
``Efd = Ka (Vref - v_filt)`` with a first-order voltage transducer.

The network is kept as algebraic variables (rectangular bus voltages);
loads are constant admittances at the solved voltage and converter
injections are constant power.  The Jacobians of the DAE are written out
analytically; :func:`dynamics` and :func:`network_residual` expose the
nonlinear maps they differentiate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .case import BusId, Case, MachineParams, islands, machine_on_system_base
from .powerflow import PowerFlowSolution, build_ybus, static_injections

N_MACHINE_STATES = 7
Z_STATE_NAMES = ("e_q_p", "e_d_p", "psi_1d", "psi_2q", "v_filt")


class LinearizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class _MachineConsts:
    params: MachineParams
    bus_index: int
    zinv: np.ndarray
    k1d: float
    k2d: float
    k1q: float
    k2q: float
    k3d: float
    k3q: float

    @classmethod
    def build(cls, p: MachineParams, bus_index: int) -> "_MachineConsts":
        z = np.array([[p.Ra, -p.Xq_pp], [p.Xd_pp, p.Ra]])
        return cls(
            params=p,
            bus_index=bus_index,
            zinv=np.linalg.inv(z),
            k1d=(p.Xd_pp - p.Xl) / (p.Xd_p - p.Xl),
            k2d=(p.Xd_p - p.Xd_pp) / (p.Xd_p - p.Xl),
            k1q=(p.Xq_pp - p.Xl) / (p.Xq_p - p.Xl),
            k2q=(p.Xq_p - p.Xq_pp) / (p.Xq_p - p.Xl),
            k3d=(p.Xd_p - p.Xd_pp) / (p.Xd_p - p.Xl) ** 2,
            k3q=(p.Xq_p - p.Xq_pp) / (p.Xq_p - p.Xl) ** 2,
        )


@dataclass(frozen=True)
class OperatingPoint:
    """Everything needed to evaluate the nonlinear DAE around an equilibrium."""

    case: Case
    solution: PowerFlowSolution
    machines: tuple[_MachineConsts, ...]
    y_net: np.ndarray
    s_static: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    pm: np.ndarray
    vref: np.ndarray
    omega_base: float
    # buses in islands without machines; held at their operating voltage
    passive: np.ndarray

    @property
    def n_machines(self) -> int:
        return len(self.machines)

    @property
    def n_states(self) -> int:
        return N_MACHINE_STATES * self.n_machines


def _rot(delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid -> dq rotation and its derivative with respect to delta."""
    s, c = math.sin(delta), math.cos(delta)
    return np.array([[s, -c], [c, s]]), np.array([[c, s], [-s, c]])


def state_slices(m: int, k: int) -> list[int]:
    """Global indices of the seven states of machine ``k`` (of ``m``)."""
    z0 = 2 * m + 5 * k
    return [k, m + k] + list(range(z0, z0 + 5))


def state_labels(machine_ids) -> list[str]:
    ids = list(machine_ids)
    labels = [f"delta:{g}" for g in ids] + [f"omega:{g}" for g in ids]
    for g in ids:
        labels.extend(f"{name}:{g}" for name in Z_STATE_NAMES)
    return labels


def operating_point(case: Case, sol: PowerFlowSolution) -> OperatingPoint:
    idx = case.bus_index()
    params = [machine_on_system_base(m, case.system_base_mva) for m in case.machines]
    consts = tuple(_MachineConsts.build(p, idx[p.bus]) for p in params)
    m = len(consts)
    x0 = np.zeros(N_MACHINE_STATES * m)
    pm = np.zeros(m)
    vref = np.zeros(m)
    for k, mc in enumerate(consts):
        p = mc.params
        v = complex(sol.v[mc.bus_index])
        i = np.conj(sol.machine_power[p.id] / v)
        delta = float(np.angle(v + complex(p.Ra, p.Xq) * i))
        t, _ = _rot(delta)
        vd, vq = t @ [v.real, v.imag]
        id_, iq = t @ [i.real, i.imag]
        ed_p = (p.Xq - p.Xq_p) * iq
        eq_p = vq + p.Ra * iq + p.Xd_p * id_
        psi1d = eq_p - (p.Xd_p - p.Xl) * id_
        psi2q = -ed_p - (p.Xq_p - p.Xl) * iq
        efd = eq_p + (p.Xd - p.Xd_p) * id_
        s = state_slices(m, k)
        x0[s] = [delta, 1.0, eq_p, ed_p, psi1d, psi2q, abs(v)]
        pm[k] = vd * id_ + vq * iq + p.Ra * (id_**2 + iq**2)
        vref[k] = abs(v) + efd / p.Ka
    return OperatingPoint(
        case=case,
        solution=sol,
        machines=consts,
        y_net=build_ybus(case, include_loads=True, v=sol.v),
        s_static=static_injections(case, sol),
        x0=x0,
        v0=np.asarray(sol.v, dtype=complex).copy(),
        pm=pm,
        vref=vref,
        omega_base=2 * math.pi * case.frequency_hz,
        passive=_passive_buses(case),
    )


def _passive_buses(case: Case) -> np.ndarray:
    idx = case.bus_index()
    machine_buses = {m.bus for m in case.machines}
    mask = np.zeros(len(case.buses), dtype=bool)
    for island in islands(case):
        if not machine_buses.intersection(island):
            mask[[idx[b] for b in island]] = True
    return mask


# ---------------------------------------------------------------------------
# nonlinear maps


def _machine_eval(mc: _MachineConsts, xs: np.ndarray, v: complex):
    """Stator currents (dq and grid frame) and electrical torque of one machine."""
    delta, _, eq_p, ed_p, psi1d, psi2q, _ = xs
    t, _ = _rot(delta)
    vdq = t @ [v.real, v.imag]
    e2 = np.array([mc.k1q * ed_p - mc.k2q * psi2q, mc.k1d * eq_p + mc.k2d * psi1d])
    idq = mc.zinv @ (e2 - vdq)
    ig = t.T @ idq
    te = vdq @ idq + mc.params.Ra * (idq @ idq)
    return idq, complex(ig[0], ig[1]), te


def network_residual(op: OperatingPoint, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Complex current mismatch per bus: Y v - machine currents - static currents."""
    r = op.y_net @ v - np.conj(op.s_static / v)
    m = op.n_machines
    for k, mc in enumerate(op.machines):
        _, ig, _ = _machine_eval(mc, x[state_slices(m, k)], v[mc.bus_index])
        r[mc.bus_index] -= ig
    r[op.passive] = v[op.passive] - op.v0[op.passive]
    return r


def dynamics(op: OperatingPoint, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """State derivatives for given states and bus voltages."""
    m = op.n_machines
    dx = np.zeros_like(x, dtype=float)
    for k, mc in enumerate(op.machines):
        p = mc.params
        s = state_slices(m, k)
        delta, w, eq_p, ed_p, psi1d, psi2q, vf = x[s]
        (id_, iq), _, te = _machine_eval(mc, x[s], v[mc.bus_index])
        efd = p.Ka * (op.vref[k] - vf)
        dx[s[0]] = op.omega_base * (w - 1.0)
        dx[s[1]] = (op.pm[k] / w - te - p.D * (w - 1.0)) / (2 * p.H)
        bracket_d = id_ - mc.k3d * (psi1d + (p.Xd_p - p.Xl) * id_ - eq_p)
        dx[s[2]] = (-eq_p - (p.Xd - p.Xd_p) * bracket_d + efd) / p.Td0_p
        bracket_q = iq - mc.k3q * (psi2q + (p.Xq_p - p.Xl) * iq + ed_p)
        dx[s[3]] = (-ed_p + (p.Xq - p.Xq_p) * bracket_q) / p.Tq0_p
        dx[s[4]] = (-psi1d + eq_p - (p.Xd_p - p.Xl) * id_) / p.Td0_pp
        dx[s[5]] = (-psi2q - ed_p - (p.Xq_p - p.Xl) * iq) / p.Tq0_pp
        dx[s[6]] = (abs(v[mc.bus_index]) - vf) / p.Tr
    return dx


# ---------------------------------------------------------------------------
# analytic Jacobians


def _machine_local_jacobian(op: OperatingPoint, k: int, x: np.ndarray, v: complex):
    """Derivatives w.r.t. u = [7 machine states, v_re, v_im].

    Returns (f rows 7x9, grid current 2x9 [re; im]).
    """
    mc = op.machines[k]
    p = mc.params
    xs = x[state_slices(op.n_machines, k)]
    delta, w = xs[0], xs[1]
    t, dt = _rot(delta)
    vvec = np.array([v.real, v.imag])
    vdq = t @ vvec
    idq, _, _ = _machine_eval(mc, xs, v)

    d_vdq = np.zeros((2, 9))
    d_vdq[:, 0] = dt @ vvec
    d_vdq[:, 7:9] = t
    d_e2 = np.zeros((2, 9))
    d_e2[1, 2] = mc.k1d
    d_e2[0, 3] = mc.k1q
    d_e2[1, 4] = mc.k2d
    d_e2[0, 5] = -mc.k2q
    d_idq = mc.zinv @ (d_e2 - d_vdq)
    d_ig = t.T @ d_idq
    d_ig[:, 0] += dt.T @ idq
    d_te = idq @ d_vdq + (vdq + 2 * p.Ra * idq) @ d_idq

    e = np.eye(9)
    f = np.zeros((7, 9))
    f[0, 1] = op.omega_base
    f[1] = -d_te / (2 * p.H)
    f[1, 1] += (-op.pm[k] / w**2 - p.D) / (2 * p.H)
    f[2] = (
        -e[2]
        - (p.Xd - p.Xd_p) * ((1 - mc.k3d * (p.Xd_p - p.Xl)) * d_idq[0] - mc.k3d * e[4] + mc.k3d * e[2])
        - p.Ka * e[6]
    ) / p.Td0_p
    f[3] = (
        -e[3] + (p.Xq - p.Xq_p) * ((1 - mc.k3q * (p.Xq_p - p.Xl)) * d_idq[1] - mc.k3q * e[5] - mc.k3q * e[3])
    ) / p.Tq0_p
    f[4] = (-e[4] + e[2] - (p.Xd_p - p.Xl) * d_idq[0]) / p.Td0_pp
    f[5] = (-e[5] - e[3] - (p.Xq_p - p.Xl) * d_idq[1]) / p.Tq0_pp
    vm = abs(v)
    f[6, 6] = -1.0 / p.Tr
    f[6, 7] = v.real / vm / p.Tr
    f[6, 8] = v.imag / vm / p.Tr
    return f, d_ig


def jacobians(op: OperatingPoint, x: np.ndarray, v: np.ndarray):
    """(fx, fy, gx, gy) with algebraic variables y = [v_re (n), v_im (n)]."""
    n = len(v)
    m = op.n_machines
    nx = op.n_states
    fx = np.zeros((nx, nx))
    fy = np.zeros((nx, 2 * n))
    gx = np.zeros((2 * n, nx))
    g_ = op.y_net.real
    b_ = op.y_net.imag
    gy = np.block([[g_, -b_], [b_, g_]])
    a = -np.conj(op.s_static) / np.conj(v) ** 2
    for i in range(n):
        if a[i] == 0:
            continue
        gy[i, i] -= a[i].real
        gy[i, n + i] -= a[i].imag
        gy[n + i, i] -= a[i].imag
        gy[n + i, n + i] -= -a[i].real
    for k, mc in enumerate(op.machines):
        s = state_slices(m, k)
        bi = mc.bus_index
        f_loc, ig_loc = _machine_local_jacobian(op, k, x, v[bi])
        fx[np.ix_(s, s)] = f_loc[:, :7]
        fy[s, bi] = f_loc[:, 7]
        fy[s, n + bi] = f_loc[:, 8]
        gx[bi, s] -= ig_loc[0, :7]
        gx[n + bi, s] -= ig_loc[1, :7]
        gy[bi, bi] -= ig_loc[0, 7]
        gy[bi, n + bi] -= ig_loc[0, 8]
        gy[n + bi, bi] -= ig_loc[1, 7]
        gy[n + bi, n + bi] -= ig_loc[1, 8]
    for i in np.flatnonzero(op.passive):
        for row in (i, n + i):
            gy[row] = 0.0
            gy[row, row] = 1.0
            gx[row] = 0.0
    return fx, fy, gx, gy


def solve_network(op: OperatingPoint, x: np.ndarray, v_init: np.ndarray | None = None,
                  tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Bus voltages satisfying the network equations for states ``x``."""
    v = (op.v0 if v_init is None else v_init).astype(complex).copy()
    n = len(v)
    for _ in range(max_iter):
        r = network_residual(op, x, v)
        if np.max(np.abs(r)) < tol:
            return v
        _, _, _, gy = jacobians(op, x, v)
        dy = np.linalg.solve(gy, -np.r_[r.real, r.imag])
        v = v + dy[:n] + 1j * dy[n:]
    raise LinearizationError("network equations did not converge")


def reduced_dynamics(op: OperatingPoint, x: np.ndarray) -> np.ndarray:
    """State derivatives with the network eliminated."""
    return dynamics(op, x, solve_network(op, x))


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    state_labels: tuple[str, ...]
    state_machine: tuple[str, ...]
    machine_ids: tuple[str, ...]
    machine_buses: tuple[BusId, ...]
    bus_ids: tuple[BusId, ...]
    branch_ids: tuple[str, ...]
    C_V: np.ndarray
    C_theta: np.ndarray
    C_f: np.ndarray
    C_I: np.ndarray
    C_Vc: np.ndarray = field(repr=False)  # complex bus-voltage sensitivity
    regularized_branches: tuple[str, ...] = ()
    op: OperatingPoint | None = field(default=None, repr=False, compare=False)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_machines(self) -> int:
        return len(self.machine_ids)

    def omega_indices(self) -> list[int]:
        m = self.n_machines
        return list(range(m, 2 * m))

    def delta_indices(self) -> list[int]:
        return list(range(self.n_machines))


def _singular_bus(case: Case, gy: np.ndarray) -> BusId:
    _, _, vt = np.linalg.svd(gy)
    null = vt[-1]
    n = len(case.buses)
    mag = np.hypot(null[:n], null[n:])
    return case.buses[int(np.argmax(mag))].id


def bus_voltage_sensitivity(model_or_cv, v: np.ndarray | None = None) -> np.ndarray:
    """Rows d|V_i|/dx from the complex voltage sensitivity."""
    if isinstance(model_or_cv, StateSpaceModel):
        return model_or_cv.C_V
    cv = model_or_cv
    return (np.conj(v)[:, None] * cv).real / np.abs(v)[:, None]


def bus_angle_sensitivity(cv: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (np.conj(v)[:, None] * cv).imag / (np.abs(v) ** 2)[:, None]


def bus_frequency_sensitivity(model_or_ctheta, a: np.ndarray | None = None,
                              frequency_hz: float | None = None) -> np.ndarray:
    """Bus frequency deviation (pu) per state: d(theta)/dt / omega_base."""
    if isinstance(model_or_ctheta, StateSpaceModel):
        return model_or_ctheta.C_f
    return model_or_ctheta @ a / (2 * math.pi * frequency_hz)


def branch_current_sensitivity(case: Case, cv: np.ndarray, v: np.ndarray, eps: float = 1e-6):
    """Rows d|I_ij|/dx of the sending-end current of each branch.

    Branches carrying less than ``eps`` pu get the magnitude of the complex
    sensitivity, signed by its dominant component; their ids are returned.
    """
    idx = case.bus_index()
    rows = np.zeros((len(case.branches), cv.shape[1]))
    flagged = []
    for r, br in enumerate(case.branches):
        f, t = idx[br.from_bus], idx[br.to_bus]
        yff, yft, _, _ = br.admittances()
        i0 = yff * v[f] + yft * v[t]
        di = yff * cv[f] + yft * cv[t]
        if abs(i0) >= eps:
            rows[r] = (np.conj(i0) * di).real / abs(i0)
        else:
            sign = np.where(np.abs(di.real) >= np.abs(di.imag), np.sign(di.real), np.sign(di.imag))
            rows[r] = sign * np.abs(di)
            flagged.append(br.id)
    return rows, tuple(flagged)


def build_linear_model(case: Case, sol: PowerFlowSolution, zero_flow_eps: float = 1e-6) -> StateSpaceModel:
    """Linearize the grid about the power-flow solution ``sol``."""
    if not case.machines:
        raise LinearizationError("case has no machines")
    op = operating_point(case, sol)
    fx, fy, gx, gy = jacobians(op, op.x0, op.v0)
    if np.linalg.cond(gy) > 1e14:
        raise LinearizationError(f"singular network/stator block near bus {_singular_bus(case, gy)!r}")
    sol_y = np.linalg.solve(gy, gx)
    a = fx - fy @ sol_y
    n = len(case.buses)
    cy = -sol_y
    cv = cy[:n] + 1j * cy[n:]
    v = op.v0
    c_v = bus_voltage_sensitivity(cv, v)
    c_theta = bus_angle_sensitivity(cv, v)
    c_f = bus_frequency_sensitivity(c_theta, a, case.frequency_hz)
    c_i, flagged = branch_current_sensitivity(case, cv, v, zero_flow_eps)
    ids = tuple(m.id for m in case.machines)
    labels = state_labels(ids)
    return StateSpaceModel(
        A=a,
        state_labels=tuple(labels),
        state_machine=tuple(lbl.split(":", 1)[1] for lbl in labels),
        machine_ids=ids,
        machine_buses=tuple(m.bus for m in case.machines),
        bus_ids=tuple(case.bus_ids),
        branch_ids=tuple(br.id for br in case.branches),
        C_V=c_v,
        C_theta=c_theta,
        C_f=c_f,
        C_I=c_i,
        C_Vc=cv,
        regularized_branches=flagged,
        op=op,
    )


@dataclass(frozen=True)
class FreeResponse:
    t: np.ndarray
    x: np.ndarray  # (len(t), n_states)
    labels: tuple[str, ...]

    def state(self, label: str) -> np.ndarray:
        return self.x[:, self.labels.index(label)]


def linear_free_response(model: StateSpaceModel, x0, horizon: float, dt: float) -> FreeResponse:
    """Free response by modal superposition, x(t) = sum v_k z_k(0) exp(lambda_k t)."""
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    x0 = np.asarray(x0, dtype=float)
    t = np.arange(0.0, horizon + 0.5 * dt, dt)
    lam, vecs = np.linalg.eig(model.A)
    z0 = np.linalg.solve(vecs, x0)
    x = (vecs @ (z0[:, None] * np.exp(np.outer(lam, t)))).real.T
    return FreeResponse(t=t, x=x, labels=model.state_labels)
