"""Eigenanalysis and electromechanical mode selection; mode shapes and observability."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .linearizer import StateSpaceModel


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mode:
    """One eigenvalue (Im >= 0 representative) with bi-orthonormal eigenvectors."""

    index: int
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray
    is_electromechanical: bool = False

    @property
    def damping_ratio(self) -> float:
        mag = abs(self.eigenvalue)
        return 0.0 if mag == 0 else -self.eigenvalue.real / mag

    @property
    def frequency_hz(self) -> float:
        return self.eigenvalue.imag / (2 * math.pi)

    @property
    def participations(self) -> np.ndarray:
        return participation_factors(self)

    def rescaled(self, factor: complex) -> "Mode":
        """Same mode with v scaled by ``factor`` and w by ``1/factor``."""
        return replace(self, right=self.right * factor, left=self.left / factor)


@dataclass(frozen=True)
class ModeShape:
    machine_ids: tuple[str, ...]
    values: np.ndarray  # normalized complex speed entries, max entry = 1+0j
    scale: complex  # factor applied to the raw right eigenvector

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.values))

    def value(self, machine_id: str) -> complex:
        return complex(self.values[self.machine_ids.index(machine_id)])


@dataclass(frozen=True)
class ObservabilityFactors:
    bus_ids: tuple
    branch_ids: tuple[str, ...]
    phi_V: np.ndarray
    phi_f: np.ndarray
    phi_I: np.ndarray

    def f_at(self, bus) -> complex:
        return complex(self.phi_f[self.bus_ids.index(bus)])

    def i_at(self, branch: str) -> complex:
        return complex(self.phi_I[self.branch_ids.index(branch)])

    def phi_f_map(self) -> dict:
        return dict(zip(self.bus_ids, self.phi_f))

    def phi_I_map(self) -> dict:
        return dict(zip(self.branch_ids, self.phi_I))


def _as_matrix(model_or_a) -> np.ndarray:
    return model_or_a.A if isinstance(model_or_a, StateSpaceModel) else np.asarray(model_or_a, dtype=float)


def eigen_analysis(model_or_a, residual_tol: float = 1e-8) -> list[Mode]:
    """Full spectrum, one representative per conjugate pair, ordered by damping then |lambda|."""
    a = _as_matrix(model_or_a)
    if not np.all(np.isfinite(a)):
        raise EigenError("matrix has non-finite entries")
    # Roundoff-level entries (left over from the network elimination) throw off
    # LAPACK's balancing and cost several digits in the eigenvectors.
    clean = np.where(np.abs(a) <= 64 * np.finfo(float).eps * np.abs(a).max(initial=0.0), 0.0, a)
    try:
        lam, vl, vr = scipy.linalg.eig(clean, left=True, right=True)
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"eigensolver failed (condition estimate {np.linalg.cond(a):.3e}): {exc}") from None
    scale = max(1.0, float(np.max(np.abs(lam))))
    modes = []
    for k in range(len(lam)):
        if lam[k].imag < -1e-12 * scale:
            continue
        ev = complex(lam[k].real, 0.0) if abs(lam[k].imag) <= 1e-12 * scale else complex(lam[k])
        v = vr[:, k]
        w = vl[:, k].conj()
        denom = w @ v
        if abs(denom) < 1e-14:
            raise EigenError(
                f"eigenvalue {ev:.6g} is defective; left/right eigenvectors are orthogonal "
                f"(condition estimate {np.linalg.cond(a):.3e})"
            )
        w = w / denom
        res = np.max(np.abs(a @ v - lam[k] * v)) / np.max(np.abs(v))
        if res > residual_tol:
            raise EigenError(f"eigen residual {res:.3e} exceeds tolerance for lambda={ev:.6g}")
        modes.append(Mode(index=k, eigenvalue=ev, right=v, left=w))
    modes.sort(key=lambda m: (round(m.damping_ratio, 12), abs(m.eigenvalue)))
    return modes


def participation_factors(mode: Mode) -> np.ndarray:
    return mode.left * mode.right


def speed_participation_share(mode: Mode, model: StateSpaceModel) -> float:
    p = np.abs(participation_factors(mode))
    total = p.sum()
    return 0.0 if total == 0 else float(p[model.omega_indices()].sum() / total)


def electromechanical_filter(
    modes: Sequence[Mode],
    model: StateSpaceModel,
    freq_band: tuple[float, float] = (0.1, 3.0),
    min_abs_lambda: float = 0.01,
    speed_share: float = 0.3,
) -> list[Mode]:
    """Oscillatory rotor-speed modes, least damped first."""
    out = []
    for m in modes:
        if not freq_band[0] <= m.frequency_hz <= freq_band[1]:
            continue
        if abs(m.eigenvalue) < min_abs_lambda:
            continue
        if speed_participation_share(m, model) < speed_share:
            continue
        out.append(replace(m, is_electromechanical=True))
    out.sort(key=lambda m: (m.damping_ratio, m.frequency_hz))
    return out


def critical_mode(em_modes: Sequence[Mode]) -> Mode:
    if not em_modes:
        raise EigenError("no electromechanical mode found")
    return min(em_modes, key=lambda m: (m.damping_ratio, m.frequency_hz))


def mode_shape(mode: Mode, model: StateSpaceModel) -> ModeShape:
    """Speed entries of the right eigenvector scaled so the largest is 1 at 0 degrees."""
    if model.n_machines == 0:
        raise ValueError("model has no machines")
    raw = mode.right[model.omega_indices()]
    k = int(np.argmax(np.abs(raw)))
    if raw[k] == 0:
        raise ValueError("mode has no rotor-speed content")
    scale = 1.0 / raw[k]
    vals = raw * scale
    vals[k] = 1.0
    return ModeShape(machine_ids=model.machine_ids, values=vals, scale=complex(scale))


def observability(mode: Mode, model: StateSpaceModel, shape: ModeShape | None = None) -> ObservabilityFactors:
    """Output footprints C v of the mode, with v in the mode-shape normalization."""
    if shape is None:
        shape = mode_shape(mode, model)
    v = mode.right * shape.scale
    return ObservabilityFactors(
        bus_ids=model.bus_ids,
        branch_ids=model.branch_ids,
        phi_V=model.C_V @ v,
        phi_f=model.C_f @ v,
        phi_I=model.C_I @ v,
    )


def phase_gap_deg(a: complex, b: complex) -> float:
    """Absolute phase difference in degrees, wrapped to [0, 180]."""
    d = math.degrees(abs(np.angle(a) - np.angle(b))) % 360.0
    return 360.0 - d if d > 180.0 else d


def coherent_groups(
    shape: ModeShape,
    magnitude: float = 0.1,
    group_deg: float = 45.0,
    opposing_deg: float = 90.0,
) -> tuple[str, tuple[str, ...], str | None, tuple[str, ...]]:
    """(ge1, group1, ge2, group2) from a normalized mode shape.

    ``ge2`` is ``None`` when no machine lies more than ``opposing_deg`` away
    from ``ge1``.
    """
    ids = shape.machine_ids
    vals = shape.values
    mags = np.abs(vals)
    i1 = int(np.argmax(mags))
    opposed = [i for i in range(len(ids)) if phase_gap_deg(vals[i], vals[i1]) > opposing_deg]

    def members(edge: int) -> tuple[str, ...]:
        return tuple(
            ids[i] for i in range(len(ids)) if mags[i] > magnitude and phase_gap_deg(vals[i], vals[edge]) <= group_deg
        )

    if not opposed:
        return ids[i1], members(i1), None, ()
    i2 = max(opposed, key=lambda i: (mags[i], -i))
    return ids[i1], members(i1), ids[i2], members(i2)


def group_label(shape: ModeShape, **kw) -> str:
    _, g1, ge2, g2 = coherent_groups(shape, **kw)
    return ",".join(g1) + ("//" + ",".join(g2) if ge2 is not None else "")
