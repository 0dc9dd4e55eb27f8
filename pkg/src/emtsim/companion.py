"""
Trapezoidal companion models and their per-step history.

Inductors and capacitors become a conductance in parallel with a history
current source (Norton form, branch current ``i = G*v + I_hist`` flowing
from the first node to the second).  Magnetically coupled coils become a
series resistance, current-controlled voltage sources for the partner coils
and a history voltage source (Thevenin form).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, is_dataclass, replace
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class InductorHistory:
    i_prev: float
    v_prev: float

    rate_fields = ("v_prev",)


@dataclass(frozen=True)
class CapacitorHistory:
    v_prev: float
    i_prev: float

    rate_fields = ("i_prev",)


@dataclass(frozen=True)
class CoupledCoilHistory:
    """History of a group of coupled coils.

    ``v_self_prev[k]`` is the voltage across the self term of coil k and
    ``v_mut_prev[k][j]`` the voltage induced in coil k by coil j (zero on
    the diagonal).  Their row sum is the total coil voltage.
    """

    i_prev: Tuple[float, ...]
    v_self_prev: Tuple[float, ...]
    v_mut_prev: Tuple[Tuple[float, ...], ...]

    rate_fields = ("v_self_prev", "v_mut_prev")

    @property
    def v_total_prev(self) -> np.ndarray:
        return np.asarray(self.v_self_prev) + np.asarray(self.v_mut_prev).sum(axis=1)


def inductor_companion(inductance: float, dt: float, h: InductorHistory) -> Tuple[float, float]:
    g = dt / (2.0 * inductance)
    return g, h.i_prev + h.v_prev * g


def inductor_update(inductance: float, dt: float, h: InductorHistory, v_new: float) -> InductorHistory:
    g, i_hist = inductor_companion(inductance, dt, h)
    return InductorHistory(i_prev=i_hist + g * v_new, v_prev=v_new)


def capacitor_companion(capacitance: float, dt: float, h: CapacitorHistory) -> Tuple[float, float]:
    g = 2.0 * capacitance / dt
    return g, -(h.i_prev + h.v_prev * g)


def capacitor_update(capacitance: float, dt: float, h: CapacitorHistory, v_new: float) -> CapacitorHistory:
    g, i_hist = capacitor_companion(capacitance, dt, h)
    return CapacitorHistory(v_prev=v_new, i_prev=g * v_new + i_hist)


def coupled_companion(inductance: np.ndarray, dt: float, h: CoupledCoilHistory,
                      k: int) -> Tuple[float, np.ndarray, float]:
    """Companion of coil ``k`` in a coupled group.

    ``inductance`` is the symmetric matrix of self (diagonal) and mutual
    (off-diagonal) inductances.  Returns ``(r_eq, ctrl_gain, v_hist)`` with
    the coil voltage ``v_k = r_eq*i_k + sum_j ctrl_gain[j]*i_j + v_hist``;
    ``ctrl_gain[k]`` is zero.
    """
    row = 2.0 * np.asarray(inductance, dtype=float)[k] / dt
    r_eq = float(row[k])
    gain = row.copy()
    gain[k] = 0.0
    v_hist = -(float(row @ np.asarray(h.i_prev)) + h.v_self_prev[k] + sum(h.v_mut_prev[k]))
    return r_eq, gain, v_hist


def coupled_update(inductance: np.ndarray, dt: float, h: CoupledCoilHistory,
                   i_new) -> CoupledCoilHistory:
    """Advance the coupled-coil difference equations to the solved currents ``i_new``."""
    lmat = np.asarray(inductance, dtype=float)
    i_new = np.asarray(i_new, dtype=float)
    di = i_new - np.asarray(h.i_prev)
    n = len(i_new)
    v_self = tuple(2.0 * lmat[k, k] / dt * di[k] - h.v_self_prev[k] for k in range(n))
    v_mut = tuple(
        tuple(0.0 if j == k else 2.0 * lmat[k, j] / dt * di[j] - h.v_mut_prev[k][j] for j in range(n))
        for k in range(n)
    )
    return CoupledCoilHistory(i_prev=tuple(float(v) for v in i_new), v_self_prev=v_self, v_mut_prev=v_mut)


def coupled_initial(inductance: np.ndarray, i0, v0) -> CoupledCoilHistory:
    """History at t0 from coil currents ``i0`` and total coil voltages ``v0``.

    The split into self and mutual parts uses ``di/dt = L^-1 v`` (pseudo-inverse
    when the coils are perfectly coupled).
    """
    lmat = np.asarray(inductance, dtype=float)
    didt = np.linalg.pinv(lmat) @ np.asarray(v0, dtype=float)
    n = len(didt)
    v_self = tuple(float(lmat[k, k] * didt[k]) for k in range(n))
    v_mut = [[0.0 if j == k else float(lmat[k, j] * didt[j]) for j in range(n)] for k in range(n)]
    # put any pinv residue into the self term so the decomposition sums to v0 exactly
    for k in range(n):
        resid = float(v0[k]) - v_self[k] - sum(v_mut[k])
        v_self = v_self[:k] + (v_self[k] + resid,) + v_self[k + 1 :]
    return CoupledCoilHistory(
        i_prev=tuple(float(v) for v in i0),
        v_self_prev=v_self,
        v_mut_prev=tuple(tuple(r) for r in v_mut),
    )


def _zeros_like(value):
    if isinstance(value, tuple):
        return tuple(_zeros_like(v) for v in value)
    return 0.0


def zero_rates(h):
    """Copy of a history with every derivative-like term (``L di/dt``, ``C dv/dt``) zeroed.

    A trapezoidal step of size dt from such a history is a backward Euler
    step of size dt/2.  Histories that nest other histories are handled
    recursively; ``None`` passes through.
    """
    if h is None:
        return None
    rates = getattr(h, "rate_fields", None)
    if rates is None:
        return replace(h, **{f.name: zero_rates(getattr(h, f.name)) for f in fields(h)})
    return replace(h, **{name: _zeros_like(getattr(h, name)) for name in rates})


def _lincomb(a, b, wa: float, wb: float):
    if isinstance(a, tuple):
        return tuple(_lincomb(x, y, wa, wb) for x, y in zip(a, b))
    return wa * a + wb * b


def combine_rates(h_a, h_b, wa: float, wb: float):
    """History shaped like ``h_a`` whose derivative terms are ``wa*h_a + wb*h_b``."""
    if h_a is None:
        return None
    rates = getattr(h_a, "rate_fields", None)
    if rates is None:
        return replace(h_a, **{
            f.name: combine_rates(getattr(h_a, f.name), getattr(h_b, f.name), wa, wb)
            for f in fields(h_a)
            if is_dataclass(getattr(h_a, f.name))
        })
    return replace(h_a, **{name: _lincomb(getattr(h_a, name), getattr(h_b, name), wa, wb) for name in rates})


def merge_rates(h_state, h_rate):
    """State terms from ``h_state`` combined with derivative terms from ``h_rate``."""
    if h_state is None:
        return None
    rates = getattr(h_state, "rate_fields", None)
    if rates is None:
        return replace(h_state, **{
            f.name: merge_rates(getattr(h_state, f.name), getattr(h_rate, f.name))
            for f in fields(h_state)
            if is_dataclass(getattr(h_state, f.name))
        })
    return replace(h_state, **{name: getattr(h_rate, name) for name in rates})
