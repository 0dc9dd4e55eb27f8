"""
Induction motor in the stationary dq frame.

The motor adds five unknowns (I_ds, I_qs, I_dr, I_qr, w_r) and five rows:
four KVL loop equations (ds, qs, dr, qr) and one KCL-style mechanical
equation in which inertia plays the role of a capacitor.  Speed-voltage
products and the electrical torque are linearized around the Newton iterate
and re-stamped every iteration; everything else is stamped once per step.

Conventions
-----------
* theta = 0 (stationary frame), so the stator rows carry no speed terms.
* ``pbeta`` selects the rotor speed-voltage sign, ``p(beta) = pbeta * w_r``.
  With ``pbeta = -1`` (default) the speed-voltage power equals the converted
  mechanical power ``T_E * 2*w_r/Np``; ``pbeta = +1`` reproduces the opposite
  sign convention, under which the machine is not energy-consistent with the
  torque expression below.
* Rotor windings are shorted (v_dr = v_qr = 0).
* The swing equation is ``J*p(w_r) = T_E - T_L(w_r) - D*w_r`` with
  ``T_L = TL0 + TL1*w_r + TL2*w_r**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .companion import (
    CapacitorHistory,
    CoupledCoilHistory,
    capacitor_companion,
    capacitor_update,
    coupled_companion,
    coupled_initial,
    coupled_update,
)
from .dqframe import inverse_park_matrix, park_matrix
from .mna import SystemAssembly

# stationary frame
_PARK = park_matrix(0.0)
_INV_PARK = inverse_park_matrix(0.0)

DS, QS, DR, QR, WR = range(5)


@dataclass(frozen=True)
class ImParams:
    Rs: float
    Rr: float
    Lls: float
    Llr: float
    Lm: float
    J: float
    D: float
    Np: float
    TL0: float = 0.0
    TL1: float = 0.0
    TL2: float = 0.0
    pbeta: float = -1.0

    @property
    def Ls(self) -> float:
        return self.Lls + self.Lm

    @property
    def Lr(self) -> float:
        return self.Llr + self.Lm

    @property
    def torque_constant(self) -> float:
        return 0.75 * self.Lm * self.Np

    def axis_inductance(self) -> np.ndarray:
        """Inductance matrix of one axis, coils ordered (stator, rotor)."""
        return np.array([[self.Ls, self.Lm], [self.Lm, self.Lr]])

    @classmethod
    def from_params(cls, params) -> "ImParams":
        names = cls.__dataclass_fields__
        return cls(**{k: float(params[k]) for k in names if k in params})


@dataclass(frozen=True)
class ImState:
    I_ds: float = 0.0
    I_qs: float = 0.0
    I_dr: float = 0.0
    I_qr: float = 0.0
    omega_r: float = 0.0

    @classmethod
    def from_vector(cls, x: np.ndarray, slots: Sequence[int]) -> "ImState":
        return cls(*(float(x[s]) for s in slots))

    def as_array(self) -> np.ndarray:
        return np.array([self.I_ds, self.I_qs, self.I_dr, self.I_qr, self.omega_r])


@dataclass(frozen=True)
class ImHistory:
    d: CoupledCoilHistory  # coils (ds, dr)
    q: CoupledCoilHistory  # coils (qs, qr)
    mech: CapacitorHistory  # "voltage" w_r, "current" J*p(w_r)


def flux(state: ImState, p: ImParams) -> Tuple[float, float, float, float]:
    return (
        p.Ls * state.I_ds + p.Lm * state.I_dr,
        p.Ls * state.I_qs + p.Lm * state.I_qr,
        p.Lr * state.I_dr + p.Lm * state.I_ds,
        p.Lr * state.I_qr + p.Lm * state.I_qs,
    )


def electrical_torque(state: ImState, p: ImParams) -> float:
    return p.torque_constant * (state.I_dr * state.I_qs - state.I_qr * state.I_ds)


def load_torque(omega_r: float, p: ImParams) -> float:
    return p.TL0 + p.TL1 * omega_r + p.TL2 * omega_r * omega_r


def mechanical_speed(omega_r: float, p: ImParams) -> float:
    return 2.0 * omega_r / p.Np


def linearize_bilinear(a: float, x_k: float, y_k: float) -> Tuple[float, float, float]:
    """First-order Taylor expansion of ``a*x*y`` about ``(x_k, y_k)``.

    Returns ``(coeff_x, coeff_y, const)`` such that
    ``a*x*y ~= coeff_x*x + coeff_y*y + const``.
    """
    return a * y_k, a * x_k, -a * x_k * y_k


def stator_voltages(v_abc) -> Tuple[float, float]:
    v = _PARK @ np.asarray(v_abc, dtype=float)
    return float(v[1]), float(v[2])


def flux_derivatives(state: ImState, v_ds: float, v_qs: float, p: ImParams) -> np.ndarray:
    """``p(psi)`` for the (ds, qs, dr, qr) loops from the continuous-time equations."""
    psi_ds, psi_qs, psi_dr, psi_qr = flux(state, p)
    w = p.pbeta * state.omega_r
    return np.array(
        [
            v_ds - p.Rs * state.I_ds,
            v_qs - p.Rs * state.I_qs,
            -p.Rr * state.I_dr + psi_qr * w,
            -p.Rr * state.I_qr - psi_dr * w,
        ]
    )


def initial_history(state: ImState, v_abc, p: ImParams) -> ImHistory:
    """Companion history consistent with the continuous equations at t0."""
    v_ds, v_qs = stator_voltages(v_abc)
    dpsi = flux_derivatives(state, v_ds, v_qs, p)
    lax = p.axis_inductance()
    acc = electrical_torque(state, p) - load_torque(state.omega_r, p) - p.D * state.omega_r
    return ImHistory(
        d=coupled_initial(lax, (state.I_ds, state.I_dr), (dpsi[0], dpsi[2])),
        q=coupled_initial(lax, (state.I_qs, state.I_qr), (dpsi[1], dpsi[3])),
        mech=CapacitorHistory(v_prev=state.omega_r, i_prev=acc),
    )


def update_history(h: ImHistory, state: ImState, dt: float, p: ImParams) -> ImHistory:
    lax = p.axis_inductance()
    return ImHistory(
        d=coupled_update(lax, dt, h.d, (state.I_ds, state.I_dr)),
        q=coupled_update(lax, dt, h.q, (state.I_qs, state.I_qr)),
        mech=capacitor_update(p.J, dt, h.mech, state.omega_r),
    )


def stamp_im_linear(asm: SystemAssembly, slots: Sequence[int], abc_slots: Sequence[int],
                    p: ImParams, h: ImHistory, dt: float) -> None:
    """Stamps that stay fixed across Newton iterations of one time step."""
    s = slots
    lax = p.axis_inductance()

    # inverse Park: motor phase currents leave the abc nodes
    for phase, node in enumerate(abc_slots):
        asm.add(node, s[DS], _INV_PARK[phase, 1])
        asm.add(node, s[QS], _INV_PARK[phase, 2])
        # Park: stator loop voltages are the transformed node voltages
        asm.add(s[DS], node, -_PARK[1, phase])
        asm.add(s[QS], node, -_PARK[2, phase])

    for hist, (stator, rotor) in ((h.d, (DS, DR)), (h.q, (QS, QR))):
        for k, (row, partner, res) in enumerate(((stator, rotor, p.Rs), (rotor, stator, p.Rr))):
            r_eq, gain, v_hist = coupled_companion(lax, dt, hist, k)
            asm.add(s[row], s[row], res + r_eq)
            asm.add(s[row], s[partner], gain[1 - k])
            asm.add_rhs(s[row], -v_hist)

    g_j, i_hist = capacitor_companion(p.J, dt, h.mech)
    asm.add(s[WR], s[WR], g_j + p.D + p.TL1)
    asm.add_rhs(s[WR], -i_hist - p.TL0)


def _stamp_bilinear(asm: SystemAssembly, row: int, col_x: int, col_y: int,
                    a: float, x_k: float, y_k: float) -> None:
    cx, cy, const = linearize_bilinear(a, x_k, y_k)
    asm.add(row, col_x, cx, nonlinear=True)
    asm.add(row, col_y, cy, nonlinear=True)
    asm.add_rhs(row, -const, nonlinear=True)


def stamp_im_nonlinear(asm: SystemAssembly, slots: Sequence[int], p: ImParams,
                       iterate: ImState) -> None:
    """Linearized speed-voltage, torque and load-torque terms at ``iterate``."""
    s = slots
    it = iterate
    w = it.omega_r
    sign = p.pbeta
    # dr row: -pbeta * w * psi_qr
    _stamp_bilinear(asm, s[DR], s[WR], s[QR], -sign * p.Lr, w, it.I_qr)
    _stamp_bilinear(asm, s[DR], s[WR], s[QS], -sign * p.Lm, w, it.I_qs)
    # qr row: +pbeta * w * psi_dr
    _stamp_bilinear(asm, s[QR], s[WR], s[DR], sign * p.Lr, w, it.I_dr)
    _stamp_bilinear(asm, s[QR], s[WR], s[DS], sign * p.Lm, w, it.I_ds)
    # mechanical row: TL2*w^2 - k*(I_dr*I_qs - I_qr*I_ds)
    _stamp_bilinear(asm, s[WR], s[WR], s[WR], p.TL2, w, w)
    k = p.torque_constant
    _stamp_bilinear(asm, s[WR], s[DR], s[QS], -k, it.I_dr, it.I_qs)
    _stamp_bilinear(asm, s[WR], s[QR], s[DS], k, it.I_qr, it.I_ds)


def stamp_im(asm: SystemAssembly, slots: Sequence[int], abc_slots: Sequence[int], p: ImParams,
             iterate: ImState, h: ImHistory, dt: float) -> None:
    stamp_im_linear(asm, slots, abc_slots, p, h, dt)
    stamp_im_nonlinear(asm, slots, p, iterate)


def residual(state: ImState, v_abc, h: ImHistory, dt: float, p: ImParams) -> np.ndarray:
    """The five discretized motor equations evaluated without linearization."""
    v_ds, v_qs = stator_voltages(v_abc)
    lax = p.axis_inductance()
    cur = state
    psi_ds, psi_qs, psi_dr, psi_qr = flux(cur, p)
    w = p.pbeta * cur.omega_r
    out = np.empty(5)
    for hist, (stator, rotor), (i_s, i_r) in (
        (h.d, (DS, DR), (cur.I_ds, cur.I_dr)),
        (h.q, (QS, QR), (cur.I_qs, cur.I_qr)),
    ):
        r0, g0, vh0 = coupled_companion(lax, dt, hist, 0)
        r1, g1, vh1 = coupled_companion(lax, dt, hist, 1)
        out[stator] = p.Rs * i_s + r0 * i_s + g0[1] * i_r + vh0
        out[rotor] = p.Rr * i_r + r1 * i_r + g1[0] * i_s + vh1
    out[DS] -= v_ds
    out[QS] -= v_qs
    out[DR] -= w * psi_qr
    out[QR] += w * psi_dr
    g_j, i_hist = capacitor_companion(p.J, dt, h.mech)
    out[WR] = (
        g_j * cur.omega_r + i_hist + p.D * cur.omega_r
        + load_torque(cur.omega_r, p) - electrical_torque(cur, p)
    )
    return out
