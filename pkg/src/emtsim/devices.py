"""
Per-device stamping and history handling used by the engine.

Each element knows three networks: the DC operating-point network (inductors
shorted, capacitors open, motors de-energized), the linear part of the
companion network for one time step, and, for motors, the nonlinear part that
is re-stamped every Newton iteration.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import induction_motor as im
from .companion import (
    CapacitorHistory,
    InductorHistory,
    capacitor_companion,
    capacitor_update,
    coupled_companion,
    coupled_initial,
    coupled_update,
    inductor_companion,
    inductor_update,
)
from .mna import (
    GROUND,
    SystemAssembly,
    UnknownIndex,
    stamp_conductance,
    stamp_current_source,
    stamp_resistor,
    stamp_voltage_source,
)
from .netlist import Circuit, Device, DeviceKind


def _value(x: np.ndarray, slot: int) -> float:
    return 0.0 if slot == GROUND else float(x[slot])


class Element:
    nonlinear = False
    dc_branches = 0
    derived_names: Tuple[str, ...] = ()

    def __init__(self, dev: Device, idx: UnknownIndex):
        self.dev = dev
        self.name = dev.name
        self.nodes = tuple(idx.node(n) for n in dev.nodes)

    def voltage(self, x: np.ndarray, a: int = 0, b: int = 1) -> float:
        return _value(x, self.nodes[a]) - _value(x, self.nodes[b])

    def stamp_dc(self, asm: SystemAssembly, t0: float, branches: Sequence[int]) -> None:
        self.stamp_linear(asm, t0, None, None)

    def initial_history(self, x_dc: np.ndarray, branches: Sequence[int], t0: float):
        return None

    def stamp_linear(self, asm: SystemAssembly, t: float, dt: Optional[float], hist) -> None:
        raise NotImplementedError

    def stamp_nonlinear(self, asm: SystemAssembly, x: np.ndarray, hist, dt: float) -> None:
        pass

    def update(self, hist, x: np.ndarray, t: float, dt: float):
        return hist

    def derived(self, x: np.ndarray, hist) -> Tuple[float, ...]:
        return ()


class Resistor(Element):
    def stamp_linear(self, asm, t, dt, hist):
        stamp_resistor(asm, self.nodes[0], self.nodes[1], self.dev["R"])


class CurrentSource(Element):
    def stamp_linear(self, asm, t, dt, hist):
        stamp_current_source(asm, self.nodes[0], self.nodes[1], self.dev["I"])


class VoltageSource(Element):
    def __init__(self, dev, idx):
        super().__init__(dev, idx)
        self.branch = idx.vsrc_slot[dev.name]

    def value(self, t: float) -> float:
        if self.dev.kind is DeviceKind.VsourceDc:
            return self.dev["V"]
        omega = 2.0 * math.pi * self.dev["freq"]
        return self.dev["Vm"] * math.cos(omega * t + math.radians(self.dev["phase"]))

    def stamp_linear(self, asm, t, dt, hist):
        stamp_voltage_source(asm, self.nodes[0], self.nodes[1], self.branch, self.value(t))

    def constraint_error(self, x: np.ndarray, t: float) -> float:
        return abs(self.voltage(x) - self.value(t))


class Inductor(Element):
    derived_names = ("I",)

    def __init__(self, dev, idx):
        super().__init__(dev, idx)
        self.dc_branches = 1 if dev.ic is None else 0

    def stamp_dc(self, asm, t0, branches):
        m, n = self.nodes
        if self.dev.ic is None:
            stamp_voltage_source(asm, m, n, branches[0], 0.0)
        else:
            stamp_current_source(asm, m, n, self.dev.ic)

    def initial_history(self, x_dc, branches, t0):
        i0 = float(x_dc[branches[0]]) if self.dev.ic is None else self.dev.ic
        return InductorHistory(i_prev=i0, v_prev=self.voltage(x_dc))

    def stamp_linear(self, asm, t, dt, hist):
        g, i_hist = inductor_companion(self.dev["L"], dt, hist)
        m, n = self.nodes
        stamp_conductance(asm, m, n, g)
        stamp_current_source(asm, m, n, i_hist)

    def update(self, hist, x, t, dt):
        return inductor_update(self.dev["L"], dt, hist, self.voltage(x))

    def derived(self, x, hist):
        return (hist.i_prev,)


class Capacitor(Element):
    derived_names = ("I",)

    def __init__(self, dev, idx):
        super().__init__(dev, idx)
        self.dc_branches = 0 if dev.ic is None else 1

    def stamp_dc(self, asm, t0, branches):
        if self.dev.ic is not None:
            stamp_voltage_source(asm, self.nodes[0], self.nodes[1], branches[0], self.dev.ic)

    def initial_history(self, x_dc, branches, t0):
        i0 = float(x_dc[branches[0]]) if self.dev.ic is not None else 0.0
        return CapacitorHistory(v_prev=self.voltage(x_dc), i_prev=i0)

    def stamp_linear(self, asm, t, dt, hist):
        g, i_hist = capacitor_companion(self.dev["C"], dt, hist)
        m, n = self.nodes
        stamp_conductance(asm, m, n, g)
        stamp_current_source(asm, m, n, i_hist)

    def update(self, hist, x, t, dt):
        return capacitor_update(self.dev["C"], dt, hist, self.voltage(x))

    def derived(self, x, hist):
        return (hist.i_prev,)


class CoupledInductors(Element):
    """Two magnetically coupled coils, each with a branch-current unknown."""

    def __init__(self, dev, idx):
        super().__init__(dev, idx)
        self.branches = idx.kbranch_slots[dev.name]
        self.inductance = np.array([[dev["L1"], dev["M"]], [dev["M"], dev["L2"]]])

    def _coil_nodes(self, k: int) -> Tuple[int, int]:
        return self.nodes[2 * k], self.nodes[2 * k + 1]

    def _ic(self, k: int) -> Optional[float]:
        return None if self.dev.ic is None else self.dev.ic[k]

    def stamp_dc(self, asm, t0, branches):
        for k, b in enumerate(self.branches):
            m, n = self._coil_nodes(k)
            ic = self._ic(k)
            if ic is None:
                stamp_voltage_source(asm, m, n, b, 0.0)
            else:
                asm.add(m, b, 1.0)
                asm.add(n, b, -1.0)
                asm.add(b, b, 1.0)
                asm.add_rhs(b, ic)

    def initial_history(self, x_dc, branches, t0):
        i0 = [float(x_dc[b]) for b in self.branches]
        v0 = [self.voltage(x_dc, 0, 1), self.voltage(x_dc, 2, 3)]
        return coupled_initial(self.inductance, i0, v0)

    def stamp_linear(self, asm, t, dt, hist):
        for k, b in enumerate(self.branches):
            m, n = self._coil_nodes(k)
            r_eq, gain, v_hist = coupled_companion(self.inductance, dt, hist, k)
            asm.add(m, b, 1.0)
            asm.add(n, b, -1.0)
            # V_m - V_n - r_eq*i_k - gain*i_j = v_hist
            asm.add(b, m, 1.0)
            asm.add(b, n, -1.0)
            asm.add(b, b, -r_eq)
            asm.add(b, self.branches[1 - k], -gain[1 - k])
            asm.add_rhs(b, v_hist)

    def update(self, hist, x, t, dt):
        return coupled_update(self.inductance, dt, hist, [x[b] for b in self.branches])


class InductionMotor(Element):
    nonlinear = True
    derived_names = ("Te", "psi_ds", "psi_qs", "psi_dr", "psi_qr", "wmech")

    def __init__(self, dev, idx):
        super().__init__(dev, idx)
        self.slots = idx.im_slots[dev.name]
        self.params = im.ImParams.from_params(dev.params)
        self.wr0 = 0.0 if dev.ic is None else float(dev.ic)

    def stamp_dc(self, asm, t0, branches):
        # de-energized at t0: currents zero, speed at its initial value
        for k, slot in enumerate(self.slots):
            asm.add(slot, slot, 1.0)
        asm.add_rhs(self.slots[im.WR], self.wr0)

    def state(self, x: np.ndarray) -> im.ImState:
        return im.ImState.from_vector(x, self.slots)

    def v_abc(self, x: np.ndarray) -> List[float]:
        return [_value(x, n) for n in self.nodes]

    def initial_history(self, x_dc, branches, t0):
        return im.initial_history(self.state(x_dc), self.v_abc(x_dc), self.params)

    def stamp_linear(self, asm, t, dt, hist):
        im.stamp_im_linear(asm, self.slots, self.nodes, self.params, hist, dt)

    def stamp_nonlinear(self, asm, x, hist, dt):
        im.stamp_im_nonlinear(asm, self.slots, self.params, self.state(x))

    def update(self, hist, x, t, dt):
        return im.update_history(hist, self.state(x), dt, self.params)

    def residual(self, x: np.ndarray, hist, dt: float) -> np.ndarray:
        return im.residual(self.state(x), self.v_abc(x), hist, dt, self.params)

    def derived(self, x, hist):
        st = self.state(x)
        p = self.params
        return (im.electrical_torque(st, p), *im.flux(st, p), im.mechanical_speed(st.omega_r, p))


_CLASSES = {
    DeviceKind.ResistorR: Resistor,
    DeviceKind.InductorL: Inductor,
    DeviceKind.CapacitorC: Capacitor,
    DeviceKind.MutualK: CoupledInductors,
    DeviceKind.VsourceSin: VoltageSource,
    DeviceKind.VsourceDc: VoltageSource,
    DeviceKind.IsourceDc: CurrentSource,
    DeviceKind.InductionMotor: InductionMotor,
}


def build_elements(circuit: Circuit, idx: UnknownIndex) -> List[Element]:
    return [_CLASSES[dev.kind](dev, idx) for dev in circuit.devices]


def dc_conducting_edges(circuit: Circuit) -> List[Tuple[str, str, str]]:
    """(device, node, node) pairs that conduct in the DC operating-point network."""
    edges = []
    for dev in circuit.devices:
        kind = dev.kind
        if kind in (DeviceKind.ResistorR, DeviceKind.InductorL, DeviceKind.VsourceSin, DeviceKind.VsourceDc):
            if kind is DeviceKind.InductorL and dev.ic is not None:
                continue
            edges.append((dev.name, dev.nodes[0], dev.nodes[1]))
        elif kind is DeviceKind.CapacitorC and dev.ic is not None:
            edges.append((dev.name, dev.nodes[0], dev.nodes[1]))
        elif kind is DeviceKind.MutualK:
            for k in range(2):
                if dev.ic is None or dev.ic[k] is None:
                    edges.append((dev.name, dev.nodes[2 * k], dev.nodes[2 * k + 1]))
    return edges


def floating_nodes(circuit: Circuit) -> Dict[str, List[str]]:
    """Nodes with no DC path to ground, mapped to the devices touching them."""
    adj: Dict[str, set] = {n: set() for n in circuit.node_names}
    adj.setdefault("0", set())
    for _, a, b in dc_conducting_edges(circuit):
        adj[a].add(b)
        adj[b].add(a)
    reached = {"0"}
    stack = ["0"]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in reached:
                reached.add(nxt)
                stack.append(nxt)
    out: Dict[str, List[str]] = {}
    for dev in circuit.devices:
        for node in dev.nodes:
            if node not in reached:
                out.setdefault(node, [])
                if dev.name not in out[node]:
                    out[node].append(dev.name)
    return out
