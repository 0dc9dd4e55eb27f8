"""
Modified nodal analysis: unknown bookkeeping and element stamps.

The system ``Y x = J`` is accumulated as triplets.  Linear stamps persist for
a whole time step; nonlinear stamps are discarded and re-stamped on every
Newton iteration (``Y = Y_lin + Y_nlin``).  Ground is elided: any stamp
touching slot ``GROUND`` is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import scipy.io
import scipy.sparse as sp

from .netlist import GROUND as GROUND_NODE
from .netlist import Circuit, DeviceKind

GROUND = -1

IM_VARIABLES = ("Ids", "Iqs", "Idr", "Iqr", "wr")

_VSOURCES = (DeviceKind.VsourceSin, DeviceKind.VsourceDc)


@dataclass
class UnknownIndex:
    """Bijection between circuit quantities and solution-vector slots.

    Ordering: non-ground nodes (first appearance), voltage-source branch
    currents, coupled-coil branch currents (two per ``K`` device), then five
    slots per induction motor.
    """

    node_slot: Dict[str, int] = field(default_factory=dict)
    vsrc_slot: Dict[str, int] = field(default_factory=dict)
    kbranch_slots: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    im_slots: Dict[str, Tuple[int, int, int, int, int]] = field(default_factory=dict)
    total: int = 0

    def node(self, name: str) -> int:
        return GROUND if name == GROUND_NODE else self.node_slot[name]

    @property
    def names(self) -> List[str]:
        labels = [""] * self.total
        for node, slot in self.node_slot.items():
            labels[slot] = f"V({node})"
        for src, slot in self.vsrc_slot.items():
            labels[slot] = f"I({src})"
        for dev, slots in self.kbranch_slots.items():
            for k, slot in enumerate(slots, start=1):
                labels[slot] = f"I({dev}.{k})"
        for dev, slots in self.im_slots.items():
            for var, slot in zip(IM_VARIABLES, slots):
                labels[slot] = f"{var}({dev})"
        return labels


def build_index(circuit: Circuit) -> UnknownIndex:
    idx = UnknownIndex()
    n = 0
    for node in circuit.node_names:
        if node != GROUND_NODE and node not in idx.node_slot:
            idx.node_slot[node] = n
            n += 1
    for dev in circuit.devices:
        if dev.kind in _VSOURCES:
            idx.vsrc_slot[dev.name] = n
            n += 1
    for dev in circuit.devices:
        if dev.kind is DeviceKind.MutualK:
            idx.kbranch_slots[dev.name] = (n, n + 1)
            n += 2
    for dev in circuit.devices:
        if dev.kind is DeviceKind.InductionMotor:
            idx.im_slots[dev.name] = tuple(range(n, n + 5))
            n += 5
    idx.total = n
    return idx


class SystemAssembly:
    """Triplet accumulator for one time step of ``Y x = J``.

    Linear and nonlinear contributions are kept apart; ``clear_nonlinear``
    drops only the latter, so the linear part of a time step is stamped once.
    """

    def __init__(self, n: int):
        self.n = n
        self._lin = ([], [], [])
        self._nlin = ([], [], [])
        self._rhs_lin = ([], [])
        self._rhs_nlin = ([], [])
        self._lin_arrays = None

    def add(self, row: int, col: int, value: float, nonlinear: bool = False) -> None:
        if row == GROUND or col == GROUND:
            return
        rows, cols, vals = self._nlin if nonlinear else self._lin
        rows.append(row)
        cols.append(col)
        vals.append(value)
        if not nonlinear:
            self._lin_arrays = None

    def add_rhs(self, row: int, value: float, nonlinear: bool = False) -> None:
        if row == GROUND:
            return
        rows, vals = self._rhs_nlin if nonlinear else self._rhs_lin
        rows.append(row)
        vals.append(value)
        if not nonlinear:
            self._lin_arrays = None

    def clear_nonlinear(self) -> None:
        self._nlin = ([], [], [])
        self._rhs_nlin = ([], [])

    @property
    def triplets_lin(self) -> List[Tuple[int, int, float]]:
        return list(zip(*self._lin))

    @property
    def triplets_nlin(self) -> List[Tuple[int, int, float]]:
        return list(zip(*self._nlin))

    @property
    def j_lin(self) -> np.ndarray:
        return _sum_rhs(*self._rhs_lin, self.n)

    @property
    def j_nlin(self) -> np.ndarray:
        return _sum_rhs(*self._rhs_nlin, self.n)

    @property
    def has_nonlinear(self) -> bool:
        return bool(self._nlin[0] or self._rhs_nlin[0])

    def linear_arrays(self):
        # cached: the linear stamps do not change between Newton iterations
        if self._lin_arrays is None:
            rows, cols, vals = self._lin
            self._lin_arrays = (
                np.array(rows, dtype=np.int64),
                np.array(cols, dtype=np.int64),
                np.array(vals, dtype=float),
                self.j_lin,
            )
        return self._lin_arrays


def _sum_rhs(rows, vals, n: int) -> np.ndarray:
    out = np.zeros(n)
    if rows:
        rows = np.asarray(rows, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        # value-aware ordering keeps the sum independent of stamping order
        order = np.lexsort((vals, rows))
        np.add.at(out, rows[order], vals[order])
    return out


def sum_triplets(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, n: int) -> sp.csc_matrix:
    """Compressed-column matrix with duplicate entries summed in a canonical order."""
    if rows.size == 0:
        return sp.csc_matrix((n, n))
    order = np.lexsort((vals, rows, cols))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = cols * n + rows
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    data = np.add.reduceat(vals, starts)
    indices = rows[starts].astype(np.int32)
    indptr = np.searchsorted(cols[starts], np.arange(n + 1)).astype(np.int32)
    return sp.csc_matrix((data, indices, indptr), shape=(n, n))


def assemble(asm: SystemAssembly) -> Tuple[sp.csc_matrix, np.ndarray]:
    """Sum duplicate triplets and return ``(Y, J)`` with lin and nlin parts combined."""
    rows, cols, vals, j_lin = asm.linear_arrays()
    if not asm.has_nonlinear:
        return sum_triplets(rows, cols, vals, asm.n), j_lin.copy()
    nr, nc, nv = asm._nlin
    y = sum_triplets(
        np.concatenate([rows, np.asarray(nr, dtype=np.int64)]),
        np.concatenate([cols, np.asarray(nc, dtype=np.int64)]),
        np.concatenate([vals, np.asarray(nv, dtype=float)]),
        asm.n,
    )
    return y, j_lin + asm.j_nlin


def stamp_conductance(asm: SystemAssembly, m: int, n: int, g: float, nonlinear: bool = False) -> None:
    asm.add(m, m, g, nonlinear)
    asm.add(n, n, g, nonlinear)
    asm.add(m, n, -g, nonlinear)
    asm.add(n, m, -g, nonlinear)


def stamp_resistor(asm: SystemAssembly, m: int, n: int, resistance: float) -> None:
    stamp_conductance(asm, m, n, 1.0 / resistance)


def stamp_current_source(asm: SystemAssembly, m: int, n: int, current: float,
                         nonlinear: bool = False) -> None:
    """Current ``current`` flows from node m through the source into node n."""
    asm.add_rhs(m, -current, nonlinear)
    asm.add_rhs(n, current, nonlinear)


def stamp_voltage_source(asm: SystemAssembly, m: int, n: int, branch: int, voltage: float) -> None:
    """Constrain ``V_m - V_n = voltage``.

    The branch unknown is the current flowing from node m through the
    source to node n, so a source delivering power reports a negative value.
    """
    asm.add(m, branch, 1.0)
    asm.add(n, branch, -1.0)
    asm.add(branch, m, 1.0)
    asm.add(branch, n, -1.0)
    asm.add_rhs(branch, voltage)


def write_matrix_market(prefix: str, y: sp.spmatrix, j: np.ndarray) -> Tuple[str, str]:
    """Dump ``Y`` and ``J`` as MatrixMarket coordinate files ``<prefix>_Y.mtx``, ``<prefix>_J.mtx``."""
    y_path = f"{prefix}_Y.mtx"
    j_path = f"{prefix}_J.mtx"
    scipy.io.mmwrite(y_path, sp.coo_matrix(y), comment="MNA system matrix Y")
    scipy.io.mmwrite(j_path, sp.coo_matrix(np.asarray(j).reshape(-1, 1)), comment="MNA source vector J")
    return y_path, j_path
