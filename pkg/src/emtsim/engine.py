"""
Transient engine: DC operating point, Newton-Raphson, sparse LU and the
LTE-controlled recursive time loop.

Histories are immutable and only advanced for accepted steps, so a rejected
step leaves no trace.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .companion import combine_rates, merge_rates, zero_rates
from .devices import Element, VoltageSource, build_elements, floating_nodes
from .mna import SystemAssembly, UnknownIndex, assemble, build_index
from .netlist import Circuit

log = logging.getLogger(__name__)

# probe step for the t0 derivative terms, relative to the smallest step
RATE_PROBE = 1e-3


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class MaxIterationsExceeded(SolverError):
    def __init__(self, x: np.ndarray, residual: float, iterations: int):
        self.x = x
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Newton-Raphson did not converge in {iterations} iterations (residual {residual:.3e})"
        )


class SimulationError(SolverError):
    """A time step failed even after the dt/2 retry."""

    def __init__(self, time: float, cause: Exception):
        self.time = time
        self.cause = cause
        super().__init__(f"simulation failed at t = {time!r} s: {cause}")


@dataclass
class SolverConfig:
    dt0: float = 1e-5
    t_stop: float = 0.0
    dt_min: float = 1e-5
    dt_max: float = 1e-5
    lte_tol: float = 1e-4
    nr_tol_dx: float = 1e-8
    nr_tol_resid: float = 1e-6
    nr_max_iter: int = 50
    audit: bool = True

    def __post_init__(self):
        if self.nr_max_iter < 2:
            raise ValueError("nr_max_iter must be at least 2")
        for name in ("dt0", "dt_min", "dt_max", "lte_tol", "nr_tol_dx", "nr_tol_resid"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_stop < 0:
            raise ValueError("t_stop must be non-negative")

    @property
    def fixed_step(self) -> bool:
        return self.dt_min == self.dt_max

    @classmethod
    def from_circuit(cls, circuit: Circuit, **overrides) -> "SolverConfig":
        tr = circuit.tran
        base = dict(dt0=tr.dt0, t_stop=tr.t_stop, dt_min=tr.dt_min, dt_max=tr.dt_max, lte_tol=tr.lte_tol)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


def lu_solve(y: sp.spmatrix, j: np.ndarray) -> np.ndarray:
    if y.shape[0] == 0:
        return np.zeros(0)
    try:
        x = spla.splu(sp.csc_matrix(y)).solve(j)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution is not finite")
    return x


def _norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def nr_solve(stamp_fn: Callable[[np.ndarray], Tuple[sp.spmatrix, np.ndarray]],
             x_guess: np.ndarray, cfg: SolverConfig, linear: bool = False) -> Tuple[np.ndarray, int]:
    """Newton-Raphson on re-stamped linearizations.

    ``stamp_fn(x)`` returns the system linearized at ``x``.  Converged when
    ``|dx| <= nr_tol_dx * max(1, |x|)`` and the nonlinear residual
    ``|Y(x) x - J(x)| <= nr_tol_resid * max(1, |J|)`` (infinity norms).
    A linear system is solved once.
    """
    x = np.asarray(x_guess, dtype=float)
    y, j = stamp_fn(x)
    if linear:
        return lu_solve(y, j), 1
    resid = math.inf
    for it in range(1, cfg.nr_max_iter + 1):
        x_new = lu_solve(y, j)
        dx = _norm(x_new - x)
        y, j = stamp_fn(x_new)
        resid = _norm(y @ x_new - j)
        x = x_new
        if dx <= cfg.nr_tol_dx * max(1.0, _norm(x)) and resid <= cfg.nr_tol_resid * max(1.0, _norm(j)):
            return x, it
    raise MaxIterationsExceeded(x, resid, cfg.nr_max_iter)


def adapt_dt(err: float, dt: float, cfg: SolverConfig) -> Tuple[bool, float, bool]:
    """Step-size policy. Returns ``(accept, dt_next, forced)``.

    ``forced`` flags an over-tolerance step accepted because dt is already at
    its lower bound.
    """
    if err > cfg.lte_tol:
        if dt <= cfg.dt_min:
            return True, cfg.dt_min, True
        return False, max(dt / 2.0, cfg.dt_min), False
    if err < cfg.lte_tol / 10.0:
        return True, min(2.0 * dt, cfg.dt_max), False
    return True, dt, False


@dataclass(frozen=True)
class SimState:
    t: float
    x: np.ndarray
    histories: Tuple


@dataclass
class Waveforms:
    names: List[str]
    derived_names: List[str]
    times: List[float] = field(default_factory=list)
    values: List[np.ndarray] = field(default_factory=list)
    derived: List[np.ndarray] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    kcl_residual: List[float] = field(default_factory=list)
    vsrc_error: List[float] = field(default_factory=list)
    forced_steps: List[float] = field(default_factory=list)
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def columns(self) -> List[str]:
        return self.names + self.derived_names

    def column(self, name: str) -> np.ndarray:
        if name in self.names:
            k = self.names.index(name)
            return np.array([row[k] for row in self.values])
        if name in self.derived_names:
            k = self.derived_names.index(name)
            return np.array([row[k] for row in self.derived])
        raise KeyError(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def matrix(self, columns: Optional[Sequence[str]] = None) -> np.ndarray:
        cols = list(columns) if columns is not None else self.names
        return np.column_stack([self.t] + [self.column(c) for c in cols]) if len(self) else np.zeros((0, len(cols) + 1))


class Simulator:
    """One transient simulation of a validated circuit."""

    def __init__(self, circuit: Circuit, cfg: Optional[SolverConfig] = None):
        self.circuit = circuit
        self.cfg = cfg if cfg is not None else SolverConfig.from_circuit(circuit)
        self.index: UnknownIndex = build_index(circuit)
        self.elements: List[Element] = build_elements(circuit, self.index)
        self.nonlinear = [k for k, el in enumerate(self.elements) if el.nonlinear]
        self.sources = [el for el in self.elements if isinstance(el, VoltageSource)]
        self.n = self.index.total

    # -- DC operating point ---------------------------------------------------------

    def _dc_branches(self) -> List[List[int]]:
        out, nxt = [], self.n
        for el in self.elements:
            out.append(list(range(nxt, nxt + el.dc_branches)))
            nxt += el.dc_branches
        return out

    def dc_system(self, t0: float = 0.0) -> Tuple[sp.csc_matrix, np.ndarray, List[List[int]]]:
        branches = self._dc_branches()
        size = self.n + sum(len(b) for b in branches)
        asm = SystemAssembly(size)
        for el, br in zip(self.elements, branches):
            el.stamp_dc(asm, t0, br)
        y, j = assemble(asm)
        return y, j, branches

    def dc_operating_point(self, t0: float = 0.0) -> SimState:
        """Solve the DC network and return the t0 state with initial histories."""
        y, j, branches = self.dc_system(t0)
        try:
            x_dc = lu_solve(y, j)
        except SingularMatrixError:
            floating = floating_nodes(self.circuit)
            if floating:
                detail = ", ".join(f"{n} ({', '.join(devs)})" for n, devs in floating.items())
                raise SingularMatrixError(f"singular DC matrix; nodes with no DC path to ground: {detail}") from None
            raise SingularMatrixError(
                "singular DC matrix; check for loops of voltage sources and inductors"
            ) from None
        hist = tuple(el.initial_history(x_dc, br, t0) for el, br in zip(self.elements, branches))
        state = SimState(t=t0, x=x_dc[: self.n].copy(), histories=hist)
        return self._consistent_rates(state)

    def _consistent_rates(self, state: SimState) -> SimState:
        """Replace the t0 derivative terms by values consistent with the network.

        The DC network fixes inductor currents and capacitor voltages but not
        the voltages across inductors, which an undamped trapezoidal rule would
        carry forward as a persistent ringing.  Two short backward Euler probe
        steps, extrapolated back to t0, supply ``L di/dt`` and ``C dv/dt``.
        """
        eps = RATE_PROBE * min(self.cfg.dt0, self.cfg.dt_min)
        probe = SimState(t=state.t, x=state.x, histories=tuple(zero_rates(h) for h in state.histories))
        try:
            near, _ = self.advance(probe, eps)
            far, _ = self.advance(probe, 2.0 * eps)
        except SolverError as exc:
            log.warning("initial rate probe failed (%s); keeping DC histories", exc)
            return state
        # linear extrapolation of the two probes back to t0
        hist = tuple(
            merge_rates(h0, combine_rates(a, b, 2.0, -1.0))
            for h0, a, b in zip(state.histories, near.histories, far.histories)
        )
        return replace(state, histories=hist)

    # -- one time step ----------------------------------------------------------------

    def _linear_assembly(self, state: SimState, dt: float) -> SystemAssembly:
        t1 = state.t + dt
        asm = SystemAssembly(self.n)
        for el, h in zip(self.elements, state.histories):
            el.stamp_linear(asm, t1, dt, h)
        return asm

    def _stamp_fn(self, asm: SystemAssembly, state: SimState, dt: float):
        def stamp(x: np.ndarray):
            asm.clear_nonlinear()
            for k in self.nonlinear:
                self.elements[k].stamp_nonlinear(asm, x, state.histories[k], dt)
            return assemble(asm)

        return stamp

    def system(self, state: SimState, dt: float, x: np.ndarray) -> Tuple[sp.csc_matrix, np.ndarray]:
        """``(Y, J)`` for the step ``state -> state.t + dt`` linearized at ``x``."""
        asm = self._linear_assembly(state, dt)
        return self._stamp_fn(asm, state, dt)(x)

    def step(self, state: SimState, dt: float) -> Tuple[np.ndarray, int]:
        """Candidate solution at ``state.t + dt``; histories are not touched."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        asm = self._linear_assembly(state, dt)
        return nr_solve(self._stamp_fn(asm, state, dt), state.x, self.cfg, linear=not self.nonlinear)

    def commit(self, state: SimState, x: np.ndarray, dt: float, converged: bool = True) -> SimState:
        """Advance every device history to the converged solution ``x``."""
        assert converged, "histories may only be updated after convergence"
        t1 = state.t + dt
        hist = tuple(el.update(h, x, t1, dt) for el, h in zip(self.elements, state.histories))
        return SimState(t=t1, x=x, histories=hist)

    def advance(self, state: SimState, dt: float) -> Tuple[SimState, int]:
        x, its = self.step(state, dt)
        return self.commit(state, x, dt), its

    def lte_estimate(self, state: SimState, dt: float) -> Tuple[float, SimState, SimState, int]:
        """Step-doubling estimate of the local truncation error.

        Returns ``(err, half_state, mid_state, iterations)`` where ``half_state``
        is the result of two dt/2 steps and ``mid_state`` the state after the
        first of them.
        """
        x_full, its_full = self.step(state, dt)
        mid, its1 = self.advance(state, dt / 2.0)
        half, its2 = self.advance(mid, dt / 2.0)
        err = _norm(x_full - half.x) / (3.0 * max(1.0, _norm(half.x)))
        return err, half, mid, max(its_full, its1, its2)

    # -- auditing -----------------------------------------------------------------------

    def audit(self, prev: SimState, new: SimState, dt: float) -> Tuple[float, float]:
        """Residual ratio ``|Yx - J| / max(1, |J|)`` and worst source-constraint error."""
        y, j = self.system(prev, dt, new.x)
        ratio = _norm(y @ new.x - j) / max(1.0, _norm(j))
        verr = max((s.constraint_error(new.x, new.t) for s in self.sources), default=0.0)
        return ratio, verr

    def audit_dc(self, state: SimState) -> Tuple[float, float]:
        y, j, _ = self.dc_system(state.t)
        x_dc = lu_solve(y, j)
        ratio = _norm(y @ x_dc - j) / max(1.0, _norm(j))
        verr = max((s.constraint_error(state.x, state.t) for s in self.sources), default=0.0)
        return ratio, verr

    # -- driver -------------------------------------------------------------------------

    def new_waveforms(self) -> Waveforms:
        derived_names = []
        for el in self.elements:
            derived_names += [f"{d}({el.name})" for d in el.derived_names]
        return Waveforms(names=self.index.names, derived_names=derived_names)

    def derived(self, state: SimState) -> np.ndarray:
        vals: List[float] = []
        for el, h in zip(self.elements, state.histories):
            vals.extend(el.derived(state.x, h))
        return np.asarray(vals, dtype=float)

    def record(self, wf: Waveforms, state: SimState, dt: float, its: int,
                audit: Optional[Tuple[float, float]]) -> None:
        wf.times.append(state.t)
        wf.values.append(state.x.copy())
        wf.derived.append(self.derived(state))
        wf.steps.append(dt)
        wf.iterations.append(its)
        if audit is not None:
            wf.kcl_residual.append(audit[0])
            wf.vsrc_error.append(audit[1])

    def _attempt(self, state: SimState, dt: float):
        """Advance by dt; returns (err, new_state, prev_of_new, substep, iterations)."""
        if self.cfg.fixed_step:
            new, its = self.advance(state, dt)
            return 0.0, new, state, dt, its
        err, half, mid, its = self.lte_estimate(state, dt)
        return err, half, mid, dt / 2.0, its

    def run(self) -> Waveforms:
        cfg = self.cfg
        wf = self.new_waveforms()
        state = self.dc_operating_point()
        self.record(wf, state, 0.0, 0, self.audit_dc(state) if cfg.audit else None)

        t_stop = cfg.t_stop
        dt = min(cfg.dt0, cfg.dt_max)
        while state.t < t_stop:
            h = dt
            last = state.t + h >= t_stop - 1e-9 * h
            if last:
                h = t_stop - state.t
            try:
                result = self._attempt(state, h)
            except SolverError as first:
                log.warning("step at t=%g with dt=%g failed (%s); retrying with dt/2", state.t, h, first)
                h, last = h / 2.0, False
                try:
                    result = self._attempt(state, h)
                except SolverError as exc:
                    raise SimulationError(state.t, exc) from exc
            err, new, prev, sub_dt, its = result

            if cfg.fixed_step:
                accept, dt_next, forced = True, dt, False
            else:
                accept, dt_next, forced = adapt_dt(err, h, cfg)
            if not accept:
                wf.rejected += 1
                dt = dt_next
                continue
            if forced:
                log.warning("accepting step at t=%g with LTE %.3e above tolerance at dt_min", new.t, err)
                wf.forced_steps.append(new.t)
            if last:
                # land exactly on t_stop
                new = replace(new, t=t_stop)
            audit = self.audit(prev, new, sub_dt) if cfg.audit else None
            self.record(wf, new, h, its, audit)
            state = new
            if not last:
                dt = dt_next
        return wf


def run_transient(circuit: Circuit, cfg: Optional[SolverConfig] = None) -> Waveforms:
    return Simulator(circuit, cfg).run()


def dc_operating_point(circuit: Circuit) -> SimState:
    return Simulator(circuit, SolverConfig.from_circuit(circuit)).dc_operating_point()
