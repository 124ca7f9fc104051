"""Explicit RK4 time stepping with an advective/viscous step-size bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .model import PRIMITIVE, FluidParams, FluidState, VacuumError, rhs_into
from .grid import NonFiniteFieldError

DT_UNDERFLOW = 1e-12


class SimulationAbort(RuntimeError):
    """Integration stopped; ``last_state`` is the last state that passed all checks."""

    def __init__(self, message: str, last_state: FluidState, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.last_state = last_state
        self.time = time


@dataclass(frozen=True)
class StepControl:
    t_end: float
    cfl: float = 0.4
    dt_max: float = 1e-2
    viscous_safety: float = 0.25

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl = {self.cfl} must lie in (0, 1]")
        if not 0 < self.viscous_safety <= 1:
            raise ValueError(f"viscous_safety = {self.viscous_safety} must lie in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")


def stable_dt(state: FluidState, params: FluidParams, control: StepControl) -> float:
    """``min(dt_max, cfl dx / (V + C), safety dx^2 / (2 dim nu))``."""
    grid = state.grid
    _, u, big_n, v = state.physical()
    dx = float(np.min(grid.spacing))
    v_max = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    n_min = float(np.min(big_n))
    if not (np.isfinite(v_max) and n_min > 0):
        raise SimulationAbort("non-finite velocity or non-positive density", state, state.time)
    # isothermal Euler sound speed is 1
    c_max = max(1.0, math.sqrt(params.gamma * float(np.max(big_n)) ** (params.gamma - 1)))
    nu_max = (2 * params.mu + params.lam) / n_min
    dt = min(control.dt_max,
             control.cfl * dx / (v_max + c_max),
             control.viscous_safety * dx**2 / (2 * grid.dim * nu_max))
    if dt < DT_UNDERFLOW:
        raise SimulationAbort(f"time step underflow dt = {dt:.3e}", state, state.time)
    return dt


class _RK4:
    """Classical RK4 on the raw field stack with preallocated stage buffers."""

    def __init__(self, grid, formulation: str, params: FluidParams):
        self.grid, self.formulation, self.params = grid, formulation, params
        shape = (2 + 2 * grid.dim, *grid.shape)
        self.k = [np.empty(shape) for _ in range(4)]
        self.stage = np.empty(shape)

    def __call__(self, y0: np.ndarray, dt: float) -> np.ndarray:
        g, form, p = self.grid, self.formulation, self.params
        k1, k2, k3, k4 = self.k
        y = self.stage
        rhs_into(g, form, y0, p, k1)
        np.multiply(k1, 0.5 * dt, out=y)
        y += y0
        rhs_into(g, form, y, p, k2)
        np.multiply(k2, 0.5 * dt, out=y)
        y += y0
        rhs_into(g, form, y, p, k3)
        np.multiply(k3, dt, out=y)
        y += y0
        rhs_into(g, form, y, p, k4)
        k2 += k3
        k2 *= 2.0
        k1 += k4
        k1 += k2
        k1 *= dt / 6.0
        return y0 + k1

    def step(self, state: FluidState, dt: float) -> FluidState:
        try:
            fields = self(state.fields, dt)
            _validate(state.grid, state.formulation, fields)
        except (VacuumError, NonFiniteFieldError) as exc:
            raise SimulationAbort(str(exc), state, state.time) from exc
        return replace(state, fields=fields, time=state.time + dt)


def step_rk4(state: FluidState, params: FluidParams, dt: float) -> FluidState:
    """One classical four-stage Runge-Kutta step of the state's own formulation."""
    return _RK4(state.grid, state.formulation, params).step(state, dt)


def _validate(grid, formulation: str, fields: np.ndarray) -> None:
    d = grid.dim
    if not (np.isfinite(fields.min()) and np.isfinite(fields.max())):
        raise NonFiniteFieldError("state became non-finite")
    low = fields[1 + d].min() + (0.0 if formulation == PRIMITIVE else 1.0)
    if formulation == PRIMITIVE:
        low = min(low, fields[0].min())
    if low <= 0:
        raise VacuumError(f"density reached {low:.3e}")


Observer = Callable[[FluidState], None]


def run(s0: FluidState, params: FluidParams, control: StepControl,
        observers: Iterable[Observer] = (), sample_interval: float | None = None) -> FluidState:
    """Advance ``s0`` to ``control.t_end``.

    Observers are called with read-only snapshots at ``s0.time`` and then at
    every multiple of ``sample_interval`` (steps are shortened to land on
    those times exactly, and on ``t_end``).  Sample times are ``k *
    sample_interval`` for integer ``k``, so restarting from a snapshot taken
    at a sample time reproduces the uninterrupted trajectory bit for bit.
    """
    observers = list(observers)
    state = s0
    t_end = control.t_end
    for obs in observers:
        obs(state.frozen())
    if sample_interval is None or sample_interval <= 0:
        sample_interval = math.inf
        k = 1
    else:
        k = math.floor(state.time / sample_interval + 1e-9) + 1
    stepper = _RK4(state.grid, state.formulation, params)
    while state.time < t_end:
        t_next = min(k * sample_interval, t_end)
        dt = stable_dt(state, params, control)
        landing = state.time + dt >= t_next - 1e-12 * max(1.0, t_next)
        if landing:
            dt = t_next - state.time
        state = stepper.step(state, dt)
        if landing:
            state = replace(state, time=t_next)
            if t_next == k * sample_interval:
                k += 1
                for obs in observers:
                    obs(state.frozen())
    return state
