"""Two-phase state and right-hand sides of the drag-coupled Euler / Navier-Stokes system.

The isothermal Euler phase (density ``rho``, velocity ``u``, pressure ``rho``)
exchanges momentum with the isentropic Navier-Stokes phase (density ``n``,
velocity ``v``, pressure ``n**gamma``) through the drag ``rho (u - v)``.

Both right-hand sides are written in velocity (non-conservative) form and
evaluated pseudo-spectrally: one batched transform for all derivatives, one
for all nonlinear products, which are filtered with the two-thirds rule.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .grid import Grid, _check_finite

PRIMITIVE = "primitive"
LOG_DENSITY = "log_density"
FORMULATIONS = (PRIMITIVE, LOG_DENSITY)

VACUUM_FLOOR = 1e-8


class ConfigError(ValueError):
    """Parameter outside the admissible range."""


class VacuumError(ValueError):
    """A density dropped to (or below) the vacuum floor."""


@dataclass(frozen=True)
class FluidParams:
    gamma: float
    mu: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError(f"gamma = {self.gamma} violates γ > 1")
        if not self.mu > 0:
            raise ConfigError(f"mu = {self.mu} violates μ > 0")
        if not self.lam + 2 * self.mu > 0:
            raise ConfigError(f"lambda = {self.lam}, mu = {self.mu} violates λ + 2μ > 0")


@dataclass(frozen=True)
class FluidState:
    """Snapshot of both phases.

    ``fields`` stacks ``(density_e, velocity_e[0..dim), density_ns,
    velocity_ns[0..dim))`` along axis 0.  In the ``log_density`` formulation
    ``density_e`` holds ``h = ln rho`` and ``density_ns`` holds the
    perturbation ``n`` of a physical density ``n + 1``.
    """

    grid: Grid
    fields: np.ndarray
    formulation: str = PRIMITIVE
    time: float = 0.0

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        expected = (2 + 2 * self.grid.dim, *self.grid.shape)
        if self.fields.shape != expected:
            raise ValueError(f"fields shape {self.fields.shape} != {expected}")
        if self.time < 0:
            raise ValueError("time must be non-negative")

    @classmethod
    def from_components(cls, grid, density_e, velocity_e, density_ns, velocity_ns,
                        formulation=PRIMITIVE, time=0.0):
        d = grid.dim
        fields = np.empty((2 + 2 * d, *grid.shape))
        fields[0] = density_e
        fields[1:1 + d] = velocity_e
        fields[1 + d] = density_ns
        fields[2 + d:] = velocity_ns
        return cls(grid, fields, formulation, float(time))

    @property
    def density_e(self) -> np.ndarray:
        return self.fields[0]

    @property
    def velocity_e(self) -> np.ndarray:
        return self.fields[1:1 + self.grid.dim]

    @property
    def density_ns(self) -> np.ndarray:
        return self.fields[1 + self.grid.dim]

    @property
    def velocity_ns(self) -> np.ndarray:
        return self.fields[2 + self.grid.dim:]

    def physical(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(rho, u, N, v)`` with physical densities whatever the formulation."""
        if self.formulation == PRIMITIVE:
            return self.density_e, self.velocity_e, self.density_ns, self.velocity_ns
        return np.exp(self.density_e), self.velocity_e, self.density_ns + 1.0, self.velocity_ns

    def to_primitive(self) -> FluidState:
        if self.formulation == PRIMITIVE:
            return self
        rho, u, n, v = self.physical()
        return FluidState.from_components(self.grid, rho, u, n, v, PRIMITIVE, self.time)

    def to_log_density(self) -> FluidState:
        if self.formulation == LOG_DENSITY:
            return self
        check_density(self.density_e, "rho")
        return FluidState.from_components(self.grid, np.log(self.density_e), self.velocity_e,
                                          self.density_ns - 1.0, self.velocity_ns,
                                          LOG_DENSITY, self.time)

    def copy(self) -> FluidState:
        return replace(self, fields=self.fields.copy())

    def frozen(self) -> FluidState:
        """Read-only copy handed to observers."""
        f = self.fields.copy()
        f.setflags(write=False)
        return replace(self, fields=f)


def check_density(a: np.ndarray, name: str, floor: float = VACUUM_FLOOR) -> None:
    lo = a.min()
    if not lo > floor:
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(a), a.shape))
        if not np.isfinite(lo):
            raise VacuumError(f"{name} is not finite (index {idx})")
        raise VacuumError(f"{name} reached {lo:.3e} <= floor {floor:g} at index {idx}")


def pressure(n: np.ndarray, gamma: float) -> np.ndarray:
    check_density(n, "n", 0.0)
    return n**gamma


def drag(rho: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``rho (u - v)``: the Navier-Stokes momentum source; Euler receives its negative."""
    return rho * (u - v)


def _derivative_pass(g: Grid, fields: np.ndarray, params: FluidParams):
    """Spectra, all first derivatives and the Lame term of the stacked unknowns.

    Returns ``(f_hat, grads, lv)`` with ``grads[q, j] = d_j fields[q]``.
    """
    d = g.dim
    f_hat = g.fft(fields)
    grads_hat = f_hat[:, None] * g._deriv_symbol[None]
    lame_hat = np.einsum("ij...,j...->i...", g.lame_symbol(params.mu, params.lam), f_hat[-d:])
    q = fields.shape[0]
    phys = g.ifft(np.concatenate([grads_hat.reshape(q * d, *g.spectral_shape), lame_hat]))
    return f_hat, phys[:q * d].reshape(q, d, -1), phys[q * d:].reshape(d, -1)


@njit(cache=True)
def _primitive_terms(f, gr, lv, gamma, out):
    # rows of out: rho u | n v | dt u (negated) | dt v (negated)
    d = lv.shape[0]
    for p in range(f.shape[1]):
        rho = f[0, p]
        n = f[1 + d, p]
        coef = gamma * n ** (gamma - 2.0)
        for i in range(d):
            ui = f[1 + i, p]
            vi = f[2 + d + i, p]
            au = 0.0
            av = 0.0
            for j in range(d):
                au += f[1 + j, p] * gr[1 + i, j, p]
                av += f[2 + d + j, p] * gr[2 + d + i, j, p]
            slip = ui - vi
            out[i, p] = rho * ui
            out[d + i, p] = n * vi
            out[2 * d + i, p] = au + gr[0, i, p] / rho + slip
            out[3 * d + i, p] = av + coef * gr[1 + d, i, p] + (lv[i, p] - rho * slip) / n


@njit(cache=True)
def _log_terms(f, gr, lv, gamma, out):
    # rows of out: grad h . u | (n+1) v | dt u (negated) | dt v (negated)
    d = lv.shape[0]
    for p in range(f.shape[1]):
        rho = np.exp(f[0, p])
        big_n = f[1 + d, p] + 1.0
        coef = gamma * big_n ** (gamma - 2.0)
        hu = 0.0
        for i in range(d):
            ui = f[1 + i, p]
            vi = f[2 + d + i, p]
            hu += gr[0, i, p] * ui
            au = 0.0
            av = 0.0
            for j in range(d):
                au += f[1 + j, p] * gr[1 + i, j, p]
                av += f[2 + d + j, p] * gr[2 + d + i, j, p]
            slip = ui - vi
            out[1 + i, p] = big_n * vi
            out[1 + d + i, p] = au + gr[0, i, p] + slip
            out[1 + 2 * d + i, p] = av + coef * gr[1 + d, i, p] + (lv[i, p] - rho * slip) / big_n
        out[0, p] = hu


class _Workspace:
    """Scratch buffers for one (grid, formulation); reused across evaluations.

    Large temporaries allocated afresh on every call cost more than the FFTs
    themselves on 2D/3D grids, so the evaluation writes into these instead.
    """

    def __init__(self, grid: Grid, formulation: str):
        d = grid.dim
        q = 2 + 2 * d
        r = 4 * d if formulation == PRIMITIVE else 1 + 3 * d
        spec, shape = grid.spectral_shape, grid.shape
        self.f_hat = np.empty((q, *spec), complex)
        self.d_hat = np.empty((q * d + d, *spec), complex)
        self.d_phys = np.empty((q * d + d, *shape))
        self.nl = np.empty((r, *shape))
        self.nl_hat = np.empty((r, *spec), complex)
        self.out_hat = np.empty((q, *spec), complex)
        self.div = np.empty(spec, complex)


_workspaces = threading.local()


def _workspace(grid: Grid, formulation: str) -> _Workspace:
    cache = getattr(_workspaces, "cache", None)
    if cache is None:
        cache = _workspaces.cache = {}
    key = (grid, formulation)
    if key not in cache:
        cache[key] = _Workspace(grid, formulation)
    return cache[key]


def _check_fields(grid: Grid, formulation: str, fields: np.ndarray, floor: float) -> None:
    d = grid.dim
    if not (np.isfinite(fields.min()) and np.isfinite(fields.max())):
        _check_finite(fields, "state")
    if formulation == PRIMITIVE:
        check_density(fields[0], "rho", floor)
        check_density(fields[1 + d], "n", floor)
    else:
        check_density(fields[1 + d] + 1.0, "n + 1", floor)


def rhs_into(grid: Grid, formulation: str, fields: np.ndarray, params: FluidParams,
             out: np.ndarray, floor: float = VACUUM_FLOOR) -> np.ndarray:
    """Array-level right-hand side; writes into ``out`` (same layout as ``fields``)."""
    _check_fields(grid, formulation, fields, floor)
    g, d = grid, grid.dim
    q = 2 + 2 * d
    ws = _workspace(g, formulation)
    ik = g._deriv_symbol
    mask = g.dealias_mask

    f_hat = g.fft(fields, out=ws.f_hat)
    np.multiply(f_hat[:, None], ik[None], out=ws.d_hat[:q * d].reshape(q, d, *g.spectral_shape))
    np.einsum("ij...,j...->i...", g.lame_symbol(params.mu, params.lam), f_hat[2 + d:],
              out=ws.d_hat[q * d:])
    g.ifft(ws.d_hat, out=ws.d_phys)
    flat = ws.d_phys.reshape(q * d + d, -1)
    grads = flat[:q * d].reshape(q, d, -1)
    lv = flat[q * d:]
    nl = ws.nl.reshape(ws.nl.shape[0], -1)
    kernel = _primitive_terms if formulation == PRIMITIVE else _log_terms
    kernel(fields.reshape(q, -1), grads, lv, float(params.gamma), nl)

    nl_hat = g.fft(ws.nl, out=ws.nl_hat)
    nl_hat *= mask
    out_hat = ws.out_hat
    if formulation == PRIMITIVE:
        flux_e, flux_ns, acc_u, acc_v = nl_hat[:d], nl_hat[d:2 * d], nl_hat[2 * d:3 * d], nl_hat[3 * d:]
        np.einsum("j...,j...->...", ik, flux_e, out=out_hat[0])
    else:
        flux_ns, acc_u, acc_v = nl_hat[1:1 + d], nl_hat[1 + d:1 + 2 * d], nl_hat[1 + 2 * d:]
        np.einsum("j...,j...->...", ik, f_hat[1:1 + d], out=ws.div)
        ws.div *= mask
        np.add(nl_hat[0], ws.div, out=out_hat[0])
    np.einsum("j...,j...->...", ik, flux_ns, out=out_hat[1 + d])
    out_hat[1:1 + d] = acc_u
    out_hat[2 + d:] = acc_v
    np.negative(out_hat, out=out_hat)
    return g.ifft(out_hat, out=out)


def rhs_primitive(state: FluidState, params: FluidParams, floor: float = VACUUM_FLOOR) -> np.ndarray:
    """Time derivative of ``(rho, u, n, v)``, laid out like ``state.fields``."""
    if state.formulation != PRIMITIVE:
        raise ValueError("rhs_primitive needs a primitive-formulation state")
    return rhs_into(state.grid, PRIMITIVE, state.fields, params, np.empty_like(state.fields), floor)


def rhs_log(state: FluidState, params: FluidParams, floor: float = VACUUM_FLOOR) -> np.ndarray:
    """Time derivative of ``(h, u, n, v)`` with ``h = ln rho`` and physical NS density ``n + 1``."""
    if state.formulation != LOG_DENSITY:
        raise ValueError("rhs_log needs a log_density-formulation state")
    return rhs_into(state.grid, LOG_DENSITY, state.fields, params, np.empty_like(state.fields), floor)


def rhs(state: FluidState, params: FluidParams, floor: float = VACUUM_FLOOR) -> np.ndarray:
    if state.formulation == PRIMITIVE:
        return rhs_primitive(state, params, floor)
    return rhs_log(state, params, floor)


def rhs_ns_with_source(grid: Grid, n: np.ndarray, v: np.ndarray, source: np.ndarray,
                       params: FluidParams, floor: float = VACUUM_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """``(dn/dt, dv/dt)`` of the Navier-Stokes phase alone driven by a momentum source.

    ``source`` replaces the drag ``rho (u - v)``; the kinetic coupling feeds
    ``int (xi - v) f dxi`` through here.
    """
    d = grid.dim
    check_density(n, "n", floor)
    fields = np.concatenate([n[None], v])
    f_hat, grads, lv = _derivative_pass(grid, fields, params)
    grads = grads.reshape(1 + d, d, *grid.shape)
    lv = lv.reshape(d, *grid.shape)
    adv = np.einsum("ij...,j...->i...", grads[1:], v)
    nonlinear = np.concatenate([
        n * v,
        adv + params.gamma * n ** (params.gamma - 2) * grads[0] + (lv - source) / n,
    ])
    nl_hat = grid.fft(nonlinear) * grid.dealias_mask
    out_hat = np.empty_like(f_hat)
    out_hat[0] = -np.sum(grid._deriv_symbol * nl_hat[:d], axis=0)
    out_hat[1:] = -nl_hat[d:]
    out = grid.ifft(out_hat)
    return out[0], out[1:]
