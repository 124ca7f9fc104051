"""Energy, Lyapunov and alignment functionals of a two-phase state, plus time-series fits.

All functionals act on physical densities: a ``log_density`` state is viewed
through ``(e^h, u, n + 1, v)`` first.  Integrals are cell-volume-weighted
sums (exact for trigonometric polynomials on the torus).

On a domain of volume ``|Omega|`` the totals ``rho_c = int rho`` and
``n_c = int n`` are masses; the density fluctuations are measured against the
mean densities ``rho_c / |Omega|`` and ``n_c / |Omega|``.  With the default
unit torus the two coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .grid import Grid
from .model import PRIMITIVE, FluidParams, FluidState, VacuumError, check_density


@dataclass(frozen=True)
class Averages:
    rho_c: float
    n_c: float
    m_c: np.ndarray
    j_c: np.ndarray
    volume: float = 1.0

    @property
    def rho_mean(self) -> float:
        return self.rho_c / self.volume

    @property
    def n_mean(self) -> float:
        return self.n_c / self.volume


def averages(state: FluidState) -> Averages:
    g = state.grid
    rho, u, n, v = state.physical()
    rho_c = float(g.integrate(rho))
    n_c = float(g.integrate(n))
    if not (rho_c > 0 and n_c > 0):
        raise VacuumError(f"non-positive phase mass (rho_c = {rho_c}, n_c = {n_c})")
    m_c = g.integrate(rho * u) / rho_c
    j_c = g.integrate(n * v) / n_c
    return Averages(rho_c, n_c, np.asarray(m_c), np.asarray(j_c), g.volume)


def _sq(w: np.ndarray) -> np.ndarray:
    return np.sum(w**2, axis=0)


def _centered(w: np.ndarray, c: np.ndarray) -> np.ndarray:
    return w - c.reshape(-1, *([1] * (w.ndim - 1)))


def lyapunov(state: FluidState, avg: Averages | None = None) -> tuple[float, float]:
    """Return ``(L, L_minus)``; ``L_minus`` drops the two density-fluctuation integrals."""
    g = state.grid
    rho, u, n, v = state.physical()
    a = avg or averages(state)
    kinetic = float(g.integrate(rho * _sq(_centered(u, a.m_c)) + n * _sq(_centered(v, a.j_c))))
    gap = float(np.sum((a.m_c - a.j_c) ** 2))
    dens = float(g.integrate((rho - a.rho_mean) ** 2 + (n - a.n_mean) ** 2))
    l_minus = kinetic + gap
    return l_minus + dens, l_minus


def total_energy(state: FluidState, params: FluidParams) -> float:
    """``int rho|u|^2 + 2 rho ln rho + N|v|^2 + 2/(gamma-1) N^gamma`` (twice the physical energy)."""
    g = state.grid
    rho, u, n, v = state.physical()
    check_density(rho, "rho", 0.0)
    check_density(n, "n", 0.0)
    dens = rho * _sq(u) + 2 * rho * np.log(rho) + n * _sq(v) + 2 / (params.gamma - 1) * n**params.gamma
    return float(g.integrate(dens))


def dissipation(state: FluidState, params: FluidParams) -> float:
    """``mu int |grad v|^2 + (mu + lambda) int (div v)^2 + int rho |u - v|^2``."""
    g = state.grid
    rho, u, _, v = state.physical()
    grad_v = g.gradient(v)
    div_v = np.einsum("ii...->...", grad_v)
    out = (params.mu * np.sum(grad_v**2, axis=(0, 1))
           + (params.mu + params.lam) * div_v**2
           + rho * _sq(u - v))
    return float(g.integrate(out))


def f_press(gamma: float, r, r0: float):
    """``r * int_{r0}^{r} (s^gamma - r0^gamma) / s^2 ds`` in closed form."""
    r = np.asarray(r, dtype=float)
    if gamma < 1:
        raise ValueError(f"gamma = {gamma} must be >= 1")
    if r0 <= 0 or np.any(r <= 0):
        raise ValueError("f_press needs r > 0 and r0 > 0")
    if gamma == 1:
        prim = lambda s: np.log(s) + r0 / s
    else:
        prim = lambda s: s ** (gamma - 1) / (gamma - 1) + r0**gamma / s
    out = r * (prim(r) - prim(r0))
    # cancellation can leave tiny negatives next to r0
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def press_sandwich(gamma: float, r, r0: float) -> tuple[float, float, float]:
    """Band of ``f(gamma, r; r0) / (r - r0)^2`` over the samples ``r``.

    Returns ``(lower, upper, C)`` with ``C = max(upper, 1 / lower)`` the
    smallest constant for which ``(r - r0)^2 / C <= f <= C (r - r0)^2`` holds
    on the samples.  At ``r = r0`` the ratio takes its limit ``gamma r0^(gamma-2) / 2``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    ratio = np.empty_like(r)
    near = np.abs(r - r0) < 1e-6 * r0
    ratio[near] = 0.5 * gamma * r0 ** (gamma - 2)
    far = ~near
    ratio[far] = f_press(gamma, r[far], r0) / (r[far] - r0) ** 2
    lower, upper = float(ratio.min()), float(ratio.max())
    return lower, upper, max(upper, 1.0 / lower)


def temporal_energy(state: FluidState, params: FluidParams, avg: Averages | None = None) -> float:
    g = state.grid
    rho, u, n, v = state.physical()
    check_density(rho, "rho", 0.0)
    check_density(n, "n", 0.0)
    a = avg or averages(state)
    dens = (0.5 * rho * _sq(_centered(u, a.m_c))
            + f_press(1.0, rho, a.rho_mean)
            + 0.5 * n * _sq(_centered(v, a.j_c))
            + f_press(params.gamma, n, a.n_mean))
    gap = 0.5 * a.n_c * a.rho_c / (a.n_c + a.rho_c) * float(np.sum((a.m_c - a.j_c) ** 2))
    return float(g.integrate(dens)) + gap


def _log_ratio_sq(x: float) -> float:
    # (ln x / (x - 1))^2, continuous at x = 1
    if abs(x - 1.0) < 1e-8:
        return (1.0 - (x - 1.0) / 2) ** 2
    return (math.log(x) / (x - 1.0)) ** 2


def log_density_equivalence(a: float, b: float) -> tuple[float, float]:
    """Constants ``(C(a), C(b))`` with ``C(b) int (f-1)^2 <= int (ln f)^2 <= C(a) int (f-1)^2``."""
    if not 0 < a <= 1 <= b:
        raise ValueError(f"need 0 < a <= 1 <= b, got a = {a}, b = {b}")
    return max(1.0, _log_ratio_sq(a)), min(1.0, _log_ratio_sq(b))


def bogovskii(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Curl-free, mean-zero ``nu`` with ``div nu = f`` (``f`` must have zero mean)."""
    return grid.gradient(grid.invert_laplacian_mean_zero(f))


def perturbed_energy(state: FluidState, params: FluidParams, sigma1: float, sigma2: float,
                     avg: Averages | None = None) -> float:
    if sigma1 < 0 or sigma2 < 0:
        raise ValueError("sigma1 and sigma2 must be non-negative")
    g = state.grid
    a = avg or averages(state)
    out = temporal_energy(state, params, a)
    if sigma1 == 0 and sigma2 == 0:
        return out
    rho, u, n, v = state.physical()
    for sigma, dens, vel, c, mean in ((sigma1, rho, u, a.m_c, a.rho_mean),
                                      (sigma2, n, v, a.j_c, a.n_mean)):
        if sigma == 0:
            continue
        fluct = dens - mean
        fluct -= g.mean(fluct)  # strip roundoff so the mean-zero check passes
        nu = bogovskii(g, fluct)
        out -= sigma * float(g.integrate(dens * np.sum(_centered(vel, c) * nu, axis=0)))
    return out


def sobolev_norm(grid: Grid, f: np.ndarray, s: float) -> float:
    """``(sum_k (1 + |2 pi k / L|^2)^s |f_k|^2 |Omega|)^(1/2)``; stacks of components add up."""
    if s < 0:
        raise ValueError("s must be non-negative")
    coef = np.fft.fftn(f, axes=grid.axes) / np.prod(grid.shape)
    ks = [2 * np.pi * np.fft.fftfreq(n, 1.0 / n) / ell for n, ell in zip(grid.shape, grid.length)]
    k2 = sum(k**2 for k in np.meshgrid(*ks, indexing="ij"))
    total = np.sum((1 + k2) ** s * np.abs(coef) ** 2) * grid.volume
    return float(np.sqrt(total))


@dataclass(frozen=True)
class DecayFit:
    rate: float
    l0: float
    r_squared: float

    def __iter__(self):
        return iter((self.rate, self.l0, self.r_squared))


def decay_fit(t, values, window: tuple[float, float] | None = None,
              relative_floor: float | None = None) -> DecayFit:
    """Least-squares fit ``ln L = ln L0 - C t`` on ``window`` (default: middle 60% of the span).

    With ``relative_floor`` the window is cut at the first sample where the
    series drops below ``relative_floor * values[0]``, so a series that has
    decayed into round-off does not flatten the fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        span = t[-1] - t[0]
        window = (t[0] + 0.2 * span, t[0] + 0.8 * span)
    if relative_floor is not None:
        below = np.flatnonzero(y < relative_floor * y[0])
        if below.size:
            window = (window[0], min(window[1], t[below[0]] - 1e-9))
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    t, y = t[sel], y[sel]
    if t.size < 10:
        raise ValueError(f"decay fit needs >= 10 samples in {window}, got {t.size}")
    if np.any(y <= 0):
        raise ValueError(f"non-positive value in fit window {window}; the series hit its floor, shrink the window")
    log_y = np.log(y)
    slope, intercept = np.polyfit(t, log_y, 1)
    resid = log_y - (slope * t + intercept)
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, log_y.size) else 1.0 - ss_res / ss_tot
    return DecayFit(float(-slope), float(np.exp(intercept)), r2)


def alignment_target(state: FluidState) -> np.ndarray:
    """Common velocity both phases align to: total momentum over total mass.

    Equals the half-sum ``(m_c + j_c) / 2`` when both phases carry equal mass.
    """
    a = averages(state)
    return (a.rho_c * a.m_c + a.n_c * a.j_c) / (a.rho_c + a.n_c)


def alignment_norms(state: FluidState, target) -> tuple[float, float]:
    """Grid sup norms ``(|u - target|_inf, |v - target|_inf)``."""
    _, u, _, v = state.physical()
    target = np.asarray(target, dtype=float)
    du = np.sqrt(_sq(_centered(u, target)))
    dv = np.sqrt(_sq(_centered(v, target)))
    return float(du.max()), float(dv.max())


# -- one record per sample ----------------------------------------------------

SOBOLEV_UNKNOWNS = ("h", "u", "n", "v")


@dataclass
class DiagnosticsRecord:
    time: float
    averages: Averages
    mass_e: float
    mass_ns: float
    total_momentum: np.ndarray
    energy_E: float
    temporal_energy_script_E: float
    dissipation_D: float
    lyapunov_L: float
    lyapunov_L_minus: float
    perturbed_E_sigma: float
    alignment_sup: tuple[float, float]
    momentum_gap: float
    sobolev_h: dict = field(default_factory=dict)
    # which densities the functionals saw: "rho,n" or "exp(h),n+1"
    density_convention: str = "rho,n"

    @staticmethod
    def header(dim: int, sobolev_orders=(0, 1, 2, 3)) -> list[str]:
        axes = [f"_{i + 1}" for i in range(dim)]
        cols = ["time", "rho_c", "n_c"]
        cols += ["m_c" + a for a in axes] + ["j_c" + a for a in axes]
        cols += ["mass_e", "mass_ns"] + ["total_momentum" + a for a in axes]
        cols += ["energy_E", "temporal_energy_script_E", "dissipation_D", "lyapunov_L",
                 "lyapunov_L_minus", "perturbed_E_sigma", "alignment_sup_u", "alignment_sup_v",
                 "momentum_gap"]
        cols += [f"sobolev_{name}_s{_fmt_order(s)}" for name in SOBOLEV_UNKNOWNS for s in sobolev_orders]
        return cols

    def row(self) -> list[float]:
        a = self.averages
        out = [self.time, a.rho_c, a.n_c, *a.m_c, *a.j_c, self.mass_e, self.mass_ns,
               *self.total_momentum, self.energy_E, self.temporal_energy_script_E,
               self.dissipation_D, self.lyapunov_L, self.lyapunov_L_minus, self.perturbed_E_sigma,
               *self.alignment_sup, self.momentum_gap]
        out += [self.sobolev_h[name][s] for name in SOBOLEV_UNKNOWNS for s in self.sobolev_h[name]]
        return [float(x) for x in out]


def _fmt_order(s: float) -> str:
    return str(int(s)) if float(s).is_integer() else str(s).replace(".", "p")


def record(state: FluidState, params: FluidParams, sigma: tuple[float, float] = (0.05, 0.05),
           target=None, sobolev_orders=(0, 1, 2, 3)) -> DiagnosticsRecord:
    g = state.grid
    rho, u, n, v = state.physical()
    a = averages(state)
    big_l, l_minus = lyapunov(state, a)
    if target is None:
        target = alignment_target(state)
    perturbations = {"h": np.log(rho), "u": u, "n": n - 1.0, "v": v}
    sob = {name: {s: sobolev_norm(g, f, s) for s in sobolev_orders} for name, f in perturbations.items()}
    return DiagnosticsRecord(
        time=state.time,
        averages=a,
        mass_e=a.rho_c,
        mass_ns=a.n_c,
        total_momentum=np.asarray(g.integrate(rho * u + n * v)),
        energy_E=total_energy(state, params),
        temporal_energy_script_E=temporal_energy(state, params, a),
        dissipation_D=dissipation(state, params),
        lyapunov_L=big_l,
        lyapunov_L_minus=l_minus,
        perturbed_E_sigma=perturbed_energy(state, params, *sigma, avg=a),
        alignment_sup=alignment_norms(state, target),
        momentum_gap=float(np.linalg.norm(a.m_c - a.j_c)),
        sobolev_h=sob,
        density_convention="rho,n" if state.formulation == PRIMITIVE else "exp(h),n+1",
    )


RECORD_FIELDS = tuple(f.name for f in dc_fields(DiagnosticsRecord))
