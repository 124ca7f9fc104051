"""Particle Vlasov-Fokker-Planck phase coupled to the viscous fluid.

Each sample carries a position ``X`` and velocity ``xi`` and moves by

    dX = xi dt,
    dxi = (v(X) - xi) dt + (u_f(X) - xi) / eps dt + sqrt(2 / eps) dW,

with ``u_f`` the local mean velocity of the particles themselves.  Moments
are deposited with cloud-in-cell (multilinear) weights and fields are
interpolated back with the same weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid
from .integrator import StepControl, run, stable_dt
from .model import PRIMITIVE, FluidParams, FluidState, check_density, rhs_ns_with_source

MASS_FLOOR = 1e-10


class EmptyEnsembleError(ValueError):
    pass


class StepTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleEnsemble:
    """Equal-weight samples of the kinetic density.

    ``positions`` and ``velocities`` have shape ``(count, dim)``.  ``ids``
    (default ``arange(count)``) label particles: the noise a particle
    receives depends only on ``(rng_seed, step, id)``, never on its row.
    ``step`` counts completed updates.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weight: float
    epsilon: float
    rng_seed: int = 0
    step: int = 0
    time: float = 0.0
    ids: np.ndarray | None = None

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[0] == 0:
            raise EmptyEnsembleError("ensemble needs at least one particle")
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(self.positions.shape[0]))
        if self.velocities.shape != self.positions.shape:
            raise ValueError("positions and velocities must have the same shape")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def mass(self) -> float:
        return self.weight * self.count


@dataclass(frozen=True)
class KineticMoments:
    """Grid moments of the ensemble.

    ``second_moment`` is the deposited density of ``|xi|^2``, so
    ``second_moment / rho_f`` is the local mean of ``|xi|^2``;
    ``variance`` subtracts ``|u_f|^2`` from that, giving the trace of the
    local velocity covariance.  ``occupied`` marks cells above the mass floor.
    """

    grid: Grid
    rho_f: np.ndarray
    momentum: np.ndarray
    u_f: np.ndarray
    second_moment: np.ndarray
    occupied: np.ndarray = field(repr=False)

    @property
    def variance(self) -> np.ndarray:
        out = np.zeros_like(self.rho_f)
        ok = self.occupied
        out[ok] = self.second_moment[ok] / self.rho_f[ok] - np.sum(self.u_f**2, axis=0)[ok]
        return out


# -- cloud-in-cell kernel -------------------------------------------------

def _cic(grid: Grid, positions: np.ndarray):
    """Flat node indices and weights, each of shape ``(2**dim, count)``."""
    n = np.array(grid.n_points)
    s = positions / grid.spacing
    base = np.floor(s).astype(np.int64)
    frac = s - base
    idx, wts = [], []
    for corner in range(2 ** grid.dim):
        bits = [(corner >> a) & 1 for a in range(grid.dim)]
        flat = np.zeros(positions.shape[0], dtype=np.int64)
        w = np.ones(positions.shape[0])
        for a, b in enumerate(bits):
            flat = flat * n[a] + (base[:, a] + b) % n[a]
            w = w * (frac[:, a] if b else 1.0 - frac[:, a])
        idx.append(flat)
        wts.append(w)
    return np.array(idx), np.array(wts)


def _deposit(grid: Grid, idx, wts, values=None) -> np.ndarray:
    size = int(np.prod(grid.shape))
    w = wts if values is None else wts * values
    return np.bincount(idx.ravel(), weights=w.ravel(), minlength=size).reshape(grid.shape)


def interpolate(grid: Grid, field_: np.ndarray, positions: np.ndarray, kernel=None) -> np.ndarray:
    """Multilinear interpolation of a scalar or vector field to particle positions.

    Returns ``(count,)`` for a scalar field and ``(count, dim)`` for a vector.
    """
    idx, wts = kernel if kernel is not None else _cic(grid, wrap(grid, positions))
    if field_.ndim == grid.dim:
        return np.sum(field_.ravel()[idx] * wts, axis=0)
    flat = field_.reshape(field_.shape[0], -1)
    return np.stack([np.sum(c[idx] * wts, axis=0) for c in flat], axis=1)


def wrap(grid: Grid, positions: np.ndarray) -> np.ndarray:
    out = np.mod(positions, grid.length)
    # mod can round up to exactly L for tiny negative inputs
    out[out >= grid.length] = 0.0
    return out


def deposit_moments(ens: ParticleEnsemble, grid: Grid, floor: float = MASS_FLOOR,
                    kernel=None) -> KineticMoments:
    """Cloud-in-cell mass, momentum and ``|xi|^2`` densities (per unit volume)."""
    if ens.dim != grid.dim:
        raise ValueError(f"ensemble is {ens.dim}-D but grid is {grid.dim}-D")
    idx, wts = kernel if kernel is not None else _cic(grid, ens.positions)
    scale = ens.weight / grid.cell_volume
    rho = _deposit(grid, idx, wts) * scale
    mom = np.array([_deposit(grid, idx, wts, ens.velocities[:, a]) for a in range(grid.dim)]) * scale
    second = _deposit(grid, idx, wts, np.sum(ens.velocities**2, axis=1)) * scale
    occupied = rho > floor
    u_f = np.zeros_like(mom)
    u_f[:, occupied] = mom[:, occupied] / rho[occupied]
    return KineticMoments(grid, rho, mom, u_f, second, occupied)


def coupling_source(ens: ParticleEnsemble, v: np.ndarray, grid: Grid,
                    moments: KineticMoments | None = None) -> np.ndarray:
    """Deposited ``int (xi - v) f dxi``: momentum density minus ``rho_f v``.

    Cells below the mass floor export no coupling.
    """
    m = moments if moments is not None else deposit_moments(ens, grid)
    out = m.momentum - m.rho_f * v
    out[:, ~m.occupied] = 0.0
    return out


def alignment_force(ens: ParticleEnsemble, moments: KineticMoments, kernel=None) -> np.ndarray:
    """Per-particle ``u_f(X) - xi`` with ``u_f`` interpolated by the deposition kernel.

    Summed over particles this vanishes (up to cells below the mass floor),
    which is the discrete zero-net-alignment identity.
    """
    u_at = interpolate(moments.grid, moments.u_f, ens.positions, kernel)
    return u_at - ens.velocities


def _normals(seed: int, step: int, ids: np.ndarray, dim: int) -> np.ndarray:
    # counter-based stream keyed by (seed, step); entry id of the draw belongs to particle id
    gen = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), step]))
    return gen.standard_normal((int(ids.max()) + 1, dim))[ids]


def step_particles(ens: ParticleEnsemble, v: np.ndarray, dt: float, grid: Grid,
                   noise: bool = True, moments: KineticMoments | None = None) -> ParticleEnsemble:
    """Advance every particle by ``dt`` with ``u_f`` and ``v`` frozen at the step start.

    With frozen fields the velocity equation is linear with rate
    ``a = 1 + 1/eps``, so it is advanced by its exact Ornstein-Uhlenbeck
    transition; positions use the updated velocity (symplectic Euler).
    """
    eps = ens.epsilon
    if dt > eps / 4 * (1 + 1e-12):
        raise StepTooLargeError(f"dt = {dt:.3e} exceeds eps / 4 = {eps / 4:.3e}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernel = _cic(grid, ens.positions)
    m = moments if moments is not None else deposit_moments(ens, grid, kernel=kernel)
    u_at = interpolate(grid, m.u_f, ens.positions, kernel)
    v_at = interpolate(grid, v, ens.positions, kernel)
    a = 1.0 + 1.0 / eps
    decay = np.exp(-a * dt)
    target = (v_at + u_at / eps) / a
    xi = target + (ens.velocities - target) * decay
    if noise:
        sd = np.sqrt((2.0 / eps) * (-np.expm1(-2 * a * dt)) / (2 * a))
        xi += sd * _normals(ens.rng_seed, ens.step, ens.ids, ens.dim)
    x = wrap(grid, ens.positions + xi * dt)
    return replace(ens, positions=x, velocities=xi, step=ens.step + 1, time=ens.time + dt)


# -- initial ensembles ----------------------------------------------------

def sample_ensemble(grid: Grid, density, velocity, count: int, epsilon: float,
                    seed: int, temperature: float = 1.0, resolution: int = 4096) -> ParticleEnsemble:
    """Draw ``count`` particles from ``density(x) * Maxwellian(velocity(x), temperature)``.

    1-D positions use a jittered inverse-CDF (stratified) draw, which removes
    most of the initial density noise; higher dimensions use rejection
    sampling.  ``density`` and ``velocity`` are callables of coordinates
    shaped ``(dim, ...)``; velocity returns ``(dim, ...)``.
    """
    if count < 1:
        raise EmptyEnsembleError("count must be >= 1")
    rng = np.random.default_rng(seed)
    length = np.array(grid.length)
    if grid.dim == 1:
        xs = (np.arange(resolution) + 0.5) / resolution * length[0]
        pdf = np.asarray(density(xs[None]), dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum(pdf)])
        cdf /= cdf[-1]
        edges = np.arange(resolution + 1) / resolution * length[0]
        q = (np.arange(count) + rng.random(count)) / count
        pos = np.interp(q, cdf, edges)[:, None]
    else:
        chunks, got = [], 0
        probe = density(grid.coords)
        top = 1.05 * float(np.max(probe))
        while got < count:
            cand = rng.random((2 * count, grid.dim)) * length
            keep = rng.random(2 * count) * top < density(cand.T)
            chunks.append(cand[keep])
            got += int(keep.sum())
        pos = np.concatenate(chunks)[:count]
    pos = wrap(grid, pos)
    mean = np.asarray(velocity(pos.T), dtype=float).T
    vel = mean + np.sqrt(temperature) * rng.standard_normal(pos.shape)
    total = float(grid.integrate(density(grid.coords)))
    return ParticleEnsemble(pos, vel, weight=total / count, epsilon=epsilon, rng_seed=seed)


# -- coupled particle / fluid integration --------------------------------

def _step_fluid(grid: Grid, n: np.ndarray, v: np.ndarray, m: KineticMoments,
                params: FluidParams, dt: float):
    """RK4 for the Navier-Stokes phase with the particle moments frozen over the step."""
    def f(n_, v_):
        src = m.momentum - m.rho_f * v_
        src[:, ~m.occupied] = 0.0
        return rhs_ns_with_source(grid, n_, v_, src, params)

    k1 = f(n, v)
    k2 = f(n + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1])
    k3 = f(n + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1])
    k4 = f(n + dt * k3[0], v + dt * k3[1])
    n_new = n + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v_new = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    check_density(n_new, "n")
    return n_new, v_new


def _fluid_dt(grid, n, v, u_scale, params, control) -> float:
    probe = FluidState.from_components(grid, np.ones(grid.shape), np.zeros((grid.dim, *grid.shape)), n, v)
    dt = stable_dt(probe, params, control)
    dx = float(np.min(grid.spacing))
    # particles travel a few thermal speeds; keep them from skipping cells
    return min(dt, control.cfl * dx / (u_scale + 4.0))


@dataclass(frozen=True)
class SweepConfig:
    """Inputs shared by every epsilon of a limit sweep (1-D, unit torus by default)."""

    epsilons: tuple[float, ...] = (1.0, 0.3, 0.1, 0.03)
    particles: int = 100_000
    seed: int = 1
    n_points: int = 32
    dim: int = 1
    gamma: float = 2.0
    mu: float = 0.1
    lam: float = 0.0
    amplitude: float = 0.2
    velocity_amplitude: float = 0.2
    ns_amplitude: float = 0.1
    t_end: float = 1.0
    samples: int = 20
    filter_modes: int = 4
    uniform_t_end: float = 3.0
    uniform_average_from: float = 1.5
    uniform_cells: int = 8
    cfl: float = 0.4
    viscous_safety: float = 1.0

    def __post_init__(self):
        if len(self.epsilons) == 0:
            raise ValueError("epsilon list is empty")
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("every epsilon must be positive")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.dim != 1:
            raise ValueError("the limit sweep is implemented for dim = 1")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    rho_error: float
    u_error: float
    variance_deviation: float
    uniform_variance: float
    uniform_expected: float

    @property
    def uniform_relative_error(self) -> float:
        return abs(self.uniform_variance / self.uniform_expected - 1.0)


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    @property
    def monotone(self) -> bool:
        """Errors shrink (non-strictly never) as epsilon decreases."""
        rows = sorted(self.rows, key=lambda r: -r.epsilon)
        return all(b.rho_error < a.rho_error and b.u_error < a.u_error
                   for a, b in zip(rows, rows[1:]))

    HEADER = ("epsilon", "rho_error", "u_error", "variance_deviation",
              "uniform_variance", "uniform_expected")

    def table(self) -> str:
        lines = ["  ".join(f"{h:>18s}" for h in self.HEADER)]
        for r in self.rows:
            vals = (r.epsilon, r.rho_error, r.u_error, r.variance_deviation,
                    r.uniform_variance, r.uniform_expected)
            lines.append("  ".join(f"{x:18.10e}" for x in vals))
        lines.append(f"monotone_decrease: {'PASS' if self.monotone else 'FAIL'}")
        return "\n".join(lines)


def _lowpass(grid: Grid, f: np.ndarray, modes: int) -> np.ndarray:
    """Keep Fourier modes with every ``|k_i| <= modes``."""
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for m in np.meshgrid(*grid.modes, indexing="ij"):
        keep &= np.abs(m) <= modes
    return grid.ifft(grid.fft(f) * keep)


def _l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.integrate(f**2))))


def _initial_profiles(cfg: SweepConfig):
    two_pi = 2 * np.pi

    def rho0(x):
        return 1.0 + cfg.amplitude * np.cos(two_pi * x[0])

    def u0(x):
        return cfg.velocity_amplitude * np.sin(two_pi * x[:1])

    return rho0, u0


def run_coupled(cfg: SweepConfig, epsilon: float, grid: Grid, sample_times: np.ndarray):
    """Particles + fluid from the sweep's initial data; moments at ``sample_times``."""
    params = FluidParams(cfg.gamma, cfg.mu, cfg.lam)
    control = StepControl(t_end=cfg.t_end, cfl=cfg.cfl, viscous_safety=cfg.viscous_safety)
    rho0, u0 = _initial_profiles(cfg)
    ens = sample_ensemble(grid, rho0, u0, cfg.particles, epsilon, cfg.seed)
    x = grid.coords
    n = 1.0 + cfg.ns_amplitude * np.cos(2 * np.pi * x[0])
    v = np.zeros((grid.dim, *grid.shape))
    out, t, j = [], 0.0, 0
    while j < len(sample_times):
        kernel = _cic(grid, ens.positions)
        m = deposit_moments(ens, grid, kernel=kernel)
        if t >= sample_times[j] - 1e-12:
            out.append(m)
            j += 1
            if j == len(sample_times):
                break
        dt = min(epsilon / 4, _fluid_dt(grid, n, v, float(np.max(np.abs(m.u_f))), params, control),
                 sample_times[j] - t)
        v_old = v
        n, v = _step_fluid(grid, n, v, m, params, dt)
        ens = step_particles(ens, v_old, dt, grid, moments=m)
        t += dt
    return out


def run_limit_fluid(cfg: SweepConfig, grid: Grid, sample_times: np.ndarray) -> list[FluidState]:
    """The two-phase fluid system from the same initial macroscopic data."""
    params = FluidParams(cfg.gamma, cfg.mu, cfg.lam)
    rho0, u0 = _initial_profiles(cfg)
    x = grid.coords
    s0 = FluidState.from_components(
        grid, rho0(x), u0(x), 1.0 + cfg.ns_amplitude * np.cos(2 * np.pi * x[0]),
        np.zeros((grid.dim, *grid.shape)), formulation=PRIMITIVE)
    interval = float(sample_times[1] - sample_times[0]) if len(sample_times) > 1 else None
    snaps: list[FluidState] = []
    run(s0, params, StepControl(t_end=float(sample_times[-1]), cfl=cfg.cfl,
                                viscous_safety=cfg.viscous_safety),
        observers=[snaps.append], sample_interval=interval)
    return snaps


def uniform_variance(cfg: SweepConfig, epsilon: float) -> float:
    """Long-run per-component velocity variance of a uniform ensemble with ``v = 0``."""
    grid = Grid(cfg.dim, cfg.uniform_cells)
    rng = np.random.default_rng([cfg.seed, 7])
    pos = rng.random((cfg.particles, cfg.dim)) * np.array(grid.length)
    ens = ParticleEnsemble(pos, rng.standard_normal(pos.shape), 1.0 / cfg.particles,
                           epsilon, rng_seed=cfg.seed)
    v = np.zeros((cfg.dim, *grid.shape))
    dt = min(epsilon / 4, 0.01)
    steps = int(np.ceil(cfg.uniform_t_end / dt))
    start = int(np.ceil(cfg.uniform_average_from / dt))
    acc, k = 0.0, 0
    for i in range(steps):
        ens = step_particles(ens, v, dt, grid)
        if i + 1 >= start:
            acc += float(np.mean(np.var(ens.velocities, axis=0)))
            k += 1
    return acc / k


def run_limit_sweep(cfg: SweepConfig) -> SweepReport:
    """Compare particle moments with the fluid limit for every epsilon in ``cfg``.

    Errors are the max over sample times of the L2 distance between the
    low-pass filtered deposited moments and the fluid solution, which keeps
    the comparison above the Monte-Carlo noise of the highest grid modes.
    """
    grid = Grid(cfg.dim, cfg.n_points)
    times = np.linspace(0.0, cfg.t_end, cfg.samples + 1)
    ref = run_limit_fluid(cfg, grid, times)
    rows = []
    for eps in cfg.epsilons:
        moms = run_coupled(cfg, eps, grid, times)
        e_rho = e_u = e_var = 0.0
        for m, s in zip(moms, ref):
            e_rho = max(e_rho, _l2(grid, _lowpass(grid, m.rho_f, cfg.filter_modes) - s.density_e))
            u_f = _lowpass(grid, m.momentum, cfg.filter_modes) / _lowpass(grid, m.rho_f, cfg.filter_modes)
            e_u = max(e_u, _l2(grid, u_f - s.velocity_e))
            per_comp = m.variance / grid.dim
            e_var = max(e_var, float(np.sqrt(np.sum(grid.integrate(m.rho_f * (per_comp - 1.0) ** 2)))))
        var = uniform_variance(cfg, eps)
        rows.append(SweepRow(eps, e_rho, e_u, e_var, var, 1.0 / (1.0 + eps)))
    return SweepReport(tuple(rows))
