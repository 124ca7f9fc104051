"""Headless property checks behind ``twophase check``.

Each check returns a :class:`CheckResult`; none of them needs pytest.  The
default set runs in a few seconds; ``full=True`` adds a short trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from .grid import Grid
from .integrator import StepControl, run, step_rk4
from .kinetic import ParticleEnsemble, deposit_moments, step_particles
from .model import PRIMITIVE, FluidParams, FluidState, rhs_log, rhs_primitive


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def smooth_field(grid: Grid, rng: np.random.Generator, bandwidth: int = 4, mean_zero: bool = True):
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for m in np.meshgrid(*grid.modes, indexing="ij"):
        keep &= np.abs(m) <= bandwidth
    if mean_zero:
        keep.flat[0] = False
    coef = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    return grid.ifft(coef * keep)


def random_state(grid: Grid, rng: np.random.Generator, amp: float = 0.1, bandwidth: int = 2) -> FluidState:
    """Small smooth state.  Low bandwidth keeps 1/rho, e^h, n^gamma resolved inside the dealiased band."""
    d = grid.dim

    def f():
        x = smooth_field(grid, rng, bandwidth)
        return amp * x / np.max(np.abs(x))

    return FluidState.from_components(grid, 1 + f(), np.array([f() for _ in range(d)]),
                                      1 + f(), np.array([f() for _ in range(d)]))


def check_spectral_calculus(seed: int = 0) -> CheckResult:
    g = Grid(2, 32)
    rng = np.random.default_rng(seed)
    f = smooth_field(g, rng)
    r1 = _rel(g.divergence(g.gradient(f)), g.laplacian(f))
    r2 = _rel(g.laplacian(g.invert_laplacian_mean_zero(f)), f)
    x = g.coords
    r3 = _rel(g.gradient(np.sin(2 * np.pi * x[0]))[0], 2 * np.pi * np.cos(2 * np.pi * x[0]))
    ok = r1 < 1e-12 and r2 < 1e-10 and r3 < 1e-12
    return CheckResult("spectral calculus", ok, f"div grad vs lap {r1:.1e}, lap inv {r2:.1e}, d sin {r3:.1e}")


def check_formulation_equivalence(seed: int = 0, count: int = 20) -> CheckResult:
    g = Grid(1, 64)
    p = FluidParams(1.4, 0.1, 0.05)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        s = random_state(g, rng)
        a = rhs_primitive(s, p)
        b = rhs_log(s.to_log_density(), p)
        a[0] /= s.density_e
        worst = max(worst, _rel(b, a))
    return CheckResult("formulation equivalence", worst < 1e-10, f"max relative mismatch {worst:.2e}")


def check_pressure_identities() -> CheckResult:
    f1 = float(dg.f_press(1.0, 2.0, 1.0))
    f2 = float(dg.f_press(2.0, 2.0, 1.0))
    ca, _ = dg.log_density_equivalence(0.5, 1.0)
    _, cb = dg.log_density_equivalence(1.0, 2.0)
    errs = (abs(f1 - (2 * np.log(2) - 1)), abs(f2 - 1.0),
            abs(ca - (2 * np.log(2)) ** 2), abs(cb - np.log(2) ** 2))
    return CheckResult("f_press and log-equivalence", max(errs) < 1e-12, f"max error {max(errs):.1e}")


def check_bogovskii(seed: int = 0, count: int = 10) -> CheckResult:
    g = Grid(2, 32)
    rng = np.random.default_rng(seed)
    div_res = curl_res = ratio = 0.0
    for _ in range(count):
        f = smooth_field(g, rng, bandwidth=8)
        nu = dg.bogovskii(g, f)
        div_res = max(div_res, _rel(g.divergence(nu), f))
        d = g.gradient(nu)
        curl_res = max(curl_res, float(np.max(np.abs(d[1, 0] - d[0, 1]))) / float(np.max(np.abs(f))))
        h1 = np.sqrt(sum(dg.sobolev_norm(g, c, 1) ** 2 for c in nu))
        ratio = max(ratio, h1 / dg.sobolev_norm(g, f, 0))
    ok = div_res < 1e-10 and curl_res < 1e-12
    return CheckResult("Bogovskii operator", ok,
                       f"div residual {div_res:.1e}, curl {curl_res:.1e}, H1/L2 ratio <= {ratio:.4f}")


def check_drag_relaxation() -> CheckResult:
    # constant fields: du/dt = -(u - v), dv/dt = (rho / n)(u - v)
    g = Grid(1, 8)
    rho, n, u0, v0 = 1.0, 2.0, 1.0, 0.0
    s = FluidState.from_components(g, np.full(8, rho), np.full((1, 8), u0), np.full(8, n), np.full((1, 8), v0))
    p = FluidParams(2.0, 0.1)
    dt, steps = 1e-3, 1000
    for _ in range(steps):
        s = step_rk4(s, p, dt)
    t = dt * steps
    k = 1 + rho / n
    w0 = u0 - v0
    w = w0 * np.exp(-k * t)
    mean = (rho * u0 + n * v0) / (rho + n)
    u_ex = mean + n / (rho + n) * w
    v_ex = mean - rho / (rho + n) * w
    err = max(abs(s.velocity_e[0, 0] - u_ex), abs(s.velocity_ns[0, 0] - v_ex))
    return CheckResult("drag relaxation ODE", err < 1e-8, f"max error {err:.1e}")


def check_ou_variance(seed: int = 0) -> CheckResult:
    g = Grid(1, 8)
    eps, count = 0.1, 20_000
    rng = np.random.default_rng(seed)
    ens = ParticleEnsemble(rng.random((count, 1)), rng.standard_normal((count, 1)), 1.0 / count, eps, seed)
    v = np.zeros((1, 8))
    acc = []
    for i in range(400):
        ens = step_particles(ens, v, eps / 4, g)
        if i >= 200:
            acc.append(float(np.var(ens.velocities)))
    var = float(np.mean(acc))
    expected = 1 / (1 + eps)
    m = deposit_moments(ens, g)
    mass_err = abs(float(g.integrate(m.rho_f)) - ens.mass)
    ok = abs(var / expected - 1) < 0.03 and mass_err < 1e-12
    return CheckResult("kinetic OU variance", ok,
                       f"variance {var:.4f} vs {expected:.4f}, deposited mass error {mass_err:.1e}")


def check_short_trajectory() -> CheckResult:
    g = Grid(1, 32)
    x = g.coords[0]
    s0 = FluidState.from_components(g, 1 + 0.05 * np.cos(2 * np.pi * x), (0.05 * np.sin(2 * np.pi * x) + 0.05)[None],
                                    1 + 0.05 * np.cos(2 * np.pi * x), np.zeros((1, 32)), PRIMITIVE)
    p = FluidParams(2.0, 0.1)
    recs = []
    run(s0, p, StepControl(t_end=8.0, viscous_safety=1.0),
        observers=[lambda s: recs.append((s.time, *dg.lyapunov(s), dg.averages(s).rho_c))],
        sample_interval=0.1)
    t, big_l, _, mass = map(np.array, zip(*recs))
    fit = dg.decay_fit(t, big_l)
    drift = float(np.max(np.abs(mass - mass[0])))
    ok = fit.rate > 0 and fit.r_squared > 0.99 and drift < 1e-10
    return CheckResult("short trajectory", ok,
                       f"C = {fit.rate:.4f}, r^2 = {fit.r_squared:.5f}, mass drift {drift:.1e}")


def run_checks(full: bool = False, seed: int = 0) -> list[CheckResult]:
    results = [
        check_spectral_calculus(seed),
        check_formulation_equivalence(seed),
        check_pressure_identities(),
        check_bogovskii(seed),
        check_drag_relaxation(),
        check_ou_variance(seed),
    ]
    if full:
        results.append(check_short_trajectory())
    return results
