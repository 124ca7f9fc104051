"""Acceptance criteria, each checked at its stated tolerance.

Every test appends one ``PASS``/``FAIL`` line to the session summary (and
prints it), then asserts.  The expensive trajectories are shared through
module-scoped fixtures: the 1D N=128 run to t=20 and the 2D 64^2 run to t=10.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, smooth_field
from twophase import diagnostics as dg
from twophase.cli import EXIT_OK, dissipation_identity_errors, run_simulation
from twophase.config import make_initial_state, parse_config, with_overrides
from twophase.grid import Grid
from twophase.integrator import run, stable_dt, step_rk4
from twophase.kinetic import SweepConfig, run_limit_sweep
from twophase.model import LOG_DENSITY, PRIMITIVE

pytestmark = pytest.mark.slow

RUN_1D = """
[grid]
dim = 1
n_points = 128
[params]
gamma = 2
mu = 0.1
lambda = 0
[initial]
family = single_mode
amplitude = 0.05
velocity_amplitude = 0.05
ns_amplitude = 0.05
drift = 0.05
[time]
t_end = 20
viscous_safety = 1.0
[diagnostics]
cadence = 100
sigma = 0.05, 0.05
fit_window = 4, 16
"""

RUN_2D = (RUN_1D.replace("dim = 1", "dim = 2").replace("n_points = 128", "n_points = 64")
          .replace("t_end = 20", "t_end = 10").replace("fit_window = 4, 16", "fit_window = 4, 10"))


def report(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert passed, line


def _simulate(text, out_dir):
    cfg = with_overrides(parse_config(text), out_dir=str(out_dir))
    start = time.perf_counter()
    code, summary = run_simulation(cfg)
    return code, summary, time.perf_counter() - start


@pytest.fixture(scope="module")
def run_1d(tmp_path_factory):
    return _simulate(RUN_1D, tmp_path_factory.mktemp("run1d"))


@pytest.fixture(scope="module")
def run_2d(tmp_path_factory):
    return _simulate(RUN_2D, tmp_path_factory.mktemp("run2d"))


def _energy_series(n_points: int, cadence: float, t_end: float):
    cfg = parse_config(RUN_1D.replace("n_points = 128", f"n_points = {n_points}")
                       .replace("t_end = 20", f"t_end = {t_end}").replace("fit_window = 4, 16", ""))
    params = cfg.make_params()
    rows = []
    run(make_initial_state(cfg), params, cfg.make_control(),
        observers=[lambda s: rows.append((s.time, dg.total_energy(s, params), dg.dissipation(s, params)))],
        sample_interval=1.0 / cadence)
    return map(np.array, zip(*rows))


class TestConservation:
    def test_criterion_1(self, run_1d):
        """Masses to 1e-10, total momentum to 1e-7, in under a minute."""
        code, s, elapsed = run_1d
        d = s["max_drift"]
        ok = (code == EXIT_OK and d["mass_e"] <= 1e-10 and d["mass_ns"] <= 1e-10
              and d["momentum"] <= 1e-7 and elapsed <= 60)
        report(1, "conservation", ok,
               f"mass drift {d['mass_e']:.1e} / {d['mass_ns']:.1e}, momentum drift {d['momentum']:.1e}, "
               f"runtime {elapsed:.1f} s")


class TestDissipation:
    def test_criterion_2(self, run_1d):
        """Centered dE/dt against -2D within 5% at every interior sample; refining lowers the error."""
        _, s, _ = run_1d
        ident = s["dissipation_identity"]
        t_c, e_c, d_c = _energy_series(128, 100, 2.0)
        t_f, e_f, d_f = _energy_series(256, 200, 2.0)
        coarse = float(dissipation_identity_errors(t_c, e_c, d_c)[1].max())
        fine = float(dissipation_identity_errors(t_f, e_f, d_f)[1].max())
        ok = ident["max_rel_error"] <= 0.05 and ident["samples_checked"] > 0 and fine < coarse
        report(2, "dissipation identity", ok,
               f"max rel error {ident['max_rel_error']:.3%} over {ident['samples_checked']} samples; "
               f"on [0, 2]: N=128/cadence 100 {coarse:.2e} -> N=256/cadence 200 {fine:.2e}")


class TestLyapunovDecay:
    @staticmethod
    def _passes(s):
        fit = s["decay_fit"]
        return fit is not None and fit["C"] > 0 and fit["r_squared"] >= 0.99 and s["lyapunov_ratio"] <= 1e-3

    def test_criterion_3(self, run_1d, run_2d):
        """Exponential decay with r^2 >= 0.99 and a 1e-3 drop, in 1D and 2D, inside ten minutes."""
        (c1, s1, t1), (c2, s2, t2) = run_1d, run_2d
        ok = c1 == c2 == EXIT_OK and self._passes(s1) and self._passes(s2) and t1 + t2 <= 600
        f1, f2 = s1["decay_fit"], s2["decay_fit"]
        report(3, "Lyapunov decay", ok,
               f"1D C = {f1['C']:.4f} r^2 = {f1['r_squared']:.5f} L(20)/L(0) = {s1['lyapunov_ratio']:.1e}; "
               f"2D C = {f2['C']:.4f} r^2 = {f2['r_squared']:.5f} L(10)/L(0) = {s2['lyapunov_ratio']:.1e}; "
               f"runtime {t1 + t2:.0f} s")


class TestAlignment:
    def test_criterion_4(self, run_1d, run_2d):
        """Sup-norm alignment drops by 1e-2; the momentum gap decays exponentially."""
        parts, ok = [], True
        for label, (_, s, _) in (("1D", run_1d), ("2D", run_2d)):
            ratios = s["alignment"]["ratio"]
            gap = s["gap_fit"]
            ok &= all(r is not None and r <= 1e-2 for r in ratios)
            ok &= "rate" in gap and gap["rate"] > 0 and gap["r_squared"] >= 0.99
            parts.append(f"{label} ratios {ratios[0]:.1e}, {ratios[1]:.1e}, gap rate {gap.get('rate', math.nan):.3f} "
                         f"r^2 = {gap.get('r_squared', math.nan):.5f}")
        report(4, "velocity alignment", ok, "; ".join(parts))


class TestLowerLyapunov:
    def test_criterion_5(self, run_1d):
        """Running max of L_minus / D stays finite and grows at most 2x over the fit window."""
        _, s, _ = run_1d
        r = s["l_minus_over_d"]
        ok = (r is not None and math.isfinite(r["running_max"]) and r["window_growth"] is not None
              and r["window_growth"] <= 2)
        report(5, "L_minus <= C D", ok,
               f"running max {r['running_max']:.4f}, growth over window {r['window_growth']:.4f}")


class TestBogovskii:
    def test_criterion_6(self):
        """100 random mean-zero fields each at N=64 in 2D and 3D."""
        rng = np.random.default_rng(6)
        div_res = curl_res = ratio = 0.0
        for dim in (2, 3):
            g = Grid(dim, 64)
            for _ in range(100):
                f = smooth_field(g, rng, bandwidth=8)
                nu = dg.bogovskii(g, f)
                f_norm = dg.sobolev_norm(g, f, 0)
                div_res = max(div_res, dg.sobolev_norm(g, g.divergence(nu) - f, 0) / f_norm)
                d = g.gradient(nu)
                curl = sum(dg.sobolev_norm(g, d[i, j] - d[j, i], 0) ** 2
                           for i in range(dim) for j in range(i + 1, dim))
                curl_res = max(curl_res, math.sqrt(curl) / f_norm)
                ratio = max(ratio, dg.sobolev_norm(g, nu, 1) / f_norm)
        # |k B_k| = |f_k| and |B_k| <= |f_k| / (2 pi): the H1 ratio is at most sqrt(1 + 1 / (4 pi^2))
        bound = math.sqrt(1 + 1 / (4 * math.pi**2))
        ok = div_res <= 1e-10 and curl_res <= 1e-12 and ratio <= bound * (1 + 1e-12)
        report(6, "Bogovskii operator", ok,
               f"div residual {div_res:.1e}, curl residual {curl_res:.1e}, "
               f"H1/L2 ratio <= {ratio:.6f} (constant {bound:.6f})")


class TestPerturbedEnergy:
    def test_criterion_7(self, run_1d):
        """E^sigma / L in a fixed positive band; E^sigma non-increasing per sample and per step."""
        _, s, _ = run_1d
        band = s["e_sigma_over_l"]
        cfg = parse_config(RUN_1D.replace("t_end = 20", "t_end = 0.5"))
        params, control = cfg.make_params(), cfg.make_control()
        state = make_initial_state(cfg)
        prev, step_increase, steps = dg.perturbed_energy(state, params, 0.05, 0.05), -math.inf, 0
        while state.time < control.t_end:
            dt = min(stable_dt(state, params, control), control.t_end - state.time)
            state = step_rk4(state, params, dt)
            cur = dg.perturbed_energy(state, params, 0.05, 0.05)
            step_increase, prev, steps = max(step_increase, cur - prev), cur, steps + 1
        ok = (band["min"] > 0 and band["max"] / band["min"] <= 2
              and s["e_sigma_max_increase"] <= 1e-9 and step_increase <= 1e-9)
        report(7, "perturbed energy", ok,
               f"E_sigma/L in [{band['min']:.4f}, {band['max']:.4f}], max increase per sample "
               f"{s['e_sigma_max_increase']:.1e}, per step {step_increase:.1e} over {steps} steps")


class TestPressureBounds:
    def test_criterion_8(self):
        """Sandwich bands over r = 0.01..3 for four gammas; log-equivalence constants; exact values."""
        r = np.round(np.arange(1, 301) * 0.01, 2)
        parts, ok = [], True
        for gamma in (1.0, 1.4, 2.0, 3.0):
            lower, upper, c = dg.press_sandwich(gamma, r, 1.0)
            f = dg.f_press(gamma, r, 1.0)
            sq = (r - 1.0) ** 2
            ok &= lower > 0 and math.isfinite(upper)
            ok &= bool(np.all(sq / c <= f * (1 + 1e-12) + 1e-300)) and bool(np.all(f <= c * sq * (1 + 1e-12)))
            parts.append(f"gamma={gamma:g}: C={c:.4f}")
        c_a, c_b = dg.log_density_equivalence(float(r.min()), float(r.max()))
        ln_sq, lin_sq = np.log(r) ** 2, (r - 1) ** 2
        ok &= bool(np.all(c_b * lin_sq <= ln_sq * (1 + 1e-12))) and bool(np.all(ln_sq <= c_a * lin_sq * (1 + 1e-12)))
        e1 = abs(float(dg.f_press(1.0, 2.0, 1.0)) - (2 * math.log(2) - 1))
        e2 = abs(float(dg.f_press(2.0, 2.0, 1.0)) - 1.0)
        ok &= e1 <= 1e-12 and e2 <= 1e-12
        report(8, "f_press and log-equivalence", ok,
               ", ".join(parts) + f"; log band [{c_b:.4f}, {c_a:.4f}]; exact-value errors {e1:.1e}, {e2:.1e}")


class TestKineticLimit:
    def test_criterion_9(self):
        """1e5 particles, eps in {1, 0.3, 0.1, 0.03}: monotone errors, variance law within 2%."""
        start = time.perf_counter()
        rep = run_limit_sweep(SweepConfig(epsilons=(1.0, 0.3, 0.1, 0.03), particles=100_000))
        elapsed = time.perf_counter() - start
        var_err = max(row.uniform_relative_error for row in rep.rows)
        ok = rep.monotone and var_err <= 0.02 and elapsed <= 600
        errs = ", ".join(f"eps={row.epsilon:g}: {row.rho_error:.3f}/{row.u_error:.3f}" for row in rep.rows)
        report(9, "kinetic limit", ok,
               f"rho/u errors {errs}; variance rel error <= {var_err:.2%}; runtime {elapsed:.0f} s")


class TestIntegratorOrder:
    def test_criterion_10(self):
        """Self-convergence order over dt0, dt0/2, dt0/4 in both formulations."""
        cfg = parse_config(RUN_1D.replace("n_points = 128", "n_points = 32"))
        params = cfg.make_params()
        t_end, dt0 = 0.5, 2e-3
        orders = {}
        for formulation in (PRIMITIVE, LOG_DENSITY):
            s0 = make_initial_state(cfg)
            s0 = s0 if formulation == PRIMITIVE else s0.to_log_density()
            finals = []
            for k in range(3):
                dt, s = dt0 / 2**k, s0
                for _ in range(round(t_end / dt)):
                    s = step_rk4(s, params, dt)
                finals.append(s.fields)
            e1 = np.max(np.abs(finals[0] - finals[1]))
            e2 = np.max(np.abs(finals[1] - finals[2]))
            orders[formulation] = math.log2(e1 / e2)
        ok = all(p >= 3.8 for p in orders.values())
        report(10, "RK4 order", ok, ", ".join(f"{k}: {v:.3f}" for k, v in orders.items()))
