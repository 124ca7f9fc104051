"""Command-line front end: ``simulate``, ``kinetic-sweep``, ``check``, ``inspect-snapshot``.

Exit codes: 0 success, 2 configuration error, 3 blow-up (simulation
aborted), 4 fit or check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, echo, make_initial_state, parse_config, with_overrides
from .integrator import SimulationAbort, run
from .kinetic import SweepConfig, run_limit_sweep
from .model import ConfigError, VacuumError
from .snapshot import field_names, read_header, read_snapshot, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_FIT = 0, 2, 3, 4

SUMMARY_KEYS = (
    "status", "exit_code", "failure_time", "t_final", "samples", "density_convention",
    "decay_fit", "decay_fit_error", "gap_fit", "lyapunov_initial", "lyapunov_final", "lyapunov_ratio",
    "max_drift", "dissipation_identity", "l_minus_over_d", "e_over_l", "e_sigma_over_l",
    "e_max_increase", "e_sigma_max_increase", "alignment", "max_momenta_sq",
)


@dataclass
class Series:
    """Diagnostics records of one run, in time order."""

    records: list = field(default_factory=list)
    # denominator for the relative momentum drift when the total momentum is ~0
    momentum_scale: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("time")


# -- trajectory analysis --------------------------------------------------

def _fit_dict(fit: dg.DecayFit, window) -> dict:
    return {"C": fit.rate, "L0": fit.l0, "r_squared": fit.r_squared, "window": list(window)}


def dissipation_identity_errors(t, energy, diss) -> tuple[np.ndarray, np.ndarray]:
    """Interior sample times and ``|dE/dt + 2 D| / (2 D)`` with a centered difference."""
    t, energy, diss = map(np.asarray, (t, energy, diss))
    if t.size < 3:
        return np.array([]), np.array([])
    d_e = (energy[2:] - energy[:-2]) / (t[2:] - t[:-2])
    d_mid = diss[1:-1]
    ok = d_mid > 1e-12 * max(float(diss.max()), 1e-300)
    err = np.abs(d_e + 2 * d_mid)[ok] / (2 * d_mid[ok])
    return t[1:-1][ok], err


def analyze(series: Series, cfg: RunConfig) -> dict:
    """Every summary quantity that depends only on the recorded time series."""
    recs = series.records
    t = series.t
    big_l = series.column("lyapunov_L")
    out: dict = {"samples": len(recs), "t_final": float(t[-1]),
                 "density_convention": recs[0].density_convention}
    out["lyapunov_initial"], out["lyapunov_final"] = float(big_l[0]), float(big_l[-1])
    out["lyapunov_ratio"] = float(big_l[-1] / big_l[0]) if big_l[0] > 0 else None

    t_end = float(t[-1])
    window = tuple(cfg.diagnostics.fit_window) or (0.2 * t_end, 0.8 * t_end)
    fit_error = None
    if big_l[0] <= 1e-24:
        out["decay_fit"] = None
        fit_error = "skipped: initial state is an equilibrium"
    else:
        try:
            fit = dg.decay_fit(t, big_l, window)
            out["decay_fit"] = _fit_dict(fit, window)
            if not (fit.rate > 0 and fit.r_squared >= cfg.diagnostics.min_r_squared):
                fit_error = f"fit rejected: C = {fit.rate:.4g}, r^2 = {fit.r_squared:.5f}"
        except ValueError as exc:
            out["decay_fit"] = None
            fit_error = str(exc)
    out["decay_fit_error"] = fit_error

    gap = series.column("momentum_gap")
    try:
        g_fit = dg.decay_fit(t, gap, window, relative_floor=cfg.diagnostics.gap_floor)
        below = np.flatnonzero(gap < cfg.diagnostics.gap_floor * gap[0])
        g_end = min(window[1], float(t[below[0]])) if below.size else window[1]
        out["gap_fit"] = {"rate": g_fit.rate, "r_squared": g_fit.r_squared,
                          "window": [window[0], g_end]}
    except (ValueError, IndexError, np.linalg.LinAlgError) as exc:
        out["gap_fit"] = {"error": str(exc)}

    mass_e, mass_ns = series.column("mass_e"), series.column("mass_ns")
    mom = np.array([r.total_momentum for r in recs])
    mom_scale = max(float(np.linalg.norm(mom[0])), series.momentum_scale, 1e-300)
    out["max_drift"] = {
        "mass_e": float(np.max(np.abs(mass_e - mass_e[0])) / mass_e[0]),
        "mass_ns": float(np.max(np.abs(mass_ns - mass_ns[0])) / mass_ns[0]),
        "momentum": float(np.max(np.linalg.norm(mom - mom[0], axis=1)) / mom_scale),
        "momentum_scale": mom_scale,
    }

    _, err = dissipation_identity_errors(t, series.column("energy_E"), series.column("dissipation_D"))
    out["dissipation_identity"] = {
        "max_rel_error": float(err.max()) if err.size else None,
        "samples_checked": int(err.size),
    }

    diss = series.column("dissipation_D")
    l_minus = series.column("lyapunov_L_minus")
    pos = diss > 0
    ratio = np.where(pos, l_minus / np.where(pos, diss, 1.0), np.nan)
    running = np.fmax.accumulate(np.nan_to_num(ratio, nan=0.0))
    in_win = (t >= window[0]) & (t <= window[1])
    if pos.any() and in_win.any():
        start, end = running[in_win][0], running[in_win][-1]
        out["l_minus_over_d"] = {"running_max": float(running[-1]),
                                 "window_growth": float(end / start) if start > 0 else None}
    else:
        out["l_minus_over_d"] = None

    def band(num):
        ok = big_l > 0
        if not ok.any():
            return None
        r = num[ok] / big_l[ok]
        return {"min": float(r.min()), "max": float(r.max())}

    e_script = series.column("temporal_energy_script_E")
    e_sigma = series.column("perturbed_E_sigma")
    out["e_over_l"] = band(e_script)
    out["e_sigma_over_l"] = band(e_sigma)
    out["e_max_increase"] = float(np.max(np.diff(e_script))) if len(recs) > 1 else 0.0
    out["e_sigma_max_increase"] = float(np.max(np.diff(e_sigma))) if len(recs) > 1 else 0.0

    a0, a1 = recs[0].alignment_sup, recs[-1].alignment_sup
    out["alignment"] = {
        "initial": list(a0), "final": list(a1),
        "ratio": [a1[i] / a0[i] if a0[i] > 0 else None for i in range(2)],
    }
    out["max_momenta_sq"] = float(max(float(np.sum(r.averages.m_c**2) + np.sum(r.averages.j_c**2))
                                      for r in recs))
    return out


# -- simulate -------------------------------------------------------------

def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=False, default=float) + "\n")


def run_simulation(cfg: RunConfig, quiet: bool = True) -> tuple[int, dict]:
    """Integrate, writing ``diagnostics.csv``, snapshots and ``summary.json`` to ``cfg.output.dir``."""
    out_dir = Path(cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(echo(cfg))
    try:
        s0 = make_initial_state(cfg)
    except (ConfigError, VacuumError, ValueError, OSError) as exc:
        summary = {"status": "config-error", "exit_code": EXIT_CONFIG, "error": str(exc)}
        _write_json(out_dir / "summary.json", summary)
        return EXIT_CONFIG, summary
    params = cfg.make_params()
    control = cfg.make_control()
    orders = cfg.diagnostics.sobolev_orders
    sigma = cfg.diagnostics.sigma
    target = dg.alignment_target(s0)
    g = s0.grid
    rho0, u0, n0, v0 = s0.physical()
    series = Series(momentum_scale=float(np.linalg.norm(g.integrate(rho0 * np.abs(u0) + n0 * np.abs(v0)))))
    snap_times = sorted(cfg.output.snapshot_times)
    t_end = cfg.time.t_end
    next_report = [0.0]

    csv_path = out_dir / "diagnostics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dg.DiagnosticsRecord.header(g.dim, orders))
        fh.flush()

        def observe(state):
            rec = dg.record(state, params, sigma, target, orders)
            series.records.append(rec)
            writer.writerow([f"{x:.17g}" for x in rec.row()])
            fh.flush()
            for ts in snap_times:
                if abs(state.time - ts) <= 1e-9 * max(1.0, ts):
                    write_snapshot(out_dir / f"snapshot_t{ts:.6f}.snap", state, params)
            if not quiet and state.time >= next_report[0]:
                print(f"t = {state.time:8.4f} / {t_end:g}   L = {rec.lyapunov_L:.6e}", file=sys.stderr)
                next_report[0] += t_end / 10

        failure = None
        try:
            final = run(s0, params, control, observers=[observe], sample_interval=cfg.sample_interval)
            write_snapshot(out_dir / "final.snap", final, params)
        except SimulationAbort as exc:
            failure = exc
            write_snapshot(out_dir / "last_valid.snap", exc.last_state, params)

    summary = {"status": "ok", "exit_code": EXIT_OK, "failure_time": None}
    if failure is not None:
        summary.update(status="blow-up", exit_code=EXIT_BLOWUP, failure_time=failure.time,
                       error=str(failure))
    if series.records:
        summary.update(analyze(series, cfg))
    fit_error = summary.get("decay_fit_error")
    if failure is None and fit_error and not fit_error.startswith("skipped"):
        summary.update(status="fit-failure", exit_code=EXIT_FIT)
    _write_json(out_dir / "summary.json", summary)
    return summary["exit_code"], summary


# -- kinetic sweep --------------------------------------------------------

def sweep_config(cfg: RunConfig) -> SweepConfig:
    k = cfg.kinetic
    return SweepConfig(
        epsilons=k.epsilons, particles=k.particles, seed=k.seed, n_points=k.n_points,
        gamma=cfg.params.gamma, mu=cfg.params.mu, lam=cfg.params.lam,
        amplitude=k.amplitude, velocity_amplitude=k.velocity_amplitude,
        ns_amplitude=k.ns_amplitude, t_end=k.t_end, samples=k.samples,
        filter_modes=k.filter_modes, cfl=cfg.time.cfl, viscous_safety=cfg.time.viscous_safety)


def run_kinetic_sweep(cfg: RunConfig, quiet: bool = True):
    """Run the epsilon sweep; writes ``kinetic_sweep.txt``.  Exit 4 if errors are not monotone."""
    if not cfg.kinetic.enabled:
        raise ConfigError("[kinetic] enabled = false; the sweep needs the kinetic block enabled")
    if not cfg.kinetic.epsilons:
        raise ConfigError("[kinetic] epsilons is empty")
    report = run_limit_sweep(sweep_config(cfg))
    out_dir = Path(cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = report.table()
    (out_dir / "kinetic_sweep.txt").write_text(text + "\n")
    if not quiet:
        print(text)
    return (EXIT_OK if report.monotone else EXIT_FIT), report


# -- snapshot inspection --------------------------------------------------

def inspect_snapshot(path) -> str:
    header, _ = read_header(path)
    state, _ = read_snapshot(path)
    lines = [f"{k}: {v}" for k, v in header.items()]
    for name, f in zip(field_names(state.grid.dim), state.fields):
        lines.append(f"{name:>16s}  min {f.min(): .6e}  max {f.max(): .6e}  mean {f.mean(): .6e}")
    return "\n".join(lines)


# -- entry point ----------------------------------------------------------

def _load(args) -> RunConfig:
    text = Path(args.config).read_text() if args.config else ""
    return with_overrides(parse_config(text), out_dir=args.out_dir, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style run configuration")
    common.add_argument("--out-dir", metavar="PATH", help="override [output] dir")
    common.add_argument("--seed", type=int, help="override the initial-data and kinetic seeds")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    p = argparse.ArgumentParser(prog="twophase", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate and record diagnostics")
    sub.add_parser("kinetic-sweep", parents=[common], help="particle epsilon-limit sweep")
    chk = sub.add_parser("check", parents=[common], help="run the property checks headlessly")
    chk.add_argument("--full", action="store_true", help="include the slower trajectory checks")
    ins = sub.add_parser("inspect-snapshot", parents=[common], help="print a snapshot header and field ranges")
    ins.add_argument("path", help="snapshot file")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "inspect-snapshot":
            print(inspect_snapshot(args.path))
            return EXIT_OK
        if args.command == "check":
            from .checks import run_checks
            results = run_checks(full=args.full, seed=args.seed or 0)
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_FIT
        cfg = _load(args)
        if args.command == "simulate":
            code, summary = run_simulation(cfg, quiet=args.quiet)
            if not args.quiet:
                print(json.dumps({k: summary.get(k) for k in ("status", "decay_fit", "max_drift")},
                                 default=float, indent=2))
            return code
        code, _ = run_kinetic_sweep(cfg, quiet=args.quiet)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
