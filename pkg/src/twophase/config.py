"""Run configuration: INI-style text <-> validated :class:`RunConfig`, and initial data.

The text format is ``key = value`` lines grouped under ``[section]`` headers.
Every section and key is optional (defaults fill the gaps) but unknown
sections or keys are errors.  :func:`echo` writes the canonical form, which
parses back to an equal config.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .grid import Grid
from .integrator import StepControl
from .model import FORMULATIONS, PRIMITIVE, ConfigError, FluidParams, FluidState

MIN_INITIAL_DENSITY = 0.5
FAMILIES = ("single_mode", "random_smooth", "snapshot")


@dataclass(frozen=True)
class GridSection:
    dim: int = 1
    n_points: tuple[int, ...] = (128,)
    length: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class ParamsSection:
    gamma: float = 2.0
    mu: float = 0.1
    # "lambda" in the text form
    lam: float = 0.0


@dataclass(frozen=True)
class ModelSection:
    formulation: str = PRIMITIVE


@dataclass(frozen=True)
class InitialSection:
    """``single_mode``: rho = 1 + amplitude cos(2 pi k.x),
    u = velocity_amplitude sin(2 pi k.x) e + drift e, n = 1 + ns_amplitude cos(2 pi k'.x), v = 0.
    ``random_smooth``: every unknown gets seeded band-limited noise of sup norm ``amplitude``.
    """

    family: str = "single_mode"
    amplitude: float = 0.05
    velocity_amplitude: float = 0.05
    ns_amplitude: float = 0.05
    mode: tuple[int, ...] = (1,)
    ns_mode: tuple[int, ...] = (1,)
    direction: tuple[float, ...] = (1.0,)
    drift: float = 0.0
    bandwidth: int = 3
    seed: int = 0
    snapshot: str = ""


@dataclass(frozen=True)
class TimeSection:
    t_end: float = 20.0
    cfl: float = 0.4
    dt_max: float = 1e-2
    viscous_safety: float = 0.25


@dataclass(frozen=True)
class DiagnosticsSection:
    cadence: float = 100.0
    sigma: tuple[float, float] = (0.05, 0.05)
    sobolev_orders: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    # empty tuple = default window [0.2 T, 0.8 T]
    fit_window: tuple[float, ...] = ()
    min_r_squared: float = 0.99
    gap_floor: float = 1e-8


@dataclass(frozen=True)
class KineticSection:
    enabled: bool = False
    epsilons: tuple[float, ...] = (1.0, 0.3, 0.1, 0.03)
    particles: int = 100_000
    seed: int = 1
    n_points: int = 32
    t_end: float = 1.0
    samples: int = 20
    filter_modes: int = 4
    amplitude: float = 0.2
    velocity_amplitude: float = 0.2
    ns_amplitude: float = 0.1


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    snapshot_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    model: ModelSection = field(default_factory=ModelSection)
    initial: InitialSection = field(default_factory=InitialSection)
    time: TimeSection = field(default_factory=TimeSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    kinetic: KineticSection = field(default_factory=KineticSection)
    output: OutputSection = field(default_factory=OutputSection)

    def make_grid(self) -> Grid:
        return Grid(self.grid.dim, self.grid.n_points, self.grid.length)

    def make_params(self) -> FluidParams:
        return FluidParams(self.params.gamma, self.params.mu, self.params.lam)

    def make_control(self) -> StepControl:
        t = self.time
        return StepControl(t_end=t.t_end, cfl=t.cfl, dt_max=t.dt_max, viscous_safety=t.viscous_safety)

    @property
    def sample_interval(self) -> float:
        return 1.0 / self.diagnostics.cadence


_SECTION_TYPES = {
    "grid": GridSection, "params": ParamsSection, "model": ModelSection,
    "initial": InitialSection, "time": TimeSection, "diagnostics": DiagnosticsSection,
    "kinetic": KineticSection, "output": OutputSection,
}
# text key -> attribute name where they differ
_ALIASES = {("params", "lambda"): "lam"}


def _text_key(section: str, attr: str) -> str:
    for (s, k), a in _ALIASES.items():
        if s == section and a == attr:
            return k
    return attr


# -- value conversion -----------------------------------------------------

def _split(raw: str) -> list[str]:
    return [p for p in re.split(r"[,\s]+", raw.strip()) if p]


def _convert(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw.strip()
        if isinstance(default, tuple):
            parts = _split(raw)
            if default and isinstance(default[0], int) and not isinstance(default[0], bool):
                return tuple(int(p) for p in parts)
            return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise TypeError(f"unsupported default {default!r}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _line_of(text: str, section: str, key: str | None = None) -> int:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            if k == key:
                return i
    return 0


# -- parse / echo ---------------------------------------------------------

def parse_config(text: str) -> RunConfig:
    """Validate config text; raises :class:`ConfigError` naming the line at fault."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside any [section]: {exc.line.strip()!r}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"line {lineno}: cannot parse {line.strip()!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"line {exc.lineno}: {exc}") from None

    sections = {}
    for name in cp.sections():
        key = name.strip().lower()
        if key not in _SECTION_TYPES:
            raise ConfigError(f"line {_line_of(text, key)}: unknown section [{name}]; "
                              f"expected one of {', '.join(_SECTION_TYPES)}")
        cls = _SECTION_TYPES[key]
        defaults = cls()
        known = {_text_key(key, f.name): f.name for f in fields(cls)}
        values = {}
        for opt, raw in cp.items(name):
            where = f"line {_line_of(text, key, opt)}: [{key}] {opt}"
            if opt not in known:
                raise ConfigError(f"{where}: unknown key; expected one of {', '.join(known)}")
            attr = known[opt]
            values[attr] = _convert(raw, getattr(defaults, attr), where)
        sections[key] = dataclasses.replace(defaults, **values)
    cfg = RunConfig(**sections)
    validate(cfg)
    return _normalize(cfg)


def _normalize(cfg: RunConfig) -> RunConfig:
    """Broadcast per-axis entries so equal configs compare equal."""
    d = cfg.grid.dim

    def per_axis(t):
        return tuple(t) * d if len(t) == 1 else tuple(t)

    g = dataclasses.replace(cfg.grid, n_points=per_axis(cfg.grid.n_points),
                            length=per_axis(cfg.grid.length))
    ini = cfg.initial
    ini = dataclasses.replace(ini, mode=_pad(ini.mode, d, 0), ns_mode=_pad(ini.ns_mode, d, 0),
                              direction=_pad(ini.direction, d, 0.0))
    return dataclasses.replace(cfg, grid=g, initial=ini)


def _pad(t, d, fill):
    t = tuple(t)
    return t + (type(fill)(fill),) * (d - len(t)) if len(t) < d else t


def validate(cfg: RunConfig) -> None:
    """Check every cross-field constraint; raises :class:`ConfigError` citing the inequality."""
    g = cfg.grid
    if g.dim not in (1, 2, 3):
        raise ConfigError(f"[grid] dim = {g.dim} violates dim ∈ {{1, 2, 3}}")
    for name, t in (("n_points", g.n_points), ("length", g.length)):
        if len(t) not in (1, g.dim):
            raise ConfigError(f"[grid] {name} needs 1 or {g.dim} entries, got {len(t)}")
    if any(n < 8 or n % 2 for n in g.n_points):
        raise ConfigError(f"[grid] n_points = {g.n_points} violates 'even and ≥ 8'")
    if any(ell <= 0 for ell in g.length):
        raise ConfigError(f"[grid] length = {g.length} violates length > 0")
    cfg.make_params()  # raises ConfigError citing γ > 1, μ > 0, λ + 2μ > 0
    if cfg.model.formulation not in FORMULATIONS:
        raise ConfigError(f"[model] formulation = {cfg.model.formulation!r}; expected one of {FORMULATIONS}")
    t = cfg.time
    if not t.t_end > 0:
        raise ConfigError(f"[time] t_end = {t.t_end} violates t_end > 0")
    if not 0 < t.cfl <= 1:
        raise ConfigError(f"[time] cfl = {t.cfl} violates 0 < cfl ≤ 1")
    if not t.dt_max > 0:
        raise ConfigError(f"[time] dt_max = {t.dt_max} violates dt_max > 0")
    if not 0 < t.viscous_safety <= 1:
        raise ConfigError(f"[time] viscous_safety = {t.viscous_safety} violates 0 < viscous_safety ≤ 1")
    dg = cfg.diagnostics
    if not dg.cadence > 0:
        raise ConfigError(f"[diagnostics] cadence = {dg.cadence} violates cadence > 0")
    if len(dg.sigma) != 2 or any(s < 0 for s in dg.sigma):
        raise ConfigError(f"[diagnostics] sigma = {dg.sigma} needs two entries with σ ≥ 0")
    if any(s < 0 for s in dg.sobolev_orders):
        raise ConfigError(f"[diagnostics] sobolev_orders = {dg.sobolev_orders} violates s ≥ 0")
    if dg.fit_window and (len(dg.fit_window) != 2 or not dg.fit_window[0] < dg.fit_window[1]):
        raise ConfigError(f"[diagnostics] fit_window = {dg.fit_window} needs t_a < t_b")
    ini = cfg.initial
    if ini.family not in FAMILIES:
        raise ConfigError(f"[initial] family = {ini.family!r}; expected one of {FAMILIES}")
    if ini.family == "snapshot" and not ini.snapshot:
        raise ConfigError("[initial] family = snapshot needs a snapshot path")
    for name in ("mode", "ns_mode", "direction"):
        if len(getattr(ini, name)) > g.dim:
            raise ConfigError(f"[initial] {name} has more than dim = {g.dim} entries")
    if ini.bandwidth < 1:
        raise ConfigError(f"[initial] bandwidth = {ini.bandwidth} violates bandwidth ≥ 1")
    if ini.family == "single_mode":
        if not any(ini.direction):
            raise ConfigError("[initial] direction must be a nonzero vector")
        for name, a in (("amplitude", ini.amplitude), ("ns_amplitude", ini.ns_amplitude)):
            if abs(a) >= 1 - MIN_INITIAL_DENSITY:
                raise ConfigError(f"[initial] {name} = {a} violates min density = 1 - |{name}| > "
                                  f"{MIN_INITIAL_DENSITY}")
    if ini.family == "random_smooth" and abs(ini.amplitude) >= 1 - MIN_INITIAL_DENSITY:
        raise ConfigError(f"[initial] amplitude = {ini.amplitude} violates min density > {MIN_INITIAL_DENSITY}")
    k = cfg.kinetic
    if k.enabled:
        if not k.epsilons:
            raise ConfigError("[kinetic] epsilons is empty; need at least one ε > 0")
        if any(e <= 0 for e in k.epsilons):
            raise ConfigError(f"[kinetic] epsilons = {k.epsilons} violates ε > 0")
        if k.particles < 1:
            raise ConfigError(f"[kinetic] particles = {k.particles} violates particles ≥ 1")
        if k.n_points < 8 or k.n_points % 2:
            raise ConfigError(f"[kinetic] n_points = {k.n_points} violates 'even and ≥ 8'")
        if not k.t_end > 0 or k.samples < 1:
            raise ConfigError("[kinetic] needs t_end > 0 and samples ≥ 1")
        for name in ("amplitude", "ns_amplitude"):
            if abs(getattr(k, name)) >= 1 - MIN_INITIAL_DENSITY:
                raise ConfigError(f"[kinetic] {name} violates min density > {MIN_INITIAL_DENSITY}")
    for ts in cfg.output.snapshot_times:
        if not 0 <= ts <= t.t_end:
            raise ConfigError(f"[output] snapshot time {ts} violates 0 ≤ t ≤ t_end = {t.t_end}")
        ticks = ts * dg.cadence
        if abs(ticks - round(ticks)) > 1e-9 * max(1.0, ticks):
            raise ConfigError(f"[output] snapshot time {ts} is not a multiple of 1/cadence = {1 / dg.cadence}")


def echo(cfg: RunConfig) -> str:
    """Canonical text: every section and key, in declaration order."""
    out = []
    for f in fields(RunConfig):
        sec = getattr(cfg, f.name)
        out.append(f"[{f.name}]")
        for sf in fields(sec):
            out.append(f"{_text_key(f.name, sf.name)} = {_format(getattr(sec, sf.name))}")
        out.append("")
    return "\n".join(out)


def with_overrides(cfg: RunConfig, out_dir: str | None = None, seed: int | None = None) -> RunConfig:
    if out_dir is not None:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, dir=out_dir))
    if seed is not None:
        cfg = dataclasses.replace(cfg, initial=dataclasses.replace(cfg.initial, seed=seed),
                                  kinetic=dataclasses.replace(cfg.kinetic, seed=seed))
    return cfg


# -- initial data ---------------------------------------------------------

def _band_limited(grid: Grid, rng: np.random.Generator, bandwidth: int, amplitude: float) -> np.ndarray:
    """Mean-zero random trigonometric polynomial with modes ``1 <= max|k_i| <= bandwidth``."""
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for m in np.meshgrid(*grid.modes, indexing="ij"):
        keep &= np.abs(m) <= bandwidth
    keep.flat[0] = False
    coef = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    f = grid.ifft(coef * keep)
    peak = float(np.max(np.abs(f)))
    return f * (amplitude / peak) if peak > 0 else f


def make_initial_state(cfg: RunConfig) -> FluidState:
    """Build the configured initial data and verify positivity before any stepping."""
    from .snapshot import read_snapshot

    ini = cfg.initial
    if ini.family == "snapshot":
        state, _ = read_snapshot(ini.snapshot)
        return state if state.formulation == cfg.model.formulation else (
            state.to_primitive() if cfg.model.formulation == PRIMITIVE else state.to_log_density())
    grid = cfg.make_grid()
    d = grid.dim
    x = grid.coords
    if ini.family == "single_mode":
        phase = 2 * np.pi * np.tensordot(np.array(ini.mode, dtype=float), x, axes=1)
        phase_ns = 2 * np.pi * np.tensordot(np.array(ini.ns_mode, dtype=float), x, axes=1)
        e = np.array(ini.direction, dtype=float)
        e = e / np.linalg.norm(e)
        rho = 1.0 + ini.amplitude * np.cos(phase)
        u = (ini.velocity_amplitude * np.sin(phase) + ini.drift)[None] * e.reshape(d, *([1] * d))
        n = 1.0 + ini.ns_amplitude * np.cos(phase_ns)
        v = np.zeros_like(u)
    else:
        rng = np.random.default_rng(ini.seed)
        a = ini.amplitude
        rho = 1.0 + _band_limited(grid, rng, ini.bandwidth, a)
        u = np.array([_band_limited(grid, rng, ini.bandwidth, a) for _ in range(d)])
        n = 1.0 + _band_limited(grid, rng, ini.bandwidth, a)
        v = np.array([_band_limited(grid, rng, ini.bandwidth, a) for _ in range(d)])
    for name, dens in (("rho", rho), ("n", n)):
        low = float(dens.min())
        if not low > MIN_INITIAL_DENSITY:
            raise ConfigError(f"initial min {name} = {low:.4g} violates min density > {MIN_INITIAL_DENSITY}")
    state = FluidState.from_components(grid, rho, u, n, v, PRIMITIVE)
    return state if cfg.model.formulation == PRIMITIVE else state.to_log_density()
