"""Model parameters, scenario configuration, validation and seeding.

Configurations are stored as INI files with flat sections. Floats are
written with ``repr`` so a dump/load cycle reproduces every value bit for bit.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

PAYOFF_KINDS = ("constant", "quadratic", "double_well", "polynomial")
WINDOW_SPACES = ("state", "belief")
WINDOW_ANCHORS = ("absolute", "beta1", "z1_star", "z2_star", "beta2", "alpha")
FINANCE_MODES = ("safe-patch-block", "with-default", "tight-construction")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class FlowPayoff:
    """Flow payoff pi(z, m) = pi0(z) + eta * p_lambda * 1{m >= alpha}.

    ``double_well`` is pi0 - c_q * ((z - z_peak)^2 - width^2)^2, two humps at
    z_peak +- width. ``polynomial`` reads ascending coefficients from ``coeffs``.
    """

    kind: str = "double_well"
    pi0: float = 2.0
    c_q: float = 5.0
    z_peak: float = 0.0
    width: float = 0.5
    coeffs: tuple[float, ...] = ()
    eta: float = 0.0
    p_lambda: float = 1.0

    def poly(self) -> np.ndarray:
        """Ascending coefficients of the state part pi0(z)."""
        if self.kind == "constant":
            return np.array([self.pi0])
        if self.kind == "quadratic":
            c, zp = self.c_q, self.z_peak
            return np.array([self.pi0 - c * zp * zp, 2.0 * c * zp, -c])
        if self.kind == "double_well":
            shifted = np.polynomial.polynomial.polypow([-self.z_peak, 1.0], 2)
            shifted[0] -= self.width**2
            quartic = np.polynomial.polynomial.polypow(shifted, 2)
            out = -self.c_q * quartic
            out[0] += self.pi0
            return out
        if self.kind == "polynomial":
            return np.asarray(self.coeffs, dtype=float).copy()
        raise ValueError(f"unknown payoff kind {self.kind!r}")

    def adoption_bonus(self) -> float:
        return self.eta * self.p_lambda

    def __call__(self, z, m=None, alpha: float = math.inf):
        base = np.polynomial.polynomial.polyval(z, self.poly())
        if m is None or self.eta == 0.0:
            return base
        return base + self.adoption_bonus() * (np.asarray(m) >= alpha)


@dataclass(frozen=True)
class ModelParams:
    mu: float | tuple[float, ...] = 0.0
    sigma: float = 0.5
    r: float = 1.0
    payoff: FlowPayoff = field(default_factory=FlowPayoff)
    k1: float = 0.05
    k2: float = 0.1
    lambda_bar: float = 20.0
    c_k: float = 1e-4
    sigma_eps2: float = 0.01
    kappa: float = 1.0
    m_bar: float = 0.0
    a: float = 1.0
    p: float = 0.0
    c_d: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0

    @property
    def phi_max(self) -> float:
        return max(self.phi1, self.phi2)

    def drift_coeffs(self) -> np.ndarray:
        if isinstance(self.mu, (tuple, list)):
            return np.asarray(self.mu, dtype=float)
        return np.array([float(self.mu)])

    def drift_is_constant(self) -> bool:
        c = self.drift_coeffs()
        return bool(np.all(c[1:] == 0.0))

    def drift(self, z):
        return np.polynomial.polynomial.polyval(z, self.drift_coeffs())

    def clock_cost(self, lam: float) -> float:
        """Quadratic publication cost k(lambda) = c_k lambda^2 / 2."""
        return 0.5 * self.c_k * lam * lam

    @property
    def band_clock_cost(self) -> float:
        return self.clock_cost(self.lambda_bar)


@dataclass(frozen=True)
class SilenceWindow:
    """Posted window where the publication clock is off.

    The center is ``offset`` plus the value of ``anchor`` (a ladder or
    adoption quantity), so windows can be declared before the ladder is solved.
    """

    space: str = "state"
    anchor: str = "absolute"
    offset: float = 0.0
    radius: float = 0.05

    def center(self, anchors: dict[str, float]) -> float:
        if self.anchor == "absolute":
            return self.offset
        return anchors[self.anchor] + self.offset


@dataclass(frozen=True)
class SimSettings:
    horizon: float = 10.0
    dt: float = 1e-3
    n_paths: int = 1000
    base_seed: int = 20240601
    z0: float | str = "z1_star"
    m0: float | str = "z0"
    v0: float = -1.0  # negative: use the stationary variance
    bridge: bool = True
    workers: int = 1


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    write_events: bool = True
    event_paths: int = 2


@dataclass(frozen=True)
class TelemetrySettings:
    n_firms: int = 20
    n_months: int = 120
    month_length: float = 0.1
    window_l: int = 3
    tau_range: int = 6
    c_d_low: float = 0.0
    c_d_high: float = 0.5
    phi_ref: float = 1.0
    phi_spread: float = 0.5
    metric_noise: float = 0.0
    replications: int = 50
    burn_in: float = 2.0
    pre_pivot_radius: float = 0.4  # state window around the pivot trigger; 0 disables


@dataclass(frozen=True)
class FinanceSettings:
    mode: str = "safe-patch-block"
    horizon: float = 20.0
    n_paths: int = 2000


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams = field(default_factory=ModelParams)
    sim: SimSettings = field(default_factory=SimSettings)
    windows: tuple[SilenceWindow, ...] = ()
    outputs: OutputSettings = field(default_factory=OutputSettings)
    telemetry: TelemetrySettings = field(default_factory=TelemetrySettings)
    finance: FinanceSettings = field(default_factory=FinanceSettings)

    def with_overrides(self, n_paths: int | None = None, seed: int | None = None,
                       workers: int | None = None) -> "ScenarioConfig":
        sim = self.sim
        if n_paths is not None:
            sim = replace(sim, n_paths=n_paths)
        if seed is not None:
            sim = replace(sim, base_seed=seed)
        if workers is not None:
            sim = replace(sim, workers=workers)
        return replace(self, sim=sim)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def _finite(x) -> bool:
    try:
        return all(math.isfinite(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
    except (TypeError, ValueError):
        return False


def validate(config: ScenarioConfig | ModelParams) -> ValidationReport:
    """List every violated invariant; an empty list means the config is usable."""
    if isinstance(config, ModelParams):
        config = ScenarioConfig(params=config)
    p, s = config.params, config.sim
    out: list[str] = []

    def need(cond: bool, msg: str) -> None:
        if not cond:
            out.append(msg)

    for f in fields(ModelParams):
        if f.name == "payoff":
            continue
        need(_finite(getattr(p, f.name)), f"{f.name} must be finite")
    need(p.sigma > 0, "sigma > 0 required")
    need(p.r > 0, "r > 0 required")
    need(p.k1 >= 0, "k1 >= 0 required")
    need(p.k1 < p.k2, "k1 < k2 required")
    need(p.lambda_bar > 0, "lambda_bar > 0 required")
    need(p.c_k >= 0, "c_k >= 0 required")
    need(p.sigma_eps2 > 0, "sigma_eps2 > 0 required")
    need(p.kappa >= 0, "kappa >= 0 required")
    need(p.a > 0, "a > 0 required")
    need(p.p >= 0, "p >= 0 required")
    need(p.c_d >= 0, "c_d >= 0 required")
    need(p.phi1 >= 0 and p.phi2 >= 0, "phi1, phi2 >= 0 required")

    pay = p.payoff
    need(pay.kind in PAYOFF_KINDS, f"payoff kind must be one of {PAYOFF_KINDS}")
    need(pay.c_q >= 0, "c_q >= 0 required")
    need(pay.eta >= 0, "eta >= 0 required")
    need(_finite([pay.pi0, pay.c_q, pay.z_peak, pay.width, pay.eta, pay.p_lambda]),
         "payoff parameters must be finite")
    if pay.kind == "polynomial":
        need(len(pay.coeffs) > 0 and _finite(pay.coeffs), "polynomial payoff needs finite coefficients")

    need(s.dt > 0, "dt > 0 required")
    need(s.horizon > 0, "horizon > 0 required")
    need(s.dt <= s.horizon, "dt <= horizon required")
    need(s.n_paths >= 1, "n_paths >= 1 required")
    need(s.workers >= 1, "workers >= 1 required")
    for name in ("z0", "m0"):
        v = getattr(s, name)
        if isinstance(v, str):
            need(v in WINDOW_ANCHORS[1:] + ("z0",), f"{name} anchor {v!r} not recognised")
        else:
            need(_finite(v), f"{name} must be finite")

    for i, w in enumerate(config.windows):
        need(w.radius > 0, f"window {i}: radius > 0 required")
        need(w.space in WINDOW_SPACES, f"window {i}: space must be one of {WINDOW_SPACES}")
        need(w.anchor in WINDOW_ANCHORS, f"window {i}: anchor must be one of {WINDOW_ANCHORS}")

    t = config.telemetry
    need(t.n_firms >= 2, "telemetry n_firms >= 2 required")
    need(t.n_months >= 1, "telemetry n_months >= 1 required")
    need(t.month_length > 0, "telemetry month_length > 0 required")
    need(t.window_l >= 2, "telemetry window_l >= 2 required")
    need(t.tau_range >= t.window_l, "telemetry tau_range >= window_l required")
    need(0 <= t.c_d_low <= t.c_d_high, "telemetry 0 <= c_d_low <= c_d_high required")
    need(t.phi_ref > 0, "telemetry phi_ref > 0 required")
    need(0 <= t.phi_spread <= 1, "telemetry phi_spread in [0, 1] required")
    need(t.pre_pivot_radius >= 0, "telemetry pre_pivot_radius >= 0 required")
    need(config.finance.mode in FINANCE_MODES, f"finance mode must be one of {FINANCE_MODES}")
    need(config.finance.horizon > 0, "finance horizon > 0 required")
    need(config.finance.n_paths >= 1, "finance n_paths >= 1 required")
    return ValidationReport(out)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, path_index: int) -> int:
    """Counter-mode seed for one path.

    For a fixed base the map index -> seed is a composition of bijections on
    64-bit integers, so distinct indices below 2**64 never collide.
    """
    key = _splitmix64(int(base_seed) & _MASK64)
    return _splitmix64((key + int(path_index)) & _MASK64)


# -- INI serialization -------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(float(x)) for x in v)
    return str(v)


def _parse_like(template, text: str, name: str):
    text = text.strip()
    if isinstance(template, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name}: expected boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, tuple):
        return tuple(float(x) for x in text.split(",") if x.strip())
    if isinstance(template, float):
        return float(text)
    return text


def _section(obj) -> dict[str, str]:
    return {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj)}


def _build(cls, section, defaults):
    kwargs = {}
    known = {f.name for f in fields(cls)}
    for key in section:
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{section.name}]")
    for f in fields(cls):
        if f.name not in section:
            continue
        text = section[f.name]
        default = getattr(defaults, f.name)
        if f.name == "mu":
            vals = tuple(float(x) for x in text.split(",") if x.strip())
            kwargs[f.name] = vals[0] if len(vals) == 1 else vals
        elif f.name in ("z0", "m0"):
            try:
                kwargs[f.name] = float(text)
            except ValueError:
                kwargs[f.name] = text.strip()
        else:
            kwargs[f.name] = _parse_like(default, text, f.name)
    return cls(**kwargs)


def dumps_config(config: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    p = config.params
    params = {k: v for k, v in _section(p).items() if k != "payoff"}
    cp["params"] = params
    cp["payoff"] = _section(p.payoff)
    cp["sim"] = _section(config.sim)
    for i, w in enumerate(config.windows):
        cp[f"window.{i}"] = _section(w)
    cp["outputs"] = _section(config.outputs)
    cp["telemetry"] = _section(config.telemetry)
    cp["finance"] = _section(config.finance)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads_config(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    base = ScenarioConfig()
    allowed = {"params", "payoff", "sim", "outputs", "telemetry", "finance"}
    for name in cp.sections():
        if name not in allowed and not name.startswith("window."):
            raise ValueError(f"unknown section [{name}]")
    payoff = _build(FlowPayoff, cp["payoff"], base.params.payoff) if cp.has_section("payoff") else FlowPayoff()
    if cp.has_section("params"):
        params = _build(ModelParams, cp["params"], base.params)
        params = replace(params, payoff=payoff)
    else:
        params = replace(base.params, payoff=payoff)
    window_names = sorted((s for s in cp.sections() if s.startswith("window.")),
                          key=lambda s: int(s.split(".", 1)[1]))
    windows = tuple(_build(SilenceWindow, cp[s], SilenceWindow()) for s in window_names)

    def opt(name, cls, default):
        return _build(cls, cp[name], default) if cp.has_section(name) else default

    return ScenarioConfig(
        params=params,
        sim=opt("sim", SimSettings, base.sim),
        windows=windows,
        outputs=opt("outputs", OutputSettings, base.outputs),
        telemetry=opt("telemetry", TelemetrySettings, base.telemetry),
        finance=opt("finance", FinanceSettings, base.finance),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    return loads_config(Path(path).read_text())


def dump_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(config))


def config_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(dumps_config(config).encode()).hexdigest()


# -- shipped scenarios -------------------------------------------------------

def symmetric_benchmark(k: float = 0.05, **overrides) -> ModelParams:
    """Driftless double-well benchmark with equal reset costs.

    Equal costs break the strict k1 < k2 ordering that ``validate`` asks of
    scenario files; the solver itself accepts them.
    """
    base = dict(mu=0.0, sigma=0.5, r=1.0, payoff=FlowPayoff(), k1=k, k2=k)
    base.update(overrides)
    return ModelParams(**base)


def default_scenario() -> ScenarioConfig:
    """Asymmetric-cost scenario used by the CLI and the telemetry panels."""
    windows = (
        SilenceWindow(space="state", anchor="beta1", offset=0.0, radius=0.25),
        SilenceWindow(space="state", anchor="beta2", offset=0.0, radius=0.25),
    )
    return ScenarioConfig(params=ModelParams(), windows=windows)
