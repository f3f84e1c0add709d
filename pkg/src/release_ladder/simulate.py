"""Monte Carlo of the controlled private state, publication clock and beliefs.

Each path owns one generator seeded with ``derive_seed(base_seed, index)``
and draws, in order: the Poisson number of clock candidates, their sorted
times, their signal noise, the Brownian increments and the bridge uniforms.
Candidates are accepted when the state is outside every silence window, which
is exact thinning because the intensity only takes the values 0 and lambda_bar.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as K
from .belief import stationary_variance
from .config import ModelParams, ScenarioConfig, SilenceWindow, derive_seed
from .ladder import LadderSolution

log = logging.getLogger(__name__)

EVENT_COLUMNS = ("t", "kind", "z_pre", "z_post", "m", "v", "y")


@dataclass(frozen=True)
class EventRecord:
    t: float
    kind: str
    z_pre: float
    z_post: float
    m: float
    v: float
    y: float = math.nan


@dataclass(frozen=True)
class DefaultRule:
    """Absorb the path when z first reaches ``level`` from inside (side +1 above, -1 below)."""

    level: float
    side: int = 1


@dataclass(frozen=True)
class PathStats:
    n_publications: int
    n_patches: int
    n_pivots: int
    residence: tuple[float, ...]
    discounted_payoff: float
    discounted_clock_cost: float
    discounted_impulse_cost: float
    adoption_time: float
    default_time: float
    first_reset_time: float
    t_end: float
    z_end: float
    time_on: float

    @property
    def counts(self) -> dict[str, int]:
        return {"publication": self.n_publications, "patch": self.n_patches, "pivot": self.n_pivots}


@dataclass
class SimPath:
    seed: int
    columns: dict[str, np.ndarray]
    stats: PathStats
    trajectory: dict[str, np.ndarray] | None = None

    @property
    def events(self) -> list[EventRecord]:
        c = self.columns
        return [EventRecord(float(c["t"][i]), K.EVENT_NAMES[int(c["kind"][i])], float(c["z_pre"][i]),
                            float(c["z_post"][i]), float(c["m"][i]), float(c["v"][i]), float(c["y"][i]))
                for i in range(c["t"].size)]

    def times_of(self, kind: str) -> np.ndarray:
        code = K.EVENT_NAMES.index(kind)
        return self.columns["t"][self.columns["kind"] == code]


@dataclass(frozen=True)
class SimPlan:
    """Everything a path needs once the ladder and windows are known."""

    params: ModelParams
    dt: float
    n_steps: int
    z0: float
    m0: float
    v0: float
    lo: tuple[float, int, float]
    hi: tuple[float, int, float]
    windows: tuple[np.ndarray, np.ndarray, np.ndarray]
    alpha: float
    bridge: bool
    lambda_on: float

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


def resolve_windows(windows: Sequence[SilenceWindow], anchors: Mapping[str, float]):
    space = np.array([0 if w.space == "state" else 1 for w in windows], dtype=np.int64)
    center = np.array([w.center(dict(anchors)) for w in windows], dtype=float)
    radius = np.array([w.radius for w in windows], dtype=float)
    return space, center, radius


def _resolve_point(value, anchors: Mapping[str, float], fallback: float | None = None) -> float:
    if isinstance(value, str):
        if value == "z0" and fallback is not None:
            return fallback
        return float(anchors[value])
    return float(value)


def make_plan(config: ScenarioConfig, ladder: LadderSolution, alpha: float = math.nan,
              default: DefaultRule | None = None, pivot: bool = True, windows=None,
              z0: float | None = None, m0: float | None = None) -> SimPlan:
    p, s = config.params, config.sim
    anchors = dict(ladder.anchors())
    if math.isfinite(alpha):
        anchors["alpha"] = alpha
    wins = config.windows if windows is None else windows
    for w in wins:
        if w.space == "belief" and w.anchor == "alpha" and not p.m_bar > alpha:
            log.warning("belief window at alpha: drift does not carry beliefs up to alpha (m_bar <= alpha)")
    z_start = _resolve_point(s.z0, anchors) if z0 is None else float(z0)
    m_start = _resolve_point(s.m0, anchors, z_start) if m0 is None else float(m0)
    v_start = s.v0 if s.v0 >= 0 else stationary_variance(p)
    if not math.isfinite(v_start):
        v_start = p.sigma_eps2
    n_steps = max(1, int(round(s.horizon / s.dt)))
    width = ladder.beta2 - ladder.beta1
    if p.sigma * math.sqrt(s.dt) > 0.05 * width:
        log.warning("dt is coarse: one-step move %.3g vs band width %.3g", p.sigma * math.sqrt(s.dt), width)
    lo = (ladder.beta1, K.PATCH, ladder.z1_star)
    hi = (ladder.beta2, K.PIVOT, ladder.z2_star) if pivot else (math.inf, K.PIVOT, ladder.z2_star)
    if default is not None:
        if default.side > 0:
            hi = (default.level, K.DEFAULT, default.level)
        else:
            lo = (default.level, K.DEFAULT, default.level)
    return SimPlan(p, s.dt, n_steps, z_start, m_start, float(v_start), lo, hi,
                   resolve_windows(wins, anchors), float(alpha), s.bridge, p.lambda_bar)


def draw_randomness(plan: SimPlan, seed: int):
    rng = np.random.default_rng(seed)
    T = plan.horizon
    n_c = rng.poisson(plan.lambda_on * T) if plan.lambda_on > 0 else 0
    cand_t = np.sort(rng.uniform(0.0, T, n_c))
    cand_eps = rng.standard_normal(n_c) * math.sqrt(plan.params.sigma_eps2)
    dW = rng.standard_normal(plan.n_steps)
    bu = rng.random(plan.n_steps) if plan.bridge else np.ones(plan.n_steps)
    return dW, bu, cand_t, cand_eps


def run_plan(plan: SimPlan, seed: int, record: bool = False, backend: str | None = None) -> SimPath:
    p = plan.params
    dW, bu, cand_t, cand_eps = draw_randomness(plan, seed)
    cols, st, res, traj = K.run_path(
        plan.z0, plan.m0, plan.v0, plan.dt, dW, bu, cand_t, cand_eps, plan.lo, plan.hi,
        p.drift_coeffs(), p.sigma, plan.bridge, p.kappa, p.m_bar, p.sigma_eps2, plan.windows,
        plan.alpha, p.r, p.payoff.poly(), p.payoff.adoption_bonus(), p.clock_cost(plan.lambda_on),
        p.k1, p.k2, plan.lambda_on > 0, record=record, backend=backend)
    stats = PathStats(
        n_publications=int(st[K.S_NPUB]), n_patches=int(st[K.S_NPATCH]), n_pivots=int(st[K.S_NPIVOT]),
        residence=tuple(float(x) for x in res), discounted_payoff=float(st[K.S_PAYOFF]),
        discounted_clock_cost=float(st[K.S_CLOCK]), discounted_impulse_cost=float(st[K.S_IMPULSE]),
        adoption_time=float(st[K.S_ADOPT]), default_time=float(st[K.S_DEFAULT]),
        first_reset_time=float(st[K.S_FIRST_RESET]), t_end=float(st[K.S_TEND]), z_end=float(st[K.S_ZEND]),
        time_on=float(st[K.S_TIME_ON]))
    return SimPath(seed, cols, stats, traj)


def simulate_path(config: ScenarioConfig, ladder: LadderSolution, alpha: float = math.nan,
                  seed: int | None = None, record: bool = False, backend: str | None = None,
                  **plan_kwargs) -> SimPath:
    """One path; ``seed`` defaults to the seed of path 0."""
    plan = make_plan(config, ladder, alpha, **plan_kwargs)
    if seed is None:
        seed = derive_seed(config.sim.base_seed, 0)
    return run_plan(plan, seed, record, backend)


# -- batches -----------------------------------------------------------------

STAT_FIELDS = ("n_publications", "n_patches", "n_pivots", "discounted_payoff", "discounted_clock_cost",
               "discounted_impulse_cost", "adoption_time", "default_time", "first_reset_time", "t_end",
               "z_end", "time_on")


@dataclass
class BatchStats:
    n_paths: int
    base_seed: int
    table: np.ndarray            # paths x STAT_FIELDS
    residence: np.ndarray        # paths x windows
    window_radii: tuple[float, ...] = ()
    means: dict[str, float] = field(default_factory=dict)
    std_errors: dict[str, float] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.table[:, STAT_FIELDS.index(name)]

    @property
    def n_cycles(self) -> np.ndarray:
        return self.column("n_patches") + self.column("n_pivots")

    def cycle_time(self) -> tuple[float, float, int]:
        """Mean and s.e. of the first reset time; also the number of censored paths."""
        x = self.column("first_reset_time")
        ok = np.isfinite(x)
        n = int(ok.sum())
        if n == 0:
            return math.nan, math.nan, self.n_paths
        se = float(np.std(x[ok], ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return float(np.mean(x[ok])), se, self.n_paths - n

    def to_dict(self) -> dict:
        mean, se, cens = self.cycle_time()
        return {"n_paths": self.n_paths, "base_seed": self.base_seed, "means": self.means,
                "std_errors": self.std_errors, "window_radii": list(self.window_radii),
                "residence_mean": [float(x) for x in self.residence.mean(axis=0)] if self.residence.size else [],
                "cycle_time": {"mean": mean, "se": se, "censored": cens}}


def _summarise(table: np.ndarray) -> tuple[dict, dict]:
    means, ses = {}, {}
    n = table.shape[0]
    for j, name in enumerate(STAT_FIELDS):
        col = table[:, j]
        ok = np.isfinite(col)
        k = int(ok.sum())
        means[name] = float(np.mean(col[ok])) if k else math.nan
        ses[name] = float(np.std(col[ok], ddof=1) / math.sqrt(k)) if k > 1 else (0.0 if n == 1 else math.nan)
    return means, ses


def _row(path: SimPath) -> list[float]:
    return [float(getattr(path.stats, f)) for f in STAT_FIELDS]


def run_batch(config: ScenarioConfig, ladder: LadderSolution, alpha: float = math.nan,
              n_paths: int | None = None, workers: int | None = None, backend: str | None = None,
              **plan_kwargs) -> BatchStats:
    """Simulate paths 0..n-1 and aggregate in index order.

    Per-path results land in a preallocated table, so the aggregate does not
    depend on how paths are spread over worker threads.
    """
    n = config.sim.n_paths if n_paths is None else int(n_paths)
    if n < 1:
        raise ValueError("n_paths >= 1 required")
    workers = config.sim.workers if workers is None else int(workers)
    plan = make_plan(config, ladder, alpha, **plan_kwargs)
    base = config.sim.base_seed
    n_win = plan.windows[0].shape[0]
    table = np.empty((n, len(STAT_FIELDS)))
    residence = np.empty((n, n_win))

    def work(idx: range) -> None:
        for i in idx:
            path = run_plan(plan, derive_seed(base, i), backend=backend)
            table[i] = _row(path)
            residence[i] = path.stats.residence

    if workers <= 1 or n == 1:
        work(range(n))
    else:
        chunks = [range(lo, min(n, lo + max(1, n // (4 * workers)))) for lo in
                  range(0, n, max(1, n // (4 * workers)))]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    means, ses = _summarise(table)
    return BatchStats(n, base, table, residence, tuple(float(x) for x in plan.windows[2]), means, ses)


def simulate_exit_times(params: ModelParams, band: tuple[float, float], z0: float, n_paths: int,
                        dt: float = 1e-3, base_seed: int = 0, bridge: bool = True, block: int = 512,
                        max_time: float = math.inf, backend: str | None = None) -> np.ndarray:
    """First exit times from the band; paths still inside after ``max_time`` return nan."""
    b1, b2 = float(band[0]), float(band[1])
    rngs = [np.random.default_rng(derive_seed(base_seed, i)) for i in range(n_paths)]
    z = np.full(n_paths, float(z0))
    steps = np.zeros(n_paths, dtype=np.int64)
    done = np.zeros(n_paths, dtype=np.bool_)
    t_exit = np.full(n_paths, np.nan)
    mu_c = params.drift_coeffs()
    normals = np.empty((n_paths, block))
    uniforms = np.ones((n_paths, block))
    while not done.all():
        alive = np.flatnonzero(~done)
        if steps[alive].min() * dt >= max_time:
            break
        for i in alive:
            normals[i] = rngs[i].standard_normal(block)
            if bridge:
                uniforms[i] = rngs[i].random(block)
        K.exit_block(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, params.sigma, dt, bridge,
                     backend=backend)
    return t_exit


# -- reports and export ------------------------------------------------------

@dataclass(frozen=True)
class ResidenceRow:
    delta: float
    residence_per_cycle: float
    clock_saving_per_cycle: float
    residence_over_delta: float


def window_residence_report(batches: Mapping[float, BatchStats | None], clock_cost: float) -> list[ResidenceRow]:
    """Residence time inside all windows per reset cycle, one row per radius.

    Radius 0 (or a missing batch) is the empty window and reports zero.
    """
    rows = []
    for delta in sorted(batches):
        b = batches[delta]
        if delta == 0 or b is None:
            rows.append(ResidenceRow(float(delta), 0.0, 0.0, math.nan if delta == 0 else 0.0))
            continue
        total = float(np.sum(b.residence))
        cycles = float(np.sum(b.n_cycles))
        per = total / cycles if cycles > 0 else math.nan
        rows.append(ResidenceRow(float(delta), per, clock_cost * per, per / delta))
    return rows


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def events_to_csv(path: SimPath, target: str | Path) -> None:
    lines = [",".join(EVENT_COLUMNS)]
    for e in path.events:
        lines.append(",".join(_fmt(getattr(e, c)) for c in EVENT_COLUMNS))
    Path(target).write_text("\n".join(lines) + "\n")


def path_to_dict(path: SimPath) -> dict:
    st = path.stats
    return {"seed": path.seed,
            "events": [{c: (getattr(e, c) if c == "kind" or not math.isnan(getattr(e, c)) else None)
                        for c in EVENT_COLUMNS} for e in path.events],
            "stats": {f: (None if isinstance(v, float) and math.isnan(v) else v)
                      for f, v in st.__dict__.items()}}


def path_to_json(path: SimPath) -> str:
    return json.dumps(path_to_dict(path), sort_keys=True)


def belief_path_csv(path: SimPath, target: str | Path) -> None:
    """Belief trajectory (t, m, v, publication flag) on the simulation grid."""
    if path.trajectory is None:
        raise ValueError("path was simulated without record=True")
    tr = path.trajectory
    pub = np.zeros(tr["t"].size, dtype=int)
    dt = tr["t"][1] - tr["t"][0] if tr["t"].size > 1 else 1.0
    for t in path.times_of("publication"):
        pub[min(int(t // dt), pub.size - 1)] = 1
    lines = ["t,m,v,publication_flag"]
    lines += [f"{_fmt(t)},{_fmt(m)},{_fmt(v)},{f}" for t, m, v, f in zip(tr["t"], tr["m"], tr["v"], pub)]
    Path(target).write_text("\n".join(lines) + "\n")
