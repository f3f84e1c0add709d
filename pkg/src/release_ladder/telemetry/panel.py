"""Synthetic firm-month telemetry panels built from simulated firms."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .. import _kernels as K
from ..config import ScenarioConfig, SilenceWindow, derive_seed
from ..financing import solve_levered_equity
from ..ladder import LadderSolution
from ..simulate import SimPath, make_plan, run_plan

PANEL_COLUMNS = ("firm_id", "month", "event_time", "n_signals", "dispersion_x", "dispersion_time",
                 "n_patches", "major_reset_flag", "leverage", "rev_proxy", "silence_depth")
HOURS_PER_MONTH = 720.0


@dataclass(frozen=True)
class FirmRecord:
    firm_id: int
    path: SimPath
    leverage: float
    rev_proxy: float


@dataclass
class Panel:
    rows: pd.DataFrame
    firms: list[FirmRecord]
    month_length: float
    burn_in: float
    pooled_mean: float
    pooled_sd: float
    event_depths: pd.DataFrame  # firm_id, event_month, silence_depth

    def to_csv(self, target) -> None:
        self.rows.to_csv(target, index=False, float_format="%.17g", na_rep="")


def population_variance(values: Sequence[float]) -> float:
    """Within-month dispersion: variance with denominator N; 0 for one value, nan for none."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return math.nan
    if x.size == 1:
        return 0.0
    return float(np.mean((x - x.mean()) ** 2))


def timestamp_iqr(hours: Sequence[float]) -> float:
    x = np.asarray(hours, dtype=float)
    if x.size == 0:
        return math.nan
    q75, q25 = np.percentile(x, [75.0, 25.0])
    return float(q75 - q25)


def _event_time(months: np.ndarray, events: np.ndarray, tau_range: int) -> tuple[np.ndarray, np.ndarray]:
    """Months relative to the nearest event (upcoming event on ties); nan beyond the range."""
    tau = np.full(months.size, np.nan)
    idx = np.full(months.size, -1)
    if events.size == 0:
        return tau, idx
    diff = months[:, None] - events[None, :]
    score = np.abs(diff) * 2 + (diff > 0)  # ties go to the upcoming event
    j = np.argmin(score, axis=1)
    d = diff[np.arange(months.size), j]
    ok = np.abs(d) <= tau_range
    tau[ok] = d[ok]
    idx[ok] = j[ok]
    return tau, idx


def silence_depth(counts: np.ndarray, event_month: int, baseline: float, k: int = 3) -> float:
    """Mean relative drop in monthly counts over the k months before the event."""
    if not baseline > 0:
        return math.nan
    pre = [counts[event_month + t] for t in range(-k, 0) if 0 <= event_month + t < counts.size]
    if not pre:
        return math.nan
    return float(np.mean([(baseline - c) / baseline for c in pre]))


def build_panel(firms: Sequence[FirmRecord], month_length: float, n_months: int, burn_in: float = 0.0,
                tau_range: int = 6, depth_k: int = 3, metric_noise: float = 0.0, seed: int = 0) -> Panel:
    """Bin each firm's events into months and compute the telemetry columns.

    Signals are standardized with the pooled mean and s.d. over all firms and
    months before the within-month dispersion is taken.
    """
    if not firms:
        raise ValueError("empty simulation set")
    rng = np.random.default_rng(seed)
    per_firm = []
    all_y = []
    for f in firms:
        c = f.path.columns
        t = c["t"] - burn_in
        keep = (t >= 0) & (t < n_months * month_length)
        kind = c["kind"][keep]
        t = t[keep]
        month = np.floor(t / month_length).astype(int)
        pub = kind == K.PUBLICATION
        y = c["y"][keep][pub]
        if metric_noise > 0:
            y = y + metric_noise * rng.standard_normal(y.size)
        all_y.append(y)
        per_firm.append((f, t, month, kind, pub, y))
    pooled = np.concatenate(all_y) if all_y else np.zeros(0)
    mean = float(pooled.mean()) if pooled.size else 0.0
    sd = float(pooled.std()) if pooled.size > 1 else 1.0
    sd = sd if sd > 0 else 1.0

    frames, depths = [], []
    months = np.arange(n_months)
    for f, t, month, kind, pub, y in per_firm:
        zs = (y - mean) / sd
        pub_month = month[pub]
        hours = (t[pub] - pub_month * month_length) / month_length * HOURS_PER_MONTH
        counts = np.bincount(pub_month, minlength=n_months)[:n_months]
        patches = np.bincount(month[kind == K.PATCH], minlength=n_months)[:n_months]
        pivots = np.bincount(month[kind == K.PIVOT], minlength=n_months)[:n_months]
        disp_x = np.full(n_months, np.nan)
        disp_t = np.full(n_months, np.nan)
        order = np.argsort(pub_month, kind="stable")
        bounds = np.searchsorted(pub_month[order], np.arange(n_months + 1))
        for m in range(n_months):
            sel = order[bounds[m]:bounds[m + 1]]
            disp_x[m] = population_variance(zs[sel])
            disp_t[m] = timestamp_iqr(hours[sel])
        events = np.flatnonzero(pivots > 0)
        tau, idx = _event_time(months, events, tau_range)
        outside = np.isnan(tau)
        baseline = float(counts[outside].mean()) if outside.any() else float(counts.mean())
        ev_depth = np.array([silence_depth(counts, int(e), baseline, depth_k) for e in events])
        row_depth = np.where(idx >= 0, ev_depth[np.maximum(idx, 0)] if events.size else np.nan, np.nan)
        depths.append(pd.DataFrame({"firm_id": f.firm_id, "event_month": events, "silence_depth": ev_depth}))
        frames.append(pd.DataFrame({
            "firm_id": f.firm_id, "month": months, "event_time": tau, "n_signals": counts,
            "dispersion_x": disp_x, "dispersion_time": disp_t, "n_patches": patches,
            "major_reset_flag": (pivots > 0).astype(int), "leverage": f.leverage, "rev_proxy": f.rev_proxy,
            "silence_depth": row_depth}))
    rows = pd.concat(frames, ignore_index=True)[list(PANEL_COLUMNS)]
    rows["event_time"] = rows["event_time"].astype("Int64")
    return Panel(rows, list(firms), month_length, burn_in, mean, sd, pd.concat(depths, ignore_index=True))


def firm_covariates(config: ScenarioConfig, firm_id: int, seed: int) -> tuple[float, float, float]:
    """(coupon, phi_max, rev_proxy) drawn for one firm."""
    t = config.telemetry
    rng = np.random.default_rng(derive_seed(seed ^ 0x5EED, firm_id))
    c_d = float(rng.uniform(t.c_d_low, t.c_d_high))
    phi_max = float(rng.uniform(0.0, t.phi_spread * t.phi_ref))
    return c_d, phi_max, 1.0 - phi_max / t.phi_ref


def simulate_firms(config: ScenarioConfig, ladder: LadderSolution, seed: int | None = None,
                   backend: str | None = None) -> list[FirmRecord]:
    """One long path per firm on its safe patch block.

    Each firm carries its own coupon and patch switching cost; with the
    coupon deducted the levered triggers equal the first-best ones, so every
    firm runs the same ladder. A silence window around the pivot trigger is
    added to the configured windows when ``pre_pivot_radius`` is positive.
    """
    t = config.telemetry
    seed = config.sim.base_seed if seed is None else seed
    horizon = t.burn_in + t.n_months * t.month_length
    windows = tuple(config.windows)
    if t.pre_pivot_radius > 0:
        windows += (SilenceWindow("state", "beta2", 0.0, t.pre_pivot_radius),)
    cfg = replace(config, sim=replace(config.sim, horizon=horizon), windows=windows)
    out = []
    for i in range(t.n_firms):
        c_d, phi_max, rev = firm_covariates(config, i, seed)
        params = replace(config.params, c_d=c_d, phi1=phi_max, phi2=phi_max)
        lev = solve_levered_equity(params, "safe-patch-block", first_best=ladder)
        firm_ladder = replace(ladder, beta1=lev.beta1, z1_star=lev.z1_star, z2_star=lev.z2_star, beta2=lev.beta2)
        plan = make_plan(replace(cfg, params=params), firm_ladder)
        path = run_plan(plan, derive_seed(seed, i), backend=backend)
        out.append(FirmRecord(i, path, c_d, rev))
    return out


def post_reset_metrics(panel: Panel) -> pd.DataFrame:
    """First published signal after each reset, with the reset class."""
    rows = []
    for f in panel.firms:
        c = f.path.columns
        kind, t, y = c["kind"], c["t"], c["y"]
        pub_idx = np.flatnonzero(kind == K.PUBLICATION)
        for j in np.flatnonzero((kind == K.PATCH) | (kind == K.PIVOT)):
            if t[j] < panel.burn_in:
                continue
            nxt = pub_idx[pub_idx > j]
            if nxt.size == 0:
                continue
            k = nxt[0]
            if np.any((kind[j + 1:k] == K.PATCH) | (kind[j + 1:k] == K.PIVOT)):
                continue
            rows.append((f.firm_id, float(t[j]), "patch" if kind[j] == K.PATCH else "pivot", float(y[k])))
    return pd.DataFrame(rows, columns=["firm_id", "t", "stratum", "metric"])


def patch_spells(panel: Panel, window: float) -> pd.DataFrame:
    """Inter-patch durations near major resets, with a post-reset indicator.

    A spell starting within ``window`` after a pivot is post; one starting
    within ``window`` before a pivot is pre. Other spells are dropped.
    """
    rows = []
    for f in panel.firms:
        c = f.path.columns
        t = c["t"]
        patches = t[c["kind"] == K.PATCH]
        pivots = t[c["kind"] == K.PIVOT]
        for a, b in zip(patches[:-1], patches[1:]):
            if a < panel.burn_in:
                continue
            before = pivots[pivots <= a]
            after = pivots[pivots > a]
            if before.size and a - before[-1] <= window:
                post = 1
            elif after.size and after[0] - a <= window:
                post = 0
            else:
                continue
            rows.append((f.firm_id, float(b - a), post, 1, f.leverage, f.rev_proxy))
    return pd.DataFrame(rows, columns=["firm_id", "duration", "post", "event", "leverage", "rev_proxy"])
