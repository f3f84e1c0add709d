"""Replication drivers for the telemetry signatures S1 to S5."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..config import ScenarioConfig, derive_seed
from ..ladder import LadderSolution
from .estimators import adoption_rd, cascade_hazard, event_study, patch_hazard, plateau_test
from .panel import Panel, build_panel, post_reset_metrics, simulate_firms

S1_OUTCOMES = ("n_signals", "dispersion_x", "dispersion_time")
S3_PERMUTATIONS = 199


def model_panel(config: ScenarioConfig, ladder: LadderSolution, seed: int, backend: str | None = None) -> Panel:
    t = config.telemetry
    firms = simulate_firms(config, ladder, seed=seed, backend=backend)
    return build_panel(firms, t.month_length, t.n_months, t.burn_in, t.tau_range, metric_noise=t.metric_noise,
                       seed=seed)


def s1_passes(result, level: float = 0.05) -> bool:
    leads = result.pre_leads()
    return bool(leads) and result.pre_wald_pvalue < level and all(result.coef[ell] < 0 for ell in leads)


def s3_table(panel: Panel) -> pd.DataFrame:
    rows = panel.rows[["firm_id", "n_patches", "leverage", "rev_proxy"]].copy()
    rows["exposure"] = panel.month_length
    return rows


@dataclass
class ReplicationSummary:
    replications: int
    s1_pass_share: float
    s1_pvalues: list[float]
    s3_nonreject_share: float
    s3_pvalues: list[float]
    failures: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def replicate_s1_s3(config: ScenarioConfig, ladder: LadderSolution, replications: int | None = None,
                    seed: int | None = None, level: float = 0.05, backend: str | None = None,
                    permutations: int = S3_PERMUTATIONS) -> ReplicationSummary:
    """S1 and S3 across independent model panels; each replication uses a derived seed.

    S3 p-values come from firm-level permutations: patch counts persist within
    a firm, so the asymptotic Wald test over-rejects with 20 firms.
    """
    n = config.telemetry.replications if replications is None else replications
    base = config.sim.base_seed if seed is None else seed
    s1_p, s3_p, s1_ok, s3_ok = [], [], 0, 0
    failures = {"s1": 0, "s3": 0}
    for rep in range(n):
        panel = model_panel(config, ladder, derive_seed(base, 10_000 + rep), backend)
        try:
            res = event_study(panel.rows, "n_signals", config.telemetry.window_l)
            s1_p.append(res.pre_wald_pvalue)
            s1_ok += s1_passes(res, level)
        except (ValueError, RuntimeError):
            failures["s1"] += 1
            s1_p.append(math.nan)
        try:
            hz = patch_hazard(s3_table(panel), exposure="exposure", permutations=permutations, seed=rep)
            s3_p.append(hz.pvalue)
            s3_ok += hz.pvalue >= level
        except (ValueError, RuntimeError):
            failures["s3"] += 1
            s3_p.append(math.nan)
    return ReplicationSummary(n, s1_ok / n, s1_p, s3_ok / n, s3_p, failures)


def plateau_report(panel: Panel, ladder: LadderSolution) -> dict:
    metrics = post_reset_metrics(panel)
    res = plateau_test(metrics["metric"].to_numpy())
    targets = sorted([ladder.z1_star, ladder.z2_star])
    out = res.to_dict()
    out["targets"] = targets
    out["n_by_stratum"] = {k: int(v) for k, v in metrics.groupby("stratum").size().items()}
    if res.n_components == 2:
        out["max_target_gap"] = float(max(abs(m - z) for m, z in zip(res.means, targets)))
    return out


def two_rate_spells(n: int = 400, base_rate: float = 1.0, ratio: float = 2.0, seed: int = 0) -> pd.DataFrame:
    """Exponential spells, half before and half after a reset; the post rate is ``ratio`` times the pre rate."""
    rng = np.random.default_rng(seed)
    post = np.repeat([0, 1], n)
    rate = np.where(post == 1, base_rate * ratio, base_rate)
    return pd.DataFrame({"duration": rng.exponential(1.0 / rate), "post": post, "event": 1})


def rd_design(n_groups: int = 20, n_per_group: int = 200, alpha: float = 0.5, bandwidth: float = 0.3,
              deep: float = 0.8, shallow: float = 0.2, seed: int = 0) -> pd.DataFrame:
    """Groups with deep or shallow pre-event silence; the uptake jump at alpha grows with depth."""
    rng = np.random.default_rng(seed)
    rows = []
    for g in range(n_groups):
        depth = deep if g % 2 == 0 else shallow
        m = rng.uniform(alpha - bandwidth, alpha + bandwidth, n_per_group)
        jump = 0.1 + 0.8 * depth
        prob = np.clip(0.1 + 0.2 * (m - alpha) + jump * (m >= alpha), 0.0, 1.0)
        uptake = (rng.uniform(size=n_per_group) < prob).astype(float)
        rows.append(pd.DataFrame({"group": g, "m": m, "uptake": uptake, "silence_depth": depth, "alpha": alpha}))
    return pd.concat(rows, ignore_index=True)


def perfect_step(n: int = 200, alpha: float = 0.5, bandwidth: float = 0.3) -> pd.DataFrame:
    m = np.linspace(alpha - bandwidth, alpha + bandwidth, n)
    return pd.DataFrame({"group": 0, "m": m, "uptake": (m >= alpha).astype(float), "silence_depth": 0.0,
                         "alpha": alpha})


def signature_estimates(config: ScenarioConfig, ladder: LadderSolution, seed: int | None = None,
                        replications: int | None = None, backend: str | None = None) -> tuple[dict[str, dict], Panel]:
    """All five signatures keyed s1 to s5 as JSON-ready dictionaries, plus the first panel."""
    base = config.sim.base_seed if seed is None else seed
    t = config.telemetry
    panel = model_panel(config, ladder, derive_seed(base, 10_000), backend)
    s1 = {out: event_study(panel.rows, out, t.window_l).to_dict() for out in S1_OUTCOMES}
    summary = replicate_s1_s3(config, ladder, replications, base, backend=backend)
    s1["replications"] = {"pass_share": summary.s1_pass_share, "pvalues": summary.s1_pvalues,
                          "failures": summary.failures["s1"]}
    s3 = patch_hazard(s3_table(panel), exposure="exposure", permutations=S3_PERMUTATIONS).to_dict()
    s3["replications"] = {"nonreject_share": summary.s3_nonreject_share, "pvalues": summary.s3_pvalues,
                          "failures": summary.failures["s3"]}
    s4 = cascade_hazard(two_rate_spells(seed=base % 2**32)).to_dict()
    s4["target"] = math.log(2.0)
    s5 = {"perfect_step": adoption_rd(perfect_step(), bandwidth=0.3).to_dict(),
          "deep_vs_shallow": adoption_rd(rd_design(seed=base % 2**32), bandwidth=0.3).to_dict()}
    return {"s1": s1, "s2": plateau_report(panel, ladder), "s3": s3, "s4": s4, "s5": s5}, panel
