"""Estimators for the telemetry signatures.

Every estimator is deterministic given its inputs: OLS and GLM fits are
closed-form or Newton-based, and the mixture fits use fixed restart seeds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture

from ..errors import EstimationError, InsufficientData


def _drop_degenerate(X: pd.DataFrame, keep: Sequence[str] = ()) -> tuple[pd.DataFrame, list[str]]:
    """Drop constant or linearly dependent columns (left to right); report their names."""
    dropped = []
    cols = []
    basis = np.zeros((len(X), 0))
    for name in X.columns:
        col = X[name].to_numpy(dtype=float)
        if name not in keep and np.ptp(col) == 0.0 and not np.all(col == 1.0):
            dropped.append(name)
            continue
        trial = np.column_stack([basis, col])
        if np.linalg.matrix_rank(trial, tol=1e-9 * max(1.0, np.abs(trial).max()) * len(X)) <= basis.shape[1]:
            dropped.append(name)
            continue
        basis = trial
        cols.append(name)
    return X[cols], dropped


# -- S1: event study ---------------------------------------------------------

@dataclass
class EventStudyResult:
    outcome: str
    coef: dict[int, float]
    se: dict[int, float]
    pre_wald_stat: float
    pre_wald_pvalue: float
    n_obs: int
    dropped: list[str] = field(default_factory=list)

    def pre_leads(self) -> list[int]:
        return sorted(ell for ell in self.coef if ell <= -2)

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "coef": {str(k): v for k, v in self.coef.items()},
                "se": {str(k): v for k, v in self.se.items()}, "pre_wald_stat": self.pre_wald_stat,
                "pre_wald_pvalue": self.pre_wald_pvalue, "n_obs": self.n_obs, "dropped": self.dropped}


def _lag_name(ell: int) -> str:
    return f"tau_m{-ell}" if ell < 0 else f"tau_p{ell}"


def event_study(panel: pd.DataFrame, outcome: str = "n_signals", window: int = 3,
                firm_col: str = "firm_id", month_col: str = "month") -> EventStudyResult:
    """Event-time dummies for l in [-window, window] without l = -1, firm and month effects.

    Rows outside the window or with no event in range form the reference group
    together with l = -1. Standard errors are clustered by firm; the joint test
    covers the leads l <= -2.
    """
    df = panel[[firm_col, month_col, "event_time", outcome]].copy()
    df = df[df[outcome].notna()]
    if df[firm_col].nunique() < 2:
        raise InsufficientData("event study needs at least two firms")
    tau = df["event_time"].astype("Float64").to_numpy(dtype=float, na_value=np.nan)
    lags = [ell for ell in range(-window, window + 1) if ell != -1]
    X = pd.DataFrame(index=df.index)
    for ell in lags:
        X[_lag_name(ell)] = (tau == ell).astype(float)
    if not X.to_numpy().any():
        raise InsufficientData("no event-time observations in the window")
    X["const"] = 1.0
    firm_d = pd.get_dummies(df[firm_col], prefix="firm", drop_first=True, dtype=float)
    month_d = pd.get_dummies(df[month_col], prefix="month", drop_first=True, dtype=float)
    X = pd.concat([X, firm_d, month_d], axis=1)
    X, dropped = _drop_degenerate(X, keep=("const",))
    y = df[outcome].to_numpy(dtype=float)
    groups = pd.factorize(df[firm_col])[0]
    fit = sm.OLS(y, X).fit(cov_type="cluster", cov_kwds={"groups": groups})
    coef, se = {}, {}
    for ell in lags:
        name = _lag_name(ell)
        if name in X.columns:
            coef[ell] = float(fit.params[name])
            se[ell] = float(fit.bse[name])
    pre = [_lag_name(ell) for ell in lags if ell <= -2 and _lag_name(ell) in X.columns]
    stat, pval = math.nan, math.nan
    if pre:
        R = np.zeros((len(pre), X.shape[1]))
        for i, name in enumerate(pre):
            R[i, list(X.columns).index(name)] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            test = fit.f_test(R)
        stat, pval = float(np.squeeze(test.fvalue)), float(test.pvalue)
    return EventStudyResult(outcome, coef, se, stat, pval, int(len(y)),
                            [d for d in dropped if d.startswith("tau_")])


# -- S3: patch hazard --------------------------------------------------------

@dataclass
class HazardResult:
    coef: dict[str, float]
    se: dict[str, float]
    r_bar: float
    effect: float
    effect_se: float
    wald_stat: float
    pvalue: float
    dropped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _poisson_fit(y: np.ndarray, X: pd.DataFrame, exposure: np.ndarray, cov_type: str = "nonrobust",
                 groups=None):
    if np.sum(y) == 0:
        raise EstimationError("no events: the hazard is not identified")
    model = sm.GLM(y, X, family=sm.families.Poisson(), offset=np.log(exposure))
    kw = {"cov_type": cov_type}
    if cov_type == "cluster":
        kw["cov_kwds"] = {"groups": groups}
    # side statistics divide by zero residual degrees of freedom on saturated designs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        try:
            fit = model.fit(method="newton", maxiter=200, tol=1e-12, **kw)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"hazard fit failed: {exc}") from exc
    if not fit.mle_retvals.get("converged", True):
        raise EstimationError("hazard fit did not converge")
    if not np.all(np.isfinite(fit.params)) or np.max(np.abs(fit.params)) > 30:
        raise EstimationError("separation: coefficient estimates diverge")
    return fit


def _hazard_design(df: pd.DataFrame, leverage: str, rev_proxy: str, controls: Sequence[str]) -> pd.DataFrame:
    X = pd.DataFrame({"const": 1.0}, index=df.index)
    if leverage:
        X["leverage"] = df[leverage].astype(float)
    if rev_proxy:
        X["rev_proxy"] = df[rev_proxy].astype(float)
    if leverage and rev_proxy:
        X["interaction"] = X["leverage"] * X["rev_proxy"]
    for c in controls:
        X[c] = df[c].astype(float)
    return X


def _leverage_wald(fit, columns: list[str], r_bar: float) -> tuple[float, float, float]:
    """(effect, s.e., Wald statistic) for rho1 + rho3 * r_bar."""
    g = np.zeros(len(columns))
    g[columns.index("leverage")] = 1.0
    if "interaction" in columns:
        g[columns.index("interaction")] = r_bar
    effect = float(g @ np.asarray(fit.params))
    se = float(math.sqrt(g @ np.asarray(fit.cov_params()) @ g))
    return effect, se, (effect / se) ** 2 if se > 0 else math.inf


def patch_hazard(table: pd.DataFrame, events: str = "n_patches", exposure: str | float = 1.0,
                 leverage: str = "leverage", rev_proxy: str = "rev_proxy", controls: Sequence[str] = (),
                 top_share: float = 0.25, cov_type: str = "nonrobust", cluster: str = "firm_id",
                 permutations: int = 0, seed: int = 0) -> HazardResult:
    """Log-linear hazard with leverage, reversibility and their interaction.

    Tests H0: rho1 + rho3 * R_bar = 0 with R_bar the mean reversibility in the
    top ``top_share`` of the sample. With ``permutations`` > 0 the p-value of
    the Wald statistic comes from reassigning cluster-level covariates across
    clusters, which stays exact when counts are dependent within a cluster.
    """
    df = table.copy()
    expo = np.full(len(df), float(exposure)) if not isinstance(exposure, str) else df[exposure].to_numpy(float)
    X, dropped = _drop_degenerate(_hazard_design(df, leverage, rev_proxy, controls), keep=("const",))
    groups = pd.factorize(df[cluster])[0] if cov_type == "cluster" else None
    y = df[events].to_numpy(float)
    fit = _poisson_fit(y, X, expo, cov_type, groups)
    coef = {k: float(v) for k, v in fit.params.items()}
    se = {k: float(v) for k, v in fit.bse.items()}
    r_bar = math.nan
    if rev_proxy:
        rev = df[rev_proxy].to_numpy(float)
        r_bar = float(rev[rev >= np.quantile(rev, 1.0 - top_share)].mean())
    if "leverage" not in X.columns:
        return HazardResult(coef, se, r_bar, math.nan, math.nan, math.nan, math.nan, dropped)
    cols = list(X.columns)
    effect, effect_se, stat = _leverage_wald(fit, cols, r_bar)
    pval = float(stats.chi2.sf(stat, 1))
    if permutations > 0:
        pval = _permutation_pvalue(df, y, expo, cols, stat, r_bar, leverage, rev_proxy, controls, cluster,
                                   permutations, seed)
    return HazardResult(coef, se, r_bar, effect, effect_se, stat, pval, dropped)


def _permutation_pvalue(df, y, expo, cols, stat, r_bar, leverage, rev_proxy, controls, cluster,
                        permutations, seed) -> float:
    covs = [c for c in (leverage, rev_proxy, *controls) if c]
    by = df.groupby(cluster, sort=True)
    if (by[covs].nunique() > 1).to_numpy().any():
        raise ValueError("permutation inference needs covariates constant within each cluster")
    # with cluster-constant covariates the Poisson likelihood depends only on cluster totals
    agg = pd.DataFrame({"y": pd.Series(y, index=df.index).groupby(df[cluster]).sum(),
                        "expo": pd.Series(expo, index=df.index).groupby(df[cluster]).sum()})
    cov_rows = by[covs].first().loc[agg.index]
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(permutations):
        perm = cov_rows.iloc[rng.permutation(len(cov_rows))].set_index(agg.index)
        Xp = _hazard_design(perm, leverage, rev_proxy, controls)[cols]
        try:
            fit = _poisson_fit(agg["y"].to_numpy(float), Xp, agg["expo"].to_numpy(float))
        except EstimationError:
            exceed += 1
            continue
        exceed += _leverage_wald(fit, cols, r_bar)[2] >= stat
    return (1 + exceed) / (1 + permutations)


# -- S4: cascade hazard ------------------------------------------------------

@dataclass
class CascadeResult:
    rho: float
    rho_se: float
    xi: dict[str, float]
    xi_se: dict[str, float]
    cuts: list[float]
    n_spells: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def split_spells(durations: np.ndarray, events: np.ndarray, cuts: Sequence[float]) -> pd.DataFrame:
    """Episode rows (spell, bin, exposure, event) for a piecewise-constant baseline."""
    edges = np.concatenate([[0.0], np.asarray(cuts, dtype=float), [np.inf]])
    rows = []
    for s, (d, e) in enumerate(zip(durations, events)):
        for b in range(edges.size - 1):
            lo, hi = edges[b], edges[b + 1]
            if d <= lo:
                break
            expo = min(d, hi) - lo
            rows.append((s, b, expo, int(e and d <= hi)))
    return pd.DataFrame(rows, columns=["spell", "bin", "exposure", "event"])


def cascade_hazard(spells: pd.DataFrame, duration: str = "duration", post: str = "post", event: str = "event",
                   covariates: Sequence[str] = (), n_bins: int = 4) -> CascadeResult:
    """Post-reset hazard shift rho with a baseline that is constant on duration quantile bins."""
    if len(spells) < 2:
        raise InsufficientData("at least two spells are needed")
    d = spells[duration].to_numpy(float)
    post_v = spells[post].to_numpy(float)
    if not (post_v == 1).any():
        raise InsufficientData("no post-reset spells")
    if not (post_v == 0).any():
        raise InsufficientData("no pre-reset spells")
    ev = spells[event].to_numpy(int) if event in spells else np.ones(len(spells), dtype=int)
    n_bins = max(1, min(n_bins, len(spells) // 10))
    cuts = list(np.quantile(d, np.linspace(0, 1, n_bins + 1)[1:-1])) if n_bins > 1 else []
    ep = split_spells(d, ev, cuts)
    X = pd.get_dummies(ep["bin"], prefix="bin", dtype=float)
    X["post"] = post_v[ep["spell"].to_numpy()]
    for c in covariates:
        X[c] = spells[c].to_numpy(float)[ep["spell"].to_numpy()]
    X, _ = _drop_degenerate(X, keep=tuple(c for c in X.columns if c.startswith("bin_")))
    if "post" not in X.columns:
        raise EstimationError("post indicator is collinear with the baseline")
    fit = _poisson_fit(ep["event"].to_numpy(float), X, ep["exposure"].to_numpy(float))
    xi = {c: float(fit.params[c]) for c in covariates if c in X.columns}
    xi_se = {c: float(fit.bse[c]) for c in covariates if c in X.columns}
    return CascadeResult(float(fit.params["post"]), float(fit.bse["post"]), xi, xi_se,
                         [float(c) for c in cuts], int(len(spells)))


# -- S2: plateau test --------------------------------------------------------

@dataclass
class PlateauResult:
    bic_1: float
    bic_2: float
    n_components: int
    means: list[float]
    mean_se: list[float]
    weights: list[float]
    n_obs: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def plateau_test(metrics: Sequence[float], n_init: int = 5, random_state: int = 0, tol: float = 1e-6,
                 min_obs: int = 30) -> PlateauResult:
    """One versus two Gaussian components by BIC; two are chosen only if BIC improves."""
    x = np.asarray(metrics, dtype=float).reshape(-1, 1)
    n = x.shape[0]
    if n < min_obs:
        raise InsufficientData(f"plateau test needs at least {min_obs} observations, got {n}")
    fits = []
    for k in (1, 2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            gm = GaussianMixture(k, n_init=n_init, random_state=random_state, tol=tol, max_iter=2000,
                                 reg_covar=1e-9).fit(x)
        if not gm.converged_:
            raise EstimationError(f"EM did not converge for {k} component(s)")
        fits.append(gm)
    bic1, bic2 = float(fits[0].bic(x)), float(fits[1].bic(x))
    best = fits[1] if bic2 < bic1 else fits[0]
    order = np.argsort(best.means_.ravel())
    means = best.means_.ravel()[order]
    var = best.covariances_.reshape(-1)[order]
    w = best.weights_[order]
    se = np.sqrt(var / np.maximum(n * w, 1.0))
    return PlateauResult(bic1, bic2, int(best.n_components), [float(m) for m in means],
                         [float(s) for s in se], [float(v) for v in w], n)


# -- S5: adoption RD ---------------------------------------------------------

@dataclass
class RdResult:
    beta0: float
    beta0_se: float
    beta1: float
    beta1_se: float
    beta1_pvalue: float
    slope_left: float
    slope_right: float
    n_obs: int
    n_groups: int
    dropped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def adoption_rd(rows: pd.DataFrame, alpha: float | str = "alpha", bandwidth: float = 0.5,
                m: str = "m", uptake: str = "uptake", depth: str = "silence_depth",
                group: str = "group") -> RdResult:
    """Local-linear RD with group effects, separate slopes and a depth-moderated jump.

    Uniform kernel on |m - alpha| <= bandwidth; standard errors clustered by group.
    """
    df = rows.copy()
    a = df[alpha].to_numpy(float) if isinstance(alpha, str) else np.full(len(df), float(alpha))
    x = df[m].to_numpy(float) - a
    keep = np.abs(x) <= bandwidth
    df, x = df[keep], x[keep]
    right = (x >= 0).astype(float)
    if right.sum() == 0 or right.sum() == len(x):
        raise InsufficientData("RD needs observations on both sides of the cutoff")
    X = pd.DataFrame(index=df.index)
    X["jump"] = right
    X["jump_x_depth"] = right * df[depth].to_numpy(float)
    X["slope_left"] = x * (1.0 - right)
    X["slope_right"] = x * right
    if group in df and df[group].nunique() > 1:
        X = pd.concat([X, pd.get_dummies(df[group], prefix="g", dtype=float)], axis=1)
    else:
        X["const"] = 1.0
    X, dropped = _drop_degenerate(X, keep=("jump",))
    groups = pd.factorize(df[group])[0] if group in df else np.zeros(len(df), dtype=int)
    n_groups = int(groups.max()) + 1
    y = df[uptake].to_numpy(float)
    cov = ("cluster", {"groups": groups}) if n_groups > 1 else ("HC1", None)
    fit = sm.OLS(y, X).fit(cov_type=cov[0], cov_kwds=cov[1]) if cov[1] else sm.OLS(y, X).fit(cov_type=cov[0])
    get = lambda s, name: float(s[name]) if name in X.columns else math.nan
    b1, b1se = get(fit.params, "jump_x_depth"), get(fit.bse, "jump_x_depth")
    p1 = float(2 * stats.norm.sf(abs(b1 / b1se))) if b1se and b1se > 0 else (0.0 if b1 else 1.0)
    return RdResult(get(fit.params, "jump"), get(fit.bse, "jump"), b1, b1se, p1,
                    get(fit.params, "slope_left"), get(fit.params, "slope_right"), int(len(y)), n_groups,
                    dropped)
