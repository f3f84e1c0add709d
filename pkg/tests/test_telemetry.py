import math

import numpy as np
import pandas as pd
import pytest

from release_ladder.errors import InsufficientData
from release_ladder.telemetry import adoption_rd, cascade_hazard, event_study, patch_hazard, plateau_test
from release_ladder.telemetry.panel import population_variance, silence_depth, timestamp_iqr
from release_ladder.telemetry.replicate import model_panel, perfect_step, rd_design, two_rate_spells


@pytest.fixture(scope="module")
def panel(scenario, ladder):
    return model_panel(scenario, ladder, seed=123)


def test_dispersion_conventions():
    assert population_variance([1.0, -1.0]) == 1.0
    assert population_variance([0.3]) == 0.0
    assert math.isnan(population_variance([]))


def test_panel_dispersion_follows_convention(panel):
    rows = panel.rows
    assert (rows["n_signals"] >= 0).all()
    assert (rows.loc[rows["n_signals"] == 1, "dispersion_x"] == 0.0).all()
    assert rows.loc[rows["n_signals"] == 0, "dispersion_x"].isna().all()
    assert rows.loc[rows["n_signals"] >= 2, "dispersion_x"].notna().all()


def test_timestamp_iqr_and_silence_depth():
    assert timestamp_iqr([0.0, 10.0, 20.0, 30.0, 40.0]) == pytest.approx(20.0)
    assert math.isnan(timestamp_iqr([]))
    counts = np.array([2, 2, 2, 0, 0, 1, 2])
    assert silence_depth(counts, 6, 2.0, k=3) == pytest.approx((1.0 + 1.0 + 0.5) / 3)
    assert math.isnan(silence_depth(counts, 6, 0.0))


def _saturated_panel():
    rows = []
    for f, event in enumerate((6, 9, 12, 15)):
        for t in range(24):
            tau = t - event
            rows.append({"firm_id": f, "month": t, "event_time": tau if abs(tau) <= 3 else pd.NA,
                         "n_signals": 0.0 if tau == -2 else 2.0})
    df = pd.DataFrame(rows)
    df["event_time"] = df["event_time"].astype("Int64")
    return df


def test_event_study_saturated_design_is_exact():
    res = event_study(_saturated_panel(), "n_signals", 3)
    assert res.coef[-2] == pytest.approx(-2.0, abs=1e-10)
    assert all(abs(b) <= 1e-10 for ell, b in res.coef.items() if ell != -2)
    assert -1 not in res.coef and res.pre_leads() == [-3, -2]


def test_event_study_firm_shift_invariance():
    df = _saturated_panel()
    rng = np.random.default_rng(0)
    df["n_signals"] += rng.normal(size=len(df))
    base = event_study(df, "n_signals", 3)
    df.loc[df["firm_id"] == 2, "n_signals"] += 5.0
    shifted = event_study(df, "n_signals", 3)
    for ell in base.coef:
        assert shifted.coef[ell] == pytest.approx(base.coef[ell], abs=1e-9)


def test_event_study_placebo_permutation(panel):
    df = panel.rows.copy()
    df["n_signals"] = np.random.default_rng(5).permutation(df["n_signals"].to_numpy())
    res = event_study(df, "n_signals", 3)
    assert all(abs(res.coef[ell]) <= 3 * res.se[ell] for ell in res.coef)


def test_event_study_needs_two_firms():
    df = _saturated_panel()
    with pytest.raises(InsufficientData):
        event_study(df[df["firm_id"] == 0], "n_signals", 3)


def test_constant_rate_hazard_closed_form():
    table = pd.DataFrame({"n_patches": [10.0], "exposure": [5.0], "firm_id": [0]})
    res = patch_hazard(table, exposure="exposure", leverage="", rev_proxy="")
    assert res.coef["const"] == pytest.approx(math.log(2.0), abs=1e-10)


def test_zero_variance_covariate_dropped():
    rng = np.random.default_rng(1)
    n = 200
    table = pd.DataFrame({"n_patches": rng.poisson(2.0, n), "firm_id": np.arange(n),
                          "leverage": rng.uniform(0, 1, n), "rev_proxy": 0.9})
    res = patch_hazard(table)
    assert "rev_proxy" in res.dropped and "rev_proxy" not in res.coef
    assert abs(res.effect) <= 3 * res.effect_se


def test_cascade_two_rate_oracle_and_null():
    res = cascade_hazard(two_rate_spells(seed=3))
    assert abs(res.rho - math.log(2.0)) <= 3 * res.rho_se
    null = cascade_hazard(two_rate_spells(ratio=1.0, seed=4))
    assert abs(null.rho) <= 3 * null.rho_se


def test_cascade_refuses_degenerate_input():
    with pytest.raises(InsufficientData):
        cascade_hazard(pd.DataFrame({"duration": [1.0], "post": [1], "event": [1]}))
    with pytest.raises(InsufficientData):
        cascade_hazard(pd.DataFrame({"duration": [1.0, 2.0], "post": [0, 0], "event": [1, 1]}))


def test_plateau_equal_values_one_component():
    assert plateau_test(np.full(100, 0.3)).n_components == 1


def test_plateau_recovers_separated_mixture(ladder):
    z1, z2 = ladder.z1_star, ladder.z2_star
    s = (z2 - z1) / 5
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.normal(z1, s, 200), rng.normal(z2, s, 200)])
    res = plateau_test(x)
    assert res.n_components == 2
    for m, se, target in zip(res.means, res.mean_se, (z1, z2)):
        assert abs(m - target) <= 3 * se


def test_plateau_needs_thirty_observations():
    with pytest.raises(InsufficientData):
        plateau_test(np.zeros(10))


def test_rd_perfect_step():
    res = adoption_rd(perfect_step(), bandwidth=0.3)
    assert res.beta0 == pytest.approx(1.0, abs=1e-10)
    assert abs(res.slope_left) <= 1e-10 and abs(res.slope_right) <= 1e-10


def test_rd_null_and_depth_interaction():
    rng = np.random.default_rng(6)
    null = pd.DataFrame({"group": 0, "m": rng.uniform(0.2, 0.8, 2000), "silence_depth": 0.0, "alpha": 0.5})
    null["uptake"] = (rng.uniform(size=len(null)) < 0.5).astype(float)
    res = adoption_rd(null, bandwidth=0.3)
    assert abs(res.beta0) <= 3 * res.beta0_se
    deep = adoption_rd(rd_design(seed=1), bandwidth=0.3)
    assert deep.beta1 > 0 and deep.beta1_pvalue < 0.05


def test_rd_one_sided_rejected():
    df = perfect_step()
    with pytest.raises(InsufficientData):
        adoption_rd(df[df["m"] < 0.5], bandwidth=0.3)


def test_estimators_are_deterministic(panel, ladder):
    a = event_study(panel.rows, "n_signals", 3).to_dict()
    b = event_study(panel.rows, "n_signals", 3).to_dict()
    assert a == b
    x = np.random.default_rng(0).normal(size=300)
    assert plateau_test(x).to_dict() == plateau_test(x).to_dict()
