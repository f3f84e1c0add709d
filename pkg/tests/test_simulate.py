import json
import math
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from release_ladder import _kernels as K
from release_ladder.config import SilenceWindow, derive_seed
from release_ladder.ladder import mean_exit_time
from release_ladder.simulate import (events_to_csv, make_plan, path_to_json, run_batch, run_plan,
                                     simulate_exit_times, simulate_path, window_residence_report)


def _cfg(scenario, horizon=5.0, n_paths=20, windows=None, **params):
    cfg = replace(scenario, sim=replace(scenario.sim, horizon=horizon, n_paths=n_paths),
                  params=replace(scenario.params, **params))
    return cfg if windows is None else replace(cfg, windows=windows)


def _in_state_window(z, plan):
    space, center, radius = plan.windows
    return np.any((space == 0) & (np.abs(z - center) < radius))


def test_clock_off_gives_no_publications(scenario, ladder):
    cfg = _cfg(scenario, lambda_bar=0.0)
    for i in range(5):
        assert simulate_path(cfg, ladder, seed=i).stats.n_publications == 0


def test_full_band_window_silences_everything(scenario, ladder):
    mid = 0.5 * (ladder.beta1 + ladder.beta2)
    wide = (SilenceWindow("state", "absolute", mid, ladder.beta2 - ladder.beta1),)
    path = simulate_path(_cfg(scenario, windows=wide), ladder, seed=3, record=True)
    assert path.stats.n_publications == 0
    m = path.trajectory["m"]
    assert np.max(np.abs(np.diff(m))) < 1e-2  # pure drift: no jumps


def test_poisson_count_oracle(scenario, ladder):
    cfg = _cfg(scenario, horizon=2.0, windows=())
    counts = np.array([simulate_path(cfg, ladder, seed=derive_seed(5, i)).stats.n_publications
                       for i in range(400)])
    target = scenario.params.lambda_bar * 2.0
    assert abs(counts.mean() - target) <= 3 * counts.std(ddof=1) / math.sqrt(counts.size)


def test_events_ordered_and_resets_at_triggers(scenario, ladder):
    cfg = _cfg(scenario, horizon=10.0)
    for i in range(20):
        path = simulate_path(cfg, ladder, seed=derive_seed(9, i))
        c = path.columns
        assert np.all(np.diff(c["t"]) >= 0)
        patch, pivot = c["kind"] == K.PATCH, c["kind"] == K.PIVOT
        # z_pre is the grid value at or past the trigger; overshoot is within one step
        step = 6 * scenario.params.sigma * math.sqrt(cfg.sim.dt)
        assert np.all((c["z_pre"][patch] <= ladder.beta1 + 1e-12) & (c["z_pre"][patch] >= ladder.beta1 - step))
        assert np.allclose(c["z_post"][patch], ladder.z1_star)
        assert np.all((c["z_pre"][pivot] >= ladder.beta2 - 1e-12) & (c["z_pre"][pivot] <= ladder.beta2 + step))
        assert np.allclose(c["z_post"][pivot], ladder.z2_star)
        assert np.all(c["t"] <= cfg.sim.horizon + 1e-12)


def test_path_stays_in_band(scenario, ladder):
    path = simulate_path(_cfg(scenario, horizon=5.0), ladder, seed=1, record=True)
    z = path.trajectory["z"]
    assert np.all((z >= ladder.beta1 - 1e-12) & (z <= ladder.beta2 + 1e-12))


def test_no_publication_inside_active_windows(scenario, ladder):
    cfg = _cfg(scenario, horizon=5.0)
    plan = make_plan(cfg, ladder)
    for i in range(100):
        path = run_plan(plan, derive_seed(13, i))
        c = path.columns
        pubs = c["z_pre"][c["kind"] == K.PUBLICATION]
        assert not any(_in_state_window(z, plan) for z in pubs)


def test_backends_agree(scenario, ladder):
    plan = make_plan(_cfg(scenario, horizon=3.0), ladder)
    for i in range(5):
        a = run_plan(plan, derive_seed(2, i), backend="numba")
        b = run_plan(plan, derive_seed(2, i), backend="numpy")
        assert a.stats.counts == b.stats.counts
        assert a.stats.residence == b.stats.residence
        assert a.stats.discounted_payoff == pytest.approx(b.stats.discounted_payoff, rel=1e-12)
        assert np.allclose(a.columns["t"], b.columns["t"], rtol=0, atol=1e-12)


def test_batch_singleton_equals_path(scenario, ladder):
    cfg = _cfg(scenario, n_paths=1)
    batch = run_batch(cfg, ladder)
    path = simulate_path(cfg, ladder)
    assert batch.means["n_publications"] == path.stats.n_publications
    assert batch.means["discounted_payoff"] == path.stats.discounted_payoff


def test_batch_is_bit_identical_across_workers(scenario, ladder):
    cfg = _cfg(scenario, n_paths=40)
    a = run_batch(cfg, ladder, workers=1)
    b = run_batch(cfg, ladder, workers=4)
    assert np.array_equal(a.table, b.table, equal_nan=True)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_exit_time_matches_ode(ladder, scenario):
    band = (ladder.beta1, ladder.beta2)
    t = simulate_exit_times(scenario.params, band, ladder.z1_star, 2000, dt=1e-3, base_seed=4)
    ode = mean_exit_time(scenario.params, band, ladder.z1_star)
    assert abs(t.mean() - ode) <= 3 * t.std(ddof=1) / math.sqrt(t.size)


def test_residence_report_trivial_cases(scenario, ladder):
    rows = {}
    for d in (0.02, 0.04):
        w = (SilenceWindow("state", "beta1", 0.0, d),)
        rows[d] = run_batch(_cfg(scenario, horizon=5.0, n_paths=50, windows=w), ladder)
    rows[0.0] = None
    rep = window_residence_report(rows, 1.0)
    assert rep[0].residence_per_cycle == 0.0
    assert rep[1].residence_per_cycle < rep[2].residence_per_cycle
    assert all(r.residence_per_cycle <= 5.0 for r in rep)


def test_export_formats(tmp_path, scenario, ladder):
    path = simulate_path(_cfg(scenario, horizon=1.0), ladder, seed=8)
    events_to_csv(path, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,kind,z_pre,z_post,m,v,y" and len(lines) == len(path.events) + 1
    body = json.loads(path_to_json(path))
    assert len(body["events"]) == len(path.events)


def test_adoption_recorded_when_belief_crosses_alpha(scenario, ladder):
    cfg = _cfg(scenario, horizon=3.0, m_bar=1.0, kappa=1.0)
    cfg = replace(cfg, sim=replace(cfg.sim, m0=0.0), windows=(SilenceWindow("belief", "alpha", 0.0, 0.6),))
    path = simulate_path(cfg, ladder, alpha=0.5, seed=1)
    assert path.stats.n_publications == 0
    tau = math.log((1.0 - 0.0) / (1.0 - 0.5))
    assert abs(path.stats.adoption_time - tau) <= cfg.sim.dt


def test_env_flag_selects_numpy_backend():
    code = "from release_ladder import _kernels as K; print(K.get_backend())"
    env = dict(os.environ, RELEASE_LADDER_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
