import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from release_ladder import _kernels as K
from release_ladder.belief import (BeliefState, drift_step, publication_update, quadratic_variation,
                                   stationary_variance)
from release_ladder.config import ModelParams
from release_ladder.errors import DegeneratePosterior

P = ModelParams(kappa=1.0, m_bar=1.0, sigma=0.5)


def test_drift_step_closed_form():
    s = drift_step(BeliefState(0.0, 0.1), math.log(2.0), P)
    assert s.m == pytest.approx(0.5, abs=1e-15)


def test_drift_step_zero_dt_is_identity():
    s = BeliefState(0.3, 0.2)
    assert drift_step(s, 0.0, P) == s


def test_stationary_variance_is_fixed_point():
    v = stationary_variance(P)
    assert drift_step(BeliefState(0.2, v), 0.7, P).v == pytest.approx(v, rel=1e-15)


def test_publication_update_examples():
    s = publication_update(BeliefState(0.0, 1.0), 2.0, 1.0)
    assert (s.m, s.v) == (1.0, 0.5)
    s = publication_update(BeliefState(1.0, 0.5), 4.0, 1.0)
    assert s.m == pytest.approx(2.0, abs=1e-15) and s.v == pytest.approx(1 / 3, abs=1e-15)
    s = publication_update(BeliefState(0.7, 0.3), 0.7, 0.2)
    assert s.m == pytest.approx(0.7, abs=1e-15) and s.v < 0.3


def test_degenerate_posterior_rejected():
    with pytest.raises(DegeneratePosterior):
        publication_update(BeliefState(0.0, 0.0), 1.0, 1.0)


def test_update_matches_formula_on_a_million_states():
    rng = np.random.default_rng(11)
    n = 1_000_000
    m, y = rng.normal(size=n), rng.normal(size=n)
    v, s2 = rng.uniform(1e-3, 2.0, n), rng.uniform(1e-3, 2.0, n)
    m_new, v_new = K.belief_update(m, v, y, s2)
    m_ref = (m / v + y / s2) / (1 / v + 1 / s2)
    v_ref = 1 / (1 / v + 1 / s2)
    assert np.max(np.abs(m_new - m_ref) / (1 + np.abs(m_ref))) <= 4 * np.finfo(float).eps
    assert np.max(np.abs(v_new - v_ref) / v_ref) <= 4 * np.finfo(float).eps
    assert np.all(v_new < v)


@settings(max_examples=200, deadline=None)
@given(m=st.floats(-5, 5), v=st.floats(0, 3), dt1=st.floats(0, 3), dt2=st.floats(0, 3),
       kappa=st.floats(0.01, 5), m_bar=st.floats(-2, 2))
def test_drift_composition_law(m, v, dt1, dt2, kappa, m_bar):
    p = ModelParams(kappa=kappa, m_bar=m_bar, sigma=0.5)
    a = drift_step(drift_step(BeliefState(m, v), dt1, p), dt2, p)
    b = drift_step(BeliefState(m, v), dt1 + dt2, p)
    assert a.m == pytest.approx(b.m, rel=1e-12, abs=1e-12)
    assert a.v == pytest.approx(b.v, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(m=st.floats(-5, 5), v=st.floats(1e-6, 3), y=st.floats(-5, 5), s2=st.floats(1e-4, 3))
def test_update_shrinks_variance(m, v, y, s2):
    s = publication_update(BeliefState(m, v), y, s2)
    assert 0 <= s.v < v
    assert min(m, y) - 1e-12 <= s.m <= max(m, y) + 1e-12


def test_quadratic_variation_examples():
    assert quadratic_variation(np.zeros(10)) == 0.0
    assert quadratic_variation([(0, 0.0), (1, 0.0), (2, 0.5), (3, 0.5)]) >= 0.25


def test_drift_path_qv_scales_with_dt():
    def qv(dt):
        t = np.arange(0, 1 + 1e-12, dt)
        m = 1.0 - np.exp(-t)
        return quadratic_variation(m)
    ratio = qv(1e-3) / qv(5e-4)
    assert ratio == pytest.approx(2.0, rel=1e-2)
