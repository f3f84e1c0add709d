"""Public posterior (m, v) between and at publications.

Between publications the pair follows m' = kappa (m_bar - m) and
v' = -2 kappa v + sigma^2, stepped exactly. A publication y = z + noise
triggers the Gaussian precision-weighted update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels
from .config import ModelParams
from .errors import DegeneratePosterior


@dataclass(frozen=True)
class BeliefState:
    m: float
    v: float

    def __post_init__(self):
        if not self.v >= 0:
            raise ValueError("posterior variance must be >= 0")


def stationary_variance(params: ModelParams) -> float:
    if params.kappa == 0:
        return math.inf
    return params.sigma**2 / (2.0 * params.kappa)


def drift_step(state: BeliefState, dt: float, params: ModelParams) -> BeliefState:
    if dt < 0:
        raise ValueError("dt must be >= 0")
    m, v = _kernels.belief_drift(state.m, state.v, dt, params.kappa, params.m_bar, params.sigma**2)
    return BeliefState(float(m), float(v))


def publication_update(state: BeliefState, y: float, sigma_eps2: float) -> BeliefState:
    if sigma_eps2 <= 0:
        raise ValueError("sigma_eps2 must be > 0")
    if state.v == 0:
        raise DegeneratePosterior("posterior variance is zero")
    m, v = _kernels.belief_update(state.m, state.v, y, sigma_eps2)
    return BeliefState(float(m), float(v))


def quadratic_variation(path: Iterable) -> float:
    """Sum of squared increments of m along a sampled path.

    Accepts a 1-D array of m values or a sequence of (t, m) pairs.
    """
    arr = np.asarray(list(path) if not isinstance(path, np.ndarray) else path, dtype=float)
    m = arr[:, 1] if arr.ndim == 2 else arr
    if m.size < 2:
        return 0.0
    return float(np.sum(np.diff(m) ** 2))
