"""Buyer adoption cutoff under local silence at the cutoff.

Inside the silence window the public mean follows its drift deterministically,
so the buyer's problem near the cutoff is one-dimensional in m.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import NoSignChange

Fn = Callable[[float], float]
log = logging.getLogger(__name__)


def solve_alpha_linear(kappa: float, m_bar: float, r: float, a: float, p: float) -> float:
    """Cutoff for linear drift kappa (m_bar - m) and linear surplus a m - p."""
    if not (a > 0 and kappa > 0 and r > 0):
        raise ValueError("a > 0, kappa > 0 and r > 0 required")
    return (kappa * m_bar + (r / a) * p) / (kappa + r)


def _derivative(f: Fn, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def smooth_fit_gap(mu_bar: Fn, surplus: Fn, r: float, d_surplus: Fn | None = None) -> Fn:
    """L(m) - R(m) = mu_bar(m) S'(m) - r S(m); its root is the cutoff."""
    ds = d_surplus if d_surplus is not None else (lambda x: _derivative(surplus, x))
    return lambda x: mu_bar(x) * ds(x) - r * surplus(x)


def solve_alpha_general(mu_bar: Fn, surplus: Fn, r: float, bracket: tuple[float, float],
                        d_surplus: Fn | None = None, xtol: float = 1e-14) -> float:
    """Brent root of the smooth-fit condition on ``bracket``."""
    g = smooth_fit_gap(mu_bar, surplus, r, d_surplus)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise NoSignChange(f"empty bracket [{lo}, {hi}]")
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise NoSignChange(f"smooth-fit gap has the same sign at {lo} and {hi}")
    return float(optimize.brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def count_sign_changes(mu_bar: Fn, surplus: Fn, r: float, bracket: tuple[float, float], n: int = 10_001,
                       d_surplus: Fn | None = None) -> int:
    g = smooth_fit_gap(mu_bar, surplus, r, d_surplus)
    vals = np.array([g(x) for x in np.linspace(bracket[0], bracket[1], n)])
    s = np.sign(vals)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def hitting_time(m: float, alpha: float, kappa: float, m_bar: float) -> float:
    """Time for m' = kappa (m_bar - m) to reach alpha from m < alpha < m_bar."""
    return math.log((m_bar - m) / (m_bar - alpha)) / kappa


def buyer_value(m: float, alpha: float, kappa: float, m_bar: float, r: float,
                s_alpha: float | Fn, surplus: Fn | None = None) -> tuple[float, float]:
    """(W(m), tau(m)) for the deterministic approach to the cutoff.

    ``s_alpha`` may be S(alpha) or the surplus function itself. At or above the
    cutoff the buyer adopts at once, which needs the surplus function.
    """
    if callable(s_alpha):
        surplus = s_alpha
        s_alpha = s_alpha(alpha)
    if m >= alpha:
        if surplus is None:
            raise ValueError("m >= alpha: pass the surplus function to value immediate adoption")
        return float(surplus(m)), 0.0
    if not alpha < m_bar:
        raise ValueError("alpha < m_bar required")
    tau = hitting_time(m, alpha, kappa, m_bar)
    return ((m_bar - alpha) / (m_bar - m)) ** (r / kappa) * float(s_alpha), tau


def _general_w(m: float, alpha: float, mu_bar: Fn, r: float, s_alpha: float) -> float:
    tau, _ = integrate.quad(lambda x: 1.0 / mu_bar(x), m, alpha, epsabs=1e-14, epsrel=1e-13)
    return math.exp(-r * tau) * s_alpha


def smooth_fit_residual(alpha: float, surplus: Fn, r: float, kappa: float | None = None,
                        m_bar: float | None = None, mu_bar: Fn | None = None,
                        d_surplus: Fn | None = None, h: float = 1e-6) -> float:
    """|W'(alpha-) - S'(alpha)| with a second-order one-sided difference of W."""
    s_a = float(surplus(alpha))
    if mu_bar is None:
        if kappa is None or m_bar is None:
            raise ValueError("give kappa and m_bar, or mu_bar")
        w = lambda m: buyer_value(m, alpha, kappa, m_bar, r, s_a)[0]
    else:
        w = lambda m: _general_w(m, alpha, mu_bar, r, s_a)
    w_left = (3.0 * s_a - 4.0 * w(alpha - h) + w(alpha - 2.0 * h)) / (2.0 * h)
    ds = d_surplus(alpha) if d_surplus is not None else _derivative(surplus, alpha)
    return abs(w_left - ds)


def adoption_comparative_statics(kappa: float, m_bar: float, r: float, a: float, p: float) -> tuple[float, float]:
    """(d alpha / d p, d alpha / d m_bar) in the linear case."""
    return r / (a * (kappa + r)), kappa / (kappa + r)


@dataclass(frozen=True)
class AdoptionSolution:
    alpha: float
    kappa: float
    m_bar: float
    r: float
    s_alpha: float
    smooth_fit_residual: float
    bracket: tuple[float, float] | None = None

    def w(self, m: float) -> float:
        return buyer_value(m, self.alpha, self.kappa, self.m_bar, self.r, self.s_alpha)[0]

    def tau(self, m: float) -> float:
        return hitting_time(m, self.alpha, self.kappa, self.m_bar)

    def table(self, m_lo: float, n: int = 201) -> np.ndarray:
        """Rows (m, W, tau) on [m_lo, alpha); empty when alpha is not below m_bar."""
        if not self.alpha < self.m_bar:
            return np.zeros((0, 3))
        ms = np.linspace(m_lo, self.alpha, n, endpoint=False)
        return np.array([(m, self.w(m), self.tau(m)) for m in ms])

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "kappa": self.kappa, "m_bar": self.m_bar, "r": self.r,
                "s_alpha": self.s_alpha, "smooth_fit_residual": self.smooth_fit_residual,
                "bracket": list(self.bracket) if self.bracket else None}


def solve_adoption(kappa: float, m_bar: float, r: float, a: float, p: float) -> AdoptionSolution:
    """Linear-case cutoff with its smooth-fit diagnostic.

    When S(m_bar) <= 0 the cutoff is not below m_bar, beliefs drifting up never
    reach it, and the residual is reported as nan.
    """
    alpha = solve_alpha_linear(kappa, m_bar, r, a, p)
    surplus = lambda m: a * m - p
    if alpha < m_bar:
        res = smooth_fit_residual(alpha, surplus, r, kappa, m_bar, d_surplus=lambda m: a)
    else:
        log.warning("adoption cutoff %.6g is not below m_bar %.6g; smooth fit is not checked", alpha, m_bar)
        res = math.nan
    return AdoptionSolution(alpha, kappa, m_bar, r, surplus(alpha), res)
