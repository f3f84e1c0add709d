"""Two-reset ladder: free-boundary solve, QVI verification and exit times.

On the inaction band the value function is a polynomial particular solution
plus two exponentials,

    V(z) = P(z) + A exp(eta_plus (z - z_ref)) + B exp(eta_minus (z - z_ref)),

and the six unknowns (beta1, z1*, beta2, z2*, A, B) are pinned by value
matching, high contact at both triggers and optimality of both targets.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import solve_banded

from .config import FlowPayoff, ModelParams
from .errors import (DegenerateBand, NonConvergence, OrderingViolation,
                     SingularJacobian, UnsupportedPayoff)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
RESIDUAL_NAMES = ("value_match_1", "contact_1", "target_1",
                  "value_match_2", "contact_2", "target_2")


def characteristic_roots(mu: float, sigma: float, r: float) -> tuple[float, float]:
    """Roots of (sigma^2/2) eta^2 + mu eta - r = 0, returned as (positive, negative)."""
    if sigma <= 0 or r <= 0:
        raise ValueError("sigma > 0 and r > 0 required")
    a = 0.5 * sigma * sigma
    q = -0.5 * (mu + math.copysign(math.sqrt(mu * mu + 2.0 * r * sigma * sigma), mu if mu != 0 else 1.0))
    r1, r2 = q / a, -r / q
    return (max(r1, r2), min(r1, r2))


def particular_solution(payoff: FlowPayoff | Sequence[float], mu: float, sigma: float, r: float,
                        k: float = 0.0) -> np.ndarray:
    """Polynomial P with r P - mu P' - (sigma^2/2) P'' = pi - k, ascending coefficients.

    Coefficients are matched from the top degree down, so the result is exact
    for any polynomial flow.
    """
    if isinstance(payoff, FlowPayoff):
        if payoff.kind not in ("constant", "quadratic", "double_well", "polynomial"):
            raise UnsupportedPayoff(f"payoff kind {payoff.kind!r} has no polynomial particular solution")
        c = payoff.poly()
    else:
        c = np.asarray(payoff, dtype=float)
    if c.size == 0 or not np.all(np.isfinite(c)):
        raise UnsupportedPayoff("payoff coefficients must be finite and non-empty")
    c = c.astype(float).copy()
    c[0] -= k
    n = c.size
    p = np.zeros(n + 2)
    half = 0.5 * sigma * sigma
    for j in range(n - 1, -1, -1):
        p[j] = (c[j] + mu * (j + 1) * p[j + 1] + half * (j + 2) * (j + 1) * p[j + 2]) / r
    return p[:n]


@dataclass(frozen=True)
class ValueFunction:
    coeffs: np.ndarray
    a: float
    b: float
    eta_plus: float
    eta_minus: float
    z_ref: float = 0.0

    def _exp(self, z):
        x = np.asarray(z, dtype=float) - self.z_ref
        return np.exp(self.eta_plus * x), np.exp(self.eta_minus * x)

    def __call__(self, z):
        ep, em = self._exp(z)
        return npoly.polyval(z, self.coeffs) + self.a * ep + self.b * em

    def d1(self, z):
        ep, em = self._exp(z)
        return (npoly.polyval(z, npoly.polyder(self.coeffs))
                + self.a * self.eta_plus * ep + self.b * self.eta_minus * em)

    def d2(self, z):
        ep, em = self._exp(z)
        return (npoly.polyval(z, npoly.polyder(self.coeffs, 2))
                + self.a * self.eta_plus**2 * ep + self.b * self.eta_minus**2 * em)

    def with_ab(self, a: float, b: float) -> "ValueFunction":
        return replace(self, a=float(a), b=float(b))

    def to_dict(self) -> dict:
        return {"particular_coeffs": [float(x) for x in self.coeffs], "A": self.a, "B": self.b,
                "eta_plus": self.eta_plus, "eta_minus": self.eta_minus, "z_ref": self.z_ref}


@dataclass(frozen=True)
class LadderSolution:
    beta1: float
    z1_star: float
    z2_star: float
    beta2: float
    value: ValueFunction
    k1: float
    k2: float
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    jacobian: str = "analytic"

    @property
    def theta(self) -> np.ndarray:
        """Unknowns in the order (beta1, z1*, beta2, z2*, A, B)."""
        return np.array([self.beta1, self.z1_star, self.beta2, self.z2_star, self.value.a, self.value.b])

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values()) if self.residuals else float("nan")

    def reset_values(self) -> tuple[float, float]:
        return (float(self.value(self.z1_star)) - self.k1, float(self.value(self.z2_star)) - self.k2)

    def extended_value(self, z):
        """V on the band, reset value outside it."""
        z = np.asarray(z, dtype=float)
        lo, hi = self.reset_values()
        inside = np.clip(z, self.beta1, self.beta2)
        out = np.where(z <= self.beta1, lo, np.where(z >= self.beta2, hi, self.value(inside)))
        return out if out.ndim else float(out)

    def anchors(self) -> dict[str, float]:
        return {"beta1": self.beta1, "z1_star": self.z1_star, "z2_star": self.z2_star, "beta2": self.beta2}

    def to_dict(self) -> dict:
        return {
            "beta1": self.beta1, "z1_star": self.z1_star, "z2_star": self.z2_star, "beta2": self.beta2,
            "k1": self.k1, "k2": self.k2, "value": self.value.to_dict(),
            "residuals": dict(self.residuals), "max_residual": self.max_residual,
            "iterations": self.iterations, "jacobian": self.jacobian,
        }


def _band_constant_drift(params: ModelParams) -> float:
    if not params.drift_is_constant():
        raise UnsupportedPayoff("closed-form band solution needs a constant drift")
    return float(params.drift_coeffs()[0])


def value_basis(params: ModelParams, k: float | None = None) -> ValueFunction:
    """Particular solution and roots with A = B = 0."""
    mu = _band_constant_drift(params)
    eta_p, eta_m = characteristic_roots(mu, params.sigma, params.r)
    kk = params.band_clock_cost if k is None else k
    coeffs = particular_solution(params.payoff, mu, params.sigma, params.r, kk)
    return ValueFunction(coeffs, 0.0, 0.0, eta_p, eta_m, params.payoff.z_peak)


def ladder_residuals(theta: np.ndarray, basis: ValueFunction, k1: float, k2: float) -> np.ndarray:
    b1, z1, b2, z2, a, b = theta
    v = basis.with_ab(a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.array([
            v(b1) - v(z1) + k1,
            v.d1(b1),
            v.d1(z1),
            v(b2) - v(z2) + k2,
            v.d1(b2),
            v.d1(z2),
        ], dtype=float)


def ladder_jacobian(theta: np.ndarray, basis: ValueFunction) -> np.ndarray:
    b1, z1, b2, z2, a, b = theta
    v = basis.with_ab(a, b)
    ep, em = basis.eta_plus, basis.eta_minus

    def e(z):
        x = z - basis.z_ref
        with np.errstate(over="ignore"):
            return float(np.exp(ep * x)), float(np.exp(em * x))

    (p_b1, m_b1), (p_z1, m_z1) = e(b1), e(z1)
    (p_b2, m_b2), (p_z2, m_z2) = e(b2), e(z2)
    J = np.zeros((6, 6))
    J[0] = [v.d1(b1), -v.d1(z1), 0, 0, p_b1 - p_z1, m_b1 - m_z1]
    J[1] = [v.d2(b1), 0, 0, 0, ep * p_b1, em * m_b1]
    J[2] = [0, v.d2(z1), 0, 0, ep * p_z1, em * m_z1]
    J[3] = [0, 0, v.d1(b2), -v.d1(z2), p_b2 - p_z2, m_b2 - m_z2]
    J[4] = [0, 0, v.d2(b2), 0, ep * p_b2, em * m_b2]
    J[5] = [0, 0, 0, v.d2(z2), ep * p_z2, em * m_z2]
    return J


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (fun(xp) - fun(xm)) / (2 * h)
    return J


@dataclass
class NewtonResult:
    x: np.ndarray
    f: np.ndarray
    iterations: int
    jacobian: str


def _polish(fun, jac, x, f, admissible, steps: int):
    for _ in range(steps):
        J = jac(x) if jac is not None else fd_jacobian(fun, x)
        try:
            trial = x - np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            break
        if not admissible(trial):
            break
        ft = fun(trial)
        if not np.all(np.isfinite(ft)) or np.max(np.abs(ft)) >= np.max(np.abs(f)):
            break
        x, f = trial, ft
    return x, f


def damped_newton(fun: Callable[[np.ndarray], np.ndarray], jac: Callable[[np.ndarray], np.ndarray] | None,
                  x0: np.ndarray, admissible: Callable[[np.ndarray], bool], tol: float = DEFAULT_TOL,
                  max_iter: int = 100, max_halvings: int = 50, cond_limit: float = 1e14,
                  polish: int = 3) -> NewtonResult:
    """Newton iteration with backtracking on ||F||; trial points must stay admissible.

    Once within ``tol``, up to ``polish`` further full steps are taken while
    they keep lowering the residual, so results sit near rounding level.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not admissible(x):
        raise OrderingViolation("initial guess violates the admissible geometry")
    f = fun(x)
    used = "analytic" if jac is not None else "finite-difference"
    for it in range(max_iter + 1):
        if np.max(np.abs(f)) <= tol:
            return NewtonResult(*_polish(fun, jac, x, f, admissible, polish), it, used)
        if it == max_iter:
            break
        J = jac(x) if jac is not None else None
        if J is None or not np.all(np.isfinite(J)):
            J = fd_jacobian(fun, x)
            used = "finite-difference"
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > cond_limit:
            Jfd = fd_jacobian(fun, x)
            cfd = np.linalg.cond(Jfd)
            if not np.isfinite(cfd) or cfd > cond_limit:
                raise SingularJacobian(f"Jacobian condition number {cond:.3g}", cond)
            J, used = Jfd, "finite-difference"
        step = -np.linalg.solve(J, f)
        norm0 = np.linalg.norm(f)
        t = 1.0
        for _ in range(max_halvings):
            trial = x + t * step
            if admissible(trial):
                ft = fun(trial)
                if np.all(np.isfinite(ft)) and np.linalg.norm(ft) <= (1.0 - 1e-4 * t) * norm0:
                    x, f = trial, ft
                    break
            t *= 0.5
        else:
            raise NonConvergence("line search failed to reduce the residual",
                                 float(np.max(np.abs(f))), it)
    raise NonConvergence(f"no convergence after {max_iter} iterations", float(np.max(np.abs(f))), max_iter)


def _ordered(theta: np.ndarray) -> bool:
    b1, z1, b2, z2 = theta[:4]
    return bool(np.all(np.isfinite(theta)) and b1 < z1 < z2 < b2)


def _fit_ab(basis: ValueFunction, pts: Sequence[float]) -> tuple[float, float]:
    """Least-squares (A, B) for the slope conditions at the given points."""
    pts = np.asarray(pts, dtype=float)
    x = pts - basis.z_ref
    M = np.column_stack([basis.eta_plus * np.exp(basis.eta_plus * x),
                         basis.eta_minus * np.exp(basis.eta_minus * x)])
    rhs = -npoly.polyval(pts, npoly.polyder(basis.coeffs))
    ab, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return float(ab[0]), float(ab[1])


def initial_guess(params: ModelParams, basis: ValueFunction | None = None) -> np.ndarray:
    """Heuristic start (beta1, z1*, z2*, beta2, A, B).

    Targets sit at the humps of the flow payoff; each trigger is placed outward
    by 2 (2K/|pi''|)^(1/4) (sigma^2/r)^(1/4), the small-cost scaling of impulse
    bands. Single-hump payoffs put both targets a quarter span off the peak.
    """
    basis = basis or value_basis(params)
    pi = params.payoff.poly()
    dpi, d2pi = npoly.polyder(pi), npoly.polyder(pi, 2)
    crit = npoly.polyroots(dpi) if dpi.size > 1 else np.array([])
    crit = np.real(crit[np.abs(np.imag(crit)) < 1e-9])
    peaks = np.sort([c for c in crit if npoly.polyval(c, d2pi) < 0])
    scale = (params.sigma**2 / params.r) ** 0.25

    def span(k, at):
        curv = abs(npoly.polyval(at, d2pi)) if d2pi.size else 0.0
        curv = curv if curv > 0 else 1.0
        return 2.0 * (2.0 * max(k, 1e-12) / curv) ** 0.25 * scale

    if peaks.size >= 2:
        z1, z2 = peaks[0], peaks[-1]
        b1 = z1 - 0.5 * span(params.k1, z1)
        b2 = z2 + 0.5 * span(params.k2, z2)
    else:
        peak = peaks[0] if peaks.size else params.payoff.z_peak
        s = span(max(params.k1, params.k2), peak)
        z1, z2, b1, b2 = peak - 0.25 * s, peak + 0.25 * s, peak - s, peak + s
    a, b = _fit_ab(basis, [b1, z1, z2, b2])
    return np.array([b1, z1, z2, b2, a, b])


def random_starts(params: ModelParams, n: int, seed: int = 0, spread: float = 0.25) -> np.ndarray:
    """Admissible starts (beta1, z1*, z2*, beta2) scattered around the heuristic.

    Each coordinate moves uniformly by up to ``spread`` times the gap to its
    neighbour, which keeps every draw ordered.
    """
    g = initial_guess(params)[:4]
    gaps = np.diff(g)
    lim = spread * np.array([gaps[0], min(gaps[0], gaps[1]), min(gaps[1], gaps[2]), gaps[2]])
    rng = np.random.default_rng(seed)
    return g + rng.uniform(-1.0, 1.0, size=(n, 4)) * lim


def solve_ladder(params: ModelParams, init: Sequence[float] | None = None, tol: float = DEFAULT_TOL,
                 max_iter: int = 100, check_curvature: bool = True) -> LadderSolution:
    """Solve the six boundary conditions by damped Newton.

    ``init`` is (beta1, z1*, z2*, beta2) or (beta1, z1*, z2*, beta2, A, B);
    missing (A, B) are fitted by least squares to the slope conditions.
    """
    basis = value_basis(params)
    if init is None:
        g = initial_guess(params, basis)
    else:
        g = np.asarray(init, dtype=float)
        if g.size == 4:
            g = np.concatenate([g, _fit_ab(basis, g)])
        elif g.size != 6:
            raise ValueError("init must have 4 or 6 entries")
    theta0 = np.array([g[0], g[1], g[3], g[2], g[4], g[5]])
    k1, k2 = params.k1, params.k2
    res = damped_newton(lambda th: ladder_residuals(th, basis, k1, k2),
                        lambda th: ladder_jacobian(th, basis), theta0, _ordered, tol, max_iter)
    b1, z1, b2, z2, a, b = (float(x) for x in res.x)
    v = basis.with_ab(a, b)
    if not b1 < z1 < z2 < b2 or (z2 - z1) < 1e-8 * (b2 - b1):
        raise OrderingViolation("converged point violates beta1 < z1* < z2* < beta2")
    if check_curvature:
        curv = [v.d2(b1), v.d2(z1), v.d2(z2), v.d2(b2)]
        if not (curv[0] > 0 and curv[3] > 0 and curv[1] < 0 and curv[2] < 0):
            raise OrderingViolation(
                "converged point has a target at a local minimum or a trigger at a local maximum "
                f"(V'' = {', '.join(f'{c:.3g}' for c in curv)})")
    resid = dict(zip(RESIDUAL_NAMES, (float(x) for x in res.f)))
    log.debug("ladder solved in %d iterations, max residual %.3g", res.iterations, max(map(abs, res.f)))
    return LadderSolution(b1, z1, z2, b2, v, k1, k2, resid, res.iterations, res.jacobian)


# -- verification ------------------------------------------------------------

@dataclass(frozen=True)
class QviReport:
    grid_n: int
    ode_residual: float
    dominance_margin: float
    delta_ic: float
    classification: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.ode_residual <= self.tol and self.dominance_margin >= -self.tol

    def to_dict(self) -> dict:
        return {"grid_n": self.grid_n, "ode_residual": self.ode_residual,
                "dominance_margin": self.dominance_margin, "delta_ic": self.delta_ic,
                "classification": self.classification, "tol": self.tol, "passed": self.passed}


def hjb_residual(sol: LadderSolution, params: ModelParams, z) -> np.ndarray:
    """r V - (pi - k) - mu V' - (sigma^2/2) V'' on the band."""
    z = np.asarray(z, dtype=float)
    v = sol.value
    flow = params.payoff(z) - params.band_clock_cost
    return (params.r * v(z) - flow - params.drift(z) * v.d1(z) - 0.5 * params.sigma**2 * v.d2(z))


def classify_ic(delta_ic: float, tol: float) -> str:
    if abs(delta_ic) <= tol:
        return "two-impulse-consistent"
    return "patch-favored" if delta_ic > 0 else "pivot-favored"


def qvi_check(sol: LadderSolution, params: ModelParams, grid_n: int = 10_000, tol: float = 1e-8) -> QviReport:
    z = np.linspace(sol.beta1, sol.beta2, grid_n)
    ode = float(np.max(np.abs(hjb_residual(sol, params, z))))
    lo, hi = sol.reset_values()
    margin = float(np.min(sol.value(z) - max(lo, hi)))
    delta = lo - hi
    return QviReport(grid_n, ode, margin, delta, classify_ic(delta, tol), tol)


# -- comparative statics -----------------------------------------------------

@dataclass(frozen=True)
class StaticsRow:
    which: str
    delta: float
    d_trigger: float
    d_target: float
    jump_base: float
    jump_bumped: float
    signs_ok: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


_EXPECTED = {"k1": (-1, +1), "k2": (+1, -1)}


def comparative_statics(params: ModelParams, bumps: Sequence[tuple[str, float]],
                        base: LadderSolution | None = None) -> list[StaticsRow]:
    """Forward-difference shifts of the trigger and target on the bumped side.

    Expected signs: the patch trigger falls and its target rises with k1; the
    pivot trigger rises and its target falls with k2. Jumps widen in both cases.
    """
    base = base or solve_ladder(params)
    rows = []
    for which, delta in bumps:
        if which not in _EXPECTED:
            raise ValueError("bump must target 'k1' or 'k2'")
        bumped = replace(params, **{which: getattr(params, which) + delta})
        warm = [base.beta1, base.z1_star, base.z2_star, base.beta2, base.value.a, base.value.b]
        sol = solve_ladder(bumped, init=warm)
        if which == "k1":
            dtr, dta = (sol.beta1 - base.beta1) / delta, (sol.z1_star - base.z1_star) / delta
            jb, jn = base.z1_star - base.beta1, sol.z1_star - sol.beta1
        else:
            dtr, dta = (sol.beta2 - base.beta2) / delta, (sol.z2_star - base.z2_star) / delta
            jb, jn = base.beta2 - base.z2_star, sol.beta2 - sol.z2_star
        s_tr, s_ta = _EXPECTED[which]
        ok = bool(np.sign(dtr) == s_tr and np.sign(dta) == s_ta and jn > jb)
        rows.append(StaticsRow(which, delta, dtr, dta, jb, jn, ok))
    return rows


# -- exit times --------------------------------------------------------------

def _check_band(band: tuple[float, float]) -> tuple[float, float]:
    b1, b2 = float(band[0]), float(band[1])
    if not b1 < b2:
        raise DegenerateBand("band requires beta1 < beta2")
    return b1, b2


def mean_exit_time(params: ModelParams, band: tuple[float, float], z0, n_grid: int = 20_001):
    """Expected time to leave the band from z0, solving L u = -1 with zero boundary values."""
    b1, b2 = _check_band(band)
    z0 = np.asarray(z0, dtype=float)
    if np.any((z0 < b1) | (z0 > b2)):
        raise ValueError("z0 must lie in the band")
    s2 = params.sigma**2
    if params.drift_is_constant():
        mu = float(params.drift_coeffs()[0])
        c = 2.0 * mu / s2
        width = b2 - b1
        if abs(c * width) < 1e-8:
            out = (z0 - b1) * (b2 - z0) / s2
        else:
            # u = (width * (1 - e^{-c x}) / (1 - e^{-c L}) - x) / mu with x = z - b1
            x = z0 - b1
            out = (width * np.expm1(-c * x) / np.expm1(-c * width) - x) / mu
        out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)
    z = np.linspace(b1, b2, n_grid)
    h = z[1] - z[0]
    mu = params.drift(z[1:-1])
    lower = 0.5 * s2 / h**2 - 0.5 * mu / h
    upper = 0.5 * s2 / h**2 + 0.5 * mu / h
    diag = np.full(z.size - 2, -s2 / h**2)
    ab = np.zeros((3, z.size - 2))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    u_in = solve_banded((1, 1), ab, -np.ones(z.size - 2))
    u = np.concatenate([[0.0], u_in, [0.0]])
    out = np.interp(z0, z, u)
    return out if np.ndim(out) else float(out)


def crude_exit_bound(params: ModelParams, band: tuple[float, float]) -> float:
    """(L^2 / 4 sigma^2) exp(K L) with K = sup |2 mu / sigma^2| on the band."""
    b1, b2 = _check_band(band)
    width = b2 - b1
    zz = np.linspace(b1, b2, 2001)
    kmax = float(np.max(np.abs(2.0 * np.atleast_1d(params.drift(zz)) / params.sigma**2)))
    return width**2 / (4.0 * params.sigma**2) * math.exp(kmax * width)


def value_table(sol: LadderSolution, n: int = 1001) -> np.ndarray:
    """Columns z, V, V' on a uniform grid over the band."""
    z = np.linspace(sol.beta1, sol.beta2, n)
    return np.column_stack([z, sol.value(z), sol.value.d1(z)])
