"""Levered equity, debt and the irreversibility wedge.

Equity receives the flow net of the coupon and may default; at default the
firm passes to an acquirer whose value is the first-best value minus the
switching cost of the reset it has to perform (the tight takeover map).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .config import ModelParams, derive_seed
from .errors import InfeasibleMode, LadderError, OrderingViolation
from .ladder import LadderSolution, ValueFunction, damped_newton, solve_ladder, value_basis
from .simulate import SimPlan, run_plan

MODES = ("safe-patch-block", "with-default", "tight-construction")
_EMPTY_WINDOWS = (np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))


def levered_params(params: ModelParams) -> ModelParams:
    """Same primitives with the flow payoff reduced by the coupon."""
    pay = params.payoff
    if pay.kind == "polynomial":
        c = list(pay.coeffs)
        c[0] -= params.c_d
        new = replace(pay, coeffs=tuple(c))
    else:
        new = replace(pay, pi0=pay.pi0 - params.c_d)
    return replace(params, payoff=new)


def _exp_pair(basis: ValueFunction, z: float) -> tuple[float, float]:
    x = z - basis.z_ref
    return math.exp(basis.eta_plus * x), math.exp(basis.eta_minus * x)


def _reset_linear(basis: ValueFunction, const: float, beta1: float, z1: float, z_d: float,
                  end_value: float, k1: float) -> ValueFunction:
    """Homogeneous coefficients for F(beta1) = F(z1) - k1 and F(z_d) = end_value."""
    pb, mb = _exp_pair(basis, beta1)
    pz, mz = _exp_pair(basis, z1)
    pd, md = _exp_pair(basis, z_d)
    poly = lambda z: float(np.polynomial.polynomial.polyval(z, basis.coeffs)) + const
    M = np.array([[pb - pz, mb - mz], [pd, md]])
    rhs = np.array([poly(z1) - poly(beta1) - k1, end_value - poly(z_d)])
    a, b = np.linalg.solve(M, rhs)
    coeffs = basis.coeffs.copy()
    coeffs[0] += const
    return replace(basis, coeffs=coeffs, a=float(a), b=float(b))


@dataclass(frozen=True)
class LeveredSolution:
    mode: str
    beta1: float
    z1_star: float
    z2_star: float
    beta2: float
    z_d: float | None
    equity: ValueFunction
    debt: ValueFunction
    default_discount: ValueFunction
    y_to: float
    phi_used: float
    k1: float
    k2: float
    c_d: float
    r: float
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def upper(self) -> float:
        return self.beta2 if self.z_d is None else self.z_d

    def _on_band(self, fn: ValueFunction, z, below: float, above: float):
        z = np.asarray(z, dtype=float)
        out = np.where(z <= self.beta1, below, np.where(z >= self.upper, above, fn(np.clip(z, self.beta1, self.upper))))
        return out if out.ndim else float(out)

    def S(self, z):
        """Equity value, extended by the reset or default value off the band."""
        lo = float(self.equity(self.z1_star)) - self.k1
        hi = 0.0 if self.z_d is not None else float(self.equity(self.z2_star)) - self.k2
        return self._on_band(self.equity, z, lo, hi)

    def Y(self, z):
        lo = float(self.debt(self.z1_star))
        hi = self.y_to if self.z_d is not None else float(self.debt(self.z2_star))
        return self._on_band(self.debt, z, lo, hi)

    def g(self, z):
        """E_z[exp(-r T*)], the discounted default time."""
        lo = float(self.default_discount(self.z1_star))
        hi = 1.0 if self.z_d is not None else 0.0
        return self._on_band(self.default_discount, z, lo, hi)

    def ladder_lev(self) -> dict[str, float | None]:
        return {"beta1": self.beta1, "z1_star": self.z1_star, "z2_star": self.z2_star,
                "beta2": self.beta2, "z_d": self.z_d}

    def plan_levels(self) -> tuple[tuple[float, int, float], tuple[float, int, float]]:
        lo = (self.beta1, K.PATCH, self.z1_star)
        if self.z_d is None:
            return lo, (self.beta2, K.PIVOT, self.z2_star)
        return lo, (self.z_d, K.DEFAULT, self.z_d)

    def to_dict(self) -> dict:
        mid = 0.5 * (self.z1_star + self.upper)
        return {"mode": self.mode, "ladder": self.ladder_lev(), "equity": self.equity.to_dict(),
                "debt": self.debt.to_dict(), "y_to": self.y_to, "phi_used": self.phi_used,
                "debt_value": {"z1_star": float(self.Y(self.z1_star)), "mid": float(self.Y(mid))},
                "residuals": dict(self.residuals)}


def _debt_and_discount(params: ModelParams, beta1: float, z1: float, z_d: float | None,
                       y_to: float) -> tuple[ValueFunction, ValueFunction]:
    basis = value_basis(params)
    zero = replace(basis, coeffs=np.zeros(1))
    if z_d is None:
        return (replace(zero, coeffs=np.array([params.c_d / params.r])), zero)
    debt = _reset_linear(zero, params.c_d / params.r, beta1, z1, z_d, y_to, 0.0)
    disc = _reset_linear(zero, 0.0, beta1, z1, z_d, 1.0, 0.0)
    return debt, disc


def acquirer_cost(z: float, first_best: LadderSolution, params: ModelParams) -> float:
    """Switching cost the acquirer pays at z: none inside the first-best band."""
    if z <= first_best.beta1:
        return params.phi1
    if z >= first_best.beta2:
        return params.phi2
    return 0.0


def takeover_envelope(z, a_fb, phi_max: float):
    """Lower bound A^FB(z) - phi_max on the takeover value."""
    val = a_fb(z) if callable(a_fb) else a_fb
    return np.asarray(val, dtype=float) - phi_max if np.ndim(val) else float(val) - phi_max


def takeover_value(z: float, first_best: LadderSolution, params: ModelParams) -> tuple[float, float]:
    """(Y^TO, phi_used) under the tight map with the acquirer's cheapest action."""
    phi = acquirer_cost(z, first_best, params)
    return float(first_best.extended_value(z)) - phi, phi


def _with_default(params: ModelParams, first_best: LadderSolution, init, tol: float, max_iter: int):
    lev = levered_params(params)
    basis = value_basis(lev)
    k1 = params.k1

    def F(x):
        b1, z1, zd, a, b = x
        v = basis.with_ab(a, b)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.array([v(b1) - v(z1) + k1, v.d1(b1), v.d1(z1), v(zd), v.d1(zd)], dtype=float)

    def J(x):
        b1, z1, zd, a, b = x
        v = basis.with_ab(a, b)
        ep, em = basis.eta_plus, basis.eta_minus
        (pb, mb), (pz, mz), (pd, md) = (_exp_pair(basis, t) for t in (b1, z1, zd))
        return np.array([
            [v.d1(b1), -v.d1(z1), 0.0, pb - pz, mb - mz],
            [v.d2(b1), 0.0, 0.0, ep * pb, em * mb],
            [0.0, v.d2(z1), 0.0, ep * pz, em * mz],
            [0.0, 0.0, v.d1(zd), pd, md],
            [0.0, 0.0, v.d2(zd), ep * pd, em * md],
        ])

    def admissible(x):
        return bool(np.all(np.isfinite(x)) and x[0] < x[1] < x[2])

    if init is None:
        fb = first_best
        starts = [np.array([fb.beta1, fb.z1_star, zd, fb.value.a, fb.value.b])
                  for zd in (fb.beta2, 0.5 * (fb.z2_star + fb.beta2), fb.z2_star)]
    else:
        starts = [np.asarray(init, dtype=float)]
    last = None
    for x0 in starts:
        try:
            res = damped_newton(F, J, x0, admissible, tol, max_iter)
        except (LadderError, np.linalg.LinAlgError, OverflowError) as exc:  # try the next start
            last = exc
            continue
        b1, z1, zd, a, b = (float(t) for t in res.x)
        v = basis.with_ab(a, b)
        inner = np.linspace(b1, zd, 2001)[1:-1]
        if zd - z1 > 1e-6 * (zd - b1) and v.d2(zd) > 0 and np.all(v(inner) > 0):
            names = ("value_matching_1", "smooth_pasting_beta1", "target_foc_1", "default_value", "default_smooth_fit")
            return b1, z1, zd, v, dict(zip(names, (float(t) for t in res.f)))
        last = OrderingViolation("with-default solution is not an admissible default geometry")
    if isinstance(last, Exception):
        raise last
    raise OrderingViolation("with-default solver found no admissible start")


def solve_levered_equity(params: ModelParams, mode: str = "safe-patch-block", init=None,
                         first_best: LadderSolution | None = None, tol: float = 1e-10,
                         max_iter: int = 100) -> LeveredSolution:
    """Equity problem under the coupon.

    ``safe-patch-block`` re-solves the ladder with the coupon deducted and
    requires positive equity on the whole band, so default never occurs.
    ``with-default`` keeps the patch side, drops the pivot and adds the default
    point z_d with zero value and zero slope.
    """
    if mode not in MODES[:2]:
        raise ValueError(f"mode must be one of {MODES[:2]}")
    fb = first_best or solve_ladder(params)
    if mode == "safe-patch-block":
        lev = levered_params(params)
        warm = None if init is None else init
        if warm is None and params.c_d == 0:
            sol = fb
        else:
            sol = solve_ladder(lev, init=warm if warm is not None else
                               [fb.beta1, fb.z1_star, fb.z2_star, fb.beta2, fb.value.a, fb.value.b], tol=tol,
                               max_iter=max_iter)
        zz = np.linspace(sol.beta1, sol.beta2, 10_001)
        if np.min(sol.value(zz)) <= 0 or min(sol.reset_values()) <= 0:
            raise InfeasibleMode("equity is not positive on the whole band; the safe patch block is not available")
        debt, disc = _debt_and_discount(params, sol.beta1, sol.z1_star, None, 0.0)
        return LeveredSolution("safe-patch-block", sol.beta1, sol.z1_star, sol.z2_star, sol.beta2, None,
                               sol.value, debt, disc, math.nan, 0.0, params.k1, params.k2, params.c_d, params.r,
                               dict(sol.residuals))
    b1, z1, zd, equity, resid = _with_default(params, fb, init, tol, max_iter)
    y_to, phi = takeover_value(zd, fb, params)
    debt, disc = _debt_and_discount(params, b1, z1, zd, y_to)
    return LeveredSolution("with-default", b1, z1, math.nan, math.nan, zd, equity, debt, disc, y_to, phi,
                           params.k1, params.k2, params.c_d, params.r, resid)


def tightness_construction(params: ModelParams, first_best: LadderSolution | None = None) -> LeveredSolution:
    """First-best patches with default exactly where the pivot was due.

    The acquirer then has to pivot and pays phi2, so the wedge equals
    E[exp(-r T*)] phi2 while the pre-default agency wedge is zero.
    """
    fb = first_best or solve_ladder(params)
    zd = fb.beta2
    y_to = float(fb.extended_value(zd)) - params.phi2
    basis = value_basis(levered_params(params))
    equity = _reset_linear(replace(basis, a=0.0, b=0.0), 0.0, fb.beta1, fb.z1_star, zd, 0.0, params.k1)
    debt, disc = _debt_and_discount(params, fb.beta1, fb.z1_star, zd, y_to)
    return LeveredSolution("tight-construction", fb.beta1, fb.z1_star, math.nan, math.nan, zd, equity, debt, disc,
                           y_to, params.phi2, params.k1, params.k2, params.c_d, params.r, {})


# -- Monte Carlo -------------------------------------------------------------

@dataclass(frozen=True)
class McSettings:
    n_paths: int = 2000
    horizon: float = 20.0
    dt: float = 1e-3
    base_seed: int = 7
    bridge: bool = True


def _plan(params: ModelParams, levered: LeveredSolution, z0: float, mc: McSettings) -> SimPlan:
    lo, hi = levered.plan_levels()
    n_steps = max(1, int(round(mc.horizon / mc.dt)))
    return SimPlan(params, mc.dt, n_steps, float(z0), 0.0, params.sigma_eps2, lo, hi, _EMPTY_WINDOWS,
                   math.nan, mc.bridge, params.lambda_bar)


def _path_samples(params: ModelParams, levered: LeveredSolution, first_best: LadderSolution, z0: float,
                  mc: McSettings, y_to=None) -> dict[str, np.ndarray]:
    """Per-path discounted quantities under the levered policy, in path order."""
    plan = _plan(params, levered, z0, mc)
    r, c_d = params.r, params.c_d
    H = plan.horizon
    n = mc.n_paths
    out = {k: np.empty(n) for k in ("surplus", "disc_default", "coupon", "y_end", "a_end", "phi_end",
                                    "phimax_end", "equity_pre", "s_end")}
    for i in range(n):
        path = run_plan(plan, derive_seed(mc.base_seed, i))
        st = path.stats
        surplus = st.discounted_payoff - st.discounted_clock_cost - st.discounted_impulse_cost
        if math.isfinite(st.default_time):
            T = st.default_time
            d = math.exp(-r * T)
            if y_to is None:
                yto, phi = takeover_value(st.z_end, first_best, params)
            else:
                yto = float(y_to(st.z_end))
                phi = float(first_best.extended_value(st.z_end)) - yto
            a_end, y_end, s_end, phimax = d * float(first_best.extended_value(st.z_end)), d * yto, 0.0, d * params.phi_max
            phi_end = d * phi
        else:
            T = H
            d = math.exp(-r * H)
            g = float(levered.g(st.z_end))
            y_end = d * float(levered.Y(st.z_end))
            s_end = d * float(levered.S(st.z_end))
            phi_end = d * g * levered.phi_used
            phimax = d * g * params.phi_max
            # continuation of the levered policy, then first best after default
            a_end = s_end + d * float(levered.Y(st.z_end)) + phi_end
            d = d * g
        coupon = c_d * (1.0 - math.exp(-r * T)) / r
        out["surplus"][i] = surplus
        out["disc_default"][i] = d
        out["coupon"][i] = coupon
        out["y_end"][i] = y_end
        out["a_end"][i] = a_end
        out["phi_end"][i] = phi_end
        out["phimax_end"][i] = phimax
        out["equity_pre"][i] = surplus - coupon
        out["s_end"][i] = s_end
    return out


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    m = float(np.mean(x))
    return m, (float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def debt_value_mc(params: ModelParams, levered: LeveredSolution, n_paths: int, y_to=None,
                  z0: float | None = None, first_best: LadderSolution | None = None,
                  mc: McSettings | None = None) -> tuple[float, float]:
    """MC estimate and s.e. of the coupon stream plus the discounted takeover value."""
    fb = first_best or solve_ladder(params)
    mc = replace(mc or McSettings(), n_paths=int(n_paths))
    z0 = levered.z1_star if z0 is None else z0
    s = _path_samples(params, levered, fb, z0, mc, y_to)
    return _mean_se(s["coupon"] + s["y_end"])


def equity_value_mc(params: ModelParams, levered: LeveredSolution, n_paths: int, z0: float | None = None,
                    first_best: LadderSolution | None = None, mc: McSettings | None = None) -> tuple[float, float]:
    fb = first_best or solve_ladder(params)
    mc = replace(mc or McSettings(), n_paths=int(n_paths))
    z0 = levered.z1_star if z0 is None else z0
    s = _path_samples(params, levered, fb, z0, mc)
    return _mean_se(s["equity_pre"] + s["s_end"])


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se}


@dataclass(frozen=True)
class WedgeReport:
    z0: float
    a_fb: float
    agency: Estimate
    irreversibility: Estimate
    phi_used_term: Estimate
    wedge: Estimate
    wedge_analytic: float
    slack: Estimate
    decomposition_residual: float
    expected_discount: Estimate
    expected_discount_analytic: float
    n_paths: int

    @property
    def agency_nonnegative(self) -> bool:
        return self.agency.value >= -3.0 * self.agency.se - 1e-12

    @property
    def bound_holds(self) -> bool:
        return self.slack.value >= -3.0 * self.slack.se - 1e-12

    def to_dict(self) -> dict:
        return {"z0": self.z0, "a_fb": self.a_fb, "agency_wedge": self.agency.to_dict(),
                "irreversibility_term": self.irreversibility.to_dict(),
                "phi_used_term": self.phi_used_term.to_dict(), "wedge": self.wedge.to_dict(),
                "wedge_analytic": self.wedge_analytic, "bound_slack": self.slack.to_dict(),
                "decomposition_residual": self.decomposition_residual,
                "expected_discount": self.expected_discount.to_dict(),
                "expected_discount_analytic": self.expected_discount_analytic,
                "agency_nonnegative": self.agency_nonnegative, "bound_holds": self.bound_holds,
                "n_paths": self.n_paths}


def wedge_report(params: ModelParams, levered: LeveredSolution, first_best: LadderSolution, n_paths: int,
                 z0: float | None = None, mc: McSettings | None = None) -> WedgeReport:
    """Agency wedge, irreversibility term and realized wedge on a common seed set.

    Per path, with T* the default time (capped at the horizon and closed
    analytically beyond it):
      agency sample  = pre-default surplus + e^{-rT*} A^FB(z_T*)
      levered sample = pre-default surplus + e^{-rT*} Y^TO(z_T*)
    so A^FB minus the levered mean equals the agency wedge plus the
    discounted switching cost actually paid, path by path.
    """
    mc = replace(mc or McSettings(), n_paths=int(n_paths))
    z0 = levered.z1_star if z0 is None else float(z0)
    s = _path_samples(params, levered, first_best, z0, mc)
    a_fb = float(first_best.extended_value(z0))
    agency_x = a_fb - (s["surplus"] + s["a_end"])
    levered_x = s["surplus"] + s["y_end"] + s["s_end"]
    wedge_x = a_fb - levered_x
    slack_x = agency_x + s["phimax_end"] - wedge_x
    decomp = float(np.max(np.abs(wedge_x - agency_x - s["phi_end"]))) if wedge_x.size else 0.0
    est = lambda x: Estimate(*_mean_se(x))
    analytic = a_fb - float(levered.S(z0)) - float(levered.Y(z0))
    return WedgeReport(z0, a_fb, est(agency_x), est(s["phimax_end"]), est(s["phi_end"]), est(wedge_x), analytic,
                       est(slack_x), decomp, est(s["disc_default"]), float(levered.g(z0)), mc.n_paths)
