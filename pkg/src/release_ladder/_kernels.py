"""Hot loops for path simulation, with a numba backend and a numpy fallback.

Both backends consume the same pre-drawn random numbers and follow the same
step semantics, so they produce the same events. Set
``RELEASE_LADDER_DISABLE_NUMBA=1`` (or call ``set_backend("numpy")``) to run
without numba.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FLAG = os.environ.get("RELEASE_LADDER_DISABLE_NUMBA", "").strip().lower()
_backend = "numpy" if (_FLAG in ("1", "true", "yes") or not HAVE_NUMBA) else "numba"

PUBLICATION, PATCH, PIVOT, ADOPTION, DEFAULT, HORIZON_END = 0, 1, 2, 3, 4, 5
EVENT_NAMES = ("publication", "patch", "pivot", "adoption", "default", "horizon-end")

# stats vector layout
S_PAYOFF, S_CLOCK, S_IMPULSE, S_ADOPT, S_DEFAULT, S_TEND, S_ZEND, S_MEND, S_VEND, \
    S_NPUB, S_NPATCH, S_NPIVOT, S_FIRST_RESET, S_TIME_ON, S_NEXEC = range(15)
N_STATS = 15


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError("backend must be 'numba' or 'numpy'")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def _maybe_jit(fn):
    return njit(cache=True, nogil=True)(fn) if HAVE_NUMBA else fn


# -- scalar helpers (shared by both backends) --------------------------------

def belief_drift(m, v, dt, kappa, m_bar, s2):
    """Exact flow of m' = kappa (m_bar - m), v' = -2 kappa v + s2 over dt."""
    if kappa == 0.0:
        return m + 0.0 * dt, v + s2 * dt
    # expm1 keeps small steps accurate and makes dt = 0 an exact identity
    g1 = -np.expm1(-kappa * dt)
    g2 = -np.expm1(-2.0 * kappa * dt)
    v_inf = s2 / (2.0 * kappa)
    return m + (m_bar - m) * g1, v + (v_inf - v) * g2


def belief_update(m, v, y, se2):
    """Gaussian update of (m, v) after observing y with noise variance se2."""
    prec = 1.0 / v + 1.0 / se2
    return (m / v + y / se2) / prec, 1.0 / prec


def poly_eval(c, x):
    acc = c[c.shape[0] - 1]
    for i in range(c.shape[0] - 2, -1, -1):
        acc = acc * x + c[i]
    return acc


def in_any_window(z, m, space, center, radius):
    for w in range(space.shape[0]):
        x = z if space[w] == 0 else m
        if abs(x - center[w]) <= radius[w]:
            return True
    return False


_belief_drift_nb = _maybe_jit(belief_drift)
_belief_update_nb = _maybe_jit(belief_update)
_poly_eval_nb = _maybe_jit(poly_eval)
_in_any_window_nb = _maybe_jit(in_any_window)


# -- band exit ---------------------------------------------------------------

def _exit_block_loop(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, sigma, dt, bridge):
    sq = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    n, block = normals.shape
    for i in range(n):
        if done[i]:
            continue
        zi = z[i]
        k = steps[i]
        for j in range(block):
            tk = k * dt
            zn = zi + (_poly_eval_nb(mu_c, zi) * dt + sq * normals[i, j])
            if zn <= b1:
                t_exit[i] = tk + dt * (zi - b1) / (zi - zn)
                done[i] = True
            elif zn >= b2:
                t_exit[i] = tk + dt * (b2 - zi) / (zn - zi)
                done[i] = True
            elif bridge:
                p_lo = math.exp(-2.0 * (zi - b1) * (zn - b1) / s2dt)
                p_hi = math.exp(-2.0 * (b2 - zi) * (b2 - zn) / s2dt)
                if uniforms[i, j] < p_lo + p_hi:
                    t_exit[i] = tk + 0.5 * dt
                    done[i] = True
            k += 1
            zi = zn
            if done[i]:
                break
        z[i] = zi
        steps[i] = k


_exit_block_nb = _maybe_jit(_exit_block_loop)


def _exit_block_numpy(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, sigma, dt, bridge):
    sq = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    alive = np.flatnonzero(~done)
    for j in range(normals.shape[1]):
        if alive.size == 0:
            break
        zi = z[alive]
        tk = steps[alive] * dt
        zn = zi + (np.polynomial.polynomial.polyval(zi, mu_c) * dt + sq * normals[alive, j])
        lo = zn <= b1
        hi = ~lo & (zn >= b2)
        te = np.full(alive.size, np.nan)
        te[lo] = tk[lo] + dt * (zi[lo] - b1) / (zi[lo] - zn[lo])
        te[hi] = tk[hi] + dt * (b2 - zi[hi]) / (zn[hi] - zi[hi])
        hit = lo | hi
        if bridge:
            rest = ~hit
            with np.errstate(over="ignore"):
                p = (np.exp(-2.0 * (zi - b1) * (zn - b1) / s2dt)
                     + np.exp(-2.0 * (b2 - zi) * (b2 - zn) / s2dt))
            br = rest & (uniforms[alive, j] < p)
            te[br] = tk[br] + 0.5 * dt
            hit = hit | br
        z[alive] = zn
        steps[alive] += 1
        t_exit[alive[hit]] = te[hit]
        done[alive[hit]] = True
        alive = alive[~hit]


def exit_block(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, sigma, dt, bridge, backend=None):
    """Advance every unfinished path by up to one block of steps, in place."""
    if (backend or _backend) == "numba":
        _exit_block_nb(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, sigma, dt, bridge)
    else:
        _exit_block_numpy(z, steps, done, t_exit, normals, uniforms, b1, b2, mu_c, sigma, dt, bridge)


# -- full path ---------------------------------------------------------------

def _path_loop(z0, m0, v0, dt, dW, bu, cand_t, cand_eps,
               lo_level, lo_kind, lo_target, hi_level, hi_kind, hi_target,
               mu_c, sigma, bridge, kappa, m_bar, se2,
               win_space, win_c, win_r, alpha, r, pi_c, bonus, k_on, k1, k2, lam_pos,
               ev_t, ev_kind, ev_zpre, ev_zpost, ev_m, ev_v, ev_y,
               rec, traj_z, traj_m, traj_v, traj_on, res, stats):
    n_steps = dW.shape[0]
    n_c = cand_t.shape[0]
    sq = sigma * math.sqrt(dt)
    s2 = sigma * sigma
    s2dt = s2 * dt
    z = z0
    t_a, m_a, v_a = 0.0, m0, v0
    adopted = not (alpha == alpha) or alpha == np.inf
    j = 0
    ne = 0
    pay = 0.0
    clock = 0.0
    imp = 0.0
    n_on = 0
    n_pub = 0
    n_patch = 0
    n_pivot = 0
    stats[S_ADOPT] = np.nan
    stats[S_DEFAULT] = np.nan
    stats[S_FIRST_RESET] = np.nan
    defaulted = False
    t_end = n_steps * dt
    n_exec = n_steps
    for k in range(n_steps):
        tk = k * dt
        mk, vk = _belief_drift_nb(m_a, v_a, tk - t_a, kappa, m_bar, s2)
        if not adopted and mk >= alpha:
            adopted = True
            stats[S_ADOPT] = tk
            ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = tk, ADOPTION, z, z
            ev_m[ne], ev_v[ne], ev_y[ne] = mk, vk, np.nan
            ne += 1
        on = lam_pos and not _in_any_window_nb(z, mk, win_space, win_c, win_r)
        disc = math.exp(-r * tk)
        flow = _poly_eval_nb(pi_c, z)
        if mk >= alpha:
            flow += bonus
        # trapezoid weights at both ends remove the O(dt) bias of a left sum
        wdt = 0.5 * dt if k == 0 else dt
        pay += disc * flow * wdt
        if on:
            clock += disc * k_on * wdt
            n_on += 1
        for w in range(win_space.shape[0]):
            x = z if win_space[w] == 0 else mk
            if abs(x - win_c[w]) <= win_r[w]:
                res[w] += 1.0
        if rec:
            traj_z[k], traj_m[k], traj_v[k], traj_on[k] = z, mk, vk, on

        zn = z + (_poly_eval_nb(mu_c, z) * dt + sq * dW[k])
        kind = -1
        side = 0
        t_hit = np.inf
        z_pre = zn
        if zn <= lo_level:
            kind, side = lo_kind, -1
            t_hit = tk + dt * (z - lo_level) / (z - zn)
        elif zn >= hi_level:
            kind, side = hi_kind, 1
            t_hit = tk + dt * (hi_level - z) / (zn - z)
        elif bridge:
            p_lo = math.exp(-2.0 * (z - lo_level) * (zn - lo_level) / s2dt)
            p_hi = math.exp(-2.0 * (hi_level - z) * (hi_level - zn) / s2dt)
            if bu[k] < p_lo:
                kind, side = lo_kind, -1
                t_hit = tk + 0.5 * dt
                z_pre = lo_level
            elif bu[k] < p_lo + p_hi:
                kind, side = hi_kind, 1
                t_hit = tk + 0.5 * dt
                z_pre = hi_level
        t_next = (k + 1) * dt
        limit = t_hit if kind >= 0 else t_next
        z_here = z
        for phase in range(2):
            while j < n_c and cand_t[j] < limit:
                tc = cand_t[j]
                mc, vc = _belief_drift_nb(m_a, v_a, tc - t_a, kappa, m_bar, s2)
                if lam_pos and not _in_any_window_nb(z_here, mc, win_space, win_c, win_r):
                    y = z_here + cand_eps[j]
                    if vc > 0.0:
                        mc, vc = _belief_update_nb(mc, vc, y, se2)
                    t_a, m_a, v_a = tc, mc, vc
                    n_pub += 1
                    ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = tc, PUBLICATION, z_here, z_here
                    ev_m[ne], ev_v[ne], ev_y[ne] = mc, vc, y
                    ne += 1
                    if not adopted and mc >= alpha:
                        adopted = True
                        stats[S_ADOPT] = tc
                        ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = tc, ADOPTION, z_here, z_here
                        ev_m[ne], ev_v[ne], ev_y[ne] = mc, vc, np.nan
                        ne += 1
                j += 1
            if phase == 1 or kind < 0:
                break
            # the reset or default at t_hit
            mh, vh = _belief_drift_nb(m_a, v_a, t_hit - t_a, kappa, m_bar, s2)
            if kind == DEFAULT:
                lvl = lo_level if side < 0 else hi_level
                # drop the part of this step's flow that falls after default
                cut = min(t_next - t_hit, wdt)
                pay -= disc * flow * cut
                if on:
                    clock -= disc * k_on * cut
                ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = t_hit, DEFAULT, lvl, lvl
                ev_m[ne], ev_v[ne], ev_y[ne] = mh, vh, np.nan
                ne += 1
                defaulted = True
                stats[S_DEFAULT] = t_hit
                t_end = t_hit
                z = lvl
                m_a, v_a, t_a = mh, vh, t_hit
                n_exec = k + 1
                break
            target = lo_target if side < 0 else hi_target
            cost = k1 if kind == PATCH else k2
            imp += math.exp(-r * t_hit) * cost
            if kind == PATCH:
                n_patch += 1
            else:
                n_pivot += 1
            if not stats[S_FIRST_RESET] == stats[S_FIRST_RESET]:
                stats[S_FIRST_RESET] = t_hit
            ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = t_hit, kind, z_pre, target
            ev_m[ne], ev_v[ne], ev_y[ne] = mh, vh, np.nan
            ne += 1
            z_here = target
            limit = t_next
        if defaulted:
            break
        z = z_here if kind >= 0 else zn
    if not defaulted:
        mh, vh = _belief_drift_nb(m_a, v_a, t_end - t_a, kappa, m_bar, s2)
        m_a, v_a = mh, vh
        on_end = lam_pos and not _in_any_window_nb(z, mh, win_space, win_c, win_r)
        disc_end = math.exp(-r * t_end)
        flow_end = _poly_eval_nb(pi_c, z)
        if mh >= alpha:
            flow_end += bonus
        pay += 0.5 * dt * disc_end * flow_end
        if on_end:
            clock += 0.5 * dt * disc_end * k_on
        if rec:
            traj_z[n_steps], traj_m[n_steps], traj_v[n_steps], traj_on[n_steps] = z, mh, vh, on_end
        ev_t[ne], ev_kind[ne], ev_zpre[ne], ev_zpost[ne] = t_end, HORIZON_END, z, z
        ev_m[ne], ev_v[ne], ev_y[ne] = mh, vh, np.nan
        ne += 1
    stats[S_PAYOFF] = pay
    stats[S_CLOCK] = clock
    stats[S_IMPULSE] = imp
    stats[S_TEND] = t_end
    stats[S_ZEND] = z
    stats[S_MEND] = m_a
    stats[S_VEND] = v_a
    stats[S_NPUB] = n_pub
    stats[S_NPATCH] = n_patch
    stats[S_NPIVOT] = n_pivot
    stats[S_TIME_ON] = n_on * dt
    stats[S_NEXEC] = n_exec
    for w in range(res.shape[0]):
        res[w] = res[w] * dt
    return ne


_path_loop_nb = _maybe_jit(_path_loop)

_CHUNK = 4096


def _z_path_numpy(z0, dt, dW, bu, lo_level, lo_kind, lo_target, hi_level, hi_kind, hi_target,
                  mu_c, sigma, bridge):
    """Private-state grid with resets; resets are independent of beliefs."""
    n_steps = dW.shape[0]
    sq = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    zg = np.empty(n_steps + 1)
    hits = []  # (step, t_hit, kind, side, z_pre, z_post)
    const = bool(np.all(mu_c[1:] == 0.0))
    incr_all = mu_c[0] * dt + sq * dW if const else None
    k, z = 0, float(z0)
    while k < n_steps:
        end = min(n_steps, k + _CHUNK)
        if const:
            path = np.cumsum(np.concatenate(([z], incr_all[k:end])))
        else:
            path = np.empty(end - k + 1)
            path[0] = z
            for i in range(end - k):
                path[i + 1] = path[i] + (poly_eval(mu_c, path[i]) * dt + sq * dW[k + i])
        prev, nxt = path[:-1], path[1:]
        lo = nxt <= lo_level
        hi = nxt >= hi_level
        crossed = lo | hi
        if bridge:
            with np.errstate(over="ignore", invalid="ignore"):
                p_lo = np.exp(-2.0 * (prev - lo_level) * (nxt - lo_level) / s2dt)
                p_hi = np.exp(-2.0 * (hi_level - prev) * (hi_level - nxt) / s2dt)
            u = bu[k:end]
            b_lo = ~crossed & (u < p_lo)
            b_hi = ~crossed & ~b_lo & (u < p_lo + p_hi)
            crossed = crossed | b_lo | b_hi
        idx = np.flatnonzero(crossed)
        if idx.size == 0:
            zg[k:end] = path[:-1]
            z = float(path[-1])
            k = end
            continue
        i = int(idx[0])
        step = k + i
        zg[k:step + 1] = path[:i + 1]
        zk, zn = float(path[i]), float(path[i + 1])
        tk = step * dt
        if lo[i]:
            hit = (step, tk + dt * (zk - lo_level) / (zk - zn), lo_kind, -1, zn, lo_target)
        elif hi[i]:
            hit = (step, tk + dt * (hi_level - zk) / (zn - zk), hi_kind, 1, zn, hi_target)
        elif b_lo[i]:
            hit = (step, tk + 0.5 * dt, lo_kind, -1, lo_level, lo_target)
        else:
            hit = (step, tk + 0.5 * dt, hi_kind, 1, hi_level, hi_target)
        hits.append(hit)
        if hit[2] == DEFAULT:
            return zg, hits, step + 1
        z = hit[5]
        k = step + 1
    zg[n_steps] = z
    return zg, hits, n_steps


def _path_numpy(z0, m0, v0, dt, dW, bu, cand_t, cand_eps,
                lo_level, lo_kind, lo_target, hi_level, hi_kind, hi_target,
                mu_c, sigma, bridge, kappa, m_bar, se2,
                win_space, win_c, win_r, alpha, r, pi_c, bonus, k_on, k1, k2, lam_pos,
                ev_t, ev_kind, ev_zpre, ev_zpost, ev_m, ev_v, ev_y,
                rec, traj_z, traj_m, traj_v, traj_on, res, stats):
    n_steps = dW.shape[0]
    s2 = sigma * sigma
    adopt_on = alpha == alpha and alpha != np.inf
    zg, hits, n_exec = _z_path_numpy(z0, dt, dW, bu, lo_level, lo_kind, lo_target, hi_level, hi_kind,
                                     hi_target, mu_c, sigma, bridge)
    defaulted = bool(hits) and hits[-1][2] == DEFAULT
    hit_by_step = {h[0]: h for h in hits}

    # publications, sequential in time
    edges = np.arange(1, n_steps + 1) * dt
    cstep = np.searchsorted(edges, cand_t, side="right")
    events = []  # (t, priority, kind, z_pre, z_post, m, v, y)
    t_a, m_a, v_a = 0.0, float(m0), float(v0)
    upd_t, upd_m, upd_v = [], [], []
    adopt_upd = np.inf
    for j in range(cand_t.shape[0]):
        step = int(cstep[j])
        if step >= n_exec:
            break
        tc = float(cand_t[j])
        h = hit_by_step.get(step)
        if h is not None and tc >= h[1]:
            if h[2] == DEFAULT:
                break
            z_here = h[5]
        else:
            z_here = float(zg[step])
        mc, vc = belief_drift(m_a, v_a, tc - t_a, kappa, m_bar, s2)
        if lam_pos and not in_any_window(z_here, mc, win_space, win_c, win_r):
            y = z_here + cand_eps[j]
            if vc > 0.0:
                mc, vc = belief_update(mc, vc, y, se2)
            t_a, m_a, v_a = tc, float(mc), float(vc)
            upd_t.append(tc)
            upd_m.append(m_a)
            upd_v.append(v_a)
            events.append((tc, 2, PUBLICATION, z_here, z_here, m_a, v_a, y))
            if adopt_on and adopt_upd == np.inf and m_a >= alpha:
                adopt_upd = tc
                events.append((tc, 3, ADOPTION, z_here, z_here, m_a, v_a, np.nan))

    # beliefs on the grid
    upd_t_a = np.asarray(upd_t, dtype=float)
    anchor_t = np.concatenate(([0.0], upd_t_a))
    anchor_m = np.concatenate(([float(m0)], np.asarray(upd_m, dtype=float)))
    anchor_v = np.concatenate(([float(v0)], np.asarray(upd_v, dtype=float)))

    def beliefs_at(t):
        i = np.searchsorted(upd_t_a, t, side="left")
        return belief_drift(anchor_m[i], anchor_v[i], t - anchor_t[i], kappa, m_bar, s2)

    tk = np.arange(n_exec) * dt
    zk = zg[:n_exec]
    mk, vk = beliefs_at(tk)
    mk = np.broadcast_to(mk, tk.shape)
    vk = np.broadcast_to(vk, tk.shape)

    inside = np.zeros((win_space.shape[0], n_exec), dtype=bool)
    for w in range(win_space.shape[0]):
        x = zk if win_space[w] == 0 else mk
        inside[w] = np.abs(x - win_c[w]) <= win_r[w]
        res[w] = np.count_nonzero(inside[w]) * dt
    on = np.zeros(n_exec, dtype=bool) if not lam_pos else ~inside.any(axis=0)
    disc = np.exp(-r * tk)
    flow = np.polynomial.polynomial.polyval(zk, pi_c) + np.where(mk >= alpha, bonus, 0.0)
    wdt = np.full(n_exec, dt)
    wdt[0] = 0.5 * dt
    pay = np.sum(disc * flow * wdt)
    clock = np.sum(disc[on] * k_on * wdt[on])
    if defaulted:
        cut = min(n_exec * dt - hits[-1][1], wdt[-1])
        pay -= disc[-1] * flow[-1] * cut
        if on[-1]:
            clock -= disc[-1] * k_on * cut
    stats[S_PAYOFF] = pay
    stats[S_CLOCK] = clock
    stats[S_TIME_ON] = np.count_nonzero(on) * dt

    # adoption: first grid time or first post-update crossing, grid first on ties
    adopt_t = np.nan
    if adopt_on:
        g = np.flatnonzero(mk >= alpha)
        t_grid = tk[g[0]] if g.size else np.inf
        if t_grid <= adopt_upd:
            if np.isfinite(t_grid):
                events = [e for e in events if e[2] != ADOPTION]
                gi = int(g[0])
                events.append((t_grid, 0, ADOPTION, float(zk[gi]), float(zk[gi]), float(mk[gi]),
                               float(vk[gi]), np.nan))
                adopt_t = t_grid
        else:
            adopt_t = adopt_upd
    stats[S_ADOPT] = adopt_t

    imp = 0.0
    n_patch = n_pivot = 0
    stats[S_FIRST_RESET] = np.nan
    stats[S_DEFAULT] = np.nan
    t_end = n_steps * dt
    for step, t_hit, kind, side, z_pre, z_post in hits:
        mh, vh = beliefs_at(np.array([t_hit]))
        mh, vh = float(np.ravel(mh)[0]), float(np.ravel(vh)[0])
        if kind == DEFAULT:
            lvl = lo_level if side < 0 else hi_level
            events.append((t_hit, 1, DEFAULT, lvl, lvl, mh, vh, np.nan))
            stats[S_DEFAULT] = t_hit
            t_end = t_hit
            z_end, m_end, v_end = lvl, mh, vh
            continue
        imp += math.exp(-r * t_hit) * (k1 if kind == PATCH else k2)
        if kind == PATCH:
            n_patch += 1
        else:
            n_pivot += 1
        if not stats[S_FIRST_RESET] == stats[S_FIRST_RESET]:
            stats[S_FIRST_RESET] = t_hit
        events.append((t_hit, 1, kind, z_pre, z_post, mh, vh, np.nan))
    if not defaulted:
        m_end, v_end = beliefs_at(np.array([t_end]))
        m_end, v_end = float(np.ravel(m_end)[0]), float(np.ravel(v_end)[0])
        z_end = float(zg[n_steps])
        events.append((t_end, 4, HORIZON_END, z_end, z_end, m_end, v_end, np.nan))
        on_end = lam_pos and not in_any_window(z_end, m_end, win_space, win_c, win_r)
        disc_end = math.exp(-r * t_end)
        flow_end = poly_eval(pi_c, z_end) + (bonus if m_end >= alpha else 0.0)
        stats[S_PAYOFF] += 0.5 * dt * disc_end * flow_end
        if on_end:
            stats[S_CLOCK] += 0.5 * dt * disc_end * k_on
        if rec:
            traj_z[n_steps], traj_m[n_steps], traj_v[n_steps] = z_end, m_end, v_end
            traj_on[n_steps] = on_end
    if rec:
        traj_z[:n_exec], traj_m[:n_exec], traj_v[:n_exec], traj_on[:n_exec] = zk, mk, vk, on

    events.sort(key=lambda e: (e[0], e[1]))
    for i, e in enumerate(events):
        ev_t[i], _, ev_kind[i], ev_zpre[i], ev_zpost[i], ev_m[i], ev_v[i], ev_y[i] = e
    stats[S_IMPULSE] = imp
    stats[S_TEND] = t_end
    stats[S_ZEND] = z_end
    stats[S_MEND] = m_end
    stats[S_VEND] = v_end
    stats[S_NPUB] = len(upd_t)
    stats[S_NPATCH] = n_patch
    stats[S_NPIVOT] = n_pivot
    stats[S_NEXEC] = n_exec
    return len(events)


def run_path(z0, m0, v0, dt, dW, bu, cand_t, cand_eps, lo, hi, mu_c, sigma, bridge, kappa, m_bar, se2,
             windows, alpha, r, pi_c, bonus, k_on, k1, k2, lam_pos, record=False, backend=None):
    """Simulate one path. ``lo``/``hi`` are (level, kind, target) for each side.

    Returns (events dict of arrays, stats vector, residence per window, trajectory or None).
    """
    n_steps = dW.shape[0]
    cap = cand_t.shape[0] + n_steps + 4
    ev = {name: np.empty(cap) for name in ("t", "z_pre", "z_post", "m", "v", "y")}
    ev_kind = np.empty(cap, dtype=np.int64)
    win_space, win_c, win_r = windows
    res = np.zeros(win_space.shape[0])
    stats = np.zeros(N_STATS)
    size = n_steps + 1 if record else 1
    traj = [np.full(size, np.nan), np.full(size, np.nan), np.full(size, np.nan), np.zeros(size, dtype=np.bool_)]
    fn = _path_loop_nb if (backend or _backend) == "numba" else _path_numpy
    ne = fn(float(z0), float(m0), float(v0), float(dt), dW, bu, cand_t, cand_eps,
            float(lo[0]), int(lo[1]), float(lo[2]), float(hi[0]), int(hi[1]), float(hi[2]),
            mu_c, float(sigma), bool(bridge), float(kappa), float(m_bar), float(se2),
            win_space, win_c, win_r, float(alpha), float(r), pi_c, float(bonus), float(k_on),
            float(k1), float(k2), bool(lam_pos),
            ev["t"], ev_kind, ev["z_pre"], ev["z_post"], ev["m"], ev["v"], ev["y"],
            bool(record), traj[0], traj[1], traj[2], traj[3], res, stats)
    out = {k: v[:ne].copy() for k, v in ev.items()}
    out["kind"] = ev_kind[:ne].copy()
    trajectory = None
    if record:
        n = int(stats[S_NEXEC])
        keep = n_steps + 1 if np.isnan(stats[S_DEFAULT]) else n
        trajectory = {"t": np.arange(keep) * dt, "z": traj[0][:keep], "m": traj[1][:keep],
                      "v": traj[2][:keep], "on": traj[3][:keep]}
    return out, stats, res, trajectory
