"""Antenna-position subproblem: linearized rate ascent under geometry limits.

Because the line-of-sight cascade is rank-one, the per-user product collapses
to t_kj(X) = c_k * sum_n w_j[n] exp(j k.x_n) + m_2,k,j with a scalar c_k, so
the rate gradient w.r.t. each element's in-plane coordinates has a closed
form via d/dx exp(j k.x) = j k_x exp(j k.x). Each iteration maximizes the
first-order rate model over the geometry polytope intersected with a
quarter-wavelength trust region, accepting steps only when the true
(nonlinear) model agrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannels, WaveVector
from .conic import (
    INFEASIBLE,
    LinearIneq,
    OPTIMAL,
    SmoothProgram,
    SolverReport,
    solve_smooth_program,
)
from .scenario import FALayout, ScenarioConfig

LN2 = np.log(2.0)


@dataclass
class FaSubproblemData:
    m1: np.ndarray            # (K, M) scaled surface-side rows
    m2: np.ndarray            # (K, K) fading-mixture offsets
    c: np.ndarray             # (K,) m1_k . conj(a_ris): line-of-sight scalars
    scale: float              # h0 * d_U^-kappa
    wave: WaveVector          # transmit-side wave vector (fixed geometry)
    W: np.ndarray             # (N, K) beamformers
    sigma2: np.ndarray        # (K,)


def make_fa_data(channels: EffectiveChannels, W: np.ndarray, theta: np.ndarray,
                 realization, config: ScenarioConfig) -> FaSubproblemData:
    cfg = config
    phases = np.exp(1j * np.asarray(theta))
    gRH_theta = np.conj(channels.g_R) * phases[None, :]          # rows g_R,k^H Theta
    m1 = channels.p_los_uav * gRH_theta
    m2 = (1.0 - channels.p_los_uav) * (gRH_theta @ realization.G_U_nlos @ W)
    c = m1 @ np.conj(channels.a_ris_uav)
    scale = channels.h0 * channels.d_U ** (-cfg.kappa)
    return FaSubproblemData(m1=m1, m2=m2, c=c, scale=scale, wave=channels.wave_uav,
                            W=W, sigma2=cfg.sigma2)


def _products(data: FaSubproblemData, xy: np.ndarray, z: float):
    """t[k, j] and the element phase factors for in-plane coordinates xy (N, 2)."""
    phase = xy @ data.wave.k[:2] + z * data.wave.k[2]
    a = np.exp(1j * phase)                       # (N,)
    s = a @ data.W                               # (K,) array-side sums per beam
    t = data.c[:, None] * s[None, :] + data.m2   # (K, K)
    return t, a


def fa_model_rates(data: FaSubproblemData, xy: np.ndarray, z: float) -> np.ndarray:
    t, _ = _products(data, xy, z)
    P = data.scale * np.abs(t) ** 2
    sig = np.diag(P).copy()
    interf = P.sum(axis=1) - sig
    return np.log2(1.0 + sig / (interf + data.sigma2))


def fa_rate_gradient(data: FaSubproblemData, W: np.ndarray, layout: FALayout):
    """Analytic gradients of the two log terms w.r.t. in-plane coordinates.

    Returns (grad_f, grad_z), each (K, N, 2); the z-part sum excludes j == k.
    """
    xy = layout.flat[:, :2]
    z = float(layout.flat[0, 2])
    t, a = _products(data, xy, z)
    K, N = t.shape[0], xy.shape[0]
    P = data.scale * np.abs(t) ** 2
    den_f = P.sum(axis=1) + data.sigma2
    den_z = den_f - np.diag(P)
    # dt[k,j]/dcoord_n = c_k W[n,j] (j k_coord) a_n
    dpow = np.empty((K, K, N, 2))
    for c_i, k_c in enumerate(data.wave.k[:2]):
        inner = (1j * k_c) * a[None, None, :] * W.T[None, :, :]   # (1, K, N)
        dpow[:, :, :, c_i] = 2.0 * data.scale * np.real(
            np.conj(t)[:, :, None] * data.c[:, None, None] * inner)
    grad_f = dpow.sum(axis=1) / (den_f[:, None, None] * LN2)
    sum_off = dpow.sum(axis=1) - dpow[np.arange(K), np.arange(K)]
    grad_z = sum_off / (den_z[:, None, None] * LN2)
    return grad_f, grad_z


def _coordinate_sweep(data, cfg, xy, z, free_mask, r_floor, passes=2):
    """Exhaustive per-coordinate scan of the true model (monotone, global-ish).

    The rate is periodic in each element phase, so gradient steps alone stop
    at the nearest local basin; scanning one coordinate at a time over its
    feasible interval escapes that while never losing sum rate or the current
    rate floor.
    """
    nh, nv = cfg.n_h, cfg.n_v
    grid = np.arange(nh * nv).reshape(nh, nv)
    step = cfg.wavelength / 32.0
    xy = xy.copy()
    best = fa_model_rates(data, xy, z)
    for _ in range(passes):
        improved = False
        for e in range(nh * nv):
            if not free_mask[e]:
                continue
            ih, iv = divmod(e, nv)
            for ci in (0, 1):
                if ci == 0:
                    lo = 0.0 if ih == 0 else xy[grid[ih - 1]][:, 0].max() + cfg.d_x_min
                    hi = cfg.l_h if ih == nh - 1 else xy[grid[ih + 1]][:, 0].min() - cfg.d_x_min
                else:
                    lo = 0.0 if iv == 0 else xy[grid[:, iv - 1]][:, 1].max() + cfg.d_y_min
                    hi = cfg.l_v if iv == nv - 1 else xy[grid[:, iv + 1]][:, 1].min() - cfg.d_y_min
                lo, hi = max(lo, 0.0), min(hi, cfg.l_h if ci == 0 else cfg.l_v)
                if hi - lo < 1e-12:
                    continue
                vals = np.arange(lo, hi + step / 2, step)
                vals = np.clip(vals, lo, hi)
                # single-coordinate change shifts one phase term of every t_kj
                kc = data.wave.k[ci]
                phase_old = xy[e] @ data.wave.k[:2] + z * data.wave.k[2]
                phases = phase_old + kc * (vals - xy[e, ci])
                t0, a = _products(data, xy, z)
                delta = np.exp(1j * phases) - a[e]
                # t[k, j] over candidates: (G, K, K)
                tc = t0[None, :, :] + (data.c[:, None] * data.W[e][None, :])[None, :, :] \
                    * delta[:, None, None]
                P = data.scale * np.abs(tc) ** 2
                sig = np.einsum("gkk->gk", P)
                interf = P.sum(axis=2) - sig
                rates = np.log2(1.0 + sig / (interf + data.sigma2[None, :]))
                sums = rates.sum(axis=1)
                mins = rates.min(axis=1)
                ok = mins >= min(r_floor, best.min()) - 1e-9
                sums = np.where(ok, sums, -np.inf)
                g = int(np.argmax(sums))
                if sums[g] > best.sum() + 1e-12:
                    xy[e, ci] = vals[g]
                    best = rates[g]
                    improved = True
        if not improved:
            break
    return xy


def fa_sca_loop(
    data: FaSubproblemData,
    config: ScenarioConfig,
    layout_prev: FALayout,
):
    """Reposition array elements; returns (FALayout, SolverReport).

    Linearized objective and rate floor over the spacing/aperture polytope
    with an L-inf trust region; steps shrink when the true model disagrees.
    The accepted layout never loses true model rate versus layout_prev.
    """
    cfg = config
    st = cfg.solver
    nh, nv = cfg.n_h, cfg.n_v
    N = nh * nv
    z = float(layout_prev.flat[0, 2])
    xy0 = layout_prev.flat[:, :2].copy()
    mask = np.ones(N, dtype=bool)
    if cfg.mobility_mask is not None:
        mask = np.asarray(cfg.mobility_mask, dtype=bool)
    free = np.where(mask)[0]
    nfree = len(free)
    if nfree == 0:
        rates = fa_model_rates(data, xy0, z)
        return layout_prev, SolverReport(OPTIMAL, float(rates.sum()), 0.0, 0.0, 0)

    # variable index for (element, coord) pairs of movable elements
    vidx = -np.ones((N, 2), dtype=int)
    for i, e in enumerate(free):
        vidx[e, 0] = 2 * i
        vidx[e, 1] = 2 * i + 1
    nvar = 2 * nfree
    grid = np.arange(N).reshape(nh, nv)

    def build_rows(xy):
        """Geometry constraints as rows over the free coordinate vector."""
        rows = []

        def add(pairs, rhs):
            a = np.zeros(nvar)
            base = rhs
            for (elem, coord), coef in pairs:
                v = vidx[elem, coord]
                if v >= 0:
                    a[v] = coef
                else:
                    base -= coef * xy[elem, coord]
            if np.any(a):
                rows.append(LinearIneq(a, base))
            elif base < -cfg.solver.feas_tol:
                raise AssertionError("frozen elements violate geometry")

        for ih in range(1, nh):
            for v1 in range(nv):
                for v2 in range(nv):
                    # x[ih, v1] - x[ih-1, v2] >= d_x_min
                    add([((grid[ih, v1], 0), -1.0), ((grid[ih - 1, v2], 0), 1.0)],
                        -cfg.d_x_min)
        for iv in range(1, nv):
            for h1 in range(nh):
                for h2 in range(nh):
                    add([((grid[h1, iv], 1), -1.0), ((grid[h2, iv - 1], 1), 1.0)],
                        -cfg.d_y_min)
        for v in range(nv):
            add([((grid[0, v], 0), -1.0)], 0.0)            # x_first >= 0
            add([((grid[nh - 1, v], 0), 1.0)], cfg.l_h)    # x_last <= l_h
        for h in range(nh):
            add([((grid[h, 0], 1), -1.0)], 0.0)
            add([((grid[h, nv - 1], 1), 1.0)], cfg.l_v)
        return rows

    rho_max = st.trust_region_wavelengths * cfg.wavelength
    rho_floor = cfg.wavelength / 256.0
    base_rate = fa_model_rates(data, xy0, z).sum()
    if rho_max <= 0:
        return layout_prev, SolverReport(OPTIMAL, float(base_rate), 0.0, 0.0, 0)
    # escape the phase-periodic local basins before the gradient iterations
    xy = _coordinate_sweep(data, cfg, xy0, z, mask, cfg.r_min_bps)
    last = fa_model_rates(data, xy, z).sum()
    report = None
    qos_dropped = False
    it = 0
    for it in range(1, st.sca_max_iter + 1):
        gf, gz = fa_rate_gradient(data, data.W, FALayout(
            _to_layout(xy, z, nh, nv)))
        gobj = (gf - gz).sum(axis=0)                       # (N, 2)
        rates_now = fa_model_rates(data, xy, z)
        lin = np.zeros(nvar)
        for e in free:
            lin[vidx[e, 0]] = gobj[e, 0]
            lin[vidx[e, 1]] = gobj[e, 1]

        rho = rho_max
        accepted = None
        for _ in range(6):
            rows = build_rows(xy)
            if not qos_dropped and cfg.r_min_bps > 0:
                # linearized floor: rates_now[k] + gk . (xy' - xy) >= r_min
                for k in range(data.m1.shape[0]):
                    gk = gf[k] - gz[k]
                    a = np.zeros(nvar)
                    for e in free:
                        a[vidx[e, 0]] = -gk[e, 0]
                        a[vidx[e, 1]] = -gk[e, 1]
                    moving = float(sum(gk[e] @ xy[e] for e in free))
                    rows.append(LinearIneq(a, rates_now[k] - cfg.r_min_bps - moving))
            lower = np.empty(nvar)
            upper = np.empty(nvar)
            for e in free:
                for ci in range(2):
                    v = vidx[e, ci]
                    lower[v] = xy[e, ci] - rho
                    upper[v] = xy[e, ci] + rho
            prog = SmoothProgram(n=nvar, linear_obj=lin, constraints=rows,
                                 lower=lower, upper=upper)
            x_start = np.concatenate([xy[e] for e in free])
            x, report = solve_smooth_program(prog, x0=x_start, settings=st)
            if report.status == INFEASIBLE:
                if not qos_dropped and cfg.r_min_bps > 0:
                    qos_dropped = True
                    continue
                break
            xy_cand = xy.copy()
            for i, e in enumerate(free):
                xy_cand[e] = x[2 * i:2 * i + 2]
            cand_rates = fa_model_rates(data, xy_cand, z)
            ok_rate = cand_rates.sum() >= last - st.monotone_tol
            ok_qos = qos_dropped or cfg.r_min_bps <= 0 or \
                cand_rates.min() >= min(cfg.r_min_bps, rates_now.min()) - st.feas_tol
            if ok_rate and ok_qos:
                accepted = (xy_cand, cand_rates.sum())
                break
            rho /= 2.0
        if accepted is None:
            rho_max /= 2.0
            if rho_max < rho_floor:
                break
            continue
        xy, rate = accepted
        if rate - last < st.sca_tol:
            # slow progress at this radius: zoom in before giving up
            rho_max /= 2.0
            if rho_max < rho_floor:
                last = rate
                break
        last = rate

    if fa_model_rates(data, xy, z).sum() < base_rate - st.monotone_tol:
        xy = xy0
    layout = FALayout(_to_layout(xy, z, nh, nv))
    status = INFEASIBLE if qos_dropped else (
        OPTIMAL if report is None else report.status)
    return layout, SolverReport(
        status=status,
        objective_value=float(fa_model_rates(data, xy, z).sum()),
        kkt_residual=0.0 if report is None else report.kkt_residual,
        feasibility_residual=0.0 if report is None else report.feasibility_residual,
        iterations=it,
    )


def _to_layout(xy: np.ndarray, z: float, nh: int, nv: int) -> np.ndarray:
    pos = np.empty((nh, nv, 3))
    pos[:, :, :2] = xy.reshape(nh, nv, 2)
    pos[:, :, 2] = z
    return pos
