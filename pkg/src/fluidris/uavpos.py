"""Relay-position subproblem: distance-decoupled concave surrogate, iterated.

With the reflecting surface in the loop, every per-user product power factors
as C_kj * D_k where C_kj collects all position-independent gains and
D_k = d_R,k^-kappa * d_U^-kappa. Auxiliary variables (q_k, p, D_k) stand for
the inverse-distance powers and their product; the 1/q, 1/p couplings enter
through first-order expansions at the incumbent, the product through the
difference-of-squares cap D_k <= lin((q+p)^2/2) - q^2/2 - p^2/2 (so feasible
D_k never exceeds q_k * p). Refreshing the expansion point and re-solving
climbs the true distance model monotonically.

The no-surface ablation reuses the same machinery with one inverse-distance
variable per user (D_k == p_k, no q block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannels
from .conic import (
    INFEASIBLE,
    LinearIneq,
    LogTerm,
    OPTIMAL,
    PowerNormIneq,
    QuadIneq,
    SmoothProgram,
    SolverReport,
    solve_smooth_program,
)
from .scenario import ScenarioConfig

LN2 = np.log(2.0)


@dataclass
class UavSubproblemData:
    C: np.ndarray              # (K, K) couplings, position-independent
    sigma2: np.ndarray         # (K,)
    d_R: np.ndarray | None     # (K,) surface-user distances (shared mode)
    shared_distance: bool      # True: one relay-anchor distance for all users


def compute_coupling_constants(
    channels: EffectiveChannels,
    W: np.ndarray,
    theta: np.ndarray,
    sigma2=None,
) -> UavSubproblemData:
    """Distance-free composite gains; C_kj * D_k reproduces |g_k w_j|^2."""
    K = W.shape[1]
    sigma2 = np.ones(K) if sigma2 is None else np.asarray(sigma2, dtype=float)
    if channels.ris_enabled:
        phases = np.exp(1j * np.asarray(theta))
        rows = (np.conj(channels.g_R_bar) * phases[None, :]) @ channels.G_U_bar
        C = channels.h0 ** 2 * np.abs(rows @ W) ** 2
        return UavSubproblemData(C=C, sigma2=sigma2, d_R=channels.d_R.copy(),
                                 shared_distance=True)
    # blocked-link mode: strip each user's own distance power off |g_k w_j|^2
    C = np.abs(channels.g @ W) ** 2
    return UavSubproblemData(C=C, sigma2=sigma2, d_R=None, shared_distance=False)


class _Geometry:
    """Distance bookkeeping shared by the model evaluation and the programs."""

    def __init__(self, data: UavSubproblemData, cfg: ScenarioConfig,
                 u_ref: np.ndarray):
        self.cfg = cfg
        self.data = data
        if data.shared_distance:
            self.kappa = cfg.kappa
            self.anchors = np.asarray(cfg.ris_position, dtype=float)[None, :]
            self.q_bar = data.d_R ** (-cfg.kappa)
            self.C = data.C
        else:
            self.kappa = (cfg.direct_path_exponent
                          if cfg.direct_path_exponent is not None else cfg.kappa + 1.0)
            self.anchors = cfg.user_array()
            self.q_bar = np.ones(data.C.shape[0])
            # data.C carries |g_k w_j|^2 at u_ref; remove u_ref's distance power
            d0 = np.linalg.norm(self.anchors - u_ref[None, :], axis=1)
            self.C = data.C * (d0 ** self.kappa)[:, None]

    def dvec(self, u):
        return np.linalg.norm(self.anchors - u[None, :], axis=1)

    def D(self, u):
        p = self.dvec(u) ** (-self.kappa)
        return self.q_bar * (p[0] if self.data.shared_distance else p)

    def rates(self, u):
        P = self.C * self.D(u)[:, None]
        sig = np.diag(P).copy()
        interf = P.sum(axis=1) - sig
        return np.log2(1.0 + sig / (interf + self.data.sigma2))


def model_rates(data: UavSubproblemData, cfg: ScenarioConfig, u: np.ndarray,
                u_ref: np.ndarray | None = None) -> np.ndarray:
    """Per-user rates of the frozen-fading distance model at position u."""
    geo = _Geometry(data, cfg.resolved(), u if u_ref is None else np.asarray(u_ref))
    return geo.rates(np.asarray(u, dtype=float))


def _build_program(geo: _Geometry, cfg, u_prev, u_exp, free, enforce_qos):
    """One convexified placement program in scaled variables.

    Layout: x = [u_hat(F)] + ([q_t(K), p_t(1), D_t(K)] shared mode
                              | [p_t(K)] direct mode),
    with u = u_prev + delta * u_hat on the free coordinates.
    """
    data = geo.data
    K = geo.C.shape[0]
    delta = cfg.delta_max
    kap = geo.kappa
    lo = np.asarray(cfg.uav_box_min, dtype=float)
    hi = np.asarray(cfg.uav_box_max, dtype=float)
    nF = len(free)
    d_exp = geo.dvec(u_exp)
    p_exp = d_exp ** (-kap)

    shared = data.shared_distance
    n_q = K if shared else 0
    n_p = 1 if shared else K
    n = nF + n_q + n_p + (K if shared else 0)
    iu = np.arange(nF)
    iq = np.arange(nF, nF + n_q)
    ip = np.arange(nF + n_q, nF + n_q + n_p)
    iD = np.arange(nF + n_q + n_p, n) if shared else ip

    p_bar = p_exp[:n_p]
    D_bar = geo.q_bar * p_bar[0] if shared else p_bar

    cons = []
    Q = np.zeros((n, n))
    Q[iu, iu] = 2.0
    cons.append(QuadIneq(Q, np.zeros(n), -1.0))      # displacement ball
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[iu] = (lo[free] - u_prev[free]) / delta
    upper[iu] = (hi[free] - u_prev[free]) / delta

    a_k = geo.C.sum(axis=1)
    off = a_k - np.diag(geo.C)
    D_exp = geo.q_bar * (p_exp[0] if shared else p_exp)
    slope = off / ((off * D_exp + data.sigma2) * LN2)

    logs = []
    lin = np.zeros(n)
    gmin = (2.0 ** cfg.r_min_bps - 1.0) if enforce_qos else 0.0
    for k in range(K):
        a = np.zeros(n)
        a[iD[k]] = a_k[k] * D_bar[k]
        logs.append(LogTerm(1.0, a, float(data.sigma2[k])))
        lin[iD[k]] -= slope[k] * D_bar[k]
        if gmin > 0:
            row = np.zeros(n)
            row[iD[k]] = -(geo.C[k, k] - gmin * off[k]) * D_bar[k]
            cons.append(LinearIneq(row, -gmin * float(data.sigma2[k])))

    # d(u)^kappa <= first-order expansion of 1/p around p_exp
    centers = (geo.anchors - u_prev[None, :]) / delta
    for i in range(n_p):
        a = np.zeros(n)
        a[ip[i]] = p_bar[i] / p_exp[i] ** 2
        off2 = float(np.sum(((geo.anchors[i] - u_prev)[np.setdiff1d(np.arange(3), free)]) ** 2)) / delta ** 2
        cons.append(PowerNormIneq(iu, centers[i][free], kap, a, -2.0 / p_exp[i],
                                  weight=delta ** kap, off2=off2,
                                  scale=1.0 / p_exp[i]))

    if shared:
        for k in range(K):
            row = np.zeros(n)
            row[iq[k]] = 1.0
            cons.append(LinearIneq(row, 1.0))        # q_k <= its fixed bound
        for k in range(K):
            qb, pb = geo.q_bar[k], p_bar[0]
            s_l = qb + p_exp[0]
            Qc = np.zeros((n, n))
            Qc[iq[k], iq[k]] = qb / pb
            Qc[ip[0], ip[0]] = pb / qb
            a = np.zeros(n)
            a[iD[k]] = 1.0
            a[iq[k]] = -s_l / pb
            a[ip[0]] = -s_l / qb
            cons.append(QuadIneq(Qc, a, s_l ** 2 / (2.0 * qb * pb)))

    prog = SmoothProgram(n=n, linear_obj=lin, log_terms=logs, constraints=cons,
                         lower=lower, upper=upper)

    x0 = np.zeros(n)
    x0[iu] = np.clip((u_exp[free] - u_prev[free]) / delta,
                     lower[iu], upper[iu]) * (1.0 - 1e-9)
    shrink = 1.0 - 1e-5
    if shared:
        x0[iq] = shrink
        x0[ip] = shrink
        x0[iD] = shrink ** 2 - 3e-5
    else:
        x0[ip] = shrink

    def unpack(x):
        u = u_prev.copy()
        u[free] = u_prev[free] + delta * x[iu]
        return u

    return prog, x0, unpack


def uav_sca_loop(
    data: UavSubproblemData,
    config: ScenarioConfig,
    u_prev: np.ndarray,
):
    """Move the relay within its displacement ball; returns (u, SolverReport).

    Expansion points refresh until the frozen-model sum rate stops improving;
    the result never falls below the model rate at u_prev (monotone
    safeguard). An unsupportable rate floor drops to best effort and the
    report carries status="infeasible".
    """
    cfg = config.resolved()
    st = cfg.solver
    u_prev = np.asarray(u_prev, dtype=float)
    geo = _Geometry(data, cfg, u_prev)
    lo = np.asarray(cfg.uav_box_min, dtype=float)
    hi = np.asarray(cfg.uav_box_max, dtype=float)
    free = np.where(hi - lo > 1e-12)[0]
    base = geo.rates(u_prev).sum()
    if cfg.delta_max <= 0 or len(free) == 0 or geo.kappa == 0:
        return u_prev.copy(), SolverReport(OPTIMAL, float(base), 0.0, 0.0, 0)

    u = u_prev.copy()
    last = base
    report = None
    qos_dropped = False
    it = 0
    for it in range(1, st.sca_max_iter + 1):
        prog, x0, unpack = _build_program(geo, cfg, u_prev, u, free,
                                          enforce_qos=not qos_dropped)
        x, report = solve_smooth_program(prog, x0=x0, settings=st)
        if report.status == INFEASIBLE:
            if not qos_dropped:
                qos_dropped = True     # rate floor unsupportable: best effort
                continue
            break
        u_cand = np.clip(unpack(x), lo, hi)
        step = np.linalg.norm(u_cand - u_prev)
        if step > cfg.delta_max:
            u_cand = u_prev + (u_cand - u_prev) * (cfg.delta_max / step)
        rate = geo.rates(u_cand).sum()
        if rate < last - st.monotone_tol:
            break
        u = u_cand
        if rate - last < st.sca_tol:
            last = rate
            break
        last = rate

    if geo.rates(u).sum() < base - st.monotone_tol:
        u = u_prev.copy()
    status = INFEASIBLE if qos_dropped else (
        OPTIMAL if report is None else report.status)
    final = SolverReport(
        status=status,
        objective_value=float(geo.rates(u).sum()),
        kkt_residual=0.0 if report is None else report.kkt_residual,
        feasibility_residual=0.0 if report is None else report.feasibility_residual,
        iterations=it,
    )
    return u, final
