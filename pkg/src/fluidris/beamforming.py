"""Transmit-beamformer subproblem: lifted rank-one program with gradual
rank-constraint tightening, then principal-eigenpair recovery.

The rate is split as a difference of concave log terms; the interference log
is linearized at the incumbent, and rank-one-ness is imposed through eigen-cut
rows lam^H F lam >= tau tr(F) whose tau ratchets toward one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannels
from .conic import (
    GE,
    INFEASIBLE,
    LE,
    LogTraceTerm,
    PsdProgram,
    SolverReport,
    TraceConstraint,
    eigen_ratio,
    hermitize,
    principal_eigvec,
    solve_psd_program,
)
from .scenario import ScenarioConfig

LN2 = np.log(2.0)

# eigen-cut rows with tau exactly 1 have empty interior; cap just below
TAU_CAP = 1.0 - 1e-4


class RankRecoveryError(RuntimeError):
    """Lifted solution is not close enough to rank-one to factor."""


@dataclass
class SrocrState:
    tau: np.ndarray        # (K,) current relaxation levels
    eigvecs: np.ndarray    # (K, N) leading eigenvectors of the last iterate
    iteration: int


def channel_outer_products(g: np.ndarray) -> list[np.ndarray]:
    """H_k = g_k^H g_k so that tr(F H_k) = g_k F g_k^H."""
    return [np.outer(np.conj(gk), gk) for gk in g]


def lifted_rates(F: list[np.ndarray], H: list[np.ndarray], sigma2: np.ndarray) -> np.ndarray:
    K = len(H)
    rates = np.empty(K)
    for k in range(K):
        p = np.array([np.real(np.trace(F[j] @ H[k])) for j in range(K)])
        rates[k] = np.log2(1.0 + p[k] / (p.sum() - p[k] + sigma2[k]))
    return rates


def _lifted_program(H, sigma2, p_max, gamma_min, F_expand, taus, lams):
    K = len(H)
    N = H[0].shape[0]
    dims = tuple([N] * K)
    log_terms = []
    linear = {j: np.zeros((N, N), dtype=complex) for j in range(K)}
    for k in range(K):
        log_terms.append(LogTraceTerm(1.0, {j: H[k] for j in range(K)}, float(sigma2[k])))
        den = sum(np.real(np.trace(F_expand[j] @ H[k])) for j in range(K) if j != k)
        den += sigma2[k]
        for j in range(K):
            if j != k:
                linear[j] -= H[k] / (den * LN2)
    cons = [TraceConstraint({j: np.eye(N, dtype=complex) for j in range(K)}, p_max, LE)]
    if gamma_min > 0:
        for k in range(K):
            mats = {k: H[k].copy()}
            for j in range(K):
                if j != k:
                    mats[j] = -gamma_min * H[k]
            cons.append(TraceConstraint(mats, gamma_min * float(sigma2[k]), GE))
    for k in range(K):
        if taus[k] > 0:
            cut = np.outer(lams[k], lams[k].conj()) - taus[k] * np.eye(N)
            cons.append(TraceConstraint({k: cut}, 0.0, GE))
    return PsdProgram(dims=dims, log_terms=log_terms, linear=linear, constraints=cons)


def _warm_start(F_expand, taus, lams, p_max):
    """Blend each block toward its leading eigenvector so new cuts hold strictly."""
    out = []
    for k, F in enumerate(F_expand):
        tr = max(np.real(np.trace(F)), 1e-12 * p_max)
        ratio = eigen_ratio(F)
        beta = 0.05
        if taus[k] > ratio:
            beta = min(0.95, (taus[k] - ratio) / max(1e-9, 1.0 - ratio) + 0.05)
        Fk = (1 - beta) * hermitize(F) + beta * tr * np.outer(lams[k], lams[k].conj())
        out.append(Fk + 1e-9 * tr * np.eye(F.shape[0]))
    total = sum(np.real(np.trace(F)) for F in out)
    if total > 0:
        out = [F * min(1.0, 0.999999 * p_max / total) for F in out]
    return out


def _floor_feasible(H, sigma2, p_max, gamma, settings, scale):
    """Can the SDR-relaxed power/QoS set support per-user SINR gamma?"""
    K = len(H)
    N = H[0].shape[0]
    prog = _lifted_program(H, sigma2, p_max, gamma,
                           [np.eye(N, dtype=complex) * (p_max / (K * N)) for _ in range(K)],
                           np.zeros(K), [np.eye(N)[0]] * K)
    prog.log_terms = []
    _, rep = solve_psd_program(prog, settings=settings, identity_scale=scale,
                               feasibility_only=True)
    return rep.status != INFEASIBLE


def best_feasible_floor(H, sigma2, p_max, gamma_req, settings, scale,
                        gamma_inc=0.0):
    """Laddered SINR floor: the requirement, else a step up from the incumbent.

    Keeping the floor at (or slightly above) the incumbent's min SINR means
    the incumbent stays feasible, so a solve can only improve the sum rate
    while the weakest user never regresses; doubling when supportable ratchets
    the floor toward the requirement across rounds.
    """
    if _floor_feasible(H, sigma2, p_max, gamma_req, settings, scale):
        return gamma_req, True
    for cand in (min(gamma_req, 2.0 * gamma_inc), 0.999 * gamma_inc):
        if cand > 0 and _floor_feasible(H, sigma2, p_max, cand, settings, scale):
            return cand, False
    return 0.0, False


def srocr_beamforming(
    channels: EffectiveChannels,
    config: ScenarioConfig,
    W_init: np.ndarray,
    use_rank_cuts: bool = True,
    enforce_qos: bool = True,
):
    """Optimize the lifted beamformers for fixed phases and geometry.

    Returns (F matrices, SrocrState, SolverReport). When the configured rate
    floor is unsupportable, the floor is lowered to the largest feasible level
    (bisection), the returned report carries status="infeasible", and the
    matrices are the best-effort solution at the reduced floor.
    """
    cfg = config
    st = cfg.solver
    sigma2 = cfg.sigma2
    K, N = cfg.k_users, cfg.n_elements
    H = channel_outer_products(channels.g)
    id_scale = cfg.p_max_w / (2 * K * N)
    gamma_req = (2.0 ** cfg.r_min_bps - 1.0) if enforce_qos else 0.0
    gamma_min, qos_met = gamma_req, True
    if gamma_req > 0:
        prod = np.abs(channels.g @ W_init) ** 2
        inc = np.diag(prod) / (prod.sum(axis=1) - np.diag(prod) + sigma2)
        gamma_min, qos_met = best_feasible_floor(
            H, sigma2, cfg.p_max_w, gamma_req, st, id_scale,
            gamma_inc=float(inc.min()))

    F = [np.outer(W_init[:, k], W_init[:, k].conj()) for k in range(K)]
    taus = np.zeros(K)
    lams = np.array([principal_eigvec(Fk)[1] for Fk in F])
    dtau = st.tau_step
    last_rate = lifted_rates(F, H, sigma2).sum()
    report = None
    it = 0
    while it < st.srocr_max_iter:
        it += 1
        prog = _lifted_program(H, sigma2, cfg.p_max_w, gamma_min, F, taus, lams)
        start = _warm_start(F, taus, lams, cfg.p_max_w)
        sol, report = solve_psd_program(prog, initial=start, settings=st,
                                        identity_scale=id_scale,
                                        t0=10.0 if it == 1 else 60.0)
        if report.status == INFEASIBLE:
            if not use_rank_cuts or np.all(taus == 0):
                return F, SrocrState(taus, lams, it), report
            dtau /= 2.0
            if dtau < 1e-3:
                break
            ratios = np.array([eigen_ratio(Fk) for Fk in F])
            taus = np.minimum(TAU_CAP, ratios + dtau)
            continue
        F = sol
        ratios = np.array([eigen_ratio(Fk) for Fk in F])
        lams = np.array([principal_eigvec(Fk)[1] for Fk in F])
        rate = lifted_rates(F, H, sigma2).sum()
        done_rank = (not use_rank_cuts) or (
            np.all(taus >= TAU_CAP) and np.all(ratios >= 1.0 - st.rank_tol))
        if use_rank_cuts:
            taus = np.maximum(taus, np.minimum(TAU_CAP, ratios + dtau))
        if done_rank and abs(rate - last_rate) < st.sca_tol:
            break
        last_rate = rate
    if not qos_met and report is not None and report.status != INFEASIBLE:
        report = SolverReport(status=INFEASIBLE,
                              objective_value=report.objective_value,
                              kkt_residual=report.kkt_residual,
                              feasibility_residual=report.feasibility_residual,
                              iterations=report.iterations)
    return F, SrocrState(taus, lams, it), report


def recover_beamformers(F: list[np.ndarray], rank_tol: float = 1e-3) -> np.ndarray:
    """w_k = sqrt(lmax) v_max per block; requires eigen-ratio >= 1 - rank_tol."""
    cols = []
    for k, Fk in enumerate(F):
        ratio = eigen_ratio(Fk)
        if ratio < 1.0 - rank_tol:
            raise RankRecoveryError(
                f"block {k}: eigen-ratio {ratio:.6f} below {1 - rank_tol:.6f}")
        lam, v = principal_eigvec(Fk)
        w = np.sqrt(max(lam, 0.0)) * v
        # fix the arbitrary eigenvector phase for reproducibility
        i = int(np.argmax(np.abs(w)))
        if np.abs(w[i]) > 0:
            w = w * np.exp(-1j * np.angle(w[i]))
        cols.append(w)
    return np.stack(cols, axis=1)


def qos_power_polish(W: np.ndarray, channels: EffectiveChannels,
                     config: ScenarioConfig) -> np.ndarray:
    """Rescale per-user powers on fixed directions to restore the rate floor.

    Fixed-point power control toward targets max(current SINR, floor); no-op
    when the floor already holds or the fixed point exceeds the power budget.
    """
    sigma2 = config.sigma2
    gamma_min = 2.0 ** config.r_min_bps - 1.0
    prod = channels.g @ W
    p = np.abs(prod) ** 2
    powers = np.sum(np.abs(W) ** 2, axis=0)
    sinr = np.diag(p) / (p.sum(axis=1) - np.diag(p) + sigma2)
    if np.all(sinr >= gamma_min * (1.0 - 1e-9)):
        return W
    ok = powers > 0
    if not np.all(ok):
        return W
    dirs = W / np.sqrt(powers)[None, :]
    G = np.abs(channels.g @ dirs) ** 2
    targets = np.maximum(sinr, gamma_min)
    q = powers.copy()
    for _ in range(500):
        interf = G @ q - np.diag(G) * q
        q_new = targets * (interf + sigma2) / np.diag(G)
        if np.max(np.abs(q_new - q)) <= 1e-12 * max(1.0, q.max()):
            q = q_new
            break
        q = q_new
        if q.sum() > 10 * config.p_max_w:
            return W
    if q.sum() > config.p_max_w * (1.0 + 1e-9):
        return W
    return dirs * np.sqrt(q)[None, :]
