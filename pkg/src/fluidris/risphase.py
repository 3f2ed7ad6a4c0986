"""Surface-phase subproblem: lifted unit-modulus program with rank tightening,
then per-element phase extraction from the principal eigenvector.

With the channel convention g_k = g_R,k^H Theta G_U and phi_m = exp(-j theta_m),
|g_k w_j|^2 = phi^H Q_{k,j} phi for Q_{k,j} = q q^H, q = conj(g_R,k) * (G_U w_j),
so the lifted variable is V = phi phi^H with tr(V) = M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannels
from .conic import (
    EQ,
    GE,
    INFEASIBLE,
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
TAU_CAP = 1.0 - 1e-4


class RankRecoveryError(RuntimeError):
    pass


@dataclass
class LiftedRisProgramData:
    Q: np.ndarray          # (K, K, M, M), Q[k, j] Hermitian PSD rank-one
    sigma2: np.ndarray


def build_q_matrices(channels: EffectiveChannels, W: np.ndarray,
                     sigma2=None) -> LiftedRisProgramData:
    K = channels.g_R.shape[0]
    M = channels.g_R.shape[1]
    Q = np.empty((K, K, M, M), dtype=complex)
    GW = channels.G_U @ W                       # (M, K)
    for k in range(K):
        for j in range(K):
            q = np.conj(channels.g_R[k]) * GW[:, j]
            Q[k, j] = hermitize(np.outer(q, q.conj()))
    sigma2 = np.ones(K) if sigma2 is None else np.asarray(sigma2, dtype=float)
    return LiftedRisProgramData(Q=Q, sigma2=sigma2)


def phases_to_phi(theta: np.ndarray) -> np.ndarray:
    return np.exp(-1j * np.asarray(theta))


def phi_to_phases(phi: np.ndarray) -> np.ndarray:
    return np.mod(-np.angle(phi), 2.0 * np.pi)


def _ris_program(data, sigma2, gamma_min, V_expand, tau, xi):
    K = data.Q.shape[0]
    M = data.Q.shape[2]
    log_terms = []
    lin = np.zeros((M, M), dtype=complex)
    for k in range(K):
        log_terms.append(LogTraceTerm(1.0, {0: data.Q[k].sum(axis=0)}, float(sigma2[k])))
        Qoff = data.Q[k].sum(axis=0) - data.Q[k, k]
        den = float(np.real(np.trace(V_expand @ Qoff))) + sigma2[k]
        lin -= Qoff / (den * LN2)
    # per-element unit modulus: V_mm = 1 (these sum to the trace-M condition,
    # and make the principal-eigenvector projection essentially lossless)
    cons = []
    for m in range(M):
        E = np.zeros((M, M), dtype=complex)
        E[m, m] = 1.0
        cons.append(TraceConstraint({0: E}, 1.0, EQ))
    if gamma_min > 0:
        for k in range(K):
            mat = data.Q[k, k] - gamma_min * (data.Q[k].sum(axis=0) - data.Q[k, k])
            cons.append(TraceConstraint({0: mat}, gamma_min * float(sigma2[k]), GE))
    if tau > 0:
        cut = np.outer(xi, xi.conj()) - tau * np.eye(M)
        cons.append(TraceConstraint({0: cut}, 0.0, GE))
    return PsdProgram(dims=(M,), log_terms=log_terms, linear={0: lin}, constraints=cons)


def lifted_ris_rates(V: np.ndarray, data: LiftedRisProgramData, sigma2: np.ndarray) -> np.ndarray:
    K = data.Q.shape[0]
    rates = np.empty(K)
    for k in range(K):
        p = np.real(np.einsum("jab,ba->j", data.Q[k], V))
        rates[k] = np.log2(1.0 + p[k] / (p.sum() - p[k] + sigma2[k]))
    return rates


def _floor_feasible(data, sigma2, gamma, settings):
    M = data.Q.shape[2]
    prog = _ris_program(data, sigma2, gamma, np.eye(M, dtype=complex), 0.0, np.eye(M)[0])
    prog.log_terms = []
    _, rep = solve_psd_program(prog, settings=settings, identity_scale=1.0,
                               feasibility_only=True)
    return rep.status != INFEASIBLE


def srocr_ris(
    data: LiftedRisProgramData,
    config: ScenarioConfig,
    theta_init: np.ndarray,
    enforce_qos: bool = True,
):
    """Optimize the lifted phase matrix V; returns (V, SolverReport).

    An unsupportable rate floor is lowered to the largest feasible level and
    reported as status="infeasible" alongside the best-effort solution.
    """
    st = config.solver
    sigma2 = config.sigma2
    M = data.Q.shape[2]
    gamma_min = (2.0 ** config.r_min_bps - 1.0) if enforce_qos else 0.0
    qos_met = True
    phi = phases_to_phi(theta_init)
    if gamma_min > 0 and not _floor_feasible(data, sigma2, gamma_min, st):
        # laddered best effort: a step up from the incumbent phases' weakest
        # user when supportable, else hold that incumbent level
        qos_met = False
        V0 = np.outer(phi, phi.conj())
        p0 = np.real(np.einsum("kjab,ba->kj", data.Q, V0))
        inc = np.diag(p0) / (p0.sum(axis=1) - np.diag(p0) + sigma2)
        g_inc = float(inc.min())
        gamma_req = gamma_min
        gamma_min = 0.0
        for cand in (min(gamma_req, 2.0 * g_inc), 0.999 * g_inc):
            if cand > 0 and _floor_feasible(data, sigma2, cand, st):
                gamma_min = cand
                break
    V = np.outer(phi, phi.conj())
    tau = 0.0
    dtau = st.tau_step
    xi = principal_eigvec(V)[1]
    last_rate = lifted_ris_rates(V, data, sigma2).sum()
    report = None
    it = 0
    while it < st.srocr_max_iter:
        it += 1
        prog = _ris_program(data, sigma2, gamma_min, V, tau, xi)
        ratio = eigen_ratio(V)
        beta = 0.02 if tau <= ratio else min(
            0.9, (tau - ratio) / max(1e-9, 1 - ratio) + 0.05)
        # blend toward the unit-modulus projection of the cut vector: keeps
        # the diagonal at one while lifting the eigen-ratio past the new cut
        xi_mod = np.exp(1j * np.angle(np.where(np.abs(xi) > 1e-12, xi, 1.0)))
        start = (1 - beta - 1e-6) * hermitize(V) \
            + beta * np.outer(xi_mod, xi_mod.conj()) + 1e-6 * np.eye(M)
        sol, report = solve_psd_program(prog, initial=[start], settings=st,
                                        identity_scale=1.0,
                                        t0=10.0 if it == 1 else 60.0)
        if report.status == INFEASIBLE:
            if tau == 0.0:
                return V, report
            dtau /= 2.0
            if dtau < 1e-3:
                break
            tau = min(TAU_CAP, eigen_ratio(V) + dtau)
            continue
        V = sol[0]
        ratio = eigen_ratio(V)
        xi = principal_eigvec(V)[1]
        rate = lifted_ris_rates(V, data, sigma2).sum()
        done = tau >= TAU_CAP and ratio >= 1.0 - st.rank_tol
        tau = max(tau, min(TAU_CAP, ratio + dtau))
        if done and abs(rate - last_rate) < st.sca_tol:
            break
        last_rate = rate
    if not qos_met and report is not None and report.status != INFEASIBLE:
        report = SolverReport(status=INFEASIBLE,
                              objective_value=report.objective_value,
                              kkt_residual=report.kkt_residual,
                              feasibility_residual=report.feasibility_residual,
                              iterations=report.iterations)
    return V, report


def recover_phases(V: np.ndarray, rank_tol: float = 1e-3) -> np.ndarray:
    """Unit-modulus projection of the principal eigenvector, as phases."""
    ratio = eigen_ratio(V)
    if ratio < 1.0 - rank_tol:
        raise RankRecoveryError(f"eigen-ratio {ratio:.6f} below {1 - rank_tol:.6f}")
    _, v = principal_eigvec(V)
    # rotate out the global phase for a reproducible representative
    i = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[i]))
    phi = np.exp(1j * np.angle(v))
    return phi_to_phases(phi)
