"""Radio geometry: wave vectors, array responses, pathloss, channel assembly, rates.

Conventions
-----------
For each link the probability-model angle is the elevation of the higher node
above the lower one (``arcsin(dz/d)``), and the azimuth is the bearing of the
horizontal direction from the higher node toward the lower one. The wave
vector follows ``k = (2*pi/lam) * [cos(psi)cos(vartheta), cos(psi)sin(vartheta), sin(psi)]``
with ``psi`` the elevation and ``vartheta`` the azimuth; array phases are
``exp(+j k.x)`` on the transmit side and ``exp(-j k.x)`` (conjugate) on the
receive side of the same link, so only phase differences across elements matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import (
    FALayout,
    NetworkState,
    RateReport,
    ScenarioConfig,
    ValidationError,
    _stream,
)


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class WaveVector:
    k: np.ndarray          # (3,) rad/m
    psi: float             # elevation
    vartheta: float        # azimuth
    wavelength: float


def wave_vector(psi: float, vartheta: float, wavelength: float) -> WaveVector:
    """Wave vector of a plane wave with elevation psi and azimuth vartheta."""
    if wavelength <= 0:
        raise ChannelError(f"wavelength must be positive, got {wavelength}")
    k = (2.0 * np.pi / wavelength) * np.array(
        [np.cos(psi) * np.cos(vartheta), np.cos(psi) * np.sin(vartheta), np.sin(psi)]
    )
    return WaveVector(k=k, psi=psi, vartheta=vartheta, wavelength=wavelength)


def array_response(positions: np.ndarray, wave: WaveVector) -> np.ndarray:
    """Per-element phase factors exp(j k.x) for element positions (..., 3)."""
    pos = np.asarray(positions, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise ChannelError("element positions must be finite")
    return np.exp(1j * pos.reshape(-1, 3) @ wave.k)


def los_probability(vartheta: float, a1: float, a2: float) -> float:
    """Line-of-sight probability 1 / (1 + a1 * exp(a2 * (vartheta - a1)))."""
    return 1.0 / (1.0 + a1 * np.exp(a2 * (np.asarray(vartheta) - a1)))


def link_angles(src: np.ndarray, dst: np.ndarray) -> tuple[float, float, float]:
    """(elevation, azimuth, distance) for the link from src (higher) to dst."""
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = float(np.linalg.norm(d))
    if dist < 1e-9:
        raise ChannelError("coincident link endpoints: singular pathloss")
    psi = float(np.arcsin(np.clip(-d[2] / dist, -1.0, 1.0)))   # src above dst -> positive
    vartheta = float(np.arctan2(d[1], d[0]))
    return psi, vartheta, dist


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw, fixed for the whole of an optimization run."""

    G_U_nlos: np.ndarray      # (M, N) i.i.d. CN(0, 1)
    g_R_nlos: np.ndarray      # (K, M) i.i.d. CN(0, 1)
    g_R_los: np.ndarray       # (K, M) deterministic RIS->user responses
    direct_nlos: np.ndarray   # (K, N) i.i.d. CN(0, 1), used only in no-RIS mode
    seed: int


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_realization(cfg: ScenarioConfig, seed: int | None = None) -> ChannelRealization:
    """Draw the small-scale fading components; deterministic per (config, seed)."""
    cfg = cfg.resolved()
    seed = cfg.seed if seed is None else seed
    M, N, K = cfg.m_ris, cfg.n_elements, cfg.k_users
    G_U_nlos = _cn(_stream(seed, "uav-ris-nlos"), (M, N))
    g_R_nlos = _cn(_stream(seed, "ris-user-nlos"), (K, M))
    direct_nlos = _cn(_stream(seed, "direct-nlos"), (K, N))
    ris_local = cfg.ris_element_positions()
    users = cfg.user_array()
    ris = np.asarray(cfg.ris_position)
    g_R_los = np.empty((K, M), dtype=complex)
    for k in range(K):
        psi, vth, _ = link_angles(ris, users[k])
        g_R_los[k] = array_response(ris_local, wave_vector(psi, vth, cfg.wavelength))
    for a in (G_U_nlos, g_R_nlos, direct_nlos, g_R_los):
        a.flags.writeable = False
    return ChannelRealization(G_U_nlos, g_R_nlos, g_R_los, direct_nlos, seed)


@dataclass(frozen=True)
class EffectiveChannels:
    """Per-user cascade channels and every factor the subproblems reuse."""

    g: np.ndarray             # (K, N) effective rows g_k
    G_U: np.ndarray           # (M, N)
    g_R: np.ndarray           # (K, M)
    G_U_bar: np.ndarray       # (M, N) distance-free UAV->RIS mixture
    g_R_bar: np.ndarray       # (K, M) distance-free RIS->user mixtures
    a_ris_uav: np.ndarray     # (M,) RIS response on the UAV link
    wave_uav: WaveVector
    h0: float
    d_U: float
    d_R: np.ndarray           # (K,)
    p_los_uav: float
    p_los_ris: np.ndarray     # (K,)
    ris_enabled: bool
    d_direct: np.ndarray | None = None   # (K,) UAV->user distances (no-RIS mode)


def assemble_channels(
    state: NetworkState,
    cfg: ScenarioConfig,
    realization: ChannelRealization | None = None,
    ris_enabled: bool = True,
) -> EffectiveChannels:
    """Build the effective channels for the current geometry and fading draw."""
    cfg = cfg.resolved()
    rz = realization if realization is not None else state.channel_draw
    M, N, K = cfg.m_ris, cfg.n_elements, cfg.k_users
    if rz.G_U_nlos.shape != (M, N) or rz.g_R_nlos.shape != (K, M):
        raise ChannelError("realization dimensions do not match the config")
    u = np.asarray(state.uav_position, dtype=float)
    ris = np.asarray(cfg.ris_position, dtype=float)
    users = cfg.user_array()
    h0 = cfg.h0

    psi_u, vth_u, d_U = link_angles(u, ris)
    wave_u = wave_vector(psi_u, vth_u, cfg.wavelength)
    p_los_u = float(los_probability(psi_u, cfg.a1, cfg.a2))
    a_fa = array_response(state.fa_layout.flat, wave_u)            # (N,)
    a_ris = array_response(cfg.ris_element_positions(), wave_u)    # (M,)
    A = np.conj(a_ris)[:, None] * a_fa[None, :]                    # (M, N)
    G_U_bar = p_los_u * A + (1.0 - p_los_u) * rz.G_U_nlos
    G_U = np.sqrt(h0 * d_U ** (-cfg.kappa)) * G_U_bar

    d_R = np.linalg.norm(ris[None, :] - users, axis=1)
    if np.any(d_R < 1e-9):
        raise ChannelError("a user coincides with the surface: singular pathloss")
    p_los_r = np.empty(K)
    for k in range(K):
        psi_k, _, _ = link_angles(ris, users[k])
        p_los_r[k] = los_probability(psi_k, cfg.a1, cfg.a2)
    g_R_bar = p_los_r[:, None] * rz.g_R_los + (1.0 - p_los_r)[:, None] * rz.g_R_nlos
    g_R = np.sqrt(h0 * d_R ** (-cfg.kappa))[:, None] * g_R_bar

    d_direct = None
    if ris_enabled:
        phases = np.exp(1j * np.asarray(state.theta))
        g = (np.conj(g_R) * phases[None, :]) @ G_U                 # rows g_k = g_R,k^H Theta G_U
    else:
        d_direct = np.linalg.norm(u[None, :] - users, axis=1)
        if np.any(d_direct < 1e-9):
            raise ChannelError("UAV coincides with a user: singular pathloss")
        kap_d = cfg.direct_path_exponent if cfg.direct_path_exponent is not None else cfg.kappa + 1.0
        gain = 10.0 ** (cfg.direct_path_gain_db / 10.0) * h0 ** 2 * d_direct ** (-kap_d)
        g = np.sqrt(gain)[:, None] * rz.direct_nlos

    return EffectiveChannels(
        g=g, G_U=G_U, g_R=g_R, G_U_bar=G_U_bar, g_R_bar=g_R_bar,
        a_ris_uav=a_ris, wave_uav=wave_u, h0=h0, d_U=d_U, d_R=d_R,
        p_los_uav=p_los_u, p_los_ris=p_los_r, ris_enabled=ris_enabled,
        d_direct=d_direct,
    )


def evaluate_rates(channels: EffectiveChannels, W: np.ndarray, sigma2) -> RateReport:
    """Per-user SINRs and rates for beamformers W (columns are users)."""
    sigma2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
    K = channels.g.shape[0]
    if sigma2.size == 1:
        sigma2 = np.full(K, sigma2[0])
    if np.any(sigma2 <= 0):
        raise ValidationError("noise powers must be strictly positive")
    if W.shape != (channels.g.shape[1], K):
        raise ValidationError(f"W has shape {W.shape}, expected {(channels.g.shape[1], K)}")
    prod = channels.g @ W                       # prod[k, j] = g_k w_j
    p = np.abs(prod) ** 2
    signal = np.diag(p)
    interference = p.sum(axis=1) - signal
    sinr = signal / (interference + sigma2)
    rate = np.log2(1.0 + sinr)
    return RateReport(per_user_sinr=sinr, per_user_rate=rate, sum_rate=float(rate.sum()))


def state_rate(state: NetworkState, cfg: ScenarioConfig, ris_enabled: bool = True) -> RateReport:
    """Convenience: assemble channels for a state and evaluate its rates."""
    cfg = cfg.resolved()
    chans = assemble_channels(state, cfg, ris_enabled=ris_enabled)
    return evaluate_rates(chans, state.W, cfg.sigma2)
