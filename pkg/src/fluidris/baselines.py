"""Comparison schemes: zero-forcing, rank-dropped recovery, black-box searches,
and the all-random reference, plus helpers for the ablation variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import beamforming as bf
from .channel import assemble_channels, evaluate_rates
from .scenario import FALayout, NetworkState, ScenarioConfig, _stream, validate_layout


class ZeroForcingError(RuntimeError):
    pass


@dataclass
class BaselineSpec:
    scheme: str = "random"
    budget: int = 2000
    population: int = 32
    elite_fraction: float = 0.25
    mutation_sigma: float = 0.05       # fraction of each coordinate's range
    exploration: float = np.sqrt(2.0)  # UCB constant
    phase_bits: int = 3
    zoom: bool = True                  # continuous variant refines the grid
    n_randomizations: int = 200

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 0 < self.elite_fraction <= 1:
            raise ValueError("elite_fraction must be in (0, 1]")


def zero_forcing(channels, config: ScenarioConfig) -> np.ndarray:
    """Interference-nulling beams at equal per-user power."""
    G = channels.g
    K, N = G.shape
    if K > N:
        raise ZeroForcingError(f"{K} users exceed {N} antennas")
    gram = G @ G.conj().T
    if np.linalg.matrix_rank(G, tol=1e-12 * np.linalg.norm(G)) < K:
        raise ZeroForcingError("stacked channel matrix is rank deficient")
    W = G.conj().T @ np.linalg.inv(gram)
    norms = np.linalg.norm(W, axis=0)
    W = W / norms[None, :] * np.sqrt(config.p_max_w / K)
    return W


def drop_rank(channels, config: ScenarioConfig, W_init: np.ndarray | None = None) -> np.ndarray:
    """Lifted solve with the rank constraints dropped, then randomized recovery."""
    cfg = config
    st = cfg.solver
    K, N = cfg.k_users, cfg.n_elements
    if W_init is None:
        W_init = np.zeros((N, K), dtype=complex)
        for k in range(K):
            g = np.conj(channels.g[k])
            nrm = np.linalg.norm(g)
            W_init[:, k] = np.sqrt(cfg.p_max_w / K) * (g / nrm if nrm > 0 else 0)
    F, _, _ = bf.srocr_beamforming(channels, cfg, W_init, use_rank_cuts=False)
    rng = _stream(cfg.seed, "drop-rank-randomization")
    gamma_min = 2.0 ** cfg.r_min_bps - 1.0

    candidates = []
    eig_cols = []
    factors = []
    for Fk in F:
        w, V = np.linalg.eigh(0.5 * (Fk + Fk.conj().T))
        w = np.clip(w, 0.0, None)
        eig_cols.append(np.sqrt(w[-1]) * V[:, -1])
        factors.append(V * np.sqrt(w)[None, :])
    candidates.append(np.stack(eig_cols, axis=1))
    n_rand = st.n_randomizations
    for _ in range(n_rand):
        cols = []
        for Fk, L in zip(F, factors):
            z = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
            cols.append(L @ z)
        candidates.append(np.stack(cols, axis=1))

    best, best_rate = None, -np.inf
    best_feas, best_feas_rate = None, -np.inf
    for W in candidates:
        tot = np.sum(np.abs(W) ** 2)
        if tot > 0:
            W = W * np.sqrt(cfg.p_max_w / tot)
        rep = evaluate_rates(channels, W, cfg.sigma2)
        if rep.sum_rate > best_rate:
            best, best_rate = W, rep.sum_rate
        if rep.per_user_sinr.min() >= gamma_min and rep.sum_rate > best_feas_rate:
            best_feas, best_feas_rate = W, rep.sum_rate
    return best_feas if best_feas is not None else best


def random_layout(cfg: ScenarioConfig, rng: np.random.Generator,
                  max_attempts: int = 100_000) -> FALayout:
    """Uniform feasible element placement by rejection sampling."""
    for _ in range(max_attempts):
        pos = np.zeros((cfg.n_h, cfg.n_v, 3))
        pos[:, :, 0] = rng.uniform(0.0, cfg.l_h, size=(cfg.n_h, cfg.n_v))
        pos[:, :, 1] = rng.uniform(0.0, cfg.l_v, size=(cfg.n_h, cfg.n_v))
        layout = FALayout(pos)
        if not validate_layout(layout, cfg):
            return layout
    raise RuntimeError("could not sample a feasible layout in 1e5 attempts")


def random_baseline(state: NetworkState, config: ScenarioConfig, seed: int) -> NetworkState:
    """All four blocks drawn at random (feasible by construction)."""
    cfg = config.resolved()
    rng = _stream(seed, "random-baseline")
    M, N, K = cfg.m_ris, cfg.n_elements, cfg.k_users
    theta = rng.uniform(0.0, 2.0 * np.pi, size=M)
    lo = np.asarray(cfg.uav_box_min)
    hi = np.asarray(cfg.uav_box_max)
    for _ in range(100_000):
        u = rng.uniform(lo, hi)
        if np.linalg.norm(u - state.uav_position) <= cfg.delta_max:
            break
    else:
        u = np.asarray(state.uav_position, dtype=float)
    layout = random_layout(cfg, rng)
    W = rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))
    W = W * np.sqrt(cfg.p_max_w / np.sum(np.abs(W) ** 2))
    return state.replace(W=W, theta=theta, uav_position=u, fa_layout=layout)


def randomized_beams(state: NetworkState, config: ScenarioConfig, seed: int) -> NetworkState:
    """Random transmit beams and random phases (the no-beamforming ablation)."""
    cfg = config.resolved()
    rng = _stream(seed, "no-bf-ablation")
    W = rng.standard_normal((cfg.n_elements, cfg.k_users)) + \
        1j * rng.standard_normal((cfg.n_elements, cfg.k_users))
    W = W * np.sqrt(cfg.p_max_w / np.sum(np.abs(W) ** 2))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=cfg.m_ris)
    return state.replace(W=W, theta=theta)


# -- black-box searches over [theta; u; element xy] -----------------------------


class _GenomeCodec:
    """Pack the passive/geometry blocks into a bounded real vector."""

    def __init__(self, cfg: ScenarioConfig, state: NetworkState):
        self.cfg = cfg
        self.state = state
        lo_u = np.maximum(np.asarray(cfg.uav_box_min),
                          np.asarray(state.uav_position) - cfg.delta_max)
        hi_u = np.minimum(np.asarray(cfg.uav_box_max),
                          np.asarray(state.uav_position) + cfg.delta_max)
        M, N = cfg.m_ris, cfg.n_elements
        self.lower = np.concatenate([np.zeros(M), lo_u,
                                     np.zeros(N), np.zeros(N)])
        self.upper = np.concatenate([np.full(M, 2 * np.pi), hi_u,
                                     np.full(N, cfg.l_h), np.full(N, cfg.l_v)])
        self.M, self.N = M, N

    def initial(self) -> np.ndarray:
        s = self.state
        return np.concatenate([np.asarray(s.theta),
                               np.asarray(s.uav_position),
                               s.fa_layout.flat[:, 0], s.fa_layout.flat[:, 1]])

    def repair(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(x, self.lower, self.upper)
        u = x[self.M:self.M + 3]
        d = np.linalg.norm(u - self.state.uav_position)
        if d > self.cfg.delta_max > 0:
            u = self.state.uav_position + (u - self.state.uav_position) * (self.cfg.delta_max / d)
            x[self.M:self.M + 3] = np.clip(u, self.lower[self.M:self.M + 3],
                                           self.upper[self.M:self.M + 3])
        x[self.M + 3:] = self._repair_layout(x[self.M + 3:])
        return x

    def _repair_layout(self, flat: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        xs = flat[:self.N].reshape(cfg.n_h, cfg.n_v).copy()
        ys = flat[self.N:].reshape(cfg.n_h, cfg.n_v).copy()
        for ih in range(1, cfg.n_h):
            need = xs[ih - 1].max() + cfg.d_x_min
            xs[ih] = np.maximum(xs[ih], need)
        over = xs[-1].max() - cfg.l_h
        if over > 0:
            for ih in range(cfg.n_h - 1, -1, -1):
                cap = cfg.l_h - (cfg.n_h - 1 - ih) * cfg.d_x_min
                xs[ih] = np.minimum(xs[ih], cap)
            for ih in range(1, cfg.n_h):
                xs[ih] = np.maximum(xs[ih], xs[ih - 1].max() + cfg.d_x_min)
        for iv in range(1, cfg.n_v):
            ys[:, iv] = np.maximum(ys[:, iv], ys[:, iv - 1].max() + cfg.d_y_min)
        over = ys[:, -1].max() - cfg.l_v
        if over > 0:
            for iv in range(cfg.n_v - 1, -1, -1):
                cap = cfg.l_v - (cfg.n_v - 1 - iv) * cfg.d_y_min
                ys[:, iv] = np.minimum(ys[:, iv], cap)
            for iv in range(1, cfg.n_v):
                ys[:, iv] = np.maximum(ys[:, iv], ys[:, iv - 1].max() + cfg.d_y_min)
        return np.concatenate([xs.ravel(), ys.ravel()])

    def to_state(self, x: np.ndarray) -> NetworkState:
        cfg = self.cfg
        theta = np.mod(x[:self.M], 2 * np.pi)
        u = x[self.M:self.M + 3]
        pos = np.zeros((cfg.n_h, cfg.n_v, 3))
        pos[:, :, 0] = x[self.M + 3:self.M + 3 + self.N].reshape(cfg.n_h, cfg.n_v)
        pos[:, :, 1] = x[self.M + 3 + self.N:].reshape(cfg.n_h, cfg.n_v)
        pos[:, :, 2] = self.state.fa_layout.flat[0, 2]
        return self.state.replace(theta=theta, uav_position=u, fa_layout=FALayout(pos))


def _fitness_with_zf(state: NetworkState, cfg: ScenarioConfig) -> tuple[float, NetworkState]:
    chans = assemble_channels(state, cfg)
    try:
        W = zero_forcing(chans, cfg)
    except ZeroForcingError:
        W = state.W
    cand = state.replace(W=W)
    rep = evaluate_rates(chans, W, cfg.sigma2)
    return rep.sum_rate, cand


def ga_optimize(state: NetworkState, config: ScenarioConfig,
                spec: BaselineSpec) -> NetworkState:
    """Elitist generational search over phases, position, and element layout."""
    cfg = config.resolved()
    rng = _stream(cfg.seed, "ga")
    codec = _GenomeCodec(cfg, state)
    pop_size = min(spec.population, spec.budget)
    span = codec.upper - codec.lower
    pop = [codec.repair(rng.uniform(codec.lower, codec.upper))
           for _ in range(pop_size - 1)]
    pop.append(codec.initial())
    evals = 0
    scored = []
    for x in pop:
        f, st_x = _fitness_with_zf(codec.to_state(x), cfg)
        scored.append((f, x, st_x))
        evals += 1
    n_elite = max(1, int(round(spec.elite_fraction * pop_size)))
    while evals < spec.budget:
        scored.sort(key=lambda t: -t[0])
        elites = scored[:n_elite]
        children = [e[1] for e in elites]
        while len(children) < pop_size and evals + len(children) - n_elite < spec.budget:
            i, j = rng.integers(0, n_elite, size=2)
            mask = rng.uniform(size=len(span)) < 0.5
            child = np.where(mask, elites[i][1], elites[j][1])
            if spec.mutation_sigma > 0:
                child = child + rng.normal(0.0, spec.mutation_sigma * span)
            children.append(codec.repair(child))
        new_scored = list(elites)
        for x in children[n_elite:]:
            f, st_x = _fitness_with_zf(codec.to_state(x), cfg)
            new_scored.append((f, x, st_x))
            evals += 1
        scored = new_scored
        if len(children) <= n_elite:
            break
    scored.sort(key=lambda t: -t[0])
    return scored[0][2]


def _mab_axes(cfg: ScenarioConfig, state: NetworkState, spec: BaselineSpec,
              shrink: int = 0):
    """Per-coordinate quantized levels; one arm changes one coordinate."""
    levels = []
    n_phase = 2 ** spec.phase_bits
    M, N, K = cfg.m_ris, cfg.n_elements, cfg.k_users
    for m in range(M):
        vals = np.linspace(0, 2 * np.pi, n_phase * 2 ** shrink, endpoint=False)
        levels.append(("theta", m, vals))
    lo = np.maximum(np.asarray(cfg.uav_box_min), state.uav_position - cfg.delta_max)
    hi = np.minimum(np.asarray(cfg.uav_box_max), state.uav_position + cfg.delta_max)
    for c in range(3):
        if hi[c] - lo[c] > 1e-9:
            step = cfg.delta_max / (2.0 * 2 ** shrink)
            vals = np.arange(lo[c], hi[c] + 1e-9, step)
            levels.append(("uav", c, vals))
    for n in range(N):
        step = cfg.d_x_min / 2 ** shrink
        levels.append(("fa_x", n, np.arange(0.0, cfg.l_h + 1e-9, step)))
        step = cfg.d_y_min / 2 ** shrink
        levels.append(("fa_y", n, np.arange(0.0, cfg.l_v + 1e-9, step)))
    for n in range(N):
        for k in range(K):
            vals = np.linspace(0, 2 * np.pi, n_phase * 2 ** shrink, endpoint=False)
            levels.append(("w_phase", (n, k), vals))
    return levels


def _apply_arm(codec: _GenomeCodec, x: np.ndarray, W: np.ndarray, kind, idx, val):
    x = x.copy()
    W = W.copy()
    M, N = codec.M, codec.N
    if kind == "theta":
        x[idx] = val
    elif kind == "uav":
        x[M + idx] = val
    elif kind == "fa_x":
        x[M + 3 + idx] = val
    elif kind == "fa_y":
        x[M + 3 + N + idx] = val
    elif kind == "w_phase":
        n, k = idx
        W[n, k] = np.abs(W[n, k]) * np.exp(1j * val)
    return codec.repair(x), W


def mab_optimize(state: NetworkState, config: ScenarioConfig,
                 spec: BaselineSpec) -> NetworkState:
    """Index-based bandit over quantized single-coordinate moves.

    The continuous variant halves every quantization step each epoch, zooming
    around the incumbent; rewards are true sum rates.
    """
    cfg = config.resolved()
    codec = _GenomeCodec(cfg, state)
    x_inc = codec.initial()
    W_inc = np.array(state.W)

    def score(x, W):
        st = codec.to_state(x).replace(W=W)
        chans = assemble_channels(st, cfg)
        return evaluate_rates(chans, W, cfg.sigma2).sum_rate, st

    best_rate, best_state = score(x_inc, W_inc)
    epochs = 4 if spec.zoom else 1
    budget_left = spec.budget
    for epoch in range(epochs):
        axes = _mab_axes(cfg, state, spec, shrink=epoch if spec.zoom else 0)
        arms = [(kind, idx, v) for kind, idx, vals in axes for v in vals]
        pulls = budget_left if epoch == epochs - 1 else max(len(arms), budget_left // (epochs - epoch))
        pulls = min(pulls, budget_left)
        if pulls < 1:
            break
        means = np.zeros(len(arms))
        counts = np.zeros(len(arms))
        t = 0
        while t < pulls:
            if t < len(arms):
                a = t
            else:
                ucb = means + spec.exploration * np.sqrt(np.log(max(t, 2)) / np.maximum(counts, 1))
                a = int(np.argmax(ucb))
            kind, idx, val = arms[a]
            x_c, W_c = _apply_arm(codec, x_inc, W_inc, kind, idx, val)
            r, st_c = score(x_c, W_c)
            counts[a] += 1
            means[a] += (r - means[a]) / counts[a]
            if r > best_rate:
                best_rate, best_state = r, st_c
                x_inc, W_inc = x_c, W_c
            t += 1
        budget_left -= t
        if budget_left <= 0:
            break
    return best_state
