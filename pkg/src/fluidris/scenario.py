"""Scenario data types, config ingestion/validation, and random instance generation.

All quantities are SI (meters, watts, Hz, radians). A scenario is fully
described by a :class:`ScenarioConfig`; :func:`generate_scenario` turns a
config into an initial :class:`NetworkState` deterministically from the seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import yaml

SPEED_OF_LIGHT = 299792458.0

GEO_TOL = 1e-9      # geometric tolerance for layout constraints (m)
POWER_TOL = 1e-6    # slack on the transmit power budget (W)


class ConfigError(ValueError):
    """Malformed config document (unknown key, wrong type, bad shape)."""


class ValidationError(ValueError):
    """Config parsed fine but violates a scenario invariant."""


def _vec3(x, name: str) -> tuple[float, float, float]:
    try:
        v = tuple(float(c) for c in x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a 3-vector, got {x!r}") from exc
    if len(v) != 3:
        raise ConfigError(f"{name}: expected 3 components, got {len(v)}")
    return v


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps shared by all subproblem solvers."""

    kkt_tol: float = 1e-6
    feas_tol: float = 1e-7
    psd_tol: float = 1e-8
    max_iter: int = 500            # Newton-step cap for one conic solve
    rank_tol: float = 1e-3         # eigen-ratio >= 1 - rank_tol counts as rank-one
    tau_step: float = 0.1          # rank-relaxation increment per iteration
    srocr_max_iter: int = 30
    sca_tol: float = 1e-4          # inner-loop objective improvement stop
    sca_max_iter: int = 30
    outer_tol: float = 1e-3        # outer sum-rate improvement stop (bits/s/Hz)
    outer_max_iter: int = 30
    monotone_tol: float = 1e-6
    trust_region_wavelengths: float = 0.25   # antenna-move cap per SCA step
    n_randomizations: int = 200    # candidates for drop-rank recovery

    def replace(self, **kw) -> "SolverSettings":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one network instance.

    ``user_positions`` may be None, in which case users are placed uniformly
    at random in a disk of ``user_disk_radius`` around ``user_disk_center``
    at ``user_height`` (drawn from the seed; see :meth:`resolved`).
    """

    k_users: int = 2
    n_h: int = 2
    n_v: int = 2
    m_ris: int = 8
    ris_shape: tuple[int, int] | None = None     # (rows, cols); near-square split of M if None
    l_h: float = 0.5
    l_v: float = 0.5
    d_x_min: float = 0.05
    d_y_min: float = 0.05
    a1: float = 0.3
    a2: float = 0.7
    kappa: float = 2.2
    freq_hz: float = 2.998e9
    d0: float = 1.0
    p_max_w: float = 2.0
    r_min_bps: float = 1.0
    noise_w: float | tuple[float, ...] = 1e-12
    delta_max: float = 20.0
    uav_box_min: tuple[float, float, float] = (-150.0, -150.0, 100.0)
    uav_box_max: tuple[float, float, float] = (60.0, 150.0, 100.0)
    ris_position: tuple[float, float, float] = (100.0, 0.0, 30.0)
    uav_initial: tuple[float, float, float] = (0.0, 0.0, 100.0)
    user_positions: tuple[tuple[float, float, float], ...] | None = None
    user_disk_radius: float = 100.0
    user_disk_center: tuple[float, float] = (0.0, 0.0)
    user_height: float = 1.7
    ris_spacing_wavelengths: float = 0.5
    direct_path_gain_db: float = -20.0        # blocked direct link, no-RIS mode only
    direct_path_exponent: float | None = None  # defaults to kappa + 1
    mobility_mask: tuple[bool, ...] | None = None  # False = element frozen at its initial spot
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        validate_config(self)

    # -- derived quantities ------------------------------------------------

    @property
    def n_elements(self) -> int:
        return self.n_h * self.n_v

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.freq_hz

    @property
    def h0(self) -> float:
        """Reference pathloss c / (4 pi d0 f)."""
        return SPEED_OF_LIGHT / (4.0 * np.pi * self.d0 * self.freq_hz)

    @property
    def sigma2(self) -> np.ndarray:
        """Per-user noise powers as a K-vector."""
        if np.isscalar(self.noise_w):
            return np.full(self.k_users, float(self.noise_w))
        return np.asarray(self.noise_w, dtype=float)

    @property
    def ris_grid(self) -> tuple[int, int]:
        if self.ris_shape is not None:
            return self.ris_shape
        rows = int(np.floor(np.sqrt(self.m_ris)))
        while self.m_ris % rows:
            rows -= 1
        return rows, self.m_ris // rows

    def ris_element_positions(self) -> np.ndarray:
        """Local RIS element offsets, (M, 3). Panel lies in the y-z plane."""
        rows, cols = self.ris_grid
        d = self.ris_spacing_wavelengths * self.wavelength
        ys = (np.arange(cols) - (cols - 1) / 2.0) * d
        zs = (np.arange(rows) - (rows - 1) / 2.0) * d
        pos = np.zeros((rows, cols, 3))
        pos[:, :, 1] = ys[None, :]
        pos[:, :, 2] = zs[:, None]
        return pos.reshape(-1, 3)

    def user_array(self) -> np.ndarray:
        if self.user_positions is None:
            raise ValidationError("user positions unresolved; call resolved() first")
        return np.asarray(self.user_positions, dtype=float)

    def resolved(self) -> "ScenarioConfig":
        """Return a config with explicit user positions (drawn if absent)."""
        if self.user_positions is not None:
            return self
        rng = _stream(self.seed, "users")
        r = self.user_disk_radius * np.sqrt(rng.uniform(size=self.k_users))
        ang = rng.uniform(0.0, 2.0 * np.pi, size=self.k_users)
        cx, cy = self.user_disk_center
        users = tuple(
            (float(cx + ri * np.cos(ai)), float(cy + ri * np.sin(ai)), self.user_height)
            for ri, ai in zip(r, ang)
        )
        return dataclasses.replace(self, user_positions=users)

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def content_hash(self) -> str:
        """Stable hash of the full config (for manifests)."""
        doc = yaml.safe_dump(config_to_dict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def validate_config(cfg: ScenarioConfig) -> None:
    if cfg.k_users < 1 or cfg.n_h < 1 or cfg.n_v < 1 or cfg.m_ris < 1:
        raise ValidationError("K, N_h, N_v, M must all be >= 1")
    for name in ("l_h", "l_v", "d_x_min", "d_y_min", "freq_hz", "d0", "p_max_w",
                 "user_disk_radius"):
        if getattr(cfg, name) <= 0:
            raise ValidationError(f"{name} must be strictly positive")
    if np.any(np.asarray(cfg.sigma2) <= 0):
        raise ValidationError("noise powers must be strictly positive")
    if cfg.delta_max < 0:
        raise ValidationError("delta_max must be nonnegative")
    if (cfg.n_h - 1) * cfg.d_x_min > cfg.l_h + GEO_TOL:
        raise ValidationError(
            f"(n_h-1)*d_x_min = {(cfg.n_h - 1) * cfg.d_x_min:g} exceeds l_h = {cfg.l_h:g}: "
            "no feasible antenna layout")
    if (cfg.n_v - 1) * cfg.d_y_min > cfg.l_v + GEO_TOL:
        raise ValidationError(
            f"(n_v-1)*d_y_min = {(cfg.n_v - 1) * cfg.d_y_min:g} exceeds l_v = {cfg.l_v:g}: "
            "no feasible antenna layout")
    lo, hi, u0 = map(np.asarray, (cfg.uav_box_min, cfg.uav_box_max, cfg.uav_initial))
    if np.any(lo > hi):
        raise ValidationError("uav_box_min exceeds uav_box_max")
    if np.any(u0 < lo - GEO_TOL) or np.any(u0 > hi + GEO_TOL):
        raise ValidationError("uav_initial lies outside [uav_box_min, uav_box_max]")
    rows, cols = cfg.ris_grid
    if rows * cols != cfg.m_ris:
        raise ValidationError(f"ris_shape {cfg.ris_shape} does not factor m_ris={cfg.m_ris}")
    if cfg.user_positions is not None and len(cfg.user_positions) != cfg.k_users:
        raise ValidationError(
            f"user_positions has {len(cfg.user_positions)} entries, expected k_users={cfg.k_users}")
    if not np.isscalar(cfg.noise_w) and len(cfg.noise_w) != cfg.k_users:
        raise ValidationError("noise_w list length must equal k_users")
    if cfg.mobility_mask is not None and len(cfg.mobility_mask) != cfg.n_elements:
        raise ValidationError("mobility_mask length must equal n_h*n_v")


# -- config documents ----------------------------------------------------------

_CONFIG_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverSettings)}
_TUPLE3_KEYS = {"uav_box_min", "uav_box_max", "ris_position", "uav_initial"}


def load_scenario(source) -> ScenarioConfig:
    """Parse and validate a scenario config.

    ``source`` is a mapping, a YAML string, or a path to a YAML file.
    Unknown keys are errors (fail fast).
    """
    if isinstance(source, ScenarioConfig):
        return source
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if "\n" not in text and (text.endswith(".yaml") or text.endswith(".yml")):
            with open(text) as fh:
                doc = yaml.safe_load(fh)
        else:
            doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ScenarioConfig:
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = dict(doc)
    if "solver" in kw and kw["solver"] is not None:
        sdoc = kw["solver"]
        if not isinstance(sdoc, dict):
            raise ConfigError("solver: expected a mapping of solver settings")
        bad = set(sdoc) - _SOLVER_KEYS
        if bad:
            raise ConfigError(f"unknown solver keys: {sorted(bad)}")
        kw["solver"] = SolverSettings(**sdoc)
    for key in _TUPLE3_KEYS:
        if key in kw:
            kw[key] = _vec3(kw[key], key)
    if kw.get("user_positions") is not None:
        kw["user_positions"] = tuple(_vec3(p, "user_positions") for p in kw["user_positions"])
    if kw.get("user_disk_center") is not None:
        c = kw["user_disk_center"]
        if len(c) != 2:
            raise ConfigError("user_disk_center: expected 2 components")
        kw["user_disk_center"] = (float(c[0]), float(c[1]))
    if kw.get("ris_shape") is not None:
        r = kw["ris_shape"]
        kw["ris_shape"] = (int(r[0]), int(r[1]))
    if kw.get("noise_w") is not None and not np.isscalar(kw["noise_w"]):
        kw["noise_w"] = tuple(float(v) for v in kw["noise_w"])
    if kw.get("mobility_mask") is not None:
        kw["mobility_mask"] = tuple(bool(v) for v in kw["mobility_mask"])
    try:
        return ScenarioConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-dict form of a config, YAML-safe, inverse of config_from_dict."""
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "solver":
            v = dataclasses.asdict(v)
        elif isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[f.name] = v
    return out


# -- layouts and state ---------------------------------------------------------


@dataclass(frozen=True)
class FALayout:
    """Element positions of the transmit array, local frame, (n_h, n_v, 3)."""

    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        p.flags.writeable = False
        object.__setattr__(self, "positions", p)

    @property
    def flat(self) -> np.ndarray:
        """(N, 3) view, row-major over (n_h, n_v)."""
        return self.positions.reshape(-1, 3)

    def with_xy(self, xy: np.ndarray) -> "FALayout":
        """New layout with in-plane coordinates replaced; z kept."""
        p = np.array(self.positions)
        p[:, :, :2] = np.asarray(xy, dtype=float).reshape(p.shape[0], p.shape[1], 2)
        return FALayout(p)


def uniform_layout(cfg: ScenarioConfig) -> FALayout:
    """Evenly spaced grid across the aperture (centered if a dim is singleton)."""
    xs = (np.linspace(0.0, cfg.l_h, cfg.n_h) if cfg.n_h > 1 else np.array([cfg.l_h / 2.0]))
    ys = (np.linspace(0.0, cfg.l_v, cfg.n_v) if cfg.n_v > 1 else np.array([cfg.l_v / 2.0]))
    pos = np.zeros((cfg.n_h, cfg.n_v, 3))
    pos[:, :, 0] = xs[:, None]
    pos[:, :, 1] = ys[None, :]
    return FALayout(pos)


def validate_layout(layout: FALayout, cfg: ScenarioConfig, tol: float = GEO_TOL) -> list[str]:
    """List of violated geometry constraints (empty iff the layout is valid)."""
    p = layout.positions
    if p.shape[:2] != (cfg.n_h, cfg.n_v):
        raise ValidationError(f"layout shape {p.shape[:2]} does not match ({cfg.n_h}, {cfg.n_v})")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    bad = []
    for ih in range(1, cfg.n_h):
        gap = x[ih, :].min() - x[ih - 1, :].max()
        if gap < cfg.d_x_min - tol:
            bad.append(f"column spacing: columns {ih - 1}->{ih} gap {gap:.6g} < {cfg.d_x_min:g}")
    for iv in range(1, cfg.n_v):
        gap = y[:, iv].min() - y[:, iv - 1].max()
        if gap < cfg.d_y_min - tol:
            bad.append(f"row spacing: rows {iv - 1}->{iv} gap {gap:.6g} < {cfg.d_y_min:g}")
    if x[0, :].min() < -tol or x[-1, :].max() > cfg.l_h + tol:
        bad.append("x-range: first column below 0 or last column beyond l_h")
    if y[:, 0].min() < -tol or y[:, -1].max() > cfg.l_v + tol:
        bad.append("y-range: first row below 0 or last row beyond l_v")
    if np.ptp(z) > tol:
        bad.append(f"height: z spread {np.ptp(z):.3g} m exceeds tolerance")
    return bad


@dataclass(frozen=True)
class NetworkState:
    """The four decision blocks plus the fading draw they were evaluated on."""

    W: np.ndarray              # (N, K) complex beamformers, columns per user
    theta: np.ndarray          # (M,) phase shifts in [0, 2pi)
    uav_position: np.ndarray   # (3,)
    fa_layout: FALayout
    channel_draw: "ChannelRealization"

    def __post_init__(self):
        for name in ("W", "theta", "uav_position"):
            a = np.asarray(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def replace(self, **kw) -> "NetworkState":
        return dataclasses.replace(self, **kw)

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))


@dataclass(frozen=True)
class RateReport:
    per_user_sinr: np.ndarray
    per_user_rate: np.ndarray
    sum_rate: float


def _stream(seed: int, label: str) -> np.random.Generator:
    """Independent, reproducible generator for one named draw component."""
    digest = hashlib.sha256(label.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


def generate_scenario(cfg: ScenarioConfig) -> NetworkState:
    """Deterministic initial state: MRT-style beams, zero phases, uniform grid.

    Users (when not explicit) and the small-scale fading draw come from
    ``cfg.seed``; calling twice with the same config gives identical output.
    """
    from . import channel  # local import: channel depends on these types

    cfg = cfg.resolved()
    layout = uniform_layout(cfg)
    realization = channel.draw_realization(cfg)
    theta = np.zeros(cfg.m_ris)
    skeleton = NetworkState(
        W=np.zeros((cfg.n_elements, cfg.k_users), dtype=complex),
        theta=theta,
        uav_position=np.asarray(cfg.uav_initial, dtype=float),
        fa_layout=layout,
        channel_draw=realization,
    )
    chans = channel.assemble_channels(skeleton, cfg, realization)
    # Equal-power beams matched to each user's effective channel at the
    # initial geometry; falls back to a deterministic basis beam on a null
    # channel so the state is always valid.
    W = np.zeros((cfg.n_elements, cfg.k_users), dtype=complex)
    per_user = cfg.p_max_w / cfg.k_users
    for k in range(cfg.k_users):
        g = np.conj(chans.g[k])
        norm = np.linalg.norm(g)
        if norm < 1e-300:
            g = np.zeros(cfg.n_elements, dtype=complex)
            g[k % cfg.n_elements] = 1.0
            norm = 1.0
        W[:, k] = np.sqrt(per_user) * g / norm
    return skeleton.replace(W=W)
