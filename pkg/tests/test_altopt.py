import numpy as np
import pytest

from fluidris import altopt
from fluidris import channel as ch
from fluidris.scenario import ScenarioConfig, SolverSettings, generate_scenario


def _fast_cfg(seed=4, **kw):
    base = dict(
        k_users=2,
        user_positions=((40.0, 10.0, 1.7), (-35.0, -50.0, 1.7)),
        solver=SolverSettings(outer_max_iter=3, srocr_max_iter=8, sca_max_iter=8),
    )
    base.update(kw)
    return ScenarioConfig(seed=seed, **base)


def test_trace_monotone():
    for seed in (2, 4):
        cfg = _fast_cfg(seed=seed)
        state = generate_scenario(cfg)
        final, trace = altopt.alternating_optimization(state, cfg)
        assert np.all(np.diff(trace.sum_rate) >= -cfg.solver.monotone_tol)
        assert trace.iterations <= cfg.solver.outer_max_iter


def test_deterministic():
    cfg = _fast_cfg()
    s1, t1 = altopt.alternating_optimization(generate_scenario(cfg), cfg)
    s2, t2 = altopt.alternating_optimization(generate_scenario(cfg), cfg)
    assert t1.sum_rate == t2.sum_rate
    assert np.array_equal(s1.W, s2.W)
    assert np.array_equal(s1.theta, s2.theta)
    assert np.array_equal(s1.uav_position, s2.uav_position)
    assert np.array_equal(s1.fa_layout.positions, s2.fa_layout.positions)


def test_final_state_feasible():
    cfg = _fast_cfg(seed=7)
    state = generate_scenario(cfg)
    final, trace = altopt.alternating_optimization(state, cfg)
    assert final.total_power() <= cfg.p_max_w + 1e-6
    assert np.all(final.uav_position >= np.asarray(cfg.uav_box_min) - 1e-9)
    assert np.all(final.uav_position <= np.asarray(cfg.uav_box_max) + 1e-9)
    from fluidris.scenario import validate_layout

    assert validate_layout(final.fa_layout, cfg) == []
    assert np.all((final.theta >= 0) & (final.theta < 2 * np.pi))


def test_disabled_blocks_stay_fixed():
    cfg = _fast_cfg(seed=5)
    state = generate_scenario(cfg)
    final, _ = altopt.alternating_optimization(state, cfg, moves=("beamform", "ris"))
    assert np.array_equal(final.uav_position, state.uav_position)
    assert np.array_equal(final.fa_layout.positions, state.fa_layout.positions)

    final2, _ = altopt.alternating_optimization(state, cfg, moves=("beamform", "uav", "fa"))
    assert np.array_equal(final2.theta, state.theta)


def test_converged_state_is_near_fixed_point():
    cfg = _fast_cfg(seed=3, solver=SolverSettings(outer_max_iter=6))
    state = generate_scenario(cfg)
    final, trace = altopt.alternating_optimization(state, cfg)
    again, trace2 = altopt.alternating_optimization(final, cfg)
    assert trace2.sum_rate[-1] >= trace.sum_rate[-1] - 1e-6
    # restarting from the converged point should terminate quickly
    assert trace2.iterations <= 2


def test_initial_power_violation_rejected():
    cfg = _fast_cfg()
    state = generate_scenario(cfg)
    bad = state.replace(W=state.W * 10.0)
    with pytest.raises(ValueError, match="power"):
        altopt.alternating_optimization(bad, cfg)


def test_no_surface_mode_runs():
    cfg = _fast_cfg(seed=6)
    state = generate_scenario(cfg)
    final, trace = altopt.alternating_optimization(state, cfg, ris_enabled=False)
    assert np.all(np.diff(trace.sum_rate) >= -1e-6)
    # phases and layout are inert without the surface
    assert np.array_equal(final.theta, state.theta)
    assert np.array_equal(final.fa_layout.positions, state.fa_layout.positions)
    r = ch.state_rate(final, cfg, ris_enabled=False)
    assert r.sum_rate == pytest.approx(trace.sum_rate[-1], rel=1e-9)


def test_drop_rank_variant_runs_and_is_monotone():
    cfg = _fast_cfg(seed=8)
    state = generate_scenario(cfg)
    final, trace = altopt.alternating_optimization(state, cfg, beam_step="drop_rank")
    assert np.all(np.diff(trace.sum_rate) >= -1e-6)


def test_trace_records_every_round():
    cfg = _fast_cfg(seed=9)
    state = generate_scenario(cfg)
    final, trace = altopt.alternating_optimization(state, cfg)
    n = trace.iterations
    assert len(trace.per_user_rates) == n
    assert len(trace.statuses) == n
    assert len(trace.qos_residual) == n
    assert len(trace.wall_ms) == n
    assert set(trace.statuses[0]) == {"beamform", "ris", "uav", "fa"}
