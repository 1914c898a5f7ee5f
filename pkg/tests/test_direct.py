from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risloc.channel import cascaded_channels, simulate_measurements
from risloc.config import SceneConfig, resolve_scene
from risloc.direct import (CostContext, best_phi0, cost, cost_batch, estimate_direct,
                           hypothetical_phase, profiled_cost, region_search_pso)
from risloc.scene import build_scene, generate_schedule, schedule_for

TWO_PI = 2 * np.pi


def sample(scene, sched, p, phi0, seed=0):
    return simulate_measurements(scene, sched, np.asarray(p, float), phi0, np.random.default_rng(seed))


def wrap(a):
    return np.angle(np.exp(1j * np.asarray(a)))


def test_single_tile_phase():
    scene = build_scene(SceneConfig(num_tiles_K=2, noise_power_sigma2=0.0))
    lam = scene.wavelength
    tile = scene.tiles[0]
    # UE on the tile normal; only tile 0 contributes
    p = (tile.centroid + 3.0 * tile.normal)[:2]
    beta = np.array([[2.5 + 0j, 0.0]])
    ctx = CostContext(np.ones(1, complex), beta, scene)
    ph, degenerate = hypothetical_phase(p, 0, ctx)
    d = np.linalg.norm(scene.bs - tile.centroid) + 3.0
    assert not degenerate
    assert wrap(ph - (-TWO_PI * d / lam)) == pytest.approx(0.0, abs=1e-9)


def test_phase_shift_by_delta(desk_scene):
    scene, sched = desk_scene
    m, beta = sample(scene, sched, [1.0, 4.0], 0.0)
    ctx = CostContext(m.y, beta, scene)
    ctx2 = CostContext(m.y, beta * np.exp(0.9j), scene)
    p = [-2.0, 7.5]
    a, _ = hypothetical_phase(p, slice(None), ctx)
    b, _ = hypothetical_phase(p, slice(None), ctx2)
    np.testing.assert_allclose(wrap(b - a - 0.9), 0.0, atol=1e-9)


def test_degenerate_sum_flagged(desk_scene):
    scene, sched = desk_scene
    ctx = CostContext(np.ones(sched.T, complex), np.zeros((sched.T, scene.K), complex), scene)
    ph, degenerate = hypothetical_phase([0.0, 5.0], 0, ctx)
    assert degenerate and ph == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(1, 10), st.floats(0, TWO_PI, exclude_max=True))
def test_truth_self_consistent(x, y, phi0):
    cfg = resolve_scene("desk", {"noise_power_sigma2": 0.0})
    scene, sched = build_scene(cfg), schedule_for(cfg)
    m, beta = sample(scene, sched, [x, y], phi0)
    ctx = CostContext(m.y, beta, scene)
    ph, _ = hypothetical_phase([x, y], slice(None), ctx)
    np.testing.assert_allclose(wrap(np.angle(m.y) - phi0 - ph), 0.0, atol=1e-9)
    assert cost([x, y], phi0, ctx) < 1e-18
    assert cost([x, y], phi0, ctx) == pytest.approx(cost([x, y], phi0 + TWO_PI, ctx), abs=1e-18)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(1, 10), st.floats(0, TWO_PI), st.floats(-10, 10))
def test_cost_shift_invariance_and_sign(x, y, phi0, c):
    cfg = resolve_scene("desk")
    scene, sched = build_scene(cfg), schedule_for(cfg)
    m, beta = sample(scene, sched, [0.5, 5.0], 1.0, seed=3)
    ctx = CostContext(m.y, beta, scene)
    ctx_c = CostContext(m.y * np.exp(1j * c), beta, scene)
    a = cost([x, y], phi0, ctx)
    assert a >= 0
    assert cost([x, y], phi0 + c, ctx_c) == pytest.approx(a, rel=1e-9, abs=1e-9 * ctx.weights.sum())


def test_profiled_matches_brute_force_phi0(noisy_desk_scene):
    scene, sched = noisy_desk_scene
    m, beta = sample(scene, sched, [-1.0, 3.0], 2.0, seed=8)
    ctx = CostContext(m.y, beta, scene)
    P = np.array([[0.0, 5.0], [-1.0, 3.0], [3.0, 9.0]])
    val, phi = profiled_cost(P, ctx)
    grid = np.linspace(0, TWO_PI, 20001)
    for p, v, ph in zip(P, val, phi):
        brute = cost_batch(np.column_stack([np.tile(p, (len(grid), 1)), grid]), ctx)
        W = ctx.weights.sum()
        step = grid[1] - grid[0]
        assert v <= brute.min() + 1e-12 * W
        assert brute.min() - v <= W * (step / 2) ** 2 * 1.01
        assert cost(p, ph, ctx) == pytest.approx(v, abs=1e-12 * W)


def test_phi0_ambiguous_mod_pi(desk_scene):
    scene, sched = desk_scene
    m, beta = sample(scene, sched, [2.0, 6.0], 0.4)
    ctx = CostContext(m.y, beta, scene)
    assert cost([2.0, 6.0], 0.4 + np.pi, ctx) == pytest.approx(cost([2.0, 6.0], 0.4, ctx), abs=1e-18)
    est = best_phi0([2.0, 6.0], ctx)
    assert wrap(2 * (est - 0.4)) == pytest.approx(0.0, abs=1e-7)


def test_grid_argmin_recovers_node_truth(desk_scene):
    # truth on a grid node: the brute-force argmin is exactly that node
    scene, sched = desk_scene
    xs = np.round(np.arange(-4, 4.0001, 0.1), 10)
    ys = np.round(np.arange(1, 10.0001, 0.1), 10)
    G = np.array(np.meshgrid(xs, ys)).reshape(2, -1).T
    r = np.random.default_rng(2)
    for _ in range(5):
        truth = G[r.integers(len(G))]
        phi0 = r.uniform(0, TWO_PI)
        m, beta = sample(scene, sched, truth, phi0)
        ctx = CostContext(m.y, beta, scene)
        vals = cost_batch(np.column_stack([G, np.full(len(G), phi0)]), ctx)
        np.testing.assert_array_equal(G[np.argmin(vals)], truth)
        assert vals.min() < 1e-12


def test_one_cm_box_refinement(desk_scene):
    scene, sched = desk_scene
    truth = np.array([1.234, 5.678])
    m, beta = sample(scene, sched, truth, 3.3)
    box = [(truth[0] - 0.005, truth[0] + 0.005), (truth[1] - 0.005, truth[1] + 0.005)]
    res = estimate_direct(m.y, beta, scene, bounds=box)
    assert np.linalg.norm(res.position - truth) < 1e-4


def test_three_dimensional_search_mode(desk_scene):
    scene, sched = desk_scene
    truth = np.array([-0.7, 2.2])
    m, beta = sample(scene, sched, truth, 5.0)
    box = [(truth[0] - 0.02, truth[0] + 0.02), (truth[1] - 0.02, truth[1] + 0.02)]
    res = estimate_direct(m.y, beta, scene, bounds=box, profile_phi0=False)
    assert np.linalg.norm(res.position - truth) < 1e-4
    assert wrap(2 * (res.phi0 - 5.0)) == pytest.approx(0.0, abs=1e-3)


def test_uninformative_phase_residual():
    # at SNR -> 0 the measured phases are noise: E[sin^2] = 1/2 for any candidate
    cfg = resolve_scene("z1", {"noise_power_sigma2": 1e-3})
    scene, sched = build_scene(cfg), schedule_for(cfg)
    m, beta = sample(scene, sched, [0.0, 5.0], 0.0)
    ctx = CostContext(m.y, beta, scene)
    half = 0.5 * ctx.weights.sum()
    r = np.random.default_rng(0)
    P = np.column_stack([r.uniform(-4, 4, 4000), r.uniform(1, 10, 4000), r.uniform(0, TWO_PI, 4000)])
    assert cost_batch(P, ctx).mean() == pytest.approx(half, rel=0.05)
    res = estimate_direct(m.y, beta, scene, replace(region_search_pso(), restarts=1, swarm_size=200))
    assert 0.2 * half < res.cost <= half * (1 + 1e-9)


def test_region_search_full_scene():
    cfg = resolve_scene("z1", {"noise_power_sigma2": 0.0})
    scene, sched = build_scene(cfg), schedule_for(cfg)
    r = np.random.default_rng(20)
    pso_cfg = replace(region_search_pso(), restarts=1)
    hits = 0
    for _ in range(20):
        truth = np.array([r.uniform(-4, 4), r.uniform(1, 10)])
        m, beta = simulate_measurements(scene, sched, truth, r.uniform(0, TWO_PI), r)
        res = estimate_direct(m.y, beta, scene, pso_cfg)
        hits += np.linalg.norm(res.position - truth) < 1e-3
    assert hits >= 10
