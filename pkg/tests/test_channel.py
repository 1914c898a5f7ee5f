import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risloc.config import MultipathConfig, SceneConfig, resolve_scene
from risloc.channel import (array_factor, cascaded_channel, complex_noise, multipath_component,
                            radiation_pattern, reflection_coefficient, reflection_matrix,
                            simulate_measurements)
from risloc.scene import GeometryError, SolidAngle, build_scene, generate_schedule

LAM = 299792458.0 / 3.5e9


def af_by_summation(theta, phi, nx, ny, dx, dy, lam):
    """Centred element sum; equals the closed-form Dirichlet product."""
    k = 2 * np.pi / lam
    u = np.sin(theta) * np.sin(phi)
    v = np.sin(theta) * np.cos(phi)
    m = np.arange(nx) - (nx - 1) / 2
    n = np.arange(ny) - (ny - 1) / 2
    sx = np.exp(1j * k * dx * u * m).sum()
    sy = np.exp(1j * k * dy * v * n).sum()
    return (sx * sy).real / np.sqrt(nx * ny)


def test_pattern_values():
    assert radiation_pattern(0.0, 0.57) == 1.0
    assert radiation_pattern(1.6, 0.57) == 0.0
    assert radiation_pattern(np.pi / 3, 0.57) == pytest.approx(0.5 ** 0.57, rel=1e-12)
    assert radiation_pattern(np.pi / 3, 0.57) == pytest.approx(0.673617, abs=1e-6)


@given(st.floats(0, np.pi))
def test_pattern_range(theta):
    f = radiation_pattern(theta, 0.57)
    assert 0.0 <= f <= 1.0
    if theta > np.pi / 2:
        assert f == 0.0


def test_af_boresight():
    assert array_factor(0.0, 0.3, 4, 25, LAM / 2, LAM / 2, LAM) == pytest.approx(10.0)


def test_af_single_cell():
    for th, ph in [(0.1, 0.2), (1.2, 4.0), (np.pi / 2, np.pi)]:
        assert array_factor(th, ph, 1, 1, LAM / 2, LAM / 2, LAM) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, np.pi / 2), st.floats(0, 2 * np.pi), st.integers(1, 6), st.integers(1, 30))
def test_af_matches_element_sum(theta, phi, nx, ny):
    got = array_factor(theta, phi, nx, ny, LAM / 2, LAM / 2, LAM)
    want = af_by_summation(theta, phi, nx, ny, LAM / 2, LAM / 2, LAM)
    assert got == pytest.approx(want, abs=1e-9)
    assert abs(got) <= np.sqrt(nx * ny) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_af_symmetric_under_phi_shift(theta, phi):
    a = array_factor(theta, phi, 4, 25, LAM / 2, LAM / 2, LAM)
    b = array_factor(theta, phi + np.pi, 4, 25, LAM / 2, LAM / 2, LAM)
    assert a == pytest.approx(b, abs=1e-9)


def test_af_grating_limit_sign():
    # x = pi exactly on the nx axis: element sum gives (-1)^(nx-1) * nx
    for nx in (2, 3, 4):
        got = array_factor(np.pi / 2, np.pi / 2, nx, 1, LAM, LAM, LAM)
        assert got == pytest.approx(af_by_summation(np.pi / 2, np.pi / 2, nx, 1, LAM, LAM, LAM))


def test_reflection_coefficient_cases():
    scene = build_scene(SceneConfig(cells_per_tile=(1, 1), boresight_gain_Gc=1.0))
    bore = SolidAngle(0.0, 0.0)
    assert reflection_coefficient(bore, bore, 0.0, scene) == pytest.approx(1 + 0j)
    assert reflection_coefficient(SolidAngle(1.7, 0.0), bore, 0.0, scene) == 0
    full = build_scene(SceneConfig())
    a, b = SolidAngle(0.4, 1.0), SolidAngle(0.7, 2.0)
    b0 = reflection_coefficient(a, b, 0.0, full)
    bpi = reflection_coefficient(a, b, np.pi, full)
    assert bpi == pytest.approx(-b0)


def test_gc_applied_linearly():
    bore = SolidAngle(0.0, 0.0)
    s1 = build_scene(SceneConfig(boresight_gain_Gc=1.0))
    s5 = build_scene(SceneConfig())
    ratio = abs(reflection_coefficient(bore, bore, 0, s5)) / abs(reflection_coefficient(bore, bore, 0, s1))
    assert ratio == pytest.approx(10 ** 0.5)


def test_beta_phase_linear_in_psi(default_scene):
    scene, sched = default_scene
    ue = scene.ue_point([1.0, 4.0])
    beta = reflection_matrix(scene, sched, ue)
    base = reflection_matrix(scene, generate_schedule(sched.T, scene.K, 1), ue)
    nz = np.abs(base) > 0
    diff = np.angle(beta[nz] / base[nz])
    np.testing.assert_allclose(np.exp(1j * diff), np.exp(1j * sched.psi[nz]), atol=1e-12)
    np.testing.assert_allclose(np.abs(beta), np.abs(base), rtol=1e-12)


def test_cascaded_channel_laws(default_scene):
    scene, _ = default_scene
    tile = scene.tiles[3]
    n = tile.normal
    h = cascaded_channel(tile, tile.centroid + LAM * n, tile.centroid + LAM * n, 0.0, LAM)
    assert abs(h) == pytest.approx(1 / (4 * np.pi) ** 2, rel=1e-12)
    assert np.angle(h) == pytest.approx(0.0, abs=1e-9)
    bs, ue = tile.centroid + 2 * n, tile.centroid + 3 * n + 1.0
    h1 = cascaded_channel(tile, bs, ue, 0.0, LAM)
    h2 = cascaded_channel(tile, tile.centroid + 2 * (bs - tile.centroid),
                          tile.centroid + 2 * (ue - tile.centroid), 0.0, LAM)
    assert abs(h2) == pytest.approx(abs(h1) / 4)
    with pytest.raises(GeometryError):
        cascaded_channel(tile, bs, tile.centroid, 0.0, LAM)


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(1, 10), st.floats(0, 2 * np.pi), st.integers(0, 99))
def test_cascaded_phase(x, y, phi0, k):
    scene = build_scene(SceneConfig())
    tile = scene.tiles[k]
    ue = scene.ue_point([x, y])
    h = cascaded_channel(tile, scene.bs, ue, phi0, LAM)
    d = np.linalg.norm(scene.bs - tile.centroid) + np.linalg.norm(ue - tile.centroid)
    expect = np.exp(1j * (-2 * np.pi * d / LAM + phi0))
    assert h / abs(h) == pytest.approx(expect, abs=1e-9)


def test_multipath_component(rng):
    assert not multipath_component(MultipathConfig(enabled=False), 1.0, rng, 8).any()
    assert not multipath_component(MultipathConfig(enabled=True, relative_power=0.0), 1.0, rng, 8).any()
    f = multipath_component(MultipathConfig(enabled=True), 1.0, rng, 8)
    assert np.all(f == f[0]) and f[0] != 0
    g = multipath_component(MultipathConfig(enabled=True, per_pilot=True), 1.0, rng, 8)
    assert len(set(g.tolist())) == 8


def test_noise_power(rng):
    w = complex_noise(3.0, 100_000, rng)
    assert np.mean(np.abs(w) ** 2) == pytest.approx(3.0, rel=0.02)


def test_single_tile_noiseless_measurement(rng):
    cfg = SceneConfig(num_tiles_K=2, noise_power_sigma2=0.0)
    scene = build_scene(cfg)
    sched = generate_schedule(4, 2, 4, seed=1)
    meas, beta = simulate_measurements(scene, sched, [0.5, 3.0], 1.1, rng)
    ue = scene.ue_point([0.5, 3.0])
    h = [cascaded_channel(t, scene.bs, ue, 1.1, LAM) for t in scene.tiles]
    np.testing.assert_allclose(meas.y, beta @ np.array(h), rtol=1e-12)
    assert meas.y.shape == (4,)


def test_measurement_determinism(noisy_desk_scene):
    scene, sched = noisy_desk_scene
    a, _ = simulate_measurements(scene, sched, [1, 2], 0.3, np.random.default_rng(5))
    b, _ = simulate_measurements(scene, sched, [1, 2], 0.3, np.random.default_rng(5))
    assert a.y.tobytes() == b.y.tobytes()


def test_global_phase_shift_keeps_magnitude(desk_scene, rng):
    scene, sched = desk_scene
    shifted = type(sched)(psi=np.mod(sched.psi + 0.7, 2 * np.pi), num_levels=sched.num_levels,
                          seed=sched.seed)
    a, _ = simulate_measurements(scene, sched, [0.3, 6.0], 0.0, rng)
    b, _ = simulate_measurements(scene, shifted, [0.3, 6.0], 0.0, rng)
    np.testing.assert_allclose(np.abs(a.y), np.abs(b.y), rtol=1e-10)


def test_multipath_scales_with_ris_power():
    cfg = resolve_scene("desk_mp", {"noise_power_sigma2": 0.0, "multipath": {"per_pilot": True}})
    scene = build_scene(cfg)
    from risloc.scene import schedule_for
    sched = schedule_for(cfg)
    ratios = []
    for i in range(400):
        r = np.random.default_rng(i)
        m, beta = simulate_measurements(scene, sched, [0.0, 5.0], 0.0, r)
        from risloc.channel import cascaded_channels
        ris = beta @ cascaded_channels(scene, scene.ue_point([0.0, 5.0]), 0.0)
        ratios.append(np.mean(np.abs(m.y - ris) ** 2) / np.mean(np.abs(ris) ** 2))
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.1)
