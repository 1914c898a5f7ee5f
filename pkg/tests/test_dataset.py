import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import risloc.dataset as dsm
from risloc.channel import MeasurementSet
from risloc.dataset import (HEADER, DatasetFormatError, featurize, fit_norm_stats, generate_dataset,
                            iter_batches, load_dataset, normalize, normalize_target,
                            denormalize_target, record_size, save_dataset, split_indices,
                            unfeaturize)


@pytest.fixture(scope="module")
def small_ds(request):
    scene, sched = request.getfixturevalue("noisy_desk_scene")
    return generate_dataset(scene, sched, 60, seed=11)


def test_split_sizes_large():
    s = split_indices(100_000, 3)
    assert [len(s[k]) for k in ("train", "val", "test")] == [80_000, 10_000, 10_000]


@given(st.integers(10, 3000), st.integers(0, 2 ** 32))
def test_splits_partition(n, seed):
    s = split_indices(n, seed)
    allidx = np.concatenate(list(s.values()))
    assert len(allidx) == n and len(np.unique(allidx)) == n
    assert abs(len(s["train"]) - 0.8 * n) <= 1
    assert abs(len(s["val"]) - 0.1 * n) <= 1
    assert abs(len(s["test"]) - 0.1 * n) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(s.values(), split_indices(n, seed).values()))


def test_featurize_example():
    f = featurize(np.array([1 + 0j]), np.array([[1j]]))
    np.testing.assert_allclose(f, [[1, 1], [0, np.pi / 2]])
    z = featurize(np.zeros(3, complex), np.zeros((3, 4), complex))
    assert not z.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_featurize_round_trip(T, K, seed):
    r = np.random.default_rng(seed)
    y = r.standard_normal(T) + 1j * r.standard_normal(T)
    beta = r.standard_normal((T, K)) + 1j * r.standard_normal((T, K))
    f = featurize(y, beta)
    assert f.shape == (2 * T, K + 1)
    assert (f[:T] >= 0).all()
    y2, b2 = unfeaturize(f)
    np.testing.assert_allclose(y2, y, atol=1e-12)
    np.testing.assert_allclose(b2, beta, atol=1e-12)


def test_phase_minus_pi_maps_to_pi():
    f = featurize(np.array([complex(-1, -0.0)]), np.array([[1 + 0j]]))
    assert f[1, 0] == np.pi


def test_constant_column_normalizes_to_zero():
    feats = np.random.default_rng(0).standard_normal((20, 2, 3))
    feats[:, 0, 1] = 4.2
    stats = fit_norm_stats(feats, np.zeros((20, 2)))
    out = normalize(feats, stats)
    assert not out[:, 1].any()
    assert np.isfinite(out).all()


def test_target_normalization_hand_example():
    stats = fit_norm_stats(np.zeros((2, 1, 1)), np.array([[0.0, 0.0], [2.0, 2.0]]))
    np.testing.assert_allclose(stats.target_mean, [1, 1])
    np.testing.assert_allclose(stats.target_std, [1, 1])
    np.testing.assert_allclose(normalize_target([[0, 0], [2, 2]], stats), [[-1, -1], [1, 1]])


@given(arrays(float, (5, 2), elements=st.floats(-10, 10)))
def test_target_round_trip(p):
    stats = fit_norm_stats(np.zeros((3, 1, 1)), np.array([[0, 1], [3, 5], [-2, 2.0]]))
    np.testing.assert_allclose(denormalize_target(normalize_target(p, stats), stats), p, atol=1e-12)


def test_stats_ignore_test_split(small_ds):
    tr = small_ds.split("train")
    a = fit_norm_stats(*tr)
    feats = small_ds.features.copy()
    test = small_ds.splits["test"]
    feats[test] = feats[test[::-1]] * 3.0
    perturbed = type(small_ds)(**{**small_ds.__dict__, "features": feats})
    b = fit_norm_stats(*perturbed.split("train"))
    np.testing.assert_array_equal(a.feature_mean, b.feature_mean)
    np.testing.assert_array_equal(a.feature_std, b.feature_std)


def test_batches_cover_once():
    idx = np.arange(100)
    batches = list(iter_batches(idx, 32, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [32, 32, 32, 4]
    assert sorted(np.concatenate(batches).tolist()) == idx.tolist()


def test_generation_deterministic(noisy_desk_scene):
    scene, sched = noisy_desk_scene
    a = generate_dataset(scene, sched, 10, seed=4)
    b = generate_dataset(scene, sched, 10, seed=4)
    assert a.features.tobytes() == b.features.tobytes()
    assert all(np.array_equal(a.splits[k], b.splits[k]) for k in a.splits)


def test_measurement_recovers_sample(small_ds):
    y, beta = small_ds.measurement(3)
    np.testing.assert_allclose(featurize(y, beta), small_ds.features[3], atol=1e-12)


def test_position_histogram_uniform(monkeypatch, noisy_desk_scene):
    # the physics is irrelevant for the position law; stub it out for speed
    scene, sched = noisy_desk_scene

    def stub(scene, schedule, p, phi0, rng, scenario_id=""):
        return MeasurementSet(np.zeros(schedule.T, complex), np.asarray(p), phi0), \
            np.zeros((schedule.T, scene.K), complex)

    monkeypatch.setattr(dsm, "simulate_measurements", stub)
    ds = generate_dataset(scene, sched, 100_000, seed=9)
    (x0, x1), (y0, y1) = scene.config.ue_region
    for col, lo, hi in ((0, x0, x1), (1, y0, y1)):
        counts, _ = np.histogram(ds.positions[:, col], bins=10, range=(lo, hi))
        np.testing.assert_allclose(counts, 10_000, rtol=0.05)
    assert ds.phi0.min() >= 0 and ds.phi0.max() < 2 * np.pi


def test_save_load_round_trip(tmp_path, small_ds):
    p = tmp_path / "d.bin"
    meta = save_dataset(small_ds, p)
    assert meta["split_sizes"] == {"train": 48, "val": 6, "test": 6}
    assert p.stat().st_size == HEADER.size + small_ds.n * record_size(small_ds.T, small_ds.K)
    back = load_dataset(p)
    assert back.features.tobytes() == small_ds.features.tobytes()
    assert back.positions.tobytes() == small_ds.positions.tobytes()
    assert back.phi0.tobytes() == small_ds.phi0.tobytes()
    assert back.scene_config == small_ds.scene_config
    save_dataset(back, tmp_path / "e.bin")
    assert (tmp_path / "e.bin").read_bytes() == p.read_bytes()


def test_corrupt_files(tmp_path, small_ds):
    p = tmp_path / "d.bin"
    save_dataset(small_ds, p)
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"X" + bytes(raw[1:]))
    (tmp_path / "bad.bin.meta.json").write_text((tmp_path / "d.bin.meta.json").read_text())
    with pytest.raises(DatasetFormatError, match="magic"):
        load_dataset(bad)
    bad.write_bytes(bytes(raw[:-8]))
    with pytest.raises(DatasetFormatError, match="truncated"):
        load_dataset(bad)
    raw[-1] ^= 1
    bad.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="hash"):
        load_dataset(bad)
