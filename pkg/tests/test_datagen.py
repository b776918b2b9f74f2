import numpy as np
import pytest
from scipy import stats

from ldofkit import ClusterSpec, DataError, SceneSpec, generate_scene, default_scene, sample_uniform_ball, top_n_ldof
from ldofkit.datagen import NORMAL, OUTLIER, dump_scene, load_scene, outlier_ids


class TestScene:
    def test_default_scene_counts(self, scene):
        assert scene.size == 214 and scene.dimension == 2
        assert scene.labels.count(OUTLIER) == 4
        assert outlier_ids(scene) == {210, 211, 212, 213}
        assert scene.labels[:210] == (NORMAL,) * 210

    def test_deterministic(self):
        a, b = generate_scene(default_scene()), generate_scene(default_scene())
        assert a.features.tobytes() == b.features.tobytes()
        assert not generate_scene(default_scene(seed=1)).equals(a)

    def test_no_outliers(self):
        spec = SceneSpec(2, (ClusterSpec((0, 0), 30, 1.0),), (), seed=3)
        ds = generate_scene(spec)
        assert ds.size == 30 and set(ds.labels) == {NORMAL}

    def test_separation_violation_names_pair(self):
        spec = SceneSpec(2, (ClusterSpec((0, 0), 10, 1.0, "C1"),), ((1.0, 1.0),))
        with pytest.raises(DataError, match=r"C1"):
            generate_scene(spec)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SceneSpec(2, (ClusterSpec((0, 0, 0), 5, 1.0),))
        with pytest.raises(ValueError):
            ClusterSpec((0,), 0, 1.0)
        with pytest.raises(ValueError):
            ClusterSpec((0,), 3, 0.0)

    def test_yaml_roundtrip(self, tmp_path):
        spec = default_scene()
        dump_scene(spec, tmp_path / "s.yaml")
        again = load_scene(tmp_path / "s.yaml")
        assert again == spec

    def test_ldof_plateau(self, scene):
        for k in range(20, 51):
            assert sorted(top_n_ldof(scene, 4, k).ids) == [210, 211, 212, 213]


class TestUniformBall:
    def test_symmetry_1d(self):
        X = sample_uniform_ball(1, 1.0, 10_000, seed=1).features
        assert abs(X.mean()) < 0.02

    def test_support(self):
        for d in (1, 2, 5, 12):
            X = sample_uniform_ball(d, 2.5, 5000, seed=d).features
            assert np.all(np.linalg.norm(X, axis=1) <= 2.5)

    def test_radial_law_chi_square(self):
        for d in (1, 2, 3, 7):
            r = np.linalg.norm(sample_uniform_ball(d, 1.0, 10_000, seed=100 + d).features, axis=1)
            # r^d is uniform on [0, 1] under the U^(1/d) law.
            observed, _ = np.histogram(r**d, bins=20, range=(0, 1))
            assert stats.chisquare(observed).pvalue > 0.01

    def test_direction_isotropic(self):
        X = sample_uniform_ball(3, 1.0, 20_000, seed=5).features
        u = X / np.linalg.norm(X, axis=1, keepdims=True)
        np.testing.assert_allclose(u.mean(axis=0), 0.0, atol=0.02)

    def test_deterministic(self):
        a = sample_uniform_ball(4, 1.0, 100, seed=9)
        assert a.equals(sample_uniform_ball(4, 1.0, 100, seed=9))

    def test_count_validation(self):
        with pytest.raises(ValueError):
            sample_uniform_ball(2, 1.0, 0, seed=0)
