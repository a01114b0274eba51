"""Synthetic scenario generator, ridge probe, and sweep behavior."""

from __future__ import annotations

import warnings

import numpy as np
import pytest
from scipy.stats import chi2

from xferod import synth
from xferod.errors import InvalidData, ProbeError
from xferod.synth import SynthSpec


class TestGenerate:
    def test_deterministic_bit_identical(self):
        spec = SynthSpec(objects=50, dims=6, classes=3, seed=11)
        fm1, man1 = synth.generate(spec)
        fm2, man2 = synth.generate(spec)
        assert fm1.features.tobytes() == fm2.features.tobytes()
        assert fm1.boxes.tobytes() == fm2.boxes.tobytes()
        assert np.array_equal(fm1.labels, fm2.labels)
        assert man1.objects == man2.objects

    def test_one_object_per_class_boundary(self):
        fm, manifest = synth.generate(SynthSpec(objects=4, dims=6, classes=4, images=2))
        assert fm.features.shape == (4, 6)
        assert sorted(fm.labels.tolist()) == [0, 1, 2, 3]
        assert len(manifest.objects) == 4

    def test_boxes_valid_and_manifest_consistent(self):
        fm, manifest = synth.generate(SynthSpec(objects=60, dims=5, classes=3, seed=2))
        assert np.all(fm.boxes > 0) and np.all(fm.boxes < 1)
        assert len(manifest.objects) == 60
        image_ids = {img[0] for img in manifest.images}
        assert all(obj.image_id in image_ids for obj in manifest.objects)

    def test_zero_separation_is_statistically_null(self):
        """With class_sep=0 a two-sample mean test cannot tell classes apart.

        Under H0 the scaled mean-difference statistic is chi^2(D); rejections
        at the 0.01 level should stay near 0.01 on average over 20 seeds.
        """
        dims = 6
        rejections = 0
        for seed in range(20):
            fm, _ = synth.generate(
                SynthSpec(objects=500, dims=dims, classes=2, class_sep=0.0, seed=seed)
            )
            a = fm.features[fm.labels == 0].astype(np.float64)
            b = fm.features[fm.labels == 1].astype(np.float64)
            diff = a.mean(axis=0) - b.mean(axis=0)
            stat = float(diff @ diff) / (1.0 / a.shape[0] + 1.0 / b.shape[0])
            rejections += stat > chi2.ppf(0.99, dims)
        assert rejections / 20 <= 0.15

    def test_separated_classes_are_detectable(self):
        fm, _ = synth.generate(SynthSpec(objects=500, dims=6, classes=2, class_sep=3.0))
        a = fm.features[fm.labels == 0].mean(axis=0)
        b = fm.features[fm.labels == 1].mean(axis=0)
        assert np.linalg.norm(a - b) == pytest.approx(3.0, abs=0.3)

    def test_simplex_needs_enough_dims(self):
        with pytest.raises(InvalidData):
            synth.generate(SynthSpec(objects=30, dims=2, classes=5))

    def test_equal_pairwise_separation(self):
        means = synth._simplex_means(4, 8, 2.5)
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(means[i] - means[j]) == pytest.approx(2.5, abs=1e-9)


class TestProbe:
    def test_high_signal_bound(self):
        proxies = []
        for seed in range(20):
            fm, _ = synth.generate(
                SynthSpec(objects=300, dims=8, classes=4, class_sep=10.0,
                          box_noise=0.0, seed=seed)
            )
            proxies.append(synth.probe(fm, split_seed=seed).map_proxy)
        assert min(proxies) >= 0.95

    def test_null_signal_bound(self):
        proxies = []
        for seed in range(20):
            fm, _ = synth.generate(
                SynthSpec(objects=300, dims=8, classes=4, class_sep=0.0,
                          box_noise=5.0, seed=seed)
            )
            proxies.append(synth.probe(fm, split_seed=seed).map_proxy)
        assert max(proxies) <= 1.0 / 4.0 + 0.15

    def test_deterministic(self):
        fm, _ = synth.generate(SynthSpec(objects=80, dims=6, classes=3, seed=5))
        a = synth.probe(fm, split_seed=3)
        b = synth.probe(fm, split_seed=3)
        assert a == b

    def test_probe_result_ranges(self):
        fm, _ = synth.generate(SynthSpec(objects=100, dims=6, classes=3, seed=9))
        result = synth.probe(fm)
        assert 0.0 <= result.probe_accuracy <= 1.0
        assert result.box_r2 <= 1.0
        assert 0.0 <= result.map_proxy <= 1.0

    def test_too_few_objects(self):
        fm, _ = synth.generate(SynthSpec(objects=8, dims=6, classes=2, seed=0))
        with pytest.raises(ProbeError):
            synth.probe(fm)

    def test_empty_test_split_fails(self):
        # 10 classes x 1 object: every sample must go to train
        fm, _ = synth.generate(SynthSpec(objects=10, dims=10, classes=10, seed=0))
        with pytest.raises(ProbeError):
            synth.probe(fm)

    def test_accuracy_increases_with_separation(self):
        seps = (0.5, 2.0, 6.0)
        means = {sep: [] for sep in seps}
        for seed in range(20):
            for sep in seps:
                fm, _ = synth.generate(
                    SynthSpec(objects=240, dims=8, classes=4, class_sep=sep, seed=seed)
                )
                means[sep].append(synth.probe(fm, split_seed=seed).probe_accuracy)
        avg = {sep: float(np.mean(v)) for sep, v in means.items()}
        assert avg[0.5] < avg[2.0] < avg[6.0]

    def test_box_r2_decreases_with_noise(self):
        noises = (0.0, 0.5, 2.0)
        means = {noise: [] for noise in noises}
        for seed in range(20):
            for noise in noises:
                fm, _ = synth.generate(
                    SynthSpec(objects=240, dims=8, classes=4, box_noise=noise, seed=seed)
                )
                means[noise].append(synth.probe(fm, split_seed=seed).box_r2)
        avg = {noise: float(np.mean(v)) for noise, v in means.items()}
        assert avg[0.0] > avg[0.5] > avg[2.0]


class TestScenarioSweep:
    def test_grid_size(self):
        table = synth.scenario_sweep(
            SynthSpec(objects=60, dims=6, classes=3, seed=1),
            [0.5, 1.0, 2.0, 4.0],
            [0.0, 0.2, 0.5, 1.0, 2.0],
        )
        assert table.m == 20
        assert set(table.metric_names) == {
            "logme", "tlogme", "logme_pos", "hscore", "hscore_reg", "transrate"
        }

    def test_deterministic_across_runs_and_threads(self):
        spec = SynthSpec(objects=60, dims=6, classes=3, seed=4)
        t1 = synth.scenario_sweep(spec, [0.5, 2.0], [0.0, 0.5])
        t2 = synth.scenario_sweep(spec, [0.5, 2.0], [0.0, 0.5])
        t4 = synth.scenario_sweep(spec, [0.5, 2.0], [0.0, 0.5], threads=4)
        assert t1 == t2 == t4

    def test_too_small_grid(self):
        with pytest.raises(InvalidData):
            synth.scenario_sweep(SynthSpec(), [1.0], [0.5])

    def test_map_proxy_in_unit_interval(self):
        table = synth.scenario_sweep(
            SynthSpec(objects=60, dims=6, classes=3, seed=2), [0.5, 4.0], [0.0, 1.0]
        )
        assert all(0.0 <= v <= 1.0 for v in table.map_values)

    def test_logme_tracks_separation_on_sep_only_grid(self):
        """Sweeping separation alone, the class-evidence series should rise."""
        seps = [0.25, 0.5, 1.0, 2.0, 4.0]
        agreeing = 0
        total = 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for seed in range(20):
                values = []
                for i, sep in enumerate(seps):
                    fm, _ = synth.generate(
                        SynthSpec(objects=200, dims=8, classes=4, class_sep=sep,
                                  box_noise=0.2, seed=seed * 101 + i)
                    )
                    from xferod.metrics import logme_class

                    values.append(logme_class(fm))
                agreeing += sum(b >= a for a, b in zip(values, values[1:]))
                total += len(seps) - 1
        assert agreeing / total >= 0.9
