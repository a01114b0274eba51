"""Acceptance criteria, one test per criterion, stated tolerances pinned.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass line per
criterion. Each test prints its line only after every assertion held.
"""

from __future__ import annotations

import time
import warnings

import numpy as np
import pytest

from xferod import cli, evaluation, metrics, pooling, store, synth
from xferod.pooling import RoiAlignConfig, roi_align
from xferod.store import FeatureMatrix

from conftest import build_container
from oracles import (
    dense_roi_align,
    dense_roi_align_fast,
    evidence_grid_search,
    hscore_direct,
    hscore_regularized_direct,
    ledoit_wolf_direct,
    transrate_direct,
)


def _passed(num: int, detail: str) -> None:
    print(f"\n[ACCEPTANCE {num}] PASS — {detail}")


# ---------------------------------------------------------------------------
# 1. ROI-Align oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_1_roi_align_oracle_equivalence():
    start = time.time()
    rng = np.random.default_rng(20240501)

    # analytic cases, exact to 1e-6 at the default 2x2 sampling
    for box in [(0, 0, 12, 12), (1.0, 2.0, 7.5, 6.0), (8, 8, 4, 4)]:
        fmap = np.full((3, 12, 12), -1.75, dtype=np.float32)
        out = roi_align(fmap, box, 1.0, RoiAlignConfig(output_size=7, sampling_ratio=2))
        np.testing.assert_allclose(out, -1.75, atol=1e-6)
    ramp = np.tile(np.arange(12, dtype=np.float32), (1, 12, 1))
    out = roi_align(ramp, (3.5, 3.5, 6.0, 6.0), 1.0,
                    RoiAlignConfig(output_size=3, sampling_ratio=2))
    np.testing.assert_allclose(out[0, 0], [4.0, 6.0, 8.0], atol=1e-6)

    # 200 random instances against the independent dense oracle; the kernel
    # runs at the oracle's sampling density so both estimate the exact bin
    # integral and the comparison pins geometry, alignment, and padding
    worst = 0.0
    for _ in range(200):
        c = int(rng.integers(1, 9))
        h = int(rng.integers(2, 17))
        w = int(rng.integers(2, 17))
        s = float(rng.choice([1.0, 2.0, 4.0]))
        p = int(rng.choice([1, 2, 7]))
        fmap = rng.standard_normal((c, h, w)).astype(np.float32)
        img_w, img_h = w * s, h * s
        bx = float(rng.uniform(0, img_w - 1))
        by = float(rng.uniform(0, img_h - 1))
        bw = float(rng.uniform(0.5, img_w - bx))
        bh = float(rng.uniform(0.5, img_h - by))
        cfg = RoiAlignConfig(output_size=p, sampling_ratio=101)
        got = roi_align(fmap, (bx, by, bw, bh), s, cfg)
        want = dense_roi_align_fast(fmap, (bx, by, bw, bh), s, pool=p, samples_per_bin=101)
        worst = max(worst, float(np.max(np.abs(got - want))))
    assert worst <= 1e-3

    # the vectorized oracle itself is pinned to the naive loop oracle
    fmap = rng.standard_normal((2, 6, 6)).astype(np.float32)
    np.testing.assert_allclose(
        dense_roi_align_fast(fmap, (1, 1, 4, 4), 1.0, pool=2, samples_per_bin=31),
        dense_roi_align(fmap, (1, 1, 4, 4), 1.0, pool=2, samples_per_bin=31),
        atol=1e-12,
    )

    elapsed = time.time() - start
    assert elapsed < 30.0
    _passed(1, f"200 instances, max |Δ| = {worst:.2e} ≤ 1e-3; analytic cases exact "
               f"({elapsed:.1f}s < 30s, backend={pooling.active_backend()})")


# ---------------------------------------------------------------------------
# 2. LogME grid-search oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_2_logme_grid_oracle():
    start = time.time()
    rng = np.random.default_rng(20240502)

    y = rng.standard_normal(60)
    y /= np.sqrt(np.mean(y * y))
    sol = metrics.logme_single(np.zeros((60, 8)), y)
    target = -(1 + np.log(2 * np.pi)) / 2
    assert abs(sol.log_evidence_per_sample - target) <= 1e-6

    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(10, 201))
        dims = int(rng.integers(1, 17))
        features = rng.standard_normal((n, dims))
        w = rng.standard_normal(dims)
        sigma = float(rng.uniform(0.3, 2.0))
        y = features @ w + rng.normal(0.0, sigma, n)
        got = metrics.logme_single(features, y).log_evidence_per_sample
        want = evidence_grid_search(features, y)
        worst = max(worst, abs(got - want))
    assert worst <= 1e-3

    elapsed = time.time() - start
    assert elapsed < 120.0
    _passed(2, f"50 instances vs exhaustive (log α, log β) grid, max |Δ| = {worst:.2e} "
               f"≤ 1e-3; zero-feature case exact ({elapsed:.1f}s < 120s)")


# ---------------------------------------------------------------------------
# 3. Evidence lower bound
# ---------------------------------------------------------------------------

def test_criterion_3_evidence_bound():
    rng = np.random.default_rng(20240503)
    violations = 0
    worst_gap = np.inf
    for _ in range(100):
        n = int(rng.integers(8, 120))
        dims = int(rng.integers(1, 12))
        features = rng.standard_normal((n, dims))
        scale = float(rng.uniform(0.2, 3.0))
        y = features @ rng.standard_normal(dims) + rng.normal(0, scale, n)
        fm = FeatureMatrix(
            features.astype(np.float32),
            (np.arange(n, dtype=np.int64) % 2),
            np.tile(np.linspace(0.1, 0.9, n)[:, None], (1, 4)).astype(np.float32),
            "bound",
        )
        ev, mle = metrics.prop1_gap(fm, y)
        worst_gap = min(worst_gap, mle - ev)
        violations += ev > mle + 1e-9
    assert violations == 0
    _passed(3, f"0/100 bound violations; smallest (mle - evidence) gap = {worst_gap:.2e}")


# ---------------------------------------------------------------------------
# 4. Single-class null contract
# ---------------------------------------------------------------------------

def test_criterion_4_single_class_null_scores():
    rng = np.random.default_rng(20240504)
    for seed in range(5):
        n = int(rng.integers(10, 60))
        fm = FeatureMatrix(
            rng.standard_normal((n, 6)).astype(np.float32),
            np.zeros(n, dtype=np.int64),
            rng.uniform(0.05, 0.95, (n, 4)).astype(np.float32),
            "k1",
        )
        assert metrics.hscore(fm) == 0.0
        assert metrics.transrate(fm) == 0.0
        pos = metrics.logme_pos(fm)
        assert np.isfinite(pos)
    _passed(4, "K=1: hscore == 0 and transrate == 0 exactly, logme_pos finite")


# ---------------------------------------------------------------------------
# 5. Covariance scores vs dense-algebra oracles
# ---------------------------------------------------------------------------

def test_criterion_5_covariance_oracles():
    rng = np.random.default_rng(20240505)
    worst = 0.0
    for _ in range(50):
        dims = int(rng.integers(2, 7))
        n = int(rng.integers(dims * 5, 90))
        classes = int(rng.integers(2, 5))
        labels = rng.integers(0, classes, n).astype(np.int64)
        labels[:classes] = np.arange(classes)  # every class present
        centers = rng.standard_normal((classes, dims)) * rng.uniform(0.5, 2.0)
        features = (centers[labels] + rng.standard_normal((n, dims))).astype(np.float32)
        fm = FeatureMatrix(
            features, labels,
            rng.uniform(0.1, 0.9, (n, 4)).astype(np.float32), "cov",
        )
        eps = float(rng.choice([1e-2, 1e-3, 1e-4]))
        pairs = [
            (metrics.hscore(fm), hscore_direct(fm.features, labels)),
            (metrics.hscore_regularized(fm), hscore_regularized_direct(fm.features, labels)),
            (metrics.transrate(fm, metrics.TransRateConfig(eps=eps)),
             transrate_direct(fm.features, labels, eps)),
        ]
        for got, want in pairs:
            worst = max(worst, abs(got - want))
        centered = fm.features.astype(np.float64)
        centered -= centered.mean(axis=0)
        lam = metrics.ledoit_wolf(centered).lam
        lam_direct, _ = ledoit_wolf_direct(centered)
        assert 0.0 <= lam <= 1.0
        worst = max(worst, abs(lam - lam_direct))
    assert worst <= 1e-6

    assert metrics.ledoit_wolf(np.zeros((12, 4))).lam == 1.0
    row = rng.standard_normal(5)
    assert metrics.ledoit_wolf(np.tile(row, (9, 1)) - row).lam == 1.0
    _passed(5, f"50 instances: hscore/regularized/transrate/shrinkage vs dense oracles, "
               f"max |Δ| = {worst:.2e} ≤ 1e-6; λ ∈ [0,1], λ = 1 on degenerate data")


# ---------------------------------------------------------------------------
# 6. Correlation suite
# ---------------------------------------------------------------------------

def test_criterion_6_correlation_suite():
    rho, _ = evaluation.spearman([1.0, 2, 3], [3.0, 1, 2])
    assert rho == pytest.approx(-0.5, abs=1e-12)
    tau, _ = evaluation.kendall([1.0, 2, 3], [3.0, 1, 2])
    assert tau == pytest.approx(-1.0 / 3.0, abs=1e-12)

    rng = np.random.default_rng(20240506)
    x = rng.standard_normal(12)
    y = rng.standard_normal(12)
    r1, p1 = evaluation.pearson(x, y)
    r2, p2 = evaluation.pearson(2.5 * x + 4.0, y)
    assert abs(r1 - r2) <= 1e-12 and abs(p1 - p2) <= 1e-12
    for fn in (evaluation.spearman, evaluation.kendall):
        s1, q1 = fn(x, y)
        s2, q2 = fn(np.exp(3.0 * x), y)
        assert abs(s1 - s2) <= 1e-12 and abs(q1 - q2) <= 1e-12
        s3, _ = fn(x, -y)
        assert abs(s3 + s1) <= 1e-12

    for m in (5, 8, 15, 20):
        ps = [evaluation.pvalue_from_r(r, m) for r in np.linspace(0.02, 0.98, 25)]
        assert all(a > b for a, b in zip(ps, ps[1:]))
        ones = np.ones(m)
        svals = np.arange(1, m * (m - 1) // 2 + 1, 2, dtype=float)
        ks = [evaluation.pvalue_from_kendall_s(s, m, ones, ones) for s in svals]
        assert all(a > b for a, b in zip(ks, ks[1:]))
    _passed(6, "hand-derived τ = -1/3 and ρ = -0.5 exact; affine/monotone invariance "
               "≤ 1e-12; p monotone in |statistic|")


# ---------------------------------------------------------------------------
# 7. End-to-end desk-scale analogue
# ---------------------------------------------------------------------------

def test_criterion_7_end_to_end_sweep():
    start = time.time()
    seps = [0.5, 1.0, 2.0, 4.0]
    noises = [0.0, 0.3, 0.6, 1.0, 1.5]

    def sweep(seed: int) -> store.ScenarioTable:
        return synth.scenario_sweep(
            synth.SynthSpec(objects=600, dims=8, classes=4, seed=seed), seps, noises
        )

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fixed = sweep(0)
        assert fixed.m == 20
        rho = evaluation.evaluate_table(fixed)["tlogme"].spearman_rho
        assert rho >= 0.8

        regrets: dict[str, list[float]] = {}
        for seed in range(10):
            for entry in evaluation.rank_report(sweep(seed)):
                regrets.setdefault(entry.metric, []).append(entry.regret)
    aggregate = {m: float(np.mean(v)) for m, v in regrets.items()}
    median = float(np.median(list(aggregate.values())))
    assert aggregate["tlogme"] <= median

    elapsed = time.time() - start
    assert elapsed < 300.0
    _passed(7, f"fixed-seed sweep: ρ(tlogme, map_proxy) = {rho:.3f} ≥ 0.8; aggregate "
               f"regret {aggregate['tlogme']:.3f} ≤ median {median:.3f} over 10 seeds "
               f"({elapsed:.1f}s < 300s)")


# ---------------------------------------------------------------------------
# 8. CLI determinism
# ---------------------------------------------------------------------------

def test_criterion_8_cli_determinism(tmp_path):
    rng = np.random.default_rng(20240508)
    manifest = build_container(
        tmp_path / "container",
        images=[
            {
                "id": f"img{i}",
                "width": 32,
                "height": 32,
                "levels": {"2": rng.standard_normal((4, 8, 8)),
                           "3": rng.standard_normal((4, 4, 4))},
                "fc": rng.standard_normal((2, 5)),
            }
            for i in range(3)
        ],
        objects=[
            {"image_id": f"img{i}", "class_id": j % 2,
             "bbox": [2.0 + i, 3.0 + j, 10.0 + 2 * j, 12.0 + i]}
            for i in range(3) for j in range(2)
        ],
        num_classes=2,
        scales={"2": 4.0, "3": 8.0},
    )

    def run_twice(argv_fn, outputs):
        blobs = []
        for tag in ("one", "two"):
            assert cli.main(argv_fn(tag)) == 0
            blobs.append(tuple((tmp_path / p.format(tag)).read_bytes() for p in outputs))
        assert blobs[0] == blobs[1]

    run_twice(
        lambda t: ["extract", manifest, "--extractor", "ms", "--k0", "2",
                   "--out", str(tmp_path / f"fm_{t}")],
        ["fm_{}/features.npy", "fm_{}/meta.json"],
    )
    run_twice(
        lambda t: ["score", str(tmp_path / "fm_one"), "--scenario-id", "s1",
                   "--map", "0.5", "--out", str(tmp_path / f"scores_{t}.csv")],
        ["scores_{}.csv"],
    )
    run_twice(
        lambda t: ["synth", "--grid", "sep=0.5,1,2 noise=0,0.4", "--seed", "3",
                   "--objects", "80", "--dims", "6", "--classes", "3",
                   "--out", str(tmp_path / f"table_{t}.csv")],
        ["table_{}.csv"],
    )
    run_twice(
        lambda t: ["evaluate", str(tmp_path / "table_one.csv"),
                   "--out", str(tmp_path / f"report_{t}.csv")],
        ["report_{}.csv"],
    )
    _passed(8, "extract/score/synth/evaluate re-runs byte-identical")
