"""Benchmark the compiled ROI-Align kernel against the numpy fallback.

Usage:
    python benchmarks/bench_roi_align.py [--repeats 5] [--out bench.csv]

Times the raw kernels on detector-realistic workloads (one forward batch of
boxes per configuration) and prints a table plus an optional CSV.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from xferod import _roialign_np

try:
    from xferod import _roialign_cy
except ImportError:
    _roialign_cy = None

CASES = [
    # (name, channels, map_h, map_w, boxes, pool, sampling)
    ("fpn_p2_small_boxes", 256, 200, 200, 64, 7, 2),
    ("fpn_p4_medium_boxes", 256, 50, 50, 64, 7, 2),
    ("fpn_p5_large_boxes", 256, 25, 25, 32, 7, 2),
    ("toy_dense_sampling", 8, 16, 16, 16, 7, 101),
]


def _workload(rng, channels, map_h, map_w, boxes):
    fmap = rng.standard_normal((channels, map_h, map_w)).astype(np.float32)
    out = []
    for _ in range(boxes):
        y0 = rng.uniform(-1, map_h - 2)
        x0 = rng.uniform(-1, map_w - 2)
        y1 = y0 + rng.uniform(1.0, map_h / 2)
        x1 = x0 + rng.uniform(1.0, map_w / 2)
        out.append((y0, x0, y1, x1))
    return fmap, out


def _time_kernel(kernel, fmap, boxes, pool, sampling, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for y0, x0, y1, x1 in boxes:
            kernel.pooled(fmap, y0, x0, y1, x1, pool, pool, sampling, sampling)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="optional CSV output path")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rows = []
    header = f"{'case':<24}{'boxes':>7}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, channels, map_h, map_w, boxes, pool, sampling in CASES:
        fmap, box_list = _workload(rng, channels, map_h, map_w, boxes)
        t_np = _time_kernel(_roialign_np, fmap, box_list, pool, sampling, args.repeats)
        if _roialign_cy is not None:
            t_cy = _time_kernel(_roialign_cy, fmap, box_list, pool, sampling, args.repeats)
            # sanity: identical outputs on the first box
            y0, x0, y1, x1 = box_list[0]
            a = _roialign_np.pooled(fmap, y0, x0, y1, x1, pool, pool, sampling, sampling)
            b = _roialign_cy.pooled(fmap, y0, x0, y1, x1, pool, pool, sampling, sampling)
            np.testing.assert_allclose(a, b, atol=1e-5)
            speedup = f"{t_np / t_cy:8.2f}x"
            cy_ms = f"{t_cy * 1e3:12.2f}"
        else:
            speedup, cy_ms = "     n/a", "         n/a"
            t_cy = float("nan")
        print(f"{name:<24}{boxes:>7}{t_np * 1e3:>12.2f}{cy_ms:>13}{speedup:>9}")
        rows.append((name, boxes, t_np * 1e3, t_cy * 1e3))

    if _roialign_cy is None:
        print("\ncompiled kernel not built; run `python setup.py build_ext --inplace`")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("case,boxes,numpy_ms,cython_ms\n")
            for name, boxes, t_np, t_cy in rows:
                fh.write(f"{name},{boxes},{t_np!r},{t_cy!r}\n")
        print(f"\nwrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
