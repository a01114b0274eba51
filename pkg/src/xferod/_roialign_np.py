"""Pure numpy ROI-Align kernel (fallback when the compiled extension is absent).

Bilinear convention: a sample more than one cell outside the grid
(y < -1 or y > H, likewise for x) contributes zero; inside that band the
coordinate is clamped to [0, H-1] so border values extend half a cell.
The same convention is implemented by the compiled kernel.
"""

from __future__ import annotations

import numpy as np


def _axis_weights(coords: np.ndarray, size: int):
    """Per-axis bilinear indices/weights plus the zero-band mask."""
    inside = (coords >= -1.0) & (coords <= size)
    c = np.clip(coords, 0.0, None)
    lo = c.astype(np.int64)
    hi = lo + 1
    at_edge = lo >= size - 1
    lo = np.where(at_edge, size - 1, lo)
    hi = np.where(at_edge, size - 1, hi)
    c = np.where(at_edge, lo.astype(np.float64), c)
    w_hi = c - lo
    w_lo = 1.0 - w_hi
    return lo, hi, w_lo, w_hi, inside.astype(np.float64)


def pooled(
    fmap: np.ndarray,
    y0: float,
    x0: float,
    y1: float,
    x1: float,
    pool_h: int,
    pool_w: int,
    samples_y: int,
    samples_x: int,
) -> np.ndarray:
    """Average `samples_y*samples_x` bilinear samples per bin over a P×P grid.

    `fmap` is C×H×W float32; the box corners are feature-space coordinates
    (scale division and the half-pixel offset already applied by the caller).
    """
    C, H, W = fmap.shape
    bin_h = (y1 - y0) / pool_h
    bin_w = (x1 - x0) / pool_w

    ys = y0 + bin_h * (
        np.arange(pool_h, dtype=np.float64)[:, None]
        + (np.arange(samples_y, dtype=np.float64)[None, :] + 0.5) / samples_y
    ).reshape(-1)
    xs = x0 + bin_w * (
        np.arange(pool_w, dtype=np.float64)[:, None]
        + (np.arange(samples_x, dtype=np.float64)[None, :] + 0.5) / samples_x
    ).reshape(-1)

    ylo, yhi, wy_lo, wy_hi, my = _axis_weights(ys, H)
    xlo, xhi, wx_lo, wx_hi, mx = _axis_weights(xs, W)

    ylo_b, yhi_b = ylo[:, None], yhi[:, None]
    xlo_b, xhi_b = xlo[None, :], xhi[None, :]
    vals = (
        (wy_lo[:, None] * wx_lo[None, :]) * fmap[:, ylo_b, xlo_b]
        + (wy_lo[:, None] * wx_hi[None, :]) * fmap[:, ylo_b, xhi_b]
        + (wy_hi[:, None] * wx_lo[None, :]) * fmap[:, yhi_b, xlo_b]
        + (wy_hi[:, None] * wx_hi[None, :]) * fmap[:, yhi_b, xhi_b]
    )
    vals *= my[:, None] * mx[None, :]

    out = vals.reshape(C, pool_h, samples_y, pool_w, samples_x).mean(axis=(2, 4))
    return out.astype(np.float32)
