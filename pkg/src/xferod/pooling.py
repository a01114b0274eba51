"""Object-level feature extraction from exported detector feature maps.

Four schemes: single-level ROI-Align, multi-scale ROI-Align with size-based
level assignment, whole-image global average pooling, and pass-through of
precomputed dense-layer (fc) features. All of them produce a FeatureMatrix
whose rows follow manifest object order, minus objects whose box clips to
zero area (dropped with a warning).

The bilinear sampling kernel is compiled (Cython) when available and falls
back to a vectorized numpy implementation otherwise; see `active_backend`.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _roialign_np
from .errors import InvalidData, MissingFile
from .store import (
    DatasetManifest,
    FeatureMatrix,
    ImageEntry,
    ObjectRecord,
    clip_box,
    load_feature_maps,
    normalized_box,
)

if os.environ.get("XFEROD_BACKEND") == "numpy":
    _roialign_cy = None
    _KERNEL = _roialign_np
    _BACKEND = "numpy"
else:
    try:
        from . import _roialign_cy

        _KERNEL = _roialign_cy
        _BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _roialign_cy = None
        _KERNEL = _roialign_np
        _BACKEND = "numpy"


def active_backend() -> str:
    """Name of the sampling kernel in use: 'cython' or 'numpy'."""
    return _BACKEND


def available_backends() -> dict[str, object]:
    backends: dict[str, object] = {"numpy": _roialign_np}
    if _roialign_cy is not None:
        backends["cython"] = _roialign_cy
    return backends


@dataclass(frozen=True)
class RoiAlignConfig:
    """Pooling grid geometry.

    sampling_ratio 0 means adaptive: ceil(bin size) samples per bin and axis.
    aligned=True applies the half-pixel (-0.5) offset after scale division.
    """

    output_size: int = 7
    sampling_ratio: int = 0
    aligned: bool = True
    spatial_reduce: str = "mean"

    def __post_init__(self) -> None:
        if self.output_size < 1:
            raise InvalidData("output_size must be >= 1")
        if self.sampling_ratio < 0:
            raise InvalidData("sampling_ratio must be >= 0")
        if self.spatial_reduce != "mean":
            raise InvalidData(f"unknown spatial_reduce {self.spatial_reduce!r}")


# Reference detector defaults: 7×7 grid, 2×2 samples per bin, aligned.
DEFAULT_ROI_CONFIG = RoiAlignConfig(output_size=7, sampling_ratio=2, aligned=True)


@dataclass(frozen=True)
class MultiScaleConfig:
    """Size-based pyramid level assignment k = floor(k0 + log2(sqrt(w*h)/s0)).

    k_min/k_max default to None and are filled in from the numeric level
    keys available in the manifest.
    """

    k0: int = 4
    s0: float = 224.0
    k_min: int | None = None
    k_max: int | None = None

    def __post_init__(self) -> None:
        if self.s0 <= 0:
            raise InvalidData("s0 must be > 0")
        if self.k_min is not None and self.k_max is not None:
            if not self.k_min <= self.k0 <= self.k_max:
                raise InvalidData(
                    f"need k_min <= k0 <= k_max, got [{self.k_min}, {self.k_max}] vs k0={self.k0}"
                )


def roi_align(
    fmap: np.ndarray,
    box: tuple[float, float, float, float],
    scale: float,
    cfg: RoiAlignConfig = DEFAULT_ROI_CONFIG,
) -> np.ndarray:
    """Pool one absolute-pixel xywh box from a C×H×W map into C×P×P.

    The box is mapped to feature coordinates by dividing by `scale`
    (minus 0.5 when aligned); each bin averages bilinear samples taken at
    regular offsets.
    """
    fmap = np.asarray(fmap)
    if fmap.ndim != 3 or fmap.shape[1] < 1 or fmap.shape[2] < 1:
        raise InvalidData(f"feature map must be C×H×W with H, W >= 1, got {fmap.shape}")
    if scale <= 0:
        raise InvalidData("scale must be > 0")
    if box[2] <= 0 or box[3] <= 0:
        raise InvalidData("box must have positive width and height")

    offset = 0.5 if cfg.aligned else 0.0
    x0 = box[0] / scale - offset
    y0 = box[1] / scale - offset
    x1 = (box[0] + box[2]) / scale - offset
    y1 = (box[1] + box[3]) / scale - offset
    roi_h = y1 - y0
    roi_w = x1 - x0
    if not cfg.aligned:
        roi_h = max(roi_h, 1.0)
        roi_w = max(roi_w, 1.0)
        y1 = y0 + roi_h
        x1 = x0 + roi_w

    p = cfg.output_size
    if cfg.sampling_ratio > 0:
        samples_y = samples_x = cfg.sampling_ratio
    else:
        samples_y = max(1, math.ceil(roi_h / p))
        samples_x = max(1, math.ceil(roi_w / p))

    fmap32 = np.ascontiguousarray(fmap, dtype=np.float32)
    return _KERNEL.pooled(fmap32, y0, x0, y1, x1, p, p, samples_y, samples_x)


def fpn_level_for_box(box_w: float, box_h: float, cfg: MultiScaleConfig) -> int:
    """Pyramid level for an object of the given absolute-pixel size, clamped."""
    if box_w <= 0 or box_h <= 0:
        raise InvalidData("box dims must be > 0")
    if cfg.k_min is None or cfg.k_max is None:
        raise InvalidData("k_min/k_max unresolved; derive them from the manifest first")
    k = math.floor(cfg.k0 + math.log2(math.sqrt(box_w * box_h) / cfg.s0))
    return min(max(k, cfg.k_min), cfg.k_max)


# ---------------------------------------------------------------------------
# Extractors
# ---------------------------------------------------------------------------

def _surviving_objects(
    manifest: DatasetManifest,
) -> list[tuple[int, ObjectRecord, ImageEntry, tuple[float, float, float, float]]]:
    """Manifest objects with their clipped boxes; zero-area clips are dropped.

    The first tuple element is the object's index in manifest order, so
    extractors that need per-image annotation positions (fc) can recover them.
    """
    rows = []
    for idx, obj in enumerate(manifest.objects):
        image = manifest.image(obj.image_id)
        clipped = clip_box(obj.bbox, image.width, image.height)
        if clipped is None:
            warnings.warn(
                f"object on {obj.image_id!r} with box {obj.bbox} clips to zero area; excluded"
            )
            continue
        rows.append((idx, obj, image, clipped))
    return rows


def _assemble(
    features: list[np.ndarray],
    survivors: list[tuple[int, ObjectRecord, ImageEntry, tuple[float, float, float, float]]],
    tag: str,
) -> FeatureMatrix:
    boxes = np.asarray(
        [normalized_box(obj.bbox, im.width, im.height) for _, obj, im, _ in survivors],
        dtype=np.float32,
    )
    labels = np.asarray([obj.class_id for _, obj, _, _ in survivors], dtype=np.int64)
    return FeatureMatrix(
        features=np.asarray(features, dtype=np.float32),
        labels=labels,
        boxes=boxes,
        extractor_tag=tag,
    )


def extract_roi(
    level_key: str,
    manifest: DatasetManifest,
    cfg: RoiAlignConfig = DEFAULT_ROI_CONFIG,
) -> FeatureMatrix:
    """ROI-Align each object on one level, then mean over the P×P grid (D = C)."""
    survivors = _surviving_objects(manifest)
    if not survivors:
        raise InvalidData("no surviving objects to extract")
    maps: dict[str, tuple[np.ndarray, float]] = {}
    features = []
    for _, obj, image, clipped in survivors:
        if image.image_id not in maps:
            if level_key not in image.levels:
                raise MissingFile(f"image {image.image_id!r} lacks level {level_key!r}")
            fms = load_feature_maps(manifest, image.image_id)
            maps[image.image_id] = fms.levels[level_key]
        fmap, scale = maps[image.image_id]
        pooled = roi_align(fmap, clipped, scale, cfg)
        features.append(pooled.mean(axis=(1, 2)))
    return _assemble(features, survivors, f"roi:{level_key}")


def extract_global(level_key: str, manifest: DatasetManifest) -> FeatureMatrix:
    """Whole-image average pooling: every object of an image gets the same row."""
    survivors = _surviving_objects(manifest)
    if not survivors:
        raise InvalidData("no surviving objects to extract")
    pooled: dict[str, np.ndarray] = {}
    features = []
    for _, obj, image, _box in survivors:
        if image.image_id not in pooled:
            if level_key not in image.levels:
                raise MissingFile(f"image {image.image_id!r} lacks level {level_key!r}")
            fms = load_feature_maps(manifest, image.image_id)
            fmap, _scale = fms.levels[level_key]
            pooled[image.image_id] = fmap.mean(axis=(1, 2))
        features.append(pooled[image.image_id])
    return _assemble(features, survivors, f"global:{level_key}")


def resolve_level_range(manifest: DatasetManifest, cfg: MultiScaleConfig) -> MultiScaleConfig:
    """Fill k_min/k_max from the manifest's integer level keys."""
    if cfg.k_min is not None and cfg.k_max is not None:
        return cfg
    numeric = []
    for key in manifest.scales:
        try:
            numeric.append(int(key))
        except ValueError:
            continue
    if not numeric:
        raise InvalidData("multi-scale extraction needs integer level keys in the manifest")
    return replace(
        cfg,
        k_min=cfg.k_min if cfg.k_min is not None else min(numeric),
        k_max=cfg.k_max if cfg.k_max is not None else max(numeric),
    )


def extract_multiscale(
    manifest: DatasetManifest,
    ms_cfg: MultiScaleConfig = MultiScaleConfig(),
    roi_cfg: RoiAlignConfig = DEFAULT_ROI_CONFIG,
) -> FeatureMatrix:
    """ROI-Align each object at the pyramid level chosen by its size."""
    ms_cfg = resolve_level_range(manifest, ms_cfg)
    survivors = _surviving_objects(manifest)
    if not survivors:
        raise InvalidData("no surviving objects to extract")
    maps: dict[tuple[str, str], tuple[np.ndarray, float]] = {}
    loaded: dict[str, object] = {}
    channels: int | None = None
    features = []
    for _, obj, image, clipped in survivors:
        k = fpn_level_for_box(clipped[2], clipped[3], ms_cfg)
        key = str(k)
        if (image.image_id, key) not in maps:
            if key not in image.levels:
                raise MissingFile(f"image {image.image_id!r} lacks level {key!r}")
            if image.image_id not in loaded:
                loaded[image.image_id] = load_feature_maps(manifest, image.image_id)
            maps[(image.image_id, key)] = loaded[image.image_id].levels[key]
        fmap, scale = maps[(image.image_id, key)]
        if channels is None:
            channels = fmap.shape[0]
        elif fmap.shape[0] != channels:
            raise InvalidData(
                f"level {key!r} has {fmap.shape[0]} channels, expected {channels}"
            )
        pooled = roi_align(fmap, clipped, scale, roi_cfg)
        features.append(pooled.mean(axis=(1, 2)))
    return _assemble(features, survivors, "ms")


def extract_fc(manifest: DatasetManifest) -> FeatureMatrix:
    """Pass through precomputed per-object dense-layer rows, in manifest order."""
    survivors = _surviving_objects(manifest)
    if not survivors:
        raise InvalidData("no surviving objects to extract")
    fc_rows: dict[str, np.ndarray] = {}
    # position of each object within its image's annotation order (pre-clip),
    # because fc rows are aligned with all annotated objects, survivors or not
    position: dict[int, int] = {}
    counters: dict[str, int] = {}
    for idx, obj in enumerate(manifest.objects):
        position[idx] = counters.get(obj.image_id, 0)
        counters[obj.image_id] = position[idx] + 1

    features = []
    for idx, obj, image, _box in survivors:
        if image.image_id not in fc_rows:
            if image.fc is None:
                raise InvalidData(f"image {image.image_id!r} has no fc features")
            fms = load_feature_maps(manifest, image.image_id)
            fc_rows[image.image_id] = fms.fc_features
        features.append(fc_rows[image.image_id][position[idx]])
    return _assemble(features, survivors, "fc:-1")
