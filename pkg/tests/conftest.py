from __future__ import annotations

import json

import numpy as np
import pytest

from xferod import store


def build_container(
    root,
    *,
    images: list[dict],
    objects: list[dict],
    num_classes: int,
    scales: dict[str, float],
) -> str:
    """Write a full tensor container into `root` and return the manifest path.

    Each image dict: {"id", "width", "height", "levels": {key: C×H×W array},
    "fc": optional n_i×D array}.
    """
    root.mkdir(parents=True, exist_ok=True)
    manifest_images = []
    for image in images:
        level_paths = {}
        for key, tensor in image["levels"].items():
            rel = f"{image['id']}_{key}.npy"
            store.write_tensor(np.asarray(tensor, dtype=np.float32), root / rel)
            level_paths[key] = rel
        entry = {
            "id": image["id"],
            "width": image["width"],
            "height": image["height"],
            "levels": level_paths,
        }
        if image.get("fc") is not None:
            rel = f"{image['id']}_fc.npy"
            store.write_tensor(np.asarray(image["fc"], dtype=np.float32), root / rel)
            entry["fc"] = rel
        manifest_images.append(entry)
    doc = {
        "meta": {"num_classes": num_classes, "scales": scales},
        "images": manifest_images,
        "objects": objects,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return str(path)


@pytest.fixture
def tiny_container(tmp_path):
    """Two images, one 4-channel level at stride 2, three objects."""
    rng = np.random.default_rng(7)
    manifest_path = build_container(
        tmp_path / "container",
        images=[
            {
                "id": "a",
                "width": 16,
                "height": 16,
                "levels": {"2": rng.standard_normal((4, 8, 8))},
                "fc": rng.standard_normal((2, 6)),
            },
            {
                "id": "b",
                "width": 16,
                "height": 16,
                "levels": {"2": rng.standard_normal((4, 8, 8))},
                "fc": rng.standard_normal((1, 6)),
            },
        ],
        objects=[
            {"image_id": "a", "class_id": 0, "bbox": [2.0, 2.0, 6.0, 6.0]},
            {"image_id": "a", "class_id": 1, "bbox": [8.0, 4.0, 4.0, 8.0]},
            {"image_id": "b", "class_id": 1, "bbox": [1.0, 1.0, 10.0, 10.0]},
        ],
        num_classes=2,
        scales={"2": 2.0},
    )
    return manifest_path


def random_feature_matrix(seed: int, n: int = 60, dims: int = 5, classes: int = 3):
    """Feature matrix with mild class structure and linear-ish box targets."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, n).astype(np.int64)
    means = rng.standard_normal((classes, dims)) * 1.5
    features = means[labels] + rng.standard_normal((n, dims))
    w = rng.standard_normal((dims, 4)) / np.sqrt(dims)
    boxes = 1.0 / (1.0 + np.exp(-(features @ w + 0.3 * rng.standard_normal((n, 4)))))
    return store.FeatureMatrix(
        features=features.astype(np.float32),
        labels=labels,
        boxes=boxes.astype(np.float32),
        extractor_tag="test",
    )
