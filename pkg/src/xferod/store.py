"""On-disk container for feature maps, annotations, feature matrices and scenario tables.

Everything is bit-exact and language-neutral: tensors are NPY v1.0 files
(float32, little-endian, C-order), the dataset manifest is a JSON document
with paths relative to its own directory, and scenario tables are plain
UTF-8 CSV with LF line endings.
"""

from __future__ import annotations

import ast
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DanglingReference,
    DuplicateKey,
    FormatError,
    InvalidData,
    IoError,
    MissingFile,
    ParseError,
    RangeError,
    SchemaError,
    UnsupportedTensor,
)

_NPY_MAGIC = b"\x93NUMPY"

# Canonical column order for scenario CSVs; unknown metrics sort after these.
METRIC_ORDER = ("logme", "tlogme", "logme_pos", "hscore", "hscore_reg", "transrate")


# ---------------------------------------------------------------------------
# NPY tensor files
# ---------------------------------------------------------------------------

def write_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """Write a 2-D or 3-D finite float tensor as NPY v1.0 (float32 LE, C-order).

    The header is space-padded so that its total length (magic + version +
    length field + dict) is a multiple of 16, per the v1.0 format.
    """
    arr = np.asarray(tensor)
    if arr.ndim not in (2, 3):
        raise InvalidData(f"tensor must have 2 or 3 dims, got {arr.ndim}")
    if arr.size == 0:
        raise InvalidData(f"tensor has an empty dimension: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidData("tensor contains NaN or Inf")
    arr = np.ascontiguousarray(arr, dtype="<f4")

    header_dict = (
        "{'descr': '<f4', 'fortran_order': False, "
        f"'shape': {arr.shape!r}, }}"
    )
    # total = 6 (magic) + 2 (version) + 2 (len) + header; pad to 16-byte multiple
    unpadded = 10 + len(header_dict) + 1
    pad = (16 - unpadded % 16) % 16
    header = header_dict.encode("latin1") + b" " * pad + b"\n"
    try:
        with open(path, "wb") as fh:
            fh.write(_NPY_MAGIC)
            fh.write(bytes((1, 0)))
            fh.write(struct.pack("<H", len(header)))
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise IoError(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an NPY v1.0 float32 LE C-order tensor with 2 or 3 dims.

    Bytes are reinterpreted exactly; no value transformation happens.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read tensor from {path}: {exc}") from exc

    if len(raw) < 10 or raw[:6] != _NPY_MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: unsupported NPY version {major}.{minor}")
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable header") from exc
    if not isinstance(header, dict) or set(header) != {
        "descr",
        "fortran_order",
        "shape",
    }:
        raise FormatError(f"{path}: malformed header dict")

    if header["descr"] != "<f4":
        raise UnsupportedTensor(f"{path}: dtype {header['descr']!r}, expected '<f4'")
    if header["fortran_order"] is not False:
        raise UnsupportedTensor(f"{path}: Fortran order not supported")
    shape = header["shape"]
    if not isinstance(shape, tuple) or len(shape) not in (2, 3):
        raise UnsupportedTensor(f"{path}: expected 2 or 3 dims, got shape {shape}")
    if any(not isinstance(d, int) or d < 1 for d in shape):
        raise UnsupportedTensor(f"{path}: non-positive dimension in shape {shape}")

    count = int(np.prod(shape))
    payload = raw[header_end:]
    if len(payload) != 4 * count:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {4 * count}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise InvalidData(f"{path}: tensor contains NaN or Inf")
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectRecord:
    """One annotated object: owning image, class id, absolute-pixel xywh box."""

    image_id: str
    class_id: int
    bbox: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise SchemaError(f"object on {self.image_id!r}: box width/height must be > 0")
        if self.class_id < 0:
            raise SchemaError(f"object on {self.image_id!r}: negative class_id")


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    width: int
    height: int
    levels: dict[str, Path]  # level key -> tensor path (absolute)
    fc: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    images: list[ImageEntry]
    objects: list[ObjectRecord]
    num_classes: int
    scales: dict[str, float]  # level key -> scale ratio s

    def image(self, image_id: str) -> ImageEntry:
        return self._by_id[image_id]

    def objects_of(self, image_id: str) -> list[ObjectRecord]:
        return [o for o in self.objects if o.image_id == image_id]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {im.image_id: im for im in self.images})


@dataclass(frozen=True)
class FeatureMapSet:
    """All exported feature maps of one image, keyed by level."""

    image_id: str
    levels: dict[str, tuple[np.ndarray, float]]  # key -> (C×H×W tensor, scale s)
    fc_features: np.ndarray | None = None


@dataclass(frozen=True)
class FeatureMatrix:
    """n×D object-level features with aligned labels and normalized boxes."""

    features: np.ndarray  # n×D float32
    labels: np.ndarray  # n int64
    boxes: np.ndarray  # n×4 float32, normalized xywh in [0,1]
    extractor_tag: str

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if n < 1 or self.features.ndim != 2 or self.features.shape[1] < 1:
            raise InvalidData("feature matrix must be n×D with n, D >= 1")
        if self.labels.shape != (n,) or self.boxes.shape != (n, 4):
            raise InvalidData("labels/boxes not aligned with feature rows")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.boxes))):
            raise InvalidData("feature matrix contains NaN or Inf")


@dataclass(frozen=True)
class ScenarioTable:
    """M transfer scenarios with ground-truth map values and metric scores."""

    scenario_ids: list[str]
    map_values: list[float]
    scores: dict[str, list[float | None]] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.scenario_ids)

    @property
    def metric_names(self) -> list[str]:
        return list(self.scores)


# ---------------------------------------------------------------------------
# Box geometry
# ---------------------------------------------------------------------------

def clip_box(
    bbox: tuple[float, float, float, float], width: float, height: float
) -> tuple[float, float, float, float] | None:
    """Clip an absolute-pixel xywh box to the image rectangle.

    Returns None when the clipped box has zero area (fully outside).
    """
    x0 = min(max(bbox[0], 0.0), width)
    y0 = min(max(bbox[1], 0.0), height)
    x1 = min(max(bbox[0] + bbox[2], 0.0), width)
    y1 = min(max(bbox[1] + bbox[3], 0.0), height)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def normalized_box(
    bbox: tuple[float, float, float, float], width: float, height: float
) -> tuple[float, float, float, float] | None:
    """Clip, then normalize to image-relative coordinates in [0,1]^4."""
    clipped = clip_box(bbox, width, height)
    if clipped is None:
        return None
    return (
        clipped[0] / width,
        clipped[1] / height,
        clipped[2] / width,
        clipped[3] / height,
    )


# ---------------------------------------------------------------------------
# Manifest JSON
# ---------------------------------------------------------------------------

def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and eagerly validate a dataset manifest.

    Schema: {"meta": {"num_classes": int, "scales": {level: float}},
             "images": [{"id", "width", "height", "levels": {level: relpath}, "fc"?}],
             "objects": [{"image_id", "class_id", "bbox": [x,y,w,h]}]}
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc

    root = path.parent
    try:
        meta = doc["meta"]
        num_classes = meta["num_classes"]
        scales = {str(k): float(v) for k, v in meta["scales"].items()}
        raw_images = doc["images"]
        raw_objects = doc["objects"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"{path}: missing or malformed section: {exc}") from exc

    if not isinstance(num_classes, int) or num_classes < 1:
        raise SchemaError(f"{path}: num_classes must be >= 1, got {num_classes!r}")
    for key, s in scales.items():
        if not (s > 0):
            raise SchemaError(f"{path}: scale for level {key!r} must be > 0")

    images: list[ImageEntry] = []
    seen: set[str] = set()
    for entry in raw_images:
        image_id = str(entry["id"])
        if image_id in seen:
            raise SchemaError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        width, height = entry["width"], entry["height"]
        if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
            raise SchemaError(f"{path}: image {image_id!r} has non-positive dims")
        levels: dict[str, Path] = {}
        for key, rel in entry["levels"].items():
            key = str(key)
            if key not in scales:
                raise SchemaError(f"{path}: image {image_id!r} level {key!r} has no scale")
            level_path = root / rel
            if not level_path.is_file():
                raise MissingFile(f"{path}: missing level file {level_path}")
            levels[key] = level_path
        fc = None
        if entry.get("fc") is not None:
            fc = root / entry["fc"]
            if not fc.is_file():
                raise MissingFile(f"{path}: missing fc file {fc}")
        images.append(ImageEntry(image_id, width, height, levels, fc))

    by_id = {im.image_id for im in images}
    objects: list[ObjectRecord] = []
    for entry in raw_objects:
        image_id = str(entry["image_id"])
        if image_id not in by_id:
            raise DanglingReference(f"{path}: object references unknown image {image_id!r}")
        class_id = entry["class_id"]
        if not isinstance(class_id, int) or not 0 <= class_id < num_classes:
            raise SchemaError(
                f"{path}: class_id {class_id!r} outside [0, {num_classes})"
            )
        bbox = entry["bbox"]
        if len(bbox) != 4:
            raise SchemaError(f"{path}: bbox must have 4 entries, got {bbox!r}")
        objects.append(ObjectRecord(image_id, class_id, tuple(float(v) for v in bbox)))

    return DatasetManifest(images, objects, num_classes, scales)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest back to JSON with paths relative to the target directory."""
    path = Path(path)
    root = path.parent

    def rel(p: Path) -> str:
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return p.as_posix()

    doc = {
        "meta": {"num_classes": manifest.num_classes, "scales": manifest.scales},
        "images": [
            {
                "id": im.image_id,
                "width": im.width,
                "height": im.height,
                "levels": {k: rel(p) for k, p in im.levels.items()},
                **({"fc": rel(im.fc)} if im.fc is not None else {}),
            }
            for im in manifest.images
        ],
        "objects": [
            {"image_id": o.image_id, "class_id": o.class_id, "bbox": list(o.bbox)}
            for o in manifest.objects
        ],
    }
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


def load_feature_maps(manifest: DatasetManifest, image_id: str) -> FeatureMapSet:
    """Materialize all level tensors (and fc rows, if any) for one image."""
    entry = manifest.image(image_id)
    levels: dict[str, tuple[np.ndarray, float]] = {}
    for key, tensor_path in entry.levels.items():
        tensor = read_tensor(tensor_path)
        if tensor.ndim != 3:
            raise UnsupportedTensor(f"{tensor_path}: level tensor must be C×H×W")
        levels[key] = (tensor, manifest.scales[key])
    fc = None
    if entry.fc is not None:
        fc = read_tensor(entry.fc)
        if fc.ndim != 2:
            raise UnsupportedTensor(f"{entry.fc}: fc tensor must be n×D")
        n_objects = len(manifest.objects_of(image_id))
        if fc.shape[0] != n_objects:
            raise InvalidData(
                f"{entry.fc}: {fc.shape[0]} fc rows for {n_objects} objects on {image_id!r}"
            )
    return FeatureMapSet(image_id, levels, fc)


# ---------------------------------------------------------------------------
# Feature matrix container (features.npy + meta.json)
# ---------------------------------------------------------------------------

def save_feature_matrix(fm: FeatureMatrix, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    write_tensor(fm.features, out_dir / "features.npy")
    meta = {
        "extractor": fm.extractor_tag,
        "labels": [int(v) for v in fm.labels],
        "boxes": [[float(v) for v in row] for row in fm.boxes],
    }
    try:
        (out_dir / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {out_dir / 'meta.json'}: {exc}") from exc


def load_feature_matrix(in_dir: str | Path) -> FeatureMatrix:
    in_dir = Path(in_dir)
    features = read_tensor(in_dir / "features.npy")
    if features.ndim != 2:
        raise UnsupportedTensor(f"{in_dir}: features.npy must be 2-D")
    try:
        meta = json.loads((in_dir / "meta.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {in_dir / 'meta.json'}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{in_dir}: meta.json is not valid JSON") from exc
    return FeatureMatrix(
        features=features,
        labels=np.asarray(meta["labels"], dtype=np.int64),
        boxes=np.asarray(meta["boxes"], dtype=np.float32),
        extractor_tag=str(meta["extractor"]),
    )


# ---------------------------------------------------------------------------
# Scenario CSV
# ---------------------------------------------------------------------------

def load_scenarios(path: str | Path) -> ScenarioTable:
    """Parse a scenario CSV (`scenario_id,map,<metric columns...>`).

    Empty cells are null-score markers; any other non-numeric cell is a
    ParseError. A header-only file yields an empty (M=0) table.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read scenarios {path}: {exc}") from exc

    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:2] != ["scenario_id", "map"]:
        raise ParseError(f"{path}: header must start with 'scenario_id,map'")
    metrics = header[2:]
    if len(set(metrics)) != len(metrics):
        raise DuplicateKey(f"{path}: duplicate metric column")

    ids: list[str] = []
    maps: list[float] = []
    scores: dict[str, list[float | None]] = {m: [] for m in metrics}
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells")
        sid = cells[0]
        if sid in seen:
            raise DuplicateKey(f"{path}:{lineno}: duplicate scenario_id {sid!r}")
        seen.add(sid)
        try:
            map_value = float(cells[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric map cell {cells[1]!r}") from exc
        if not 0.0 <= map_value <= 1.0:
            raise RangeError(f"{path}:{lineno}: map {map_value} outside [0, 1]")
        ids.append(sid)
        maps.append(map_value)
        for metric, cell in zip(metrics, cells[2:]):
            if cell == "":
                scores[metric].append(None)
            else:
                try:
                    scores[metric].append(float(cell))
                except ValueError as exc:
                    raise ParseError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in {metric!r}"
                    ) from exc
    return ScenarioTable(ids, maps, scores)


def save_scenarios(table: ScenarioTable, path: str | Path) -> None:
    """Write a scenario table as UTF-8 CSV with LF endings and repr floats."""
    metrics = sorted(
        table.metric_names,
        key=lambda m: (METRIC_ORDER.index(m) if m in METRIC_ORDER else len(METRIC_ORDER), m),
    )
    rows = ["scenario_id,map," + ",".join(metrics) if metrics else "scenario_id,map"]
    for i, sid in enumerate(table.scenario_ids):
        cells = [sid, repr(float(table.map_values[i]))]
        for metric in metrics:
            value = table.scores[metric][i]
            cells.append("" if value is None else repr(float(value)))
        rows.append(",".join(cells))
    try:
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write scenarios {path}: {exc}") from exc
