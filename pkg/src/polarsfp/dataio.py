"""On-disk formats: PSFP rasters, sample directories, patches, and splits.

A sample directory holds ``stack.psfp`` (H x W x 4), ``normals.psfp``
(H x W x 3) and ``mask.png`` (8-bit grayscale, 255 = foreground), nested as
``<root>/<object_id>/<condition>/<view>/``. Rasters are little-endian f32,
row-major, channel-last.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    DataError,
    DimensionMismatch,
    HeaderParse,
    MissingFile,
    NonUnitNormals,
    OverlappingSets,
    SideTooLarge,
    TruncatedPayload,
    UnassignedObject,
)
from .polcore import CANONICAL_ANGLES, Mask, NormalMap, PolarizedStack, PolarizerAngle

MAGIC = b"PSFP1\n"

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def write_raster(array, path, dtype="f32"):
    """Write an array as a PSFP raster. 2-D input is stored with C=1."""
    arr = np.asarray(array)
    if not np.all(np.isfinite(arr)):
        raise DataError("raster payload must be finite")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionMismatch("raster arrays must be H x W or H x W x C")
    arr = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(f"dtype={dtype} dims={h} {w} {c}\n".encode("ascii"))
        f.write(arr.tobytes())


def _read_header(f, path):
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    return _parse_dims_line(f.readline(), path)


def _parse_dims_line(raw, path):
    line = raw.decode("ascii", errors="replace").rstrip("\n")
    try:
        dtype_part, dims_part = line.split(" ", 1)
        key, dtype = dtype_part.split("=")
        dkey, dims = dims_part.split("=")
        assert key == "dtype" and dkey == "dims"
        shape = tuple(int(d) for d in dims.split())
        assert len(shape) == 3 and all(d > 0 for d in shape)
        np_dtype = _DTYPES[dtype]
    except (ValueError, KeyError, AssertionError) as exc:
        raise HeaderParse(f"{path}: cannot parse header {line!r}") from exc
    return np_dtype, shape


def read_raster(path):
    """Read a PSFP raster back as an H x W x C array in its stored dtype."""
    with open(path, "rb") as f:
        np_dtype, shape = _read_header(f, path)
        n_bytes = int(np.prod(shape)) * np_dtype.itemsize
        payload = f.read(n_bytes)
        if len(payload) < n_bytes:
            raise TruncatedPayload(f"{path}: expected {n_bytes} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np_dtype).reshape(shape).copy()


def write_mask_png(mask: Mask, path):
    img = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def read_mask_png(path):
    img = np.asarray(Image.open(path).convert("L"))
    return Mask(img >= 128)


def write_normal_png(normals: NormalMap, path):
    """8-bit visualization: channel = round((n + 1) / 2 * 255)."""
    img = np.round((normals.vectors + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path)


CONDITIONS = ("indoor", "sunny", "cloudy")
VIEWS = ("front", "back", "left", "right")


@dataclass
class SampleRecord:
    """One captured/rendered sample: polarized stack, normals, mask, identity."""

    object_id: str
    condition: str
    view: str
    stack: PolarizedStack
    normals: NormalMap
    mask: Mask

    def __post_init__(self):
        shapes = {
            (self.stack.height, self.stack.width),
            (self.normals.height, self.normals.width),
            (self.mask.height, self.mask.width),
        }
        if len(shapes) != 1:
            raise DimensionMismatch("stack, normals and mask must share H x W")


def sample_dir(root, object_id, condition, view):
    return Path(root) / object_id / condition / view


def save_sample(record: SampleRecord, root):
    d = sample_dir(root, record.object_id, record.condition, record.view)
    d.mkdir(parents=True, exist_ok=True)
    write_raster(record.stack.intensities, d / "stack.psfp")
    write_raster(record.normals.vectors, d / "normals.psfp")
    write_mask_png(record.mask, d / "mask.png")
    return d


def load_sample(directory, object_id=None, condition=None, view=None) -> SampleRecord:
    """Load and validate one sample directory.

    Normals within 1e-3 of unit length on the mask are renormalized; anything
    further off is rejected.
    """
    d = Path(directory)
    for name in ("stack.psfp", "normals.psfp", "mask.png"):
        if not (d / name).exists():
            raise MissingFile(f"{d / name} is missing")
    stack_arr = read_raster(d / "stack.psfp").astype(np.float64)
    normal_arr = read_raster(d / "normals.psfp").astype(np.float64)
    mask = read_mask_png(d / "mask.png")
    if stack_arr.shape[2] != 4 or normal_arr.shape[2] != 3:
        raise DimensionMismatch("expected stack H x W x 4 and normals H x W x 3")
    if stack_arr.shape[:2] != normal_arr.shape[:2] or stack_arr.shape[:2] != mask.bits.shape:
        raise DimensionMismatch("sample arrays disagree on H x W")

    norms = np.linalg.norm(normal_arr, axis=2)
    fg = mask.bits
    if np.any(np.abs(norms[fg] - 1.0) > 1e-3):
        raise NonUnitNormals("foreground normals deviate from unit length by more than 1e-3")
    safe = np.where(norms > 0, norms, 1.0)
    normal_arr = normal_arr / safe[:, :, None]
    normal_arr[~fg] = 0.0

    parts = d.parts
    stack = PolarizedStack(
        angles=[PolarizerAngle(a) for a in CANONICAL_ANGLES],
        intensities=stack_arr,
    )
    return SampleRecord(
        object_id=object_id if object_id is not None else (parts[-3] if len(parts) >= 3 else d.name),
        condition=condition if condition is not None else (parts[-2] if len(parts) >= 2 else "indoor"),
        view=view if view is not None else parts[-1],
        stack=stack,
        normals=NormalMap(normal_arr, Mask(fg.copy())),
        mask=mask,
    )


def iter_sample_dirs(root):
    """Yield (object_id, condition, view, dir) for every sample under root."""
    root = Path(root)
    for obj in sorted(p for p in root.iterdir() if p.is_dir()):
        for cond in sorted(p for p in obj.iterdir() if p.is_dir()):
            for view in sorted(p for p in cond.iterdir() if p.is_dir()):
                if (view / "stack.psfp").exists():
                    yield obj.name, cond.name, view.name, view


@dataclass
class Patch:
    """A training unit: 64 x 64 crops of stack, normals and mask."""

    stack: np.ndarray    # side x side x 4
    normals: np.ndarray  # side x side x 3
    mask: np.ndarray     # side x side bool
    object_id: str = ""


def extract_patches(sample: SampleRecord, side=64, stride=64, min_fg=0.05):
    """Non-overlapping raster-scan tiling; drops edge remainders and patches
    with a foreground fraction below min_fg."""
    h, w = sample.stack.height, sample.stack.width
    if side > h or side > w:
        raise SideTooLarge(f"patch side {side} exceeds sample size {h}x{w}")
    out = []
    for r0 in range(0, h - side + 1, stride):
        for c0 in range(0, w - side + 1, stride):
            m = sample.mask.bits[r0:r0 + side, c0:c0 + side]
            if m.mean() < min_fg:
                continue
            out.append(Patch(
                stack=sample.stack.intensities[r0:r0 + side, c0:c0 + side].copy(),
                normals=sample.normals.vectors[r0:r0 + side, c0:c0 + side].copy(),
                mask=m.copy(),
                object_id=sample.object_id,
            ))
    return out


@dataclass
class SplitSpec:
    """Object-level train/test assignment plus a seeded validation fraction."""

    train_objects: set
    test_objects: set
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.train_objects = set(self.train_objects)
        self.test_objects = set(self.test_objects)
        if self.train_objects & self.test_objects:
            raise OverlappingSets(f"objects in both sets: {self.train_objects & self.test_objects}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


def make_splits(samples, spec: SplitSpec, side=64, stride=64, min_fg=0.05):
    """Patch-level (train, val, test) split; splitting is by object so no
    object ever leaks across train/test."""
    train_patches, test_patches = [], []
    for sample in samples:
        if sample.object_id in spec.train_objects:
            train_patches.extend(extract_patches(sample, side, stride, min_fg))
        elif sample.object_id in spec.test_objects:
            test_patches.extend(extract_patches(sample, side, stride, min_fg))
        else:
            raise UnassignedObject(f"object {sample.object_id!r} is in neither split set")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(train_patches))
    n_val = int(round(spec.val_fraction * len(train_patches)))
    val_idx = set(order[:n_val].tolist())
    val = [train_patches[i] for i in sorted(val_idx)]
    train = [train_patches[i] for i in range(len(train_patches)) if i not in val_idx]
    return train, val, test_patches


def write_split_file(spec: SplitSpec, path):
    with open(path, "w") as f:
        for obj in sorted(spec.train_objects):
            f.write(f"{obj}\ttrain\n")
        for obj in sorted(spec.test_objects):
            f.write(f"{obj}\ttest\n")


def read_split_file(path, val_fraction=0.2, seed=0) -> SplitSpec:
    train, test = set(), set()
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                obj, which = line.split("\t")
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: expected 'object<TAB>train|test'") from exc
            if which == "train":
                train.add(obj)
            elif which == "test":
                test.add(obj)
            else:
                raise DataError(f"{path}:{line_no}: unknown split {which!r}")
    return SplitSpec(train, test, val_fraction=val_fraction, seed=seed)


# --- checkpoints -----------------------------------------------------------
#
# A checkpoint reuses the PSFP record convention: the magic, then repeated
# (name line, header line, payload) records. Parameters are stored as f64 so
# saving and reloading is lossless; arrays of any rank <= 4 are flattened
# into the 3-axis dims field with trailing ones and the true shape recorded
# on the name line.

def save_checkpoint(path, params, config=None):
    """Write an ordered {name: array} mapping, plus an optional text sidecar
    with config key=value lines at <path>.cfg."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, arr in params.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            shape = arr.shape
            flat = arr.reshape(shape[0] if arr.ndim else 1, -1)
            f.write(f"name={name} shape={' '.join(str(s) for s in shape)}\n".encode("ascii"))
            f.write(f"dtype=f64 dims={flat.shape[0]} {flat.shape[1]} 1\n".encode("ascii"))
            f.write(arr.tobytes())
    if config is not None:
        with open(str(path) + ".cfg", "w") as f:
            for key, value in config.items():
                f.write(f"{key}={value}\n")


def load_checkpoint(path):
    """Read back (params, config). config is None when no sidecar exists."""
    params = {}
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        while True:
            name_line = f.readline()
            if not name_line:
                break
            try:
                text = name_line.decode("ascii").rstrip("\n")
                name_part, shape_part = text.split(" ", 1)
                name = name_part.split("=", 1)[1]
                shape = tuple(int(s) for s in shape_part.split("=", 1)[1].split())
            except (ValueError, IndexError) as exc:
                raise HeaderParse(f"{path}: bad record line {name_line!r}") from exc
            np_dtype, dims = _parse_dims_line(f.readline(), path)
            n_bytes = int(np.prod(dims)) * np_dtype.itemsize
            payload = f.read(n_bytes)
            if len(payload) < n_bytes:
                raise TruncatedPayload(f"{path}: record {name!r} truncated")
            params[name] = np.frombuffer(payload, dtype=np_dtype).reshape(shape).copy()
    config = None
    cfg_path = str(path) + ".cfg"
    if os.path.exists(cfg_path):
        config = {}
        with open(cfg_path) as f:
            for line in f:
                line = line.rstrip("\n")
                if line:
                    key, value = line.split("=", 1)
                    config[key] = value
    return params, config
