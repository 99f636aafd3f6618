"""Dataset ingestion and generation: IDX parsing, subsetting, synthetic tasks."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Inputs in [-1, 1], integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2 or labels.ndim != 1 or len(inputs) != len(labels):
            raise ValueError("inputs must be (n, d) and labels (n,)")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("labels out of range")
        if len(inputs) and np.max(np.abs(inputs)) > 1.0 + 1e-12:
            raise ValueError("inputs must lie in [-1, 1]")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)


def normalize_pixels(raw: np.ndarray) -> np.ndarray:
    """Map 8-bit pixel values to [-1, 1]: x -> 2 (x / 255) - 1.

    Refuses input that cannot be raw pixel data (values outside [0, 255],
    or floating data already at unit scale), so the map is never silently
    applied twice.
    """
    raw = np.asarray(raw)
    if raw.size and (raw.min() < 0 or raw.max() > 255):
        raise ValueError("pixel values outside [0, 255]; data looks already normalized")
    if np.issubdtype(raw.dtype, np.floating) and raw.size and raw.max() <= 1.0:
        raise ValueError("floating data at unit scale; refusing to re-normalize")
    return 2.0 * (raw.astype(np.float64) / 255.0) - 1.0


def _read_u32s(data: bytes, offset: int, count: int, path) -> tuple:
    end = offset + 4 * count
    if end > len(data):
        raise TruncatedPayloadError(f"{path}: truncated header")
    return struct.unpack_from(f">{count}I", data, offset)


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair (big-endian, magic-checked)."""
    img_data = Path(images_path).read_bytes()
    lbl_data = Path(labels_path).read_bytes()

    (img_magic,) = _read_u32s(img_data, 0, 1, images_path)
    if img_magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{images_path}: magic {img_magic:#010x}, "
                            f"expected {IDX_IMAGES_MAGIC:#010x}")
    n_img, n_rows, n_cols = _read_u32s(img_data, 4, 3, images_path)
    payload = n_img * n_rows * n_cols
    if len(img_data) - 16 < payload:
        raise TruncatedPayloadError(
            f"{images_path}: expected {payload} pixel bytes, got {len(img_data) - 16}")

    (lbl_magic,) = _read_u32s(lbl_data, 0, 1, labels_path)
    if lbl_magic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"{labels_path}: magic {lbl_magic:#010x}, "
                            f"expected {IDX_LABELS_MAGIC:#010x}")
    (n_lbl,) = _read_u32s(lbl_data, 4, 1, labels_path)
    if len(lbl_data) - 8 < n_lbl:
        raise TruncatedPayloadError(
            f"{labels_path}: expected {n_lbl} label bytes, got {len(lbl_data) - 8}")
    if n_img != n_lbl:
        raise CountMismatchError(f"{n_img} images but {n_lbl} labels")

    pixels = np.frombuffer(img_data, dtype=np.uint8, count=payload, offset=16)
    inputs = normalize_pixels(pixels.reshape(n_img, n_rows * n_cols))
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=n_lbl, offset=8)
    return Dataset(inputs=inputs, labels=labels.astype(np.int64), n_classes=10)


def write_idx(dataset: Dataset, images_path, labels_path,
              rows: int | None = None, cols: int | None = None) -> None:
    """Inverse of load_idx for datasets whose inputs sit on the 8-bit grid."""
    n, d = dataset.inputs.shape
    if rows is None or cols is None:
        side = int(round(np.sqrt(d)))
        if side * side != d:
            raise ValueError("non-square images need explicit rows/cols")
        rows, cols = side, side
    pixels = np.round((dataset.inputs + 1.0) * 0.5 * 255.0)
    if np.any(pixels < 0) or np.any(pixels > 255):
        raise ValueError("inputs out of the representable pixel range")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def subsample(dataset: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Deterministic stratified subset; per-class counts within 1 of exact."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return dataset
    keep = []
    for cls in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        take = int(round(fraction * len(idx)))
        if take == 0:
            continue
        gen = rng.stream(seed, cls, rng.ROLE_SUBSAMPLE)
        keep.append(gen.permutation(idx)[:take])
    if not keep:
        raise ValueError("subsample produced an empty dataset")
    order = np.sort(np.concatenate(keep))
    return Dataset(inputs=dataset.inputs[order], labels=dataset.labels[order],
                   n_classes=dataset.n_classes)


def make_blobs(n: int, d: int, margin: float, seed: int = 0) -> Dataset:
    """Two Gaussian clusters at +-margin e1, labelled by cluster.

    Inputs are rescaled (never upscaled) into [-1, 1]; the rescaling is a
    global similarity, so separability and the generator's Bayes accuracy
    Phi(margin) are unchanged.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    gen = rng.stream(seed, rng.ROLE_BLOBS)
    labels = np.arange(n) % 2
    x = gen.standard_normal((n, d))
    x[:, 0] += np.where(labels == 0, margin, -margin)
    scale = max(1.0, float(np.max(np.abs(x))))
    return Dataset(inputs=x / scale, labels=labels, n_classes=2)
