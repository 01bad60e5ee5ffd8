"""Datasets: IDX (MNIST-style) files, average-pool downsampling, synthetic blobs."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, PairingError, ShapeError, TruncationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d) float64 in [0, 1]
    labels: np.ndarray    # (N,) int64 in [0, K)
    split: str = "train"
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ShapeError(f"features {self.features.shape} and labels {self.labels.shape} disagree")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _read_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 * ndim:
        raise TruncationError(f"{path}: header truncated ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    size = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) < size:
        raise TruncationError(f"{path}: payload has {len(payload)} bytes, header promises {size}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    return _read_idx(path, IDX_IMAGES_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    return _read_idx(path, IDX_LABELS_MAGIC, 1)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Pair an IDX image file with an IDX label file; pixels scaled by 1/255."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise PairingError(f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels")
    n, rows, cols = images.shape
    features = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), split, (rows, cols))


def avg_pool_downsample(data: Dataset, factor: int = 4, image_shape: tuple[int, int] | None = None) -> Dataset:
    """Replace each ``factor x factor`` block by its mean (28x28 -> 7x7 for factor 4)."""
    shape = image_shape or data.image_shape
    if shape is None:
        side = int(round(np.sqrt(data.dim)))
        if side * side != data.dim:
            raise ShapeError(f"cannot infer a square image from {data.dim} features")
        shape = (side, side)
    rows, cols = shape
    if rows % factor or cols % factor:
        raise ShapeError(f"image {rows}x{cols} is not divisible by pooling factor {factor}")
    n = len(data)
    blocks = data.features.reshape(n, rows // factor, factor, cols // factor, factor)
    pooled = blocks.mean(axis=(2, 4))
    return Dataset(pooled.reshape(n, -1), data.labels, data.split, (rows // factor, cols // factor))


def class_means(d: int, K: int) -> np.ndarray:
    """Fixed lattice of class centres: class k sits at 1 on coordinates ``i % K == k``, else 0.

    When ``d < K`` some classes would collide, so class k instead uses the
    binary digits of ``k + 1`` over the first coordinates.
    """
    means = np.zeros((K, d))
    if d >= K:
        for k in range(K):
            means[k, k::K] = 1.0
    else:
        for k in range(K):
            bits = [(k + 1) >> i & 1 for i in range(d)]
            means[k] = bits
    return means


def synthetic_blobs(seed: int, n_per_class: int, d: int, K: int, spread: float = 0.3,
                    split: str = "train") -> Dataset:
    """``K`` Gaussian clusters of ``n_per_class`` points each, clipped to [0, 1]."""
    if K < 2 or d < 1 or n_per_class < 0:
        raise ValueError("need K >= 2, d >= 1 and n_per_class >= 0")
    rng = np.random.default_rng(seed)
    means = class_means(d, K)
    labels = np.repeat(np.arange(K), n_per_class)
    X = means[labels] + spread * rng.standard_normal((len(labels), d))
    return Dataset(np.clip(X, 0.0, 1.0), labels.astype(np.int64), split)
