"""Dataset sources: synthetic Gaussian pairs, IDX digit files, glyph digits.

The IDX reader/writer implement the classic big-endian format (image magic
2051, label magic 2049, uint8 payload).  Loaded datasets are immutable and
freely shareable; loading itself is single-threaded.

Because the library never touches the network, files are supplied by path.
:func:`fetch_mnist` is an optional helper that downloads and size-checks
the four standard files when an internet connection exists, and
:func:`synthetic_digit_images` procedurally generates a self-contained
28x28 ten-class digit-glyph dataset in the same format for offline runs.
"""

from __future__ import annotations

import csv
import gzip
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import IdxFormatError

__all__ = [
    "Dataset",
    "synthetic_gaussian",
    "load_mnist_idx",
    "write_idx_images",
    "write_idx_labels",
    "synthetic_digit_images",
    "synthetic_digits",
    "dataset_to_csv",
    "fetch_mnist",
]

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
NUM_CLASSES = 10


@dataclass
class Dataset:
    """Paired inputs (n, d_in) and targets (n, d_out) with a display name."""

    inputs: np.ndarray
    targets: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D (samples x features)")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"count mismatch: {self.inputs.shape[0]} inputs vs "
                f"{self.targets.shape[0]} targets"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, limit: int) -> "Dataset":
        """First ``limit`` samples, deterministically."""
        return Dataset(self.inputs[:limit].copy(), self.targets[:limit].copy(), self.name)


def synthetic_gaussian(n: int, in_dim: int, out_dim: int, seed: int = 0) -> Dataset:
    """Inputs ~ N(1, 1) and targets ~ N(-1, 1), elementwise, seeded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    inputs = rng.normal(1.0, 1.0, size=(n, in_dim))
    targets = rng.normal(-1.0, 1.0, size=(n, out_dim))
    return Dataset(inputs, targets, "synthetic_gaussian")


def _read_header(blob: bytes, path, n_dims: int, expected_magic: int) -> tuple:
    if len(blob) < 4 * (1 + n_dims):
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack_from(">i", blob, 0)[0]
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic {magic}, expected {expected_magic}")
    dims = struct.unpack_from(f">{n_dims}i", blob, 4)
    return dims


def load_mnist_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Parse an IDX image/label file pair into a normalized dataset.

    Pixels are divided by 255 so features lie in [0, 1]; labels become
    10-class one-hot targets.  ``limit`` keeps the first k samples.
    """
    img_blob = Path(images_path).read_bytes()
    lbl_blob = Path(labels_path).read_bytes()

    n_img, rows, cols = _read_header(img_blob, images_path, 3, IMAGE_MAGIC)
    (n_lbl,) = _read_header(lbl_blob, labels_path, 1, LABEL_MAGIC)
    if n_img != n_lbl:
        raise IdxFormatError(f"count mismatch: {n_img} images vs {n_lbl} labels")
    if len(img_blob) - 16 < n_img * rows * cols:
        raise IdxFormatError(f"{images_path}: truncated pixel data")
    if len(lbl_blob) - 8 < n_lbl:
        raise IdxFormatError(f"{labels_path}: truncated label data")

    n = n_img if limit is None else min(limit, n_img)
    pixels = np.frombuffer(img_blob, dtype=np.uint8, count=n * rows * cols, offset=16)
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, count=n, offset=8)
    if np.any(labels >= NUM_CLASSES):
        raise IdxFormatError(f"{labels_path}: label out of range 0..9")

    inputs = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    targets = np.zeros((n, NUM_CLASSES))
    targets[np.arange(n), labels] = 1.0
    return Dataset(inputs, targets, "mnist_idx")


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (n, rows, cols) uint8 array as an IDX image file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write a (n,) uint8 array as an IDX label file."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# Seven-segment glyph geometry on a 28x28 canvas (row/col pixel slices).
_SEGMENTS = {
    "a": (slice(4, 6), slice(9, 19)),
    "b": (slice(4, 14), slice(17, 19)),
    "c": (slice(14, 24), slice(17, 19)),
    "d": (slice(22, 24), slice(9, 19)),
    "e": (slice(14, 24), slice(9, 11)),
    "f": (slice(4, 14), slice(9, 11)),
    "g": (slice(13, 15), slice(9, 19)),
}
_DIGIT_SEGMENTS = {
    0: "abcdef",
    1: "bc",
    2: "abged",
    3: "abgcd",
    4: "fgbc",
    5: "afgcd",
    6: "afgedc",
    7: "abc",
    8: "abcdefg",
    9: "abcdfg",
}


def synthetic_digit_images(
    n: int,
    seed: int = 0,
    noise_std: float = 0.08,
    max_shift: int = 3,
    intensity: tuple[float, float] = (0.75, 1.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Procedural 28x28 digit glyphs: seven-segment shapes with random
    shift, brightness, and pixel noise.  Returns (images uint8, labels)."""
    rng = np.random.default_rng(seed)
    templates = np.zeros((NUM_CLASSES, 28, 28))
    for digit, segs in _DIGIT_SEGMENTS.items():
        for s in segs:
            rs, cs = _SEGMENTS[s]
            templates[digit][rs, cs] = 1.0

    labels = rng.integers(0, NUM_CLASSES, size=n).astype(np.uint8)
    images = np.zeros((n, 28, 28))
    for i, digit in enumerate(labels):
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        img = np.roll(templates[digit], (dy, dx), axis=(0, 1))
        img = img * rng.uniform(*intensity)
        if noise_std > 0:
            img = img + rng.normal(0.0, noise_std, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return np.round(images * 255.0).astype(np.uint8), labels


def synthetic_digits(
    n: int,
    seed: int = 0,
    noise_std: float = 0.08,
    max_shift: int = 3,
    intensity: tuple[float, float] = (0.75, 1.0),
) -> Dataset:
    """Glyph digits as a normalized one-hot dataset (same transform as the
    IDX loader applies)."""
    images, labels = synthetic_digit_images(n, seed, noise_std, max_shift, intensity)
    inputs = images.reshape(n, 28 * 28).astype(np.float64) / 255.0
    targets = np.zeros((n, NUM_CLASSES))
    targets[np.arange(n), labels] = 1.0
    return Dataset(inputs, targets, "synthetic_digits")


def dataset_to_csv(dataset: Dataset, path) -> None:
    """Debug export: one row per sample, input columns then target columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d_in = dataset.inputs.shape[1]
        d_out = dataset.targets.shape[1]
        writer.writerow([f"x{i}" for i in range(d_in)] + [f"y{i}" for i in range(d_out)])
        for x, y in zip(dataset.inputs, dataset.targets):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])


_MNIST_FILES = {
    "train-images-idx3-ubyte": 9912422,
    "train-labels-idx1-ubyte": 28881,
    "t10k-images-idx3-ubyte": 1648877,
    "t10k-labels-idx1-ubyte": 4542,
}
_MNIST_MIRRORS = (
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
)


def fetch_mnist(out_dir) -> dict[str, Path]:
    """Download and unpack the four standard digit files (needs internet).

    Verifies each compressed download against its published byte size
    before unpacking.  Returns {stem: extracted path}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for stem, gz_size in _MNIST_FILES.items():
        dest = out / stem
        if not dest.exists():
            blob = None
            last_error: Exception | None = None
            for mirror in _MNIST_MIRRORS:
                try:
                    with urllib.request.urlopen(mirror + stem + ".gz", timeout=60) as resp:
                        blob = resp.read()
                    break
                except Exception as exc:  # noqa: BLE001 - report the last mirror failure
                    last_error = exc
            if blob is None:
                raise RuntimeError(f"could not download {stem}.gz: {last_error}")
            if len(blob) != gz_size:
                raise IdxFormatError(
                    f"{stem}.gz: size {len(blob)} != published {gz_size}"
                )
            dest.write_bytes(gzip.decompress(blob))
        paths[stem] = dest
    return paths
