"""Dataset loading and synthesis.

Supports the big-endian IDX container (images magic 0x00000803, labels
0x00000801), a Gaussian-blob classification generator with controllable
class separation, and a rendered-digit generator that emits MNIST-shaped
images with per-sample noise levels (a heteroscedastic difficulty spectrum).
All generation is deterministic per seed.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    DataError,
    TooSmall,
    TruncatedFile,
    ZeroStd,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray       # (N, channels, H, W) float64
    labels: np.ndarray       # (N,) int
    name: str
    class_count: int

    @property
    def n(self):
        return self.images.shape[0]

    def take(self, indices):
        return Dataset(self.images[indices], self.labels[indices], self.name, self.class_count)


@dataclass
class SplitSpec:
    val_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")


def load_idx(images_path, labels_path, name="idx", class_count=None):
    """Read an IDX image/label pair; pixels map to [0, 1] via /255."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = _read_header(f, 4, images_path)
        if magic != IMAGES_MAGIC:
            raise BadMagic(f"{images_path}: image magic {magic:#010x} != {IMAGES_MAGIC:#010x}")
        raw = f.read(count * rows * cols)
        if len(raw) < count * rows * cols:
            raise TruncatedFile(f"{images_path}: expected {count * rows * cols} pixels, got {len(raw)}")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, 1, rows, cols)
    with open(labels_path, "rb") as f:
        magic, lcount = _read_header(f, 2, labels_path)
        if magic != LABELS_MAGIC:
            raise BadMagic(f"{labels_path}: label magic {magic:#010x} != {LABELS_MAGIC:#010x}")
        if lcount != count:
            raise CountMismatch(f"{count} images vs {lcount} labels")
        raw = f.read(lcount)
        if len(raw) < lcount:
            raise TruncatedFile(f"{labels_path}: expected {lcount} labels, got {len(raw)}")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.intp)
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size else 0
    return Dataset(images.astype(np.float64) / 255.0, labels, name, class_count)


def write_idx(dataset, images_path, labels_path):
    """Write a dataset whose pixels sit on the /255 grid back to IDX files."""
    images = np.round(dataset.images * 255.0).astype(np.uint8)
    n, channels, rows, cols = dataset.images.shape
    if channels != 1:
        raise DataError(f"IDX stores single-channel images, got {channels} channels")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def _read_header(f, words, path):
    raw = f.read(4 * words)
    if len(raw) < 4 * words:
        raise TruncatedFile(f"{path}: header ends after {len(raw)} bytes")
    return struct.unpack(f">{words}i", raw)


def synth_gaussians(classes, per_class, dim_as_image, separation, seed):
    """Classes at the vertices of a scaled simplex with unit-variance noise.

    The simplex (mutually equidistant class means, pairwise distance
    sqrt(2) * separation) sits in a seed-random orthonormal frame, so the
    signal spreads over all pixels instead of a corner. ``dim_as_image`` is
    the (channels, H, W) layout the flat feature vector is reshaped to.
    Label counts are exactly uniform; row order is shuffled by the same seed.
    """
    if classes < 2:
        raise DataError(f"need at least 2 classes, got {classes}")
    channels, h, w = dim_as_image
    dim = channels * h * w
    if dim < classes:
        raise DataError(f"feature dim {dim} cannot hold {classes} simplex vertices")
    rng = np.random.default_rng(seed)
    frame, _ = np.linalg.qr(rng.normal(size=(dim, classes)))
    means = float(separation) * frame.T  # (classes, dim), orthonormal rows
    n = classes * per_class
    labels = np.repeat(np.arange(classes, dtype=np.intp), per_class)
    features = rng.normal(0.0, 1.0, size=(n, dim)) + means[labels]
    order = rng.permutation(n)
    images = features[order].reshape(n, channels, h, w)
    return Dataset(images, labels[order], f"gauss{classes}", classes)


# 7x5 glyphs for the rendered-digit generator.
_GLYPHS = [
    ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"],  # 0
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", "#####"],  # 1
    ["#####", "....#", "....#", "#####", "#....", "#....", "#####"],  # 2
    ["#####", "....#", "....#", ".####", "....#", "....#", "#####"],  # 3
    ["#...#", "#...#", "#...#", "#####", "....#", "....#", "....#"],  # 4
    ["#####", "#....", "#....", "#####", "....#", "....#", "#####"],  # 5
    ["#####", "#....", "#....", "#####", "#...#", "#...#", "#####"],  # 6
    ["#####", "....#", "....#", "...#.", "..#..", "..#..", "..#.."],  # 7
    ["#####", "#...#", "#...#", "#####", "#...#", "#...#", "#####"],  # 8
    ["#####", "#...#", "#...#", "#####", "....#", "....#", "#####"],  # 9
]


def _glyph_array(digit):
    g = _GLYPHS[digit]
    return np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in g])


def synth_digits(n, seed, noise_lo=0.2, noise_hi=0.7, size=28, classes=10, jitter=2,
                 flip_fraction=0.0, name="digits"):
    """MNIST-format rendered digits with a per-sample noise level.

    Each sample draws its own noise sigma uniformly from [noise_lo, noise_hi],
    so difficulty varies across the set (a heteroscedastic spectrum), and a
    ``flip_fraction`` of labels is reassigned to another class, giving the
    task an irreducible-error floor. Glyphs are upscaled 3x, placed near the
    center with integer jitter, and pixels are clipped to [0, 1] and
    quantized to the /255 grid so the images survive an IDX round trip
    bit-exactly.
    """
    if classes < 2 or classes > 10:
        raise DataError(f"digit generator supports 2..10 classes, got {classes}")
    if not (0.0 <= flip_fraction < 1.0):
        raise DataError(f"flip_fraction must lie in [0, 1), got {flip_fraction}")
    rng = np.random.default_rng(seed)
    labels = (np.arange(n, dtype=np.intp) % classes)
    glyphs = [np.kron(_glyph_array(d), np.ones((3, 3))) for d in range(classes)]
    gh, gw = glyphs[0].shape
    cy, cx = (size - gh) // 2, (size - gw) // 2
    jy = min(jitter, cy, size - gh - cy)
    jx = min(jitter, cx, size - gw - cx)
    images = np.zeros((n, 1, size, size))
    offsets = rng.integers([-jy, -jx], [jy + 1, jx + 1], size=(n, 2))
    sigmas = rng.uniform(noise_lo, noise_hi, size=n)
    noise = rng.normal(0.0, 1.0, size=(n, size, size))
    for i in range(n):
        dy, dx = cy + offsets[i, 0], cx + offsets[i, 1]
        canvas = np.zeros((size, size))
        canvas[dy:dy + gh, dx:dx + gw] = glyphs[labels[i]]
        images[i, 0] = canvas + sigmas[i] * noise[i]
    np.clip(images, 0.0, 1.0, out=images)
    images = np.round(images * 255.0) / 255.0
    order = rng.permutation(n)
    images, labels = images[order], labels[order]
    # Flips are drawn after the shuffle so a flipped and an unflipped build
    # of the same seed share identical images.
    if flip_fraction > 0.0:
        flips = rng.random(n) < flip_fraction
        labels = labels.copy()
        labels[flips] = (labels[flips] + rng.integers(1, classes, size=int(flips.sum()))) % classes
    return Dataset(images, labels, name, classes)


def split(dataset, spec):
    """Deterministic shuffle-then-partition into (train, val)."""
    n = dataset.n
    val_n = int(n * spec.val_fraction)
    if val_n < 1:
        raise TooSmall(f"{n} samples at fraction {spec.val_fraction} leave an empty validation set")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return dataset.take(perm[val_n:]), dataset.take(perm[:val_n])


def subset(dataset, n, seed):
    """Seed-selected sample of n rows (without replacement)."""
    if n > dataset.n:
        raise TooSmall(f"asked for {n} of {dataset.n} samples")
    idx = np.random.default_rng(seed).permutation(dataset.n)[:n]
    return dataset.take(idx)


def normalize(dataset, mean, std):
    """(x - mean) / std per channel; accepts scalars or per-channel values."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    std = np.asarray(std, dtype=np.float64).reshape(-1)
    if np.any(std == 0.0):
        raise ZeroStd("normalization std must be nonzero")
    channels = dataset.images.shape[1]
    mean = np.broadcast_to(mean, (channels,)).reshape(1, channels, 1, 1)
    std = np.broadcast_to(std, (channels,)).reshape(1, channels, 1, 1)
    return Dataset((dataset.images - mean) / std, dataset.labels, dataset.name, dataset.class_count)
