"""Embedding datasets, the CFEB binary file format, task schedules, and a
synthetic benchmark generator.

A dataset holds frozen image embeddings for train/test splits, one text
embedding per class, and class names. All feature rows are unit L2 norm;
files that arrive unnormalized are normalized on load with a warning.

CFEB layout (little-endian, version 1):

    magic "CFEB" | version u32 | d u32 | N_train u32 | N_test u32 | C u32
    train features  N_train*d float32 row-major
    train labels    N_train u32
    test features   N_test*d float32
    test labels     N_test u32
    text features   C*d float32
    C class-name records, each u16 byte length + UTF-8 bytes

Features are stored float32 on disk and promoted to float64 in memory.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .adapter import l2_normalize_rows
from .errors import FormatError, ValidationError

MAGIC = b"CFEB"
FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-5

PROTOCOLS = ("b0", "b50")
B50_BASE = 50


def _check_features(arr, name: str, d: int) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != d:
        raise ValidationError(f"{name} must be 2-D with {d} columns")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def _check_normalized(arr, name: str):
    if arr.shape[0] == 0:
        return
    norms = np.linalg.norm(arr, axis=1)
    if np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
        raise ValidationError(
            f"{name} rows must be L2-normalized within {NORM_TOLERANCE} "
            "(read_dataset normalizes unnormalized files on load)"
        )


@dataclass(frozen=True)
class EmbeddingDataset:
    """Frozen embeddings plus per-class text embeddings for one benchmark."""

    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    text_features: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        text = np.asarray(self.text_features, dtype=np.float64)
        if text.ndim != 2:
            raise ValidationError("text_features must be 2-D")
        c, d = text.shape
        if c < 2:
            raise ValidationError(f"need at least 2 classes, got {c}")
        if len(self.class_names) != c:
            raise ValidationError(
                f"{len(self.class_names)} class names for {c} classes"
            )
        for name in ("train_features", "test_features", "text_features"):
            arr = _check_features(getattr(self, name), name, d)
            _check_normalized(arr, name)
            object.__setattr__(self, name, arr)
        for feat_name, label_name in (
            ("train_features", "train_labels"),
            ("test_features", "test_labels"),
        ):
            labels = np.asarray(getattr(self, label_name), dtype=np.int64)
            n = getattr(self, feat_name).shape[0]
            if labels.shape != (n,):
                raise ValidationError(f"{label_name} must have shape ({n},)")
            if labels.size and (labels.min() < 0 or labels.max() >= c):
                raise ValidationError(f"{label_name} contains ids outside [0, {c})")
            object.__setattr__(self, label_name, labels)

    @property
    def feature_dim(self) -> int:
        return self.text_features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.text_features.shape[0]


@dataclass(frozen=True)
class TaskSchedule:
    """Ordered class partition realizing one incremental protocol."""

    protocol: str
    increment: int
    phases: list[list[int]]
    seed: int

    def __post_init__(self):
        flat = [c for phase in self.phases for c in phase]
        if sorted(flat) != list(range(len(flat))):
            raise ValidationError("phases must partition 0..C-1")

    @property
    def num_phases(self) -> int:
        return len(self.phases)


def build_schedule(
    protocol: str, num_classes: int, increment: int, seed: int
) -> TaskSchedule:
    """Shuffle the class ids by seed and partition them per protocol.

    b0 splits all classes evenly into phases of `increment`; b50 puts 50
    classes in the first phase and splits the rest evenly.
    """
    if protocol not in PROTOCOLS:
        raise ValidationError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    if increment < 1:
        raise ValidationError("increment must be >= 1")
    perm = [int(c) for c in np.random.default_rng(seed).permutation(num_classes)]
    if protocol == "b0":
        if num_classes % increment != 0:
            raise ValidationError(
                f"b0 requires increment to divide the class count "
                f"({increment} does not divide {num_classes})"
            )
        sizes = [increment] * (num_classes // increment)
    else:
        if num_classes < B50_BASE:
            raise ValidationError(f"b50 requires at least {B50_BASE} classes")
        if (num_classes - B50_BASE) % increment != 0:
            raise ValidationError(
                f"b50 requires increment to divide the remaining "
                f"{num_classes - B50_BASE} classes"
            )
        sizes = [B50_BASE] + [increment] * ((num_classes - B50_BASE) // increment)
    phases = []
    start = 0
    for size in sizes:
        phases.append(perm[start : start + size])
        start += size
    return TaskSchedule(protocol=protocol, increment=increment, phases=phases, seed=seed)


def _f32_bytes(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def write_dataset(dataset: EmbeddingDataset, path) -> None:
    """Serialize to the CFEB binary layout (features stored float32)."""
    d = dataset.feature_dim
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(
            struct.pack(
                "<5I",
                FORMAT_VERSION,
                d,
                dataset.train_features.shape[0],
                dataset.test_features.shape[0],
                dataset.num_classes,
            )
        )
        f.write(_f32_bytes(dataset.train_features))
        f.write(np.ascontiguousarray(dataset.train_labels, dtype="<u4").tobytes())
        f.write(_f32_bytes(dataset.test_features))
        f.write(np.ascontiguousarray(dataset.test_labels, dtype="<u4").tobytes())
        f.write(_f32_bytes(dataset.text_features))
        for name in dataset.class_names:
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValidationError(f"class name too long: {name[:40]}...")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)


class _Reader:
    """Byte-counting reader so format errors can name the failing offset."""

    def __init__(self, f):
        self.f = f
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        buf = self.f.read(n)
        if len(buf) != n:
            raise FormatError(
                f"truncated file: wanted {n} bytes for {what} at offset "
                f"{self.offset}, got {len(buf)}"
            )
        self.offset += n
        return buf


def _read_features(reader: _Reader, n: int, d: int, what: str) -> np.ndarray:
    buf = reader.read(4 * n * d, what)
    return np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(n, d)


def _read_labels(reader: _Reader, n: int, what: str) -> np.ndarray:
    buf = reader.read(4 * n, what)
    return np.frombuffer(buf, dtype="<u4").astype(np.int64)


def read_dataset(path) -> EmbeddingDataset:
    """Parse a CFEB file; unnormalized feature rows are normalized with a
    warning, malformed bytes raise FormatError, bad labels ValidationError."""
    with open(path, "rb") as f:
        reader = _Reader(f)
        magic = reader.read(len(MAGIC), "magic")
        if magic != MAGIC:
            raise FormatError(
                f"bad magic at offset 0: expected {MAGIC!r}, got {magic!r}"
            )
        header = struct.unpack("<5I", reader.read(20, "header"))
        version, d, n_train, n_test, c = header
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        if d < 1 or c < 2:
            raise FormatError(f"implausible header: d={d}, classes={c}")
        train_x = _read_features(reader, n_train, d, "train features")
        train_y = _read_labels(reader, n_train, "train labels")
        test_x = _read_features(reader, n_test, d, "test features")
        test_y = _read_labels(reader, n_test, "test labels")
        text = _read_features(reader, c, d, "text features")
        names = []
        for i in range(c):
            (length,) = struct.unpack("<H", reader.read(2, f"name length {i}"))
            raw = reader.read(length, f"name {i}")
            try:
                names.append(raw.decode("utf-8"))
            except UnicodeDecodeError as e:
                raise FormatError(f"class name {i} is not valid UTF-8: {e}") from None
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"trailing bytes after offset {reader.offset}")

    blocks = {"train features": train_x, "test features": test_x, "text features": text}
    for what, arr in blocks.items():
        if arr.shape[0] == 0:
            continue
        norms = np.linalg.norm(arr, axis=1)
        if np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
            warnings.warn(
                f"{what} in {path} are not L2-normalized; normalizing on load",
                stacklevel=2,
            )
            blocks[what] = l2_normalize_rows(arr)
    return EmbeddingDataset(
        train_features=blocks["train features"],
        train_labels=train_y,
        test_features=blocks["test features"],
        test_labels=test_y,
        text_features=blocks["text features"],
        class_names=names,
    )


def generate_synthetic(
    num_classes: int,
    per_class_train: int,
    per_class_test: int,
    d: int,
    cluster_spread: float,
    seed: int,
) -> EmbeddingDataset:
    """Gaussian-cluster benchmark: unit-sphere class centers, samples
    normalize(center + spread * noise), and text embeddings equal to the
    centers themselves (a perfectly informative text encoder).

    Features pass through float32 so a written CFEB file reads back
    bit-identically.
    """
    if num_classes < 2:
        raise ValidationError("need at least 2 classes")
    if per_class_train < 1 or per_class_test < 1:
        raise ValidationError("per-class counts must be >= 1")
    if not cluster_spread > 0:
        raise ValidationError("cluster spread must be > 0")
    if d < 1:
        raise ValidationError("feature dim must be >= 1")

    rng = np.random.default_rng(seed)
    centers = l2_normalize_rows(rng.standard_normal((num_classes, d)))

    def draw(per_class):
        noise = rng.standard_normal((num_classes * per_class, d))
        x = np.repeat(centers, per_class, axis=0) + cluster_spread * noise
        x = l2_normalize_rows(x)
        labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
        return _quantize(x), labels

    train_x, train_y = draw(per_class_train)
    test_x, test_y = draw(per_class_test)
    return EmbeddingDataset(
        train_features=train_x,
        train_labels=train_y,
        test_features=test_x,
        test_labels=test_y,
        text_features=_quantize(centers),
        class_names=[f"class_{i:03d}" for i in range(num_classes)],
    )


def _quantize(arr) -> np.ndarray:
    """Round-trip through float32, matching on-disk precision."""
    return arr.astype(np.float32).astype(np.float64)
