"""Classical per-frame face image quality components and weight normalization.

Both components work on the face region of an 8-bit grayscale frame and
report on a 0-100 scale:

* illumination uniformity: intersection of the normalized luminance
  histograms of the left and right halves of the face region;
* defocus: mean absolute residual between the face region and its 3x3
  mean-filtered copy (edge replicated), so that higher means sharper.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoxOutOfBounds,
    DegenerateBox,
    EmptySet,
    InvalidStatistic,
    MissingFile,
    UnsupportedImage,
)
from .model import FaceBox

HIST_BINS = 256
FILTER_SIZE = 3
SCALE = 100.0


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    data: np.ndarray  # shape (height, width), luminance in [0, 255]

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.size != self.width * self.height:
            raise ValueError(
                f"data has {arr.size} values, expected {self.width}x{self.height}"
            )
        object.__setattr__(self, "data", arr.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise UnsupportedImage(f"expected a 2-D luminance array, got shape {arr.shape}")
        return cls(arr.shape[1], arr.shape[0], arr)

    def mirrored(self) -> "GrayImage":
        return GrayImage(self.width, self.height, self.data[:, ::-1].copy())

    @property
    def full_box(self) -> FaceBox:
        return FaceBox(0, 0, self.width, self.height)


def read_gray_image(path: str | os.PathLike) -> GrayImage:
    """Read an 8-bit grayscale PGM (P5) or PNG; color input is rejected."""
    from PIL import Image

    if not os.path.isfile(path):
        raise MissingFile(f"image not found: {path}")
    with Image.open(path) as im:
        if im.format not in ("PPM", "PNG"):
            raise UnsupportedImage(f"{path}: unsupported format {im.format}")
        if im.mode != "L":
            raise UnsupportedImage(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
        arr = np.asarray(im, dtype=np.uint8)
    return GrayImage.from_array(arr)


def _region(image: GrayImage, box: FaceBox | None) -> np.ndarray:
    if box is None:
        box = image.full_box
    if box.w <= 0 or box.h <= 0:
        raise DegenerateBox(f"face box {box} has no area")
    if not box.within(image.width, image.height):
        raise BoxOutOfBounds(f"face box {box} exceeds image {image.width}x{image.height}")
    return image.data[box.y : box.y + box.h, box.x : box.x + box.w]


def _histogram(values: np.ndarray, bins: int) -> np.ndarray:
    counts, _ = np.histogram(values, bins=bins, range=(0.0, 256.0))
    return counts / values.size


def illumination_uniformity(
    image: GrayImage, face_box: FaceBox | None = None, bins: int = HIST_BINS
) -> float:
    """Left/right luminance histogram intersection of the face region, 0-100.

    The odd middle column of the region, if any, belongs to neither half.
    """
    region = _region(image, face_box)
    w = region.shape[1]
    if w < 2:
        raise DegenerateBox(f"face box width {w} cannot be split into halves")
    left = region[:, : w // 2]
    right = region[:, w - w // 2 :]
    h_left = _histogram(left, bins)
    h_right = _histogram(right, bins)
    return SCALE * float(np.minimum(h_left, h_right).sum())


def mean_filter(region: np.ndarray, size: int = FILTER_SIZE) -> np.ndarray:
    """Box filter of odd ``size`` with edge replication."""
    r = size // 2
    padded = np.pad(region.astype(np.float64), r, mode="edge")
    h, w = region.shape
    acc = np.zeros((h, w))
    for dy in range(size):
        for dx in range(size):
            acc += padded[dy : dy + h, dx : dx + w]
    return acc / (size * size)


def defocus(image: GrayImage, face_box: FaceBox | None = None, size: int = FILTER_SIZE) -> float:
    """Sharpness as mean |I - mean_filter(I)| over the face region, 0-100."""
    region = _region(image, face_box)
    if region.shape[0] < size or region.shape[1] < size:
        raise DegenerateBox(f"face region {region.shape[::-1]} smaller than {size}x{size}")
    residual = np.abs(region.astype(np.float64) - mean_filter(region, size))
    return SCALE * float(residual.mean()) / 255.0


# -- normalization -----------------------------------------------------------


class NormKind(str, enum.Enum):
    DATASET_MEDIAN = "median"
    DIVIDE_BY_100 = "100"
    IDENTITY = "identity"


@dataclass(frozen=True)
class QualityNormalization:
    kind: NormKind = NormKind.IDENTITY
    statistic: float | None = None

    def __post_init__(self):
        if self.kind is NormKind.DATASET_MEDIAN and self.statistic is not None:
            if not (np.isfinite(self.statistic) and self.statistic > 0):
                raise InvalidStatistic(f"median statistic must be > 0, got {self.statistic}")

    @property
    def needs_fit(self) -> bool:
        return self.kind is NormKind.DATASET_MEDIAN and self.statistic is None

    def fitted(self, values) -> "QualityNormalization":
        if self.kind is not NormKind.DATASET_MEDIAN:
            return self
        return QualityNormalization(self.kind, dataset_median(values))

    def __str__(self) -> str:
        if self.kind is NormKind.DATASET_MEDIAN and self.statistic is not None:
            return f"median:{self.statistic!r}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "QualityNormalization":
        head, _, stat = text.partition(":")
        kind = NormKind(head)
        if stat:
            if kind is not NormKind.DATASET_MEDIAN:
                raise ValueError(f"normalization {head!r} takes no statistic")
            return cls(kind, float(stat))
        return cls(kind)


IDENTITY = QualityNormalization()
DIVIDE_BY_100 = QualityNormalization(NormKind.DIVIDE_BY_100)

# Tracks on a 0-100 scale by construction; anything else is left alone
# unless the caller says otherwise.
_PERCENT_TRACKS = {"q:illum", "q:defocus", "q:pose"}
_MEDIAN_TRACKS = {"q:magface"}


def default_normalization(track: str) -> QualityNormalization:
    if track in _PERCENT_TRACKS:
        return DIVIDE_BY_100
    if track in _MEDIAN_TRACKS:
        return QualityNormalization(NormKind.DATASET_MEDIAN)
    return IDENTITY


def normalize_quality(raw, norm: QualityNormalization):
    """Map raw quality score(s) into [0, 1] weights. Accepts scalars or arrays."""
    if norm.kind is NormKind.DIVIDE_BY_100:
        scaled = np.asarray(raw, dtype=float) / 100.0
    elif norm.kind is NormKind.DATASET_MEDIAN:
        if norm.statistic is None or not norm.statistic > 0:
            raise InvalidStatistic(f"median normalization needs a positive statistic, got {norm.statistic}")
        scaled = np.asarray(raw, dtype=float) / norm.statistic
    else:
        scaled = np.asarray(raw, dtype=float)
    out = np.clip(scaled, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def dataset_median(values) -> float:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySet("median of an empty set")
    return float(np.median(arr))
