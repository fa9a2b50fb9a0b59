"""Linear color arithmetic: illuminants, angular error, relighting, white balance.

All images are linear RGB. An illuminant is a direction in RGB space; its
overall intensity carries no information about the light color, so the
canonical storage form is unit Euclidean norm. Relighting and correction
use the von Kries diagonal model (independent per-channel gains), with the
gain vector rescaled to max-channel 1 so synthetic relighting never pushes
values past the white level and correction does not drift exposure.

All operations here are pure functions on immutable inputs and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from illume.errors import DegenerateDivisionError, InvalidIlluminantError


def _as_rgb_vector(values) -> np.ndarray:
    rgb = np.asarray(values, dtype=np.float64)
    if rgb.shape != (3,):
        raise InvalidIlluminantError(f"illuminant must be a 3-vector, got shape {rgb.shape}")
    if not np.all(np.isfinite(rgb)):
        raise InvalidIlluminantError(f"illuminant has non-finite components: {rgb}")
    if np.any(rgb < 0.0):
        raise InvalidIlluminantError(f"illuminant has negative components: {rgb}")
    if not np.any(rgb > 0.0):
        raise InvalidIlluminantError("illuminant is the zero vector")
    return rgb


@dataclass(frozen=True, eq=False)
class Illuminant:
    """Light color as a non-negative RGB direction.

    Components are relative linear intensities; at least one must be
    positive. `normalized()` returns the canonical unit-norm form and is
    idempotent.
    """

    rgb: np.ndarray

    def __post_init__(self):
        rgb = _as_rgb_vector(self.rgb)
        rgb.setflags(write=False)
        object.__setattr__(self, "rgb", rgb)

    def normalized(self) -> "Illuminant":
        return Illuminant(self.rgb / np.linalg.norm(self.rgb))

    def unit(self) -> np.ndarray:
        """Unit-norm copy of the RGB direction."""
        return self.rgb / np.linalg.norm(self.rgb)

    def __repr__(self):
        r, g, b = self.rgb
        return f"Illuminant([{r:g}, {g:g}, {b:g}])"


@dataclass(frozen=True)
class ChromaticityRG:
    """Intensity-normalized color coordinates r = R/(R+G+B), g = G/(R+G+B)."""

    r: float
    g: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.g <= 1.0):
            raise InvalidIlluminantError(f"rg chromaticity out of range: ({self.r}, {self.g})")
        if self.r + self.g > 1.0 + 1e-12:
            raise InvalidIlluminantError(f"r + g exceeds 1: ({self.r}, {self.g})")

    def to_illuminant(self) -> Illuminant:
        return Illuminant(np.array([self.r, self.g, 1.0 - self.r - self.g])).normalized()


@dataclass(frozen=True, eq=False)
class LinearImage:
    """Linear RGB raster with an optional exclusion mask.

    pixels: (height, width, 3) float64 in [0, white_level].
    mask:   (height, width) bool, True marks pixels excluded from all
            statistics and patch sampling (color checker, gray sphere).
    """

    pixels: np.ndarray
    white_level: float = 1.0
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must have shape (h, w, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite values")
        if px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > self.white_level:
            raise ValueError(
                f"pixel values outside [0, {self.white_level}]: "
                f"min {px.min()}, max {px.max()}"
            )
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != px.shape[:2]:
                raise ValueError(f"mask shape {m.shape} does not match image {px.shape[:2]}")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def valid_mask(self) -> np.ndarray:
        """Boolean (h, w) array, True where pixels participate in statistics."""
        if self.mask is None:
            return np.ones(self.pixels.shape[:2], dtype=bool)
        return ~self.mask


def angular_error(a: Illuminant, b: Illuminant) -> float:
    """Angle in degrees between two illuminant directions.

    Symmetric, scale-invariant in both arguments, always in [0, 180].
    The cosine is clamped to [-1, 1] before acos so nearly parallel
    vectors cannot produce NaN.
    """
    ua = a.unit()
    ub = b.unit()
    cos = float(np.clip(np.dot(ua, ub), -1.0, 1.0))
    return math.degrees(math.acos(cos))


def angular_distance_rad(a: np.ndarray, b: np.ndarray) -> float:
    """Radian form of the angle between two raw RGB vectors (used by clustering)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise InvalidIlluminantError("zero vector has no direction")
    cos = float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
    return math.acos(cos)


def _max_one_gains(light: Illuminant) -> np.ndarray:
    return light.rgb / light.rgb.max()


def apply_illuminant(img: LinearImage, light: Illuminant) -> LinearImage:
    """Relight a canonically lit image by per-channel multiplication.

    The light is rescaled to max-channel 1 first, so values never leave
    [0, white_level]. Masked pixels are left untouched and the mask is
    preserved.
    """
    gains = _max_one_gains(light)
    out = img.pixels * gains
    if img.mask is not None:
        out[img.mask] = img.pixels[img.mask]
    return LinearImage(out, white_level=img.white_level, mask=img.mask)


def normalize_to_canonical(img: LinearImage, est: Illuminant) -> LinearImage:
    """Von Kries correction: divide channels by the estimated light.

    The estimate is rescaled to max-channel 1 before dividing; output is
    clipped to [0, white_level]. Masked pixels are left untouched.
    """
    if np.any(est.rgb == 0.0):
        raise DegenerateDivisionError(f"estimate has a zero channel: {est.rgb}")
    gains = _max_one_gains(est)
    out = np.clip(img.pixels / gains, 0.0, img.white_level)
    if img.mask is not None:
        out[img.mask] = img.pixels[img.mask]
    return LinearImage(out, white_level=img.white_level, mask=img.mask)


def to_rg(light: Illuminant) -> ChromaticityRG:
    """Project an illuminant onto rg chromaticity coordinates."""
    total = float(light.rgb.sum())
    return ChromaticityRG(float(light.rgb[0]) / total, float(light.rgb[1]) / total)
