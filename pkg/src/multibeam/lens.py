"""Dielectric lens + focal-plane-array receiver and lenslet cascades.

The lens is treated as an ideal circular aperture: directivity
4*pi*A/lambda^2 and an Airy far-field 2 J1(u)/u. A feed displaced on the
focal plane steers the beam to the opposite side of boresight. Each feed is
itself a short series-fed column along y, which only shapes the elevation
cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import j1

from .array import (
    Angle,
    Beampattern,
    PatternParseError,
    direction_vectors,
    make_ula,
    parse_beampattern_csv,
    steering_matrix,
    steering_vector,
)

_MAG_FLOOR = 1e-15


@dataclass(frozen=True)
class LensSpec:
    radius: float = 0.05
    base_length: float = 0.057
    focal_length: float | None = None
    loss_db: float = 1.5

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("lens radius must be positive")
        if self.base_length < 0:
            raise ValueError("base_length must be non-negative")
        if self.focal_length is None:
            if not self.base_length > 0:
                raise ValueError("focal_length defaults to base_length, which must be positive")
            object.__setattr__(self, "focal_length", self.base_length)
        if not self.focal_length > 0:
            raise ValueError("focal_length must be positive")
        if self.loss_db < 0:
            raise ValueError("loss_db must be non-negative")

    @property
    def diameter(self) -> float:
        return 2 * self.radius


@dataclass(frozen=True)
class FeedLayout:
    feed_offsets: tuple[tuple[float, float], ...]
    element_subarray_n: int = 8
    element_spacing: float | None = None  # None: half a wavelength

    def __post_init__(self) -> None:
        offsets = tuple((float(x), float(y)) for x, y in self.feed_offsets)
        if not offsets:
            raise ValueError("feed layout needs at least one feed")
        if self.element_subarray_n < 1:
            raise ValueError("element_subarray_n must be >= 1")
        if self.element_spacing is not None and not self.element_spacing > 0:
            raise ValueError("element_spacing must be positive")
        object.__setattr__(self, "feed_offsets", offsets)

    @classmethod
    def linear(cls, count: int, pitch: float, **kwargs) -> "FeedLayout":
        """``count`` feeds along x at ``pitch``, centered on the lens axis."""
        xs = (np.arange(count) - (count - 1) / 2) * pitch
        return cls(tuple((float(x), 0.0) for x in xs), **kwargs)


@dataclass(frozen=True)
class LensletArraySpec:
    num_lenses: int
    pitch: float
    lens: LensSpec = field(default_factory=LensSpec)

    def __post_init__(self) -> None:
        if self.num_lenses < 1:
            raise ValueError("num_lenses must be >= 1")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if self.pitch < self.lens.diameter - 1e-12:
            raise ValueError(
                f"lenslet pitch {self.pitch} m is smaller than the lens diameter "
                f"{self.lens.diameter} m"
            )


def lens_directivity_dbi(spec: LensSpec, wavelength: float) -> float:
    """Uniform circular aperture directivity 10 log10(4 pi A / lambda^2), minus loss."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    area = math.pi * spec.radius**2
    return 10 * math.log10(4 * math.pi * area / wavelength**2) - spec.loss_db


class OutOfFieldError(ValueError):
    pass


def feed_to_beam_angle(offset: Sequence[float], spec: LensSpec) -> Angle:
    ox, oy = (float(v) for v in offset)
    if math.hypot(ox, oy) >= spec.focal_length:
        raise OutOfFieldError(
            f"feed offset ({ox}, {oy}) m is outside the focal field (f = {spec.focal_length} m)"
        )
    return Angle(-math.atan(ox / spec.focal_length), -math.atan(oy / spec.focal_length))


def beam_angle_to_feed(angle: Angle, spec: LensSpec) -> tuple[float, float]:
    f = spec.focal_length
    return (-f * math.tan(angle.azimuth), -f * math.tan(angle.elevation))


def airy(u: np.ndarray) -> np.ndarray:
    """2 J1(u) / u with the removable singularity at u = 0 filled in."""
    u = np.asarray(u, dtype=float)
    out = np.ones_like(u)
    nz = u != 0
    out[nz] = 2 * j1(u[nz]) / u[nz]
    return out


def _subarray_factor(grid: Sequence[Angle], n: int, spacing: float, wavelength: float) -> np.ndarray:
    """Normalized |AF| of an n-element uniform column along y (peak 1 at el = 0)."""
    if n == 1:
        return np.ones(len(grid))
    y = (np.arange(n) - (n - 1) / 2) * spacing
    sin_el = np.array([math.sin(a.elevation) for a in grid])
    k = 2 * math.pi / wavelength
    return np.abs(np.exp(1j * k * np.outer(sin_el, y)).sum(axis=1)) / n


def lens_beampattern(spec: LensSpec, feed_offset: Sequence[float], wavelength: float,
                     grid: Sequence[Angle], subarray_n: int = 8,
                     subarray_spacing: float | None = None) -> Beampattern:
    """Gain pattern (dBi) of one lens beam fed from ``feed_offset``.

    u = (2 pi r / lambda) sin(psi), psi the angle between the grid direction
    and the beam direction; the elevation column factor is normalized so the
    peak equals the lens directivity.
    """
    grid = tuple(grid)
    if not grid:
        raise ValueError("angle grid is empty")
    beam = feed_to_beam_angle(feed_offset, spec)
    dirs = direction_vectors(grid)
    cos_psi = np.clip(dirs @ beam.unit_vector(), -1.0, 1.0)
    sin_psi = np.sqrt(1.0 - cos_psi**2)
    u = 2 * math.pi * spec.radius / wavelength * sin_psi
    spacing = wavelength / 2 if subarray_spacing is None else subarray_spacing
    mag = np.abs(airy(u)) * _subarray_factor(grid, subarray_n, spacing, wavelength)
    power = lens_directivity_dbi(spec, wavelength) + 20 * np.log10(np.maximum(mag, _MAG_FLOOR))
    return Beampattern(grid, power)


def fpa_beampatterns(spec: LensSpec, layout: FeedLayout, wavelength: float,
                     grid: Sequence[Angle]) -> list[Beampattern]:
    return [
        lens_beampattern(spec, off, wavelength, grid, layout.element_subarray_n, layout.element_spacing)
        for off in layout.feed_offsets
    ]


def lenslet_pattern(element: Beampattern, spec: LensletArraySpec, steer: Angle,
                    wavelength: float, grid: Sequence[Angle] | None = None) -> Beampattern:
    """Element pattern times the array factor of ``num_lenses`` phased lenslets.

    The lenslets are combined with unit-modulus weights matched to ``steer``,
    so the composite peak can exceed the element by at most 20 log10(N) dB.
    ``grid`` defaults to the element's own grid; other grids are filled by
    linear interpolation of the element pattern in dB.
    """
    grid = element.angles if grid is None else tuple(grid)
    if not grid:
        raise ValueError("angle grid is empty")
    elem_db = element.power_db if grid is element.angles else element.interpolate(grid)
    geom = make_ula(spec.num_lenses, spec.pitch, wavelength)
    w = steering_vector(geom, steer)
    af = steering_matrix(geom, grid) @ w.conj()
    return Beampattern(grid, elem_db + 20 * np.log10(np.maximum(np.abs(af), _MAG_FLOOR)))


def load_measured_pattern(path) -> Beampattern:
    """Read a measured single-lens pattern from the beampattern CSV format."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        try:
            return parse_beampattern_csv(fh)
        except PatternParseError as exc:
            raise PatternParseError(f"{path}: {exc}", exc.line) from None


def half_power_width_deg(pattern: Beampattern) -> float:
    """Width of the main lobe at 3 dB below the peak, along the sweep axis."""
    x = pattern.sweep_axis()
    p = pattern.power_db - pattern.power_db.max()
    i = int(np.argmax(p))
    lo = i
    while lo > 0 and p[lo - 1] >= -3.0:
        lo -= 1
    hi = i
    while hi < len(p) - 1 and p[hi + 1] >= -3.0:
        hi += 1

    def cross(a: int, b: int) -> float:
        # linear interpolation of the -3 dB crossing between samples a and b
        if p[a] == p[b]:
            return x[a]
        return x[a] + (x[b] - x[a]) * (-3.0 - p[a]) / (p[b] - p[a])

    left = cross(lo - 1, lo) if lo > 0 else x[0]
    right = cross(hi + 1, hi) if hi < len(p) - 1 else x[-1]
    return float(right - left)
