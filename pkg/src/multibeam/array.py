"""Array geometry, steering vectors, array factors and beampatterns.

Coordinate frame: x is the horizontal array axis, y the vertical axis and z
boresight. A direction with azimuth ``az`` and elevation ``el`` has unit
vector ``(cos(el) sin(az), sin(el), cos(el) cos(az))``, so broadside
``(0, 0)`` is orthogonal to any array laid out in the x-y plane.

Steering vectors use the receive sign convention ``exp(+j k <u, p>)`` and are
*not* normalized (norm = sqrt(N)). Array factors use the conjugate-linear
inner product ``w^H a``, the same convention as the combiners ``W^H`` in the
hybrid MIMO model, so a beam matched to ``theta0`` has weights
``a(theta0) / N``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_HEADER = ("azimuth_deg", "elevation_deg", "power_db")

# Floor applied to |AF| before taking dB so exact nulls stay finite.
_MAG_FLOOR = 1e-15


def _wrap(az: float) -> float:
    wrapped = math.remainder(az, 2 * math.pi)
    # remainder maps +pi to +pi or -pi depending on rounding; keep +pi.
    if wrapped == -math.pi and az > 0:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class Angle:
    """Direction in radians. Azimuth is wrapped into [-pi, pi]."""

    azimuth: float = 0.0
    elevation: float = 0.0

    def __post_init__(self) -> None:
        az, el = float(self.azimuth), float(self.elevation)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise ValueError(f"angle must be finite, got ({az}, {el})")
        if abs(el) > math.pi / 2 + 1e-12:
            raise ValueError(f"elevation {el} rad outside [-pi/2, pi/2]")
        object.__setattr__(self, "azimuth", _wrap(az))
        object.__setattr__(self, "elevation", el)

    @classmethod
    def deg(cls, azimuth: float = 0.0, elevation: float = 0.0) -> "Angle":
        return cls(math.radians(azimuth), math.radians(elevation))

    @property
    def azimuth_deg(self) -> float:
        return math.degrees(self.azimuth)

    @property
    def elevation_deg(self) -> float:
        return math.degrees(self.elevation)

    def unit_vector(self) -> np.ndarray:
        ce = math.cos(self.elevation)
        return np.array(
            [ce * math.sin(self.azimuth), math.sin(self.elevation), ce * math.cos(self.azimuth)]
        )

    def __neg__(self) -> "Angle":
        return Angle(-self.azimuth, -self.elevation)


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions (N x 3, meters) and carrier wavelength (meters)."""

    element_positions: np.ndarray
    carrier_wavelength: float

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.element_positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("element_positions must be a non-empty N x 3 array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("element positions must be finite")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("two elements share the same position")
        if not self.carrier_wavelength > 0:
            raise ValueError("carrier_wavelength must be positive")
        pos.flags.writeable = False
        object.__setattr__(self, "element_positions", pos)
        object.__setattr__(self, "carrier_wavelength", float(self.carrier_wavelength))

    @property
    def num_elements(self) -> int:
        return self.element_positions.shape[0]

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.carrier_wavelength


def make_ula(n: int, spacing: float, wavelength: float) -> ArrayGeometry:
    """Uniform linear array along x, centered on the origin."""
    if int(n) != n or n < 1:
        raise ValueError(f"element count must be a positive integer, got {n}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if not wavelength > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    x = (np.arange(n) - (n - 1) / 2) * spacing
    pos = np.zeros((int(n), 3))
    pos[:, 0] = x
    return ArrayGeometry(pos, wavelength)


def direction_vectors(angles: Sequence[Angle]) -> np.ndarray:
    az = np.array([a.azimuth for a in angles])
    el = np.array([a.elevation for a in angles])
    return np.stack([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)], axis=-1)


def steering_vector(geom: ArrayGeometry, angle: Angle) -> np.ndarray:
    """Array response exp(+j k <u, p_k>), unit-modulus entries, norm sqrt(N)."""
    phase = geom.wavenumber * (geom.element_positions @ angle.unit_vector())
    return np.exp(1j * phase)


def steering_matrix(geom: ArrayGeometry, angles: Sequence[Angle]) -> np.ndarray:
    """Steering vectors for many angles at once, shape (len(angles), N)."""
    phase = geom.wavenumber * (direction_vectors(angles) @ geom.element_positions.T)
    return np.exp(1j * phase)


def _check_weights(weights, geom: ArrayGeometry) -> np.ndarray:
    w = np.asarray(weights, dtype=complex).ravel()
    if w.size != geom.num_elements:
        raise ValueError(f"expected {geom.num_elements} weights, got {w.size}")
    return w


def array_factor(weights, geom: ArrayGeometry, angle: Angle) -> complex:
    """Return w^H a(angle) (conjugate-linear in the weights)."""
    w = _check_weights(weights, geom)
    return complex(np.vdot(w, steering_vector(geom, angle)))


@dataclass(frozen=True)
class Beampattern:
    angles: tuple[Angle, ...]
    power_db: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        angles = tuple(self.angles)
        p = np.asarray(self.power_db, dtype=float).ravel()
        if len(angles) != p.size:
            raise ValueError(f"{len(angles)} angles but {p.size} power values")
        if self.normalized and p.size and abs(p.max()) > 1e-9:
            raise ValueError("normalized pattern must peak at 0 dB")
        p.flags.writeable = False
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "power_db", p)

    @property
    def azimuth_deg(self) -> np.ndarray:
        return np.array([a.azimuth_deg for a in self.angles])

    @property
    def elevation_deg(self) -> np.ndarray:
        return np.array([a.elevation_deg for a in self.angles])

    def peak(self) -> tuple[Angle, float]:
        i = int(np.argmax(self.power_db))
        return self.angles[i], float(self.power_db[i])

    def normalize(self) -> "Beampattern":
        return Beampattern(self.angles, self.power_db - self.power_db.max(), normalized=True)

    def _sweeps_azimuth(self) -> bool:
        az = self.azimuth_deg
        return az.size == 1 or np.ptp(az) > 0

    def sweep_axis(self) -> np.ndarray:
        """Coordinate the grid varies along (azimuth unless it is constant), in degrees."""
        return self.azimuth_deg if self._sweeps_azimuth() else self.elevation_deg

    def interpolate(self, angles: Sequence[Angle]) -> np.ndarray:
        """Linear interpolation in dB along the sweep axis.

        Raises ValueError if any requested angle falls outside the grid.
        """
        src = self.sweep_axis()
        use_az = self._sweeps_azimuth()
        q = np.array([a.azimuth_deg if use_az else a.elevation_deg for a in angles])
        lo, hi = src.min(), src.max()
        tol = 1e-9
        if q.size and (q.min() < lo - tol or q.max() > hi + tol):
            raise ValueError(
                f"requested angles [{q.min():.4g}, {q.max():.4g}] deg not covered by "
                f"pattern grid [{lo:.4g}, {hi:.4g}] deg"
            )
        order = np.argsort(src)
        return np.interp(q, src[order], self.power_db[order])


def beampattern(weights, geom: ArrayGeometry, grid: Sequence[Angle], normalize: bool = False) -> Beampattern:
    grid = tuple(grid)
    if not grid:
        raise ValueError("angle grid is empty")
    w = _check_weights(weights, geom)
    af = steering_matrix(geom, grid) @ w.conj()
    power_db = 20 * np.log10(np.maximum(np.abs(af), _MAG_FLOOR))
    pat = Beampattern(grid, power_db)
    return pat.normalize() if normalize else pat


def azimuth_grid(start_deg: float = -90.0, stop_deg: float = 90.0, step_deg: float = 0.1,
                 elevation_deg: float = 0.0) -> tuple[Angle, ...]:
    """Inclusive azimuth cut, -90..90 deg in 0.1 deg steps by default."""
    if step_deg <= 0:
        raise ValueError("step must be positive")
    n = int(round((stop_deg - start_deg) / step_deg)) + 1
    az = start_deg + step_deg * np.arange(n)
    return tuple(Angle.deg(a, elevation_deg) for a in az)


def beampattern_to_csv(pattern: Beampattern) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for a, p in zip(pattern.angles, pattern.power_db):
        writer.writerow([f"{a.azimuth_deg:.17g}", f"{a.elevation_deg:.17g}", f"{p:.17g}"])
    return buf.getvalue()


def save_beampattern(pattern: Beampattern, path) -> Path:
    path = Path(path)
    path.write_text(beampattern_to_csv(pattern), encoding="utf-8", newline="")
    return path


class PatternParseError(ValueError):
    """Malformed beampattern CSV. ``line`` is 1-based, or None for whole-file errors."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_beampattern_csv(lines: Iterable[str]) -> Beampattern:
    rows = list(csv.reader(lines))
    if not rows:
        raise PatternParseError("empty file")
    if tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise PatternParseError(f"expected header {','.join(CSV_HEADER)}", 1)
    angles: list[Angle] = []
    power: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise PatternParseError(f"expected 3 columns, got {len(row)}", lineno)
        try:
            az, el, p = (float(v) for v in row)
        except ValueError:
            raise PatternParseError(f"non-numeric value in {row!r}", lineno) from None
        if not all(math.isfinite(v) for v in (az, el, p)):
            raise PatternParseError("non-finite value", lineno)
        try:
            angles.append(Angle.deg(az, el))
        except ValueError as exc:
            raise PatternParseError(str(exc), lineno) from None
        power.append(p)
        if len(angles) >= 2:
            prev, cur = angles[-2], angles[-1]
            d_az = cur.azimuth - prev.azimuth
            d_el = cur.elevation - prev.elevation
            first = angles[0].azimuth != angles[1].azimuth
            step = d_az if first else d_el
            if step <= 0 or (first and d_el != 0) or (not first and d_az != 0):
                raise PatternParseError("angle grid is not strictly increasing", lineno)
    if not angles:
        raise PatternParseError("no data rows")
    return Beampattern(tuple(angles), np.array(power))
