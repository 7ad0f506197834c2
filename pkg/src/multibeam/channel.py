"""Clustered (extended Saleh-Valenzuela) mm-wave channel synthesis.

The narrowband channel is

    H = sqrt(N M / (C L)) * sum_{c,l} alpha_{c,l} a_r(aoa_{c,l}) a_t(aod_{c,l})^H

with unit-norm array responses a_r, a_t (the raw steering vectors of
:mod:`multibeam.array` divided by sqrt(M) and sqrt(N)), so that
E ||H||_F^2 = N M when E|alpha|^2 = 1.

A tapped (wideband) extension places each subpath's rank-1 term on the
sample tap nearest to its delay; summing the taps gives back the narrowband H.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array import Angle, ArrayGeometry, steering_matrix


@dataclass(frozen=True)
class ClusterParams:
    num_clusters: int
    subpaths_per_cluster: int
    angle_spread: float = 0.0
    gain_power: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clusters < 1 or self.subpaths_per_cluster < 1:
            raise ValueError("need at least one cluster and one subpath per cluster")
        if self.angle_spread < 0:
            raise ValueError("angle_spread must be non-negative")
        if not self.gain_power > 0:
            raise ValueError("gain_power must be positive")


@dataclass(frozen=True)
class Subpath:
    alpha: complex
    aoa: Angle
    aod: Angle
    delay: float = 0.0

    def __post_init__(self) -> None:
        if not self.delay >= 0:
            raise ValueError(f"subpath delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class SubpathSet:
    subpaths: tuple[Subpath, ...]
    num_clusters: int
    subpaths_per_cluster: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "subpaths", tuple(self.subpaths))
        if len(self.subpaths) != self.num_clusters * self.subpaths_per_cluster:
            raise ValueError(
                f"expected {self.num_clusters * self.subpaths_per_cluster} subpaths, "
                f"got {len(self.subpaths)}"
            )

    def __len__(self) -> int:
        return len(self.subpaths)

    def __iter__(self):
        return iter(self.subpaths)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p.alpha for p in self.subpaths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.subpaths])

    def to_json(self) -> str:
        rows = [
            {
                "alpha_re": p.alpha.real,
                "alpha_im": p.alpha.imag,
                "aoa_az_rad": p.aoa.azimuth,
                "aoa_el_rad": p.aoa.elevation,
                "aod_az_rad": p.aod.azimuth,
                "aod_el_rad": p.aod.elevation,
                "delay_s": p.delay,
            }
            for p in self.subpaths
        ]
        return json.dumps(rows, indent=1)

    @classmethod
    def from_json(cls, text: str, num_clusters: int | None = None) -> "SubpathSet":
        rows = json.loads(text)
        paths = tuple(
            Subpath(
                complex(r["alpha_re"], r["alpha_im"]),
                Angle(r["aoa_az_rad"], r["aoa_el_rad"]),
                Angle(r["aod_az_rad"], r["aod_el_rad"]),
                r["delay_s"],
            )
            for r in rows
        )
        c = num_clusters or len(paths)
        return cls(paths, c, len(paths) // c)


def single_path(alpha: complex, aoa: Angle, aod: Angle, delay: float = 0.0) -> SubpathSet:
    return SubpathSet((Subpath(complex(alpha), aoa, aod, delay),), 1, 1)


def draw_subpaths(params: ClusterParams, max_delay: float = 0.0) -> SubpathSet:
    """Draw one clustered channel realization, fully determined by ``params.seed``.

    Cluster centers are uniform in azimuth over [-pi/2, pi/2] (independently
    for arrival and departure) at zero elevation; subpath offsets are
    Laplacian with scale ``angle_spread``; gains are CN(0, gain_power); delays
    are uniform on [0, max_delay].
    """
    if max_delay < 0:
        raise ValueError("max_delay must be non-negative")
    rng = np.random.default_rng(params.seed)
    c, l = params.num_clusters, params.subpaths_per_cluster
    centers_aoa = rng.uniform(-math.pi / 2, math.pi / 2, size=c)
    centers_aod = rng.uniform(-math.pi / 2, math.pi / 2, size=c)
    # zero spread still consumes draws so the gain stream is spread-independent
    off_aoa = rng.laplace(0.0, 1.0, size=(c, l)) * params.angle_spread
    off_aod = rng.laplace(0.0, 1.0, size=(c, l)) * params.angle_spread
    alpha = math.sqrt(params.gain_power / 2) * (
        rng.standard_normal((c, l)) + 1j * rng.standard_normal((c, l))
    )
    delays = rng.uniform(0.0, max_delay, size=(c, l)) if max_delay > 0 else np.zeros((c, l))
    paths = tuple(
        Subpath(
            complex(alpha[i, j]),
            Angle(centers_aoa[i] + off_aoa[i, j]),
            Angle(centers_aod[i] + off_aod[i, j]),
            float(delays[i, j]),
        )
        for i in range(c)
        for j in range(l)
    )
    return SubpathSet(paths, c, l)


@dataclass(frozen=True)
class ChannelMatrix:
    """M x N complex channel (rows: receive elements, columns: transmit elements)."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        h = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if h.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel matrix has non-finite entries")
        object.__setattr__(self, "entries", h)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.m} {self.n}\n")
        for row in self.entries:
            vals = []
            for z in row:
                vals += [f"{z.real:.17g}", f"{z.imag:.17g}"]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ChannelMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise ValueError("missing '# M N' header")
        m, n = (int(v) for v in lines[0][1:].split())
        if len(lines) - 1 != m:
            raise ValueError(f"expected {m} rows, got {len(lines) - 1}")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        if data.shape != (m, 2 * n):
            raise ValueError(f"expected {2 * n} values per row")
        return cls(data[:, 0::2] + 1j * data[:, 1::2])


@dataclass(frozen=True)
class TappedChannel:
    taps: tuple[ChannelMatrix, ...]
    sample_rate: float

    def __post_init__(self) -> None:
        taps = tuple(self.taps)
        if not taps:
            raise ValueError("tapped channel needs at least one tap")
        if len({t.entries.shape for t in taps}) != 1:
            raise ValueError("all taps must share dimensions")
        object.__setattr__(self, "taps", taps)

    @property
    def m(self) -> int:
        return self.taps[0].m

    @property
    def n(self) -> int:
        return self.taps[0].n

    def stacked(self) -> np.ndarray:
        return np.stack([t.entries for t in self.taps])


def _rank_one_terms(subpaths: SubpathSet, tx: ArrayGeometry, rx: ArrayGeometry) -> np.ndarray:
    """Scaled per-subpath terms alpha a_r a_t^H, shape (P, M, N)."""
    n, m = tx.num_elements, rx.num_elements
    ar = steering_matrix(rx, [p.aoa for p in subpaths]) / math.sqrt(m)
    at = steering_matrix(tx, [p.aod for p in subpaths]) / math.sqrt(n)
    scale = math.sqrt(n * m / len(subpaths))
    return scale * subpaths.alphas[:, None, None] * ar[:, :, None] * at.conj()[:, None, :]


def assemble_narrowband(subpaths: SubpathSet, tx: ArrayGeometry, rx: ArrayGeometry) -> ChannelMatrix:
    return ChannelMatrix(_rank_one_terms(subpaths, tx, rx).sum(axis=0))


def assemble_wideband(subpaths: SubpathSet, tx: ArrayGeometry, rx: ArrayGeometry,
                      sample_rate: float, num_taps: int) -> TappedChannel:
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    if not sample_rate > 0:
        raise ValueError("sample_rate must be positive")
    span = num_taps / sample_rate
    if np.any(subpaths.delays >= span):
        raise ValueError(
            f"subpath delay {subpaths.delays.max():.3e} s exceeds tap span {span:.3e} s"
        )
    idx = np.minimum(np.rint(subpaths.delays * sample_rate).astype(int), num_taps - 1)
    terms = _rank_one_terms(subpaths, tx, rx)
    taps = np.zeros((num_taps, rx.num_elements, tx.num_elements), dtype=complex)
    for k, term in zip(idx, terms):
        taps[k] += term
    return TappedChannel(tuple(ChannelMatrix(t) for t in taps), sample_rate)


def complex_noise(shape, variance: float, seed) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    rng = np.random.default_rng(seed)
    return math.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_channel(ch: ChannelMatrix | TappedChannel, x, noise_variance: float = 0.0,
                  seed=None) -> np.ndarray:
    """Propagate N x T samples through ``ch`` and add white receiver noise.

    Tapped channels use linear convolution with zero prehistory, truncated to
    T output samples.
    """
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    if x.shape[0] != ch.n:
        raise ValueError(f"input has {x.shape[0]} rows, channel expects {ch.n}")
    if isinstance(ch, ChannelMatrix):
        y = ch.entries @ x
    else:
        t = x.shape[1]
        y = np.zeros((ch.m, t), dtype=complex)
        for d, tap in enumerate(ch.taps):
            if d >= t:
                break
            y[:, d:] += tap.entries @ x[:, : t - d]
    return y + complex_noise(y.shape, noise_variance, seed)


def normalization_statistic(params: ClusterParams, tx: ArrayGeometry, rx: ArrayGeometry,
                            draws: int) -> np.ndarray:
    """||H||_F^2 / (N M) for ``draws`` realizations seeded params.seed + i."""
    out = np.empty(draws)
    nm = tx.num_elements * rx.num_elements
    for i in range(draws):
        sp = draw_subpaths(
            ClusterParams(params.num_clusters, params.subpaths_per_cluster,
                          params.angle_spread, params.gain_power, params.seed + i)
        )
        h = assemble_narrowband(sp, tx, rx).entries
        out[i] = np.vdot(h, h).real / nm
    return out


def specular_channel(tx: ArrayGeometry, rx: ArrayGeometry, aods: Sequence[Angle],
                     aoas: Sequence[Angle], gains: Sequence[complex] | None = None) -> ChannelMatrix:
    """Deterministic multi-path channel with one unit cluster per (aod, aoa) pair."""
    if len(aods) != len(aoas):
        raise ValueError("need one arrival angle per departure angle")
    if gains is None:
        gains = [1.0] * len(aods)
    paths = tuple(Subpath(complex(g), a, d) for g, a, d in zip(gains, aoas, aods))
    return assemble_narrowband(SubpathSet(paths, len(paths), 1), tx, rx)
