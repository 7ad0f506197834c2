"""Multi-stream QPSK link: modem, frequency sub-channels and the beam x stream decode grid.

The transmitter sends S independent streams, each beamformed toward its own
direction and placed on its own frequency sub-channel. The receiver forms B
digital beams from one captured block and tries to synchronize and decode
every stream on every beam.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import correlate

from .array import Angle, ArrayGeometry, steering_vector
from .beamformer import BeamBank, apply_beam_bank

PREAMBLE_LENGTH = 64
LOCK_THRESHOLD = 0.6
MAX_EXPORTED_POINTS = 1024

# Gray map indexed by 2*b1 + b0
_CONSTELLATION = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2)


def qpsk_modulate(bits) -> np.ndarray:
    """Gray-mapped QPSK: 00 -> (1+j), 01 -> (-1+j), 11 -> (-1-j), 10 -> (1-j), all / sqrt(2)."""
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {b.size}")
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bits must be 0 or 1")
    # first bit picks the sign of Q, second bit the sign of I
    return _CONSTELLATION[2 * b[1::2] + b[0::2]]


def qpsk_demodulate(symbols) -> np.ndarray:
    """Sign decisions on I and Q; exact zeros decide toward bit 0."""
    s = np.asarray(symbols, dtype=complex).ravel()
    bits = np.empty(2 * s.size, dtype=np.int8)
    bits[0::2] = s.imag < 0
    bits[1::2] = s.real < 0
    return bits


def evm_percent(measured, reference) -> float:
    m = np.asarray(measured, dtype=complex).ravel()
    r = np.asarray(reference, dtype=complex).ravel()
    if m.size != r.size:
        raise ValueError(f"length mismatch: {m.size} vs {r.size}")
    return 100 * math.sqrt(np.mean(np.abs(m - r) ** 2) / np.mean(np.abs(r) ** 2))


def ber(bits, ref_bits) -> float:
    b = np.asarray(bits).ravel()
    r = np.asarray(ref_bits).ravel()
    if b.size != r.size:
        raise ValueError(f"length mismatch: {b.size} vs {r.size}")
    if b.size == 0:
        return 0.0
    return float(np.count_nonzero(b != r)) / b.size


def rrc_taps(sps: int, rolloff: float, span: int) -> np.ndarray:
    """Unit-energy root-raised-cosine filter, ``span`` symbols long."""
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    h = np.empty_like(t)
    b = rolloff
    for i, ti in enumerate(t):
        if ti == 0:
            h[i] = 1 + b * (4 / math.pi - 1)
        elif b > 0 and abs(abs(4 * b * ti) - 1) < 1e-12:
            h[i] = b / math.sqrt(2) * (
                (1 + 2 / math.pi) * math.sin(math.pi / (4 * b))
                + (1 - 2 / math.pi) * math.cos(math.pi / (4 * b))
            )
        else:
            num = math.sin(math.pi * ti * (1 - b)) + 4 * b * ti * math.cos(math.pi * ti * (1 + b))
            h[i] = num / (math.pi * ti * (1 - (4 * b * ti) ** 2))
    return h / np.linalg.norm(h)


def zadoff_chu(length: int, root: int = 1) -> np.ndarray:
    if math.gcd(length, root) != 1:
        raise ValueError("Zadoff-Chu root must be coprime with the length")
    n = np.arange(length)
    shift = 0 if length % 2 == 0 else 1
    return np.exp(-1j * math.pi * root * n * (n + shift) / length)


@dataclass(frozen=True)
class SubchannelPlan:
    offsets_hz: tuple[float, ...]
    symbol_rate: float
    sample_rate: float
    rolloff: float = 0.25
    span: int = 8

    def __post_init__(self) -> None:
        offsets = tuple(float(f) for f in self.offsets_hz)
        object.__setattr__(self, "offsets_hz", offsets)
        if not offsets:
            raise ValueError("plan needs at least one sub-channel")
        if not (self.symbol_rate > 0 and self.sample_rate > 0):
            raise ValueError("symbol and sample rates must be positive")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("rolloff must be in [0, 1]")
        ratio = self.sample_rate / self.symbol_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("sample_rate must be an integer multiple of symbol_rate")
        if self.sample_rate < 2 * (max(abs(f) for f in offsets) + self.symbol_rate):
            raise ValueError("sample_rate too low for the outermost sub-channel")
        srt = sorted(offsets)
        min_gap = self.symbol_rate * (1 + self.rolloff)
        for lo, hi in zip(srt, srt[1:]):
            if hi - lo <= min_gap:
                raise ValueError(
                    f"sub-channels at {lo} and {hi} Hz are closer than {min_gap} Hz"
                )

    @property
    def num_subchannels(self) -> int:
        return len(self.offsets_hz)

    @property
    def sps(self) -> int:
        return int(round(self.sample_rate / self.symbol_rate))

    def pulse(self) -> np.ndarray:
        return rrc_taps(self.sps, self.rolloff, self.span)


def default_plan() -> SubchannelPlan:
    """245.76 MHz sampling (ADC rate 1966.08 MHz / 8), four 15.36 MBd sub-channels."""
    return SubchannelPlan((-61.44e6, -30.72e6, 30.72e6, 61.44e6), 15.36e6, 245.76e6)


def _check_index(plan: SubchannelPlan, index: int) -> None:
    if not 0 <= index < plan.num_subchannels:
        raise ValueError(f"sub-channel {index} not in plan with {plan.num_subchannels} slots")


def build_subchannel(symbols, plan: SubchannelPlan, index: int) -> np.ndarray:
    """Pulse-shape ``symbols`` and shift them to sub-channel ``index``.

    Output length is (n - 1) * sps + len(pulse); symbol k peaks at sample
    k * sps + span * sps / 2.
    """
    _check_index(plan, index)
    s = np.asarray(symbols, dtype=complex).ravel()
    if s.size == 0:
        return np.zeros(0, dtype=complex)
    up = np.zeros((s.size - 1) * plan.sps + 1, dtype=complex)
    up[:: plan.sps] = s
    shaped = np.convolve(up, plan.pulse())
    n = np.arange(shaped.size)
    return shaped * np.exp(2j * math.pi * plan.offsets_hz[index] / plan.sample_rate * n)


@dataclass(frozen=True)
class TxStreamSpec:
    direction: Angle
    subchannel_index: int
    bits: np.ndarray
    preamble: np.ndarray | None = None  # bits; None selects a Zadoff-Chu preamble

    def __post_init__(self) -> None:
        b = np.asarray(self.bits, dtype=np.int8).ravel()
        object.__setattr__(self, "bits", b)
        if self.preamble is not None:
            object.__setattr__(self, "preamble", np.asarray(self.preamble, dtype=np.int8).ravel())

    def preamble_symbols(self) -> np.ndarray:
        if self.preamble is not None:
            return qpsk_modulate(self.preamble)
        return zadoff_chu(PREAMBLE_LENGTH, 2 * self.subchannel_index + 1)

    def payload_symbols(self) -> np.ndarray:
        return qpsk_modulate(self.bits)

    def frame_symbols(self) -> np.ndarray:
        return np.concatenate([self.preamble_symbols(), self.payload_symbols()])


def random_streams(directions: Sequence[Angle], payload_bits: int, seed: int) -> list[TxStreamSpec]:
    """One stream per direction on sub-channel i, with seeded random payloads."""
    rng = np.random.default_rng(seed)
    return [
        TxStreamSpec(d, i, rng.integers(0, 2, size=payload_bits, dtype=np.int8))
        for i, d in enumerate(directions)
    ]


def transmit_scene(specs: Sequence[TxStreamSpec], tx_geom: ArrayGeometry,
                   plan: SubchannelPlan) -> np.ndarray:
    """Superpose per-stream transmit beams a_t(direction)/N, each on its own sub-channel."""
    n = tx_geom.num_elements
    if not specs:
        return np.zeros((n, 0), dtype=complex)
    used = [s.subchannel_index for s in specs]
    if len(set(used)) != len(used):
        raise ValueError(f"streams share a sub-channel: {used}")
    waves = [build_subchannel(s.frame_symbols(), plan, s.subchannel_index) for s in specs]
    t = max(w.size for w in waves)
    x = np.zeros((n, t), dtype=complex)
    for spec, w in zip(specs, waves):
        beam = steering_vector(tx_geom, spec.direction) / n
        x[:, : w.size] += np.outer(beam, w)
    return x


@dataclass
class DecodeCell:
    constellation: np.ndarray
    evm_percent: float
    ber: float
    locked: bool
    correlation: float
    timing: int


@dataclass
class DecodeGridResult:
    """cells[b][s]: beam b (row) decoding stream s (column)."""

    cells: list[list[DecodeCell]]
    rx_beams: tuple[Angle, ...]
    tx_directions: tuple[Angle, ...]
    subchannels_hz: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.cells), len(self.cells[0]) if self.cells else 0

    def metric(self, name: str) -> np.ndarray:
        return np.array([[getattr(c, name) for c in row] for row in self.cells])

    def to_json(self) -> str:
        cells = []
        for b, row in enumerate(self.cells):
            for s, c in enumerate(row):
                pts = c.constellation[:MAX_EXPORTED_POINTS]
                cells.append(
                    {
                        "rx_beam": b,
                        "tx_stream": s,
                        "rx_beam_deg": self.rx_beams[b].azimuth_deg,
                        "tx_stream_deg": self.tx_directions[s].azimuth_deg,
                        "subchannel_hz": self.subchannels_hz[s],
                        "evm_percent": c.evm_percent,
                        "ber": c.ber,
                        "locked": c.locked,
                        "correlation": c.correlation,
                        "constellation": [{"re": z.real, "im": z.imag} for z in pts],
                    }
                )
        return json.dumps({"rows": len(self.cells), "cols": self.shape[1], "cells": cells}, indent=1)

    def constellation_csv(self, b: int, s: int) -> str:
        buf = io.StringIO()
        buf.write("re,im\n")
        for z in self.cells[b][s].constellation[:MAX_EXPORTED_POINTS]:
            buf.write(f"{z.real:.17g},{z.imag:.17g}\n")
        return buf.getvalue()


def decode_stream(y, plan: SubchannelPlan, spec: TxStreamSpec) -> DecodeCell:
    """Synchronize and decode one stream from one beam output ``y``.

    Down-mix, matched filter, preamble cross-correlation for timing, one
    complex least-squares tap from the preamble for phase/gain, QPSK slicing.
    """
    y = np.asarray(y, dtype=complex).ravel()
    sps = plan.sps
    pre = spec.preamble_symbols()
    ref = spec.payload_symbols()
    n = np.arange(y.size)
    z = y * np.exp(-2j * math.pi * plan.offsets_hz[spec.subchannel_index] / plan.sample_rate * n)
    z = np.convolve(z, plan.pulse())

    template = np.zeros((pre.size - 1) * sps + 1, dtype=complex)
    template[::sps] = pre
    if z.size < template.size:
        return _unlocked(ref, np.zeros(ref.size, dtype=complex), 0.0, 0)
    corr = correlate(z, template, mode="valid", method="fft")
    mask = np.zeros(template.size)
    mask[::sps] = 1.0
    energy = correlate(np.abs(z) ** 2, mask, mode="valid", method="fft")
    tau = int(np.argmax(np.abs(corr)))
    pre_energy = float(np.vdot(pre, pre).real)
    rho = abs(corr[tau]) / math.sqrt(max(energy[tau], 1e-300) * pre_energy)
    rho = min(rho, 1.0)

    start = tau + pre.size * sps
    idx = start + sps * np.arange(ref.size)
    padded = np.concatenate([z, np.zeros(max(0, idx[-1] + 1 - z.size) if idx.size else 0)])
    raw = padded[idx] if idx.size else np.zeros(0, dtype=complex)
    tap = corr[tau] / pre_energy
    sym = raw / tap if tap != 0 else raw
    evm = evm_percent(sym, ref) if ref.size else 0.0
    if rho < LOCK_THRESHOLD:
        return _unlocked(ref, sym, rho, tau, evm)
    return DecodeCell(sym, evm, ber(qpsk_demodulate(sym), spec.bits), True, rho, tau)


def _unlocked(ref, sym, rho, tau, evm=None) -> DecodeCell:
    if evm is None:
        evm = evm_percent(sym, ref) if ref.size else 0.0
    return DecodeCell(np.asarray(sym), evm, 0.5, False, float(rho), int(tau))


def decode_grid(r, bank: BeamBank, plan: SubchannelPlan,
                specs: Sequence[TxStreamSpec]) -> DecodeGridResult:
    """Form every beam from the single block ``r`` and decode every stream on each."""
    beams = apply_beam_bank(bank, r)
    cells = [[decode_stream(beams[b], plan, s) for s in specs] for b in range(bank.num_beams)]
    return DecodeGridResult(cells, bank.labels, tuple(s.direction for s in specs),
                            tuple(plan.offsets_hz[s.subchannel_index] for s in specs))


def analog_decode_grid(r, bank: BeamBank, plan: SubchannelPlan,
                       specs: Sequence[TxStreamSpec]) -> tuple[DecodeGridResult, int]:
    """Same grid the way a single-beam analog receiver would have to get it.

    Every (beam, stream) pair is a separate capture/synchronization trial;
    ``r`` is replayed for each so results can be compared with
    :func:`decode_grid`. Returns the grid and the number of trials.
    """
    cells = []
    trials = 0
    for b in range(bank.num_beams):
        row = []
        for s in specs:
            y = apply_beam_bank(bank.subset(b), r)[0]
            row.append(decode_stream(y, plan, s))
            trials += 1
        cells.append(row)
    grid = DecodeGridResult(cells, bank.labels, tuple(s.direction for s in specs),
                            tuple(plan.offsets_hz[s.subchannel_index] for s in specs))
    return grid, trials


@dataclass(frozen=True)
class SyncBudget:
    mode: str
    n_directions: int
    trials: int


def sync_trial_count(n: int, mode: str) -> SyncBudget:
    """Synchronization trials to cover n Tx x n Rx directions.

    An analog (single-beam) node pair must try every direction pair; a fully
    digital receiver forms all beams from one capture.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    if mode == "analog":
        return SyncBudget(mode, n, n * n)
    if mode == "digital":
        return SyncBudget(mode, n, 1)
    raise ValueError(f"unknown beamforming mode {mode!r}")


def noise_variance_for_snr(r_clean, snr_db: float) -> float:
    """Per-element noise variance giving ``snr_db`` against the mean per-element signal power."""
    r = np.asarray(r_clean, dtype=complex)
    return float(np.mean(np.abs(r) ** 2)) / 10 ** (snr_db / 10)
