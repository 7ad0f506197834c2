"""Per-chain RF impairments, ADC quantization, LO plan and digital calibration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

RF_MULTIPLIER = Fraction(7, 2)


@dataclass(frozen=True)
class ChainImpairment:
    gain_db: float = 0.0
    phase_deg: float = 0.0
    iq_gain: float = 1.0
    iq_phase_deg: float = 0.0
    dc_offset: complex = 0j

    def __post_init__(self) -> None:
        if not self.iq_gain > 0:
            raise ValueError("iq_gain must be positive")


@dataclass(frozen=True)
class LoPlan:
    """External LO and the RF carrier it produces (LO/2 to IF, LO*3 to RF)."""

    external_lo_hz: float
    rf_multiplier: Fraction = RF_MULTIPLIER

    def __post_init__(self) -> None:
        if not self.external_lo_hz > 0:
            raise ValueError("external LO frequency must be positive")
        if self.rf_multiplier != RF_MULTIPLIER:
            raise ValueError("the up/down-converters fix the RF multiplier at 7/2")

    @classmethod
    def for_rf(cls, rf_hz: float) -> "LoPlan":
        return cls(lo_frequency_for_rf(rf_hz))

    @property
    def rf_hz(self) -> float:
        return float(Fraction(self.external_lo_hz) * self.rf_multiplier)

    @property
    def if_lo_hz(self) -> float:
        return self.external_lo_hz / 2


def lo_frequency_for_rf(rf_hz) -> float:
    """External LO needed for carrier ``rf_hz`` (exact rational division by 3.5)."""
    rf = Fraction(rf_hz)
    if rf <= 0:
        raise ValueError("RF frequency must be positive")
    return float(rf / RF_MULTIPLIER)


@dataclass(frozen=True)
class QuantSpec:
    bits: int = 12
    full_scale: float = 1.0

    def __post_init__(self) -> None:
        if not 1 <= self.bits <= 24:
            raise ValueError("bits must be in [1, 24]")
        if not self.full_scale > 0:
            raise ValueError("full_scale must be positive")

    @property
    def step(self) -> float:
        return 2 * self.full_scale / 2**self.bits


def _quantize_real(v: np.ndarray, spec: QuantSpec) -> tuple[np.ndarray, int]:
    step = spec.step
    half = 2 ** (spec.bits - 1)
    clipped = int(np.count_nonzero(np.abs(v) > spec.full_scale))
    idx = np.clip(np.floor(v / step), -half, half - 1)
    return step * (idx + 0.5), clipped


def quantize(x, spec: QuantSpec) -> tuple[np.ndarray, int]:
    """Mid-rise quantizer applied to I and Q separately.

    Returns the quantized samples and the number of I/Q components that
    exceeded full scale and were clipped.
    """
    x = np.asarray(x, dtype=complex)
    i, ci = _quantize_real(x.real, spec)
    q, cq = _quantize_real(x.imag, spec)
    return i + 1j * q, ci + cq


def iq_coefficients(g: float, phi: float) -> tuple[complex, complex]:
    """(mu, nu) of the image model y = mu x + nu conj(x)."""
    if not g > 0:
        raise ValueError("I/Q gain ratio must be positive")
    mu = (1 + g * np.exp(1j * phi)) / 2
    nu = (1 - g * np.exp(-1j * phi)) / 2
    return complex(mu), complex(nu)


def image_rejection_ratio(g: float, phi: float) -> float:
    """IRR = |mu|^2 / |nu|^2 in dB (inf for a balanced receiver)."""
    mu, nu = iq_coefficients(g, phi)
    if nu == 0:
        return math.inf
    return 10 * math.log10(abs(mu) ** 2 / abs(nu) ** 2)


def apply_iq_imbalance(x, g: float, phi: float) -> np.ndarray:
    mu, nu = iq_coefficients(g, phi)
    x = np.asarray(x, dtype=complex)
    return mu * x + nu * x.conj()


def correct_iq_imbalance(y, g: float, phi: float) -> np.ndarray:
    """Invert :func:`apply_iq_imbalance` for a known (g, phi)."""
    mu, nu = iq_coefficients(g, phi)
    y = np.asarray(y, dtype=complex)
    det = abs(mu) ** 2 - abs(nu) ** 2
    if det <= 0:
        raise ValueError("imbalance is not invertible (|nu| >= |mu|)")
    return (mu.conjugate() * y - nu * y.conj()) / det


def apply_chain_impairments(streams, imps: Sequence[ChainImpairment]) -> np.ndarray:
    """Per chain: complex gain, then I/Q imbalance, then DC offset."""
    s = np.atleast_2d(np.asarray(streams, dtype=complex))
    if s.shape[0] != len(imps):
        raise ValueError(f"{s.shape[0]} chains but {len(imps)} impairment profiles")
    out = np.empty_like(s)
    for k, imp in enumerate(imps):
        g = 10 ** (imp.gain_db / 20) * np.exp(1j * math.radians(imp.phase_deg))
        y = apply_iq_imbalance(g * s[k], imp.iq_gain, math.radians(imp.iq_phase_deg))
        out[k] = y + imp.dc_offset
    return out


class EstimationError(RuntimeError):
    """Calibration input too weak or malformed for a trustworthy estimate."""


@dataclass(frozen=True)
class CalibrationResult:
    corrections: tuple[complex, ...]

    def __post_init__(self) -> None:
        corr = tuple(complex(c) for c in self.corrections)
        if not corr or corr[0] != 1:
            raise ValueError("chain 0 is the reference and must have correction 1")
        object.__setattr__(self, "corrections", corr)

    def to_json(self) -> str:
        return json.dumps(
            {
                "reference_chain": 0,
                "corrections": [{"re": c.real, "im": c.imag} for c in self.corrections],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        doc = json.loads(text)
        if doc.get("reference_chain", 0) != 0:
            raise ValueError("only chain 0 is supported as reference")
        return cls(tuple(complex(c["re"], c["im"]) for c in doc["corrections"]))


def tone_amplitude(x, tone_freq: float, sample_rate: float) -> complex:
    """Single-bin DFT projection of ``x`` onto exp(j 2 pi f t), normalized by T."""
    x = np.asarray(x, dtype=complex)
    n = np.arange(x.shape[-1])
    ref = np.exp(-2j * np.pi * tone_freq / sample_rate * n)
    return complex(x @ ref) / x.shape[-1]


def estimate_chain_mismatch(streams, tone_freq: float, sample_rate: float,
                            min_snr_db: float = 20.0) -> CalibrationResult:
    """Measure each chain's complex response to a common tone relative to chain 0."""
    s = np.atleast_2d(np.asarray(streams, dtype=complex))
    k, t = s.shape
    if t < 64:
        raise ValueError("need at least 64 samples per chain")
    n = np.arange(t)
    tone = np.exp(2j * np.pi * tone_freq / sample_rate * n)
    amps = s @ tone.conj() / t
    resid = s - amps[:, None] * tone
    # variance of a single-bin projection of white noise is sigma^2 / T
    bin_noise = np.mean(np.abs(resid) ** 2, axis=1) / t
    for ch in range(k):
        if abs(amps[ch]) ** 2 < 10 ** (min_snr_db / 10) * bin_noise[ch] or amps[ch] == 0:
            raise EstimationError(
                f"chain {ch}: reference tone less than {min_snr_db} dB above the bin noise floor"
            )
    corr = amps[0] / amps
    corr[0] = 1.0
    return CalibrationResult(tuple(corr))


def compensate(streams, cal: CalibrationResult) -> np.ndarray:
    """Multiply chain k by corrections[k]. Not idempotent: applying twice over-corrects."""
    s = np.atleast_2d(np.asarray(streams, dtype=complex))
    if s.shape[0] != len(cal.corrections):
        raise ValueError(f"{s.shape[0]} chains but {len(cal.corrections)} corrections")
    return s * np.asarray(cal.corrections)[:, None]


class ImbalanceError(ValueError):
    """Image tone at least as strong as the signal tone."""


def _tone_bins(x: np.ndarray, tone_freq: float | None, sample_rate: float | None) -> tuple[complex, complex]:
    t = x.size
    if tone_freq is None:
        spec = np.fft.fft(x)
        spec[0] = 0  # DC offset is not the calibration tone
        k = int(np.argmax(np.abs(spec)))
        # the image of bin k sits at -k; take the stronger of the pair as the signal
        a, b = spec[k] / t, spec[-k % t] / t
        return (a, b) if abs(a) >= abs(b) else (b, a)
    if sample_rate is None:
        raise ValueError("sample_rate is required with tone_freq")
    return tone_amplitude(x, tone_freq, sample_rate), tone_amplitude(x, -tone_freq, sample_rate)


def estimate_iq_imbalance(x, tone_freq: float | None = None,
                          sample_rate: float | None = None) -> tuple[float, float]:
    """Recover (g, phi) from a tone and its image.

    With y = mu s + nu conj(s) and s a tone of amplitude A, the signal bin is
    mu A and the image bin nu conj(A), so rho = A_image / conj(A_signal) =
    nu / conj(mu), and z = g e^{-j phi} = (1 - rho) / (1 + rho).
    Without ``tone_freq`` the strongest FFT bin is taken as the tone.
    """
    x = np.asarray(x, dtype=complex).ravel()
    a_sig, a_img = _tone_bins(x, tone_freq, sample_rate)
    if abs(a_sig) <= abs(a_img):
        raise ImbalanceError("image tone is not weaker than the signal tone")
    rho = a_img / a_sig.conjugate()
    z = (1 - rho) / (1 + rho)
    return float(abs(z)), float(-np.angle(z))


def measure_irr_db(x, tone_freq: float | None = None, sample_rate: float | None = None) -> float:
    """Measured signal-to-image power ratio of a tone capture, in dB."""
    a_sig, a_img = _tone_bins(np.asarray(x, dtype=complex).ravel(), tone_freq, sample_rate)
    if a_img == 0:
        return math.inf
    return 10 * math.log10(abs(a_sig) ** 2 / abs(a_img) ** 2)
