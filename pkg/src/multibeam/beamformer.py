"""Hybrid and fully-digital precoding/combining, plus the digital beam bank.

Transmit side: x = F_RF F_BB a.  Receive side: y = W_BB^H W_RF^H r.
``phase_bits = 0`` means the analog stage is unconstrained (fully digital);
``phase_bits > 0`` restricts every analog entry to a unit-modulus value on a
2**phase_bits point phase grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array import Angle, ArrayGeometry, steering_vector


def _on_phase_grid(m: np.ndarray, phase_bits: int, tol: float = 1e-9) -> bool:
    if not np.allclose(np.abs(m), 1.0, atol=tol):
        return False
    step = 2 * math.pi / 2**phase_bits
    k = np.angle(m) / step
    return bool(np.allclose(k, np.round(k), atol=tol))


def _check_stage(rf: np.ndarray, bb: np.ndarray, phase_bits: int, name: str) -> None:
    if rf.ndim != 2 or bb.ndim != 2:
        raise ValueError(f"{name}: RF and baseband stages must be matrices")
    if rf.shape[1] != bb.shape[0]:
        raise ValueError(f"{name}: RF stage has {rf.shape[1]} chains, baseband stage {bb.shape[0]}")
    if rf.shape[1] > rf.shape[0]:
        raise ValueError(f"{name}: more RF chains ({rf.shape[1]}) than antennas ({rf.shape[0]})")
    if bb.shape[1] > bb.shape[0]:
        raise ValueError(f"{name}: more streams ({bb.shape[1]}) than RF chains ({bb.shape[0]})")
    if phase_bits < 0:
        raise ValueError(f"{name}: phase_bits must be >= 0")
    if phase_bits > 0 and not _on_phase_grid(rf, phase_bits):
        raise ValueError(f"{name}: analog stage is not on the {phase_bits}-bit phase grid")


@dataclass(frozen=True)
class HybridConfig:
    f_rf: np.ndarray
    f_bb: np.ndarray
    phase_bits: int = 0

    def __post_init__(self) -> None:
        f_rf = np.atleast_2d(np.asarray(self.f_rf, dtype=complex))
        f_bb = np.atleast_2d(np.asarray(self.f_bb, dtype=complex))
        _check_stage(f_rf, f_bb, self.phase_bits, "precoder")
        object.__setattr__(self, "f_rf", f_rf)
        object.__setattr__(self, "f_bb", f_bb)

    @property
    def num_streams(self) -> int:
        return self.f_bb.shape[1]

    def matrix(self) -> np.ndarray:
        return self.f_rf @ self.f_bb


@dataclass(frozen=True)
class CombinerConfig:
    w_rf: np.ndarray
    w_bb: np.ndarray
    phase_bits: int = 0

    def __post_init__(self) -> None:
        w_rf = np.atleast_2d(np.asarray(self.w_rf, dtype=complex))
        w_bb = np.atleast_2d(np.asarray(self.w_bb, dtype=complex))
        _check_stage(w_rf, w_bb, self.phase_bits, "combiner")
        object.__setattr__(self, "w_rf", w_rf)
        object.__setattr__(self, "w_bb", w_bb)

    @property
    def num_streams(self) -> int:
        return self.w_bb.shape[1]

    def matrix(self) -> np.ndarray:
        return self.w_rf @ self.w_bb


def check_stream_count(pre: HybridConfig, comb: CombinerConfig) -> None:
    """N_S must not exceed min(N_RF, M_RF) and must agree on both ends."""
    if pre.num_streams != comb.num_streams:
        raise ValueError("precoder and combiner disagree on the stream count")
    if pre.num_streams > min(pre.f_rf.shape[1], comb.w_rf.shape[1]):
        raise ValueError("stream count exceeds min(N_RF, M_RF)")


def precode(cfg: HybridConfig, a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if a.shape[0] != cfg.num_streams:
        raise ValueError(f"expected {cfg.num_streams} symbol rows, got {a.shape[0]}")
    return cfg.f_rf @ (cfg.f_bb @ a)


def combine(cfg: CombinerConfig, r) -> np.ndarray:
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    if r.shape[0] != cfg.w_rf.shape[0]:
        raise ValueError(f"expected {cfg.w_rf.shape[0]} antenna rows, got {r.shape[0]}")
    return cfg.w_bb.conj().T @ (cfg.w_rf.conj().T @ r)


def quantize_phases(matrix, phase_bits: int) -> np.ndarray:
    """Snap every entry to unit modulus on the 2**phase_bits phase grid.

    Exact ties between two grid points go to the larger phase.
    """
    if phase_bits < 1:
        raise ValueError("phase_bits must be >= 1 (0 means unconstrained)")
    m = np.asarray(matrix, dtype=complex)
    step = 2 * math.pi / 2**phase_bits
    k = np.floor(np.angle(m) / step + 0.5)
    return np.exp(1j * step * k)


@dataclass(frozen=True)
class BeamBank:
    """B digital beams over an M-element array; ``weights`` has shape (B, M)."""

    weights: np.ndarray
    labels: tuple[Angle, ...]

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.asarray(self.weights, dtype=complex))
        labels = tuple(self.labels)
        if w.shape[0] < 1:
            raise ValueError("beam bank needs at least one beam")
        if len(labels) != w.shape[0]:
            raise ValueError(f"{w.shape[0]} weight vectors but {len(labels)} labels")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", labels)

    @property
    def num_beams(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    def subset(self, index: int) -> "BeamBank":
        return BeamBank(self.weights[index : index + 1], (self.labels[index],))

    def to_json(self) -> str:
        doc = {
            "m": self.m,
            "beams": [
                {
                    "label_az_deg": lab.azimuth_deg,
                    "label_el_deg": lab.elevation_deg,
                    "weights": [{"re": z.real, "im": z.imag} for z in w],
                }
                for lab, w in zip(self.labels, self.weights)
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BeamBank":
        doc = json.loads(text)
        beams = doc["beams"]
        weights = np.array([[complex(z["re"], z["im"]) for z in b["weights"]] for b in beams])
        if weights.shape[1] != doc["m"]:
            raise ValueError("weight vector length disagrees with m")
        labels = tuple(Angle.deg(b["label_az_deg"], b["label_el_deg"]) for b in beams)
        return cls(weights, labels)


def matched_beam_bank(geom: ArrayGeometry, directions: Sequence[Angle]) -> BeamBank:
    """Beams with weights a(direction) / M, so w^H a(direction) = 1."""
    directions = tuple(directions)
    if not directions:
        raise ValueError("need at least one beam direction")
    m = geom.num_elements
    w = np.array([steering_vector(geom, d) / m for d in directions])
    return BeamBank(w, directions)


def apply_beam_bank(bank: BeamBank, r) -> np.ndarray:
    """All B beams applied to the same M x T block in one pass: out = W^* r.

    This is one (B x M) @ (M x T) product, i.e. exactly B*M*T complex
    multiply-accumulates; the received block is never re-captured per beam.
    """
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    if r.shape[0] != bank.m:
        raise ValueError(f"expected {bank.m} antenna rows, got {r.shape[0]}")
    return bank.weights.conj() @ r


def beam_bank_from_combiner(cfg: CombinerConfig, labels: Sequence[Angle] | None = None) -> BeamBank:
    """Digital bank reproducing a hybrid combiner: one beam per column of W_RF W_BB."""
    w = cfg.matrix().T
    if labels is None:
        labels = (Angle(),) * w.shape[0]
    return BeamBank(w, tuple(labels))
