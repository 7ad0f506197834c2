"""Scenario files, preset orchestration and artifact emission.

A scenario is an INI file. ``[scenario]`` names the preset and the seed;
each preset then reads a fixed set of sections, one of which is mandatory::

    [scenario]
    preset = sync-budget
    seed = 1

    [sync]
    n = 4
    mode = analog

Every key has a default except ``preset`` and ``seed``. Unknown sections,
unknown keys and sections the preset does not use are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import channel as ch
from .array import Angle, Beampattern, PatternParseError, azimuth_grid, beampattern_to_csv, make_ula
from .beamformer import matched_beam_bank
from .frontend import (
    ChainImpairment,
    EstimationError,
    LoPlan,
    QuantSpec,
    apply_chain_impairments,
    compensate,
    correct_iq_imbalance,
    estimate_chain_mismatch,
    estimate_iq_imbalance,
    measure_irr_db,
    quantize,
)
from .lens import (
    FeedLayout,
    LensSpec,
    LensletArraySpec,
    feed_to_beam_angle,
    fpa_beampatterns,
    half_power_width_deg,
    lens_beampattern,
    lens_directivity_dbi,
    lenslet_pattern,
    load_measured_pattern,
)
from .modem import (
    SubchannelPlan,
    decode_grid,
    noise_variance_for_snr,
    random_streams,
    sync_trial_count,
    transmit_scene,
)

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_OUTPUT = 4


class ScenarioError(ValueError):
    def __init__(self, message: str, section: str | None = None, key: str | None = None,
                 line: int | None = None) -> None:
        self.section, self.key, self.line = section, key, line
        where = []
        if section:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        if line:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


def _int(text: str) -> int:
    return int(text.strip())


_ROTATION = "-45, -15, 15, 45"

# section -> key -> (parser, default); a default of ... means required
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "scenario": {
        "preset": (_choice("beampattern-28", "lenslet-28", "link-60", "calibrate",
                           "sync-budget", "channel-stats"), ...),
        "seed": (_int, ...),
        "output_dir": (str, "out"),
    },
    "lens": {
        "radius": (float, 0.05),
        "base_length": (float, 0.057),
        "focal_length": (_opt_float, None),
        "loss_db": (float, 1.5),
        "wavelength": (float, 0.0107),
    },
    "fpa": {
        "feeds": (_int, 4),
        "feed_pitch": (float, 0.0107),
        "subarray_n": (_int, 8),
        "subarray_spacing": (_opt_float, None),
    },
    "sweep": {
        "az_start_deg": (float, -90.0),
        "az_stop_deg": (float, 90.0),
        "az_step_deg": (float, 0.1),
        "samples_per_angle": (_int, 256),
        "sample_rate": (float, 1966.08e6),
        "tone_hz": (float, 100e6),
        "snr_db": (float, 40.0),
    },
    "adc": {
        "bits": (_int, 12),
        "full_scale": (float, 1.0),
    },
    "lenslet": {
        "num_lenses": (_int, 4),
        "pitch": (float, 0.10),
        "steer_deg": (_floats, (0.0,)),
        "element_csv": (str, ""),
    },
    "link": {
        "carrier_hz": (float, 60e9),
        "elements": (_int, 4),
        "spacing_wavelengths": (float, 0.5),
        "tx_directions_deg": (_floats, _floats(_ROTATION)),
        "rx_directions_deg": (_floats, _floats(_ROTATION)),
        "path_aoa_deg": (_floats, ()),
        "snr_db": (float, 20.0),
        "payload_bits": (_int, 10_000),
    },
    "plan": {
        "sample_rate": (float, 245.76e6),
        "symbol_rate": (float, 15.36e6),
        "offsets_hz": (_floats, (-61.44e6, -30.72e6, 30.72e6, 61.44e6)),
        "rolloff": (float, 0.25),
    },
    "calibration": {
        "tone_hz": (float, 30.72e6),
        "sample_rate": (float, 1966.08e6),
        "samples": (_int, 4096),
        "snr_db": (float, 40.0),
        "amplitude": (float, 0.5),
    },
    "impairments": {
        "gain_db": (_floats, (0.0, 1.2, -0.8, 2.1)),
        "phase_deg": (_floats, (0.0, 35.0, -70.0, 120.0)),
        "iq_gain": (_floats, (1.1, 0.95, 1.05, 1.02)),
        "iq_phase_deg": (_floats, (5.0, -3.0, 2.0, -4.0)),
        "dc_re": (_floats, (0.0, 0.01, -0.005, 0.0)),
        "dc_im": (_floats, (0.0, -0.004, 0.0, 0.008)),
    },
    "sync": {
        "n": (_int, 4),
        "mode": (_choice("analog", "digital", "both"), "both"),
    },
    "channel": {
        "tx_elements": (_int, 4),
        "rx_elements": (_int, 4),
        "spacing_wavelengths": (float, 0.5),
        "clusters": (_int, 2),
        "subpaths": (_int, 3),
        "angle_spread_deg": (float, 5.0),
        "gain_power": (float, 1.0),
        "draws": (_int, 10_000),
        "max_delay_s": (float, 0.0),
        "sample_rate": (float, 245.76e6),
        "num_taps": (_int, 1),
    },
}

# preset -> (required section, optional sections)
PRESETS: dict[str, tuple[str, tuple[str, ...]]] = {
    "beampattern-28": ("lens", ("fpa", "sweep", "adc")),
    "lenslet-28": ("lenslet", ("lens", "sweep")),
    "link-60": ("link", ("plan",)),
    "calibrate": ("calibration", ("impairments", "adc")),
    "sync-budget": ("sync", ()),
    "channel-stats": ("channel", ()),
}


@dataclass
class Scenario:
    preset: str
    seed: int
    output_dir: Path
    values: dict[str, dict[str, Any]]
    lines: dict[tuple[str, str | None], int] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def semantic(self) -> dict[str, Any]:
        """Everything that determines the emitted numbers (not where they go)."""
        return {"preset": self.preset, "seed": self.seed, "sections": self.values}

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


def parse_scenario(text: str, preset: str | None = None, seed: int | None = None,
                   output_dir: str | Path | None = None) -> Scenario:
    """Parse and validate scenario text; keyword arguments override the file."""
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0")
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError(f"duplicate key {exc.option!r}", exc.section, exc.option, exc.lineno)
    except configparser.DuplicateSectionError as exc:
        raise ScenarioError("duplicate section", exc.section, line=exc.lineno)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError("key outside any section", line=exc.lineno)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("malformed line", line=lineno)
    lines = _line_index(text)

    raw: dict[str, dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for sec in raw:
        if sec not in SCHEMA:
            raise ScenarioError("unknown section", sec, line=lines.get((sec, None)))
        for key in raw[sec]:
            if key not in SCHEMA[sec]:
                raise ScenarioError(f"unknown key {key!r}", sec, key, lines.get((sec, key)))

    head = raw.setdefault("scenario", {})
    if preset is not None:
        head["preset"] = preset
    if seed is not None:
        head["seed"] = str(seed)
    if output_dir is not None:
        head["output_dir"] = str(output_dir)
    for key in ("preset", "seed"):
        if key not in head:
            raise ScenarioError(f"missing required key {key!r}", "scenario", key,
                                lines.get(("scenario", None)))
    name = head["preset"].strip()
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}", "scenario", "preset",
                            lines.get(("scenario", "preset")))
    required, optional = PRESETS[name]
    if required not in raw and preset is None:
        raise ScenarioError(f"preset {name} needs a [{required}] section", required)
    for sec in raw:
        if sec not in ("scenario", required, *optional):
            raise ScenarioError(f"section not used by preset {name}", sec,
                                line=lines.get((sec, None)))

    values: dict[str, dict[str, Any]] = {}
    for sec in ("scenario", required, *optional):
        given = raw.get(sec, {})
        values[sec] = {}
        for key, (conv, default) in SCHEMA[sec].items():
            if key in given:
                try:
                    values[sec][key] = conv(given[key])
                except ValueError as exc:
                    raise ScenarioError(f"bad value {given[key]!r}: {exc}", sec, key,
                                        lines.get((sec, key))) from None
            else:
                values[sec][key] = default
    head_vals = values.pop("scenario")
    sc = Scenario(name, head_vals["seed"], Path(head_vals["output_dir"]), values, lines)
    _validate(sc)
    return sc


def _invariant(sc: Scenario, section: str, build: Callable[[], Any]) -> Any:
    try:
        return build()
    except ValueError as exc:
        raise ScenarioError(str(exc), section, line=sc.lines.get((section, None))) from None


def _lens(sc: Scenario) -> LensSpec:
    v = sc["lens"]
    return _invariant(sc, "lens", lambda: LensSpec(v["radius"], v["base_length"],
                                                   v["focal_length"], v["loss_db"]))


def _wavelength(sc: Scenario) -> float:
    v = sc["lens"]
    if not v["wavelength"] > 0:
        raise ScenarioError("wavelength must be positive", "lens", "wavelength",
                            sc.lines.get(("lens", "wavelength")))
    return v["wavelength"]


def _grid(sc: Scenario) -> tuple[Angle, ...]:
    v = sc["sweep"]
    return _invariant(sc, "sweep", lambda: azimuth_grid(v["az_start_deg"], v["az_stop_deg"],
                                                        v["az_step_deg"]))


def _plan(sc: Scenario) -> SubchannelPlan:
    v = sc["plan"]
    return _invariant(sc, "plan", lambda: SubchannelPlan(v["offsets_hz"], v["symbol_rate"],
                                                         v["sample_rate"], v["rolloff"]))


def _impairments(sc: Scenario, chains: int) -> list[ChainImpairment]:
    v = sc["impairments"]
    for key, vals in v.items():
        if len(vals) != chains:
            raise ScenarioError(f"expected {chains} values (one per chain), got {len(vals)}",
                                "impairments", key, sc.lines.get(("impairments", key)))
    return _invariant(sc, "impairments", lambda: [
        ChainImpairment(v["gain_db"][k], v["phase_deg"][k], v["iq_gain"][k], v["iq_phase_deg"][k],
                        complex(v["dc_re"][k], v["dc_im"][k]))
        for k in range(chains)
    ])


def _adc(sc: Scenario) -> QuantSpec:
    v = sc["adc"]
    return _invariant(sc, "adc", lambda: QuantSpec(v["bits"], v["full_scale"]))


def _positive(sc: Scenario, section: str, *keys: str) -> None:
    for key in keys:
        if not sc[section][key] > 0:
            raise ScenarioError("must be positive", section, key, sc.lines.get((section, key)))


def _validate(sc: Scenario) -> None:
    p = sc.preset
    if p == "beampattern-28":
        lens, wl = _lens(sc), _wavelength(sc)
        f = sc["fpa"]
        layout = _invariant(sc, "fpa", lambda: FeedLayout.linear(
            f["feeds"], f["feed_pitch"], element_subarray_n=f["subarray_n"],
            element_spacing=f["subarray_spacing"]))
        for off in layout.feed_offsets:
            _invariant(sc, "fpa", lambda: feed_to_beam_angle(off, lens))
        _grid(sc)
        _adc(sc)
        _positive(sc, "sweep", "samples_per_angle", "sample_rate")
    elif p == "lenslet-28":
        v = sc["lenslet"]
        _invariant(sc, "lenslet", lambda: LensletArraySpec(v["num_lenses"], v["pitch"], _lens(sc)))
        _wavelength(sc)
        _grid(sc)
    elif p == "link-60":
        v = sc["link"]
        _positive(sc, "link", "carrier_hz", "elements", "spacing_wavelengths", "payload_bits")
        _plan(sc)
        n_streams = len(v["tx_directions_deg"])
        if n_streams > _plan(sc).num_subchannels:
            raise ScenarioError("more Tx streams than sub-channels", "link", "tx_directions_deg",
                                sc.lines.get(("link", "tx_directions_deg")))
        if v["path_aoa_deg"] and len(v["path_aoa_deg"]) != n_streams:
            raise ScenarioError("need one arrival angle per Tx direction", "link", "path_aoa_deg",
                                sc.lines.get(("link", "path_aoa_deg")))
        if v["payload_bits"] % 2:
            raise ScenarioError("payload_bits must be even for QPSK", "link", "payload_bits",
                                sc.lines.get(("link", "payload_bits")))
        if not v["rx_directions_deg"]:
            raise ScenarioError("need at least one Rx beam", "link", "rx_directions_deg")
    elif p == "calibrate":
        _positive(sc, "calibration", "sample_rate", "samples", "amplitude")
        if sc["calibration"]["samples"] < 64:
            raise ScenarioError("need at least 64 samples", "calibration", "samples",
                                sc.lines.get(("calibration", "samples")))
        chains = len(sc["impairments"]["gain_db"])
        _impairments(sc, chains)
        _adc(sc)
    elif p == "sync-budget":
        _positive(sc, "sync", "n")
    elif p == "channel-stats":
        v = sc["channel"]
        _positive(sc, "channel", "tx_elements", "rx_elements", "spacing_wavelengths", "draws",
                  "num_taps", "sample_rate")
        _invariant(sc, "channel", lambda: ch.ClusterParams(v["clusters"], v["subpaths"],
                                                           math.radians(v["angle_spread_deg"]),
                                                           v["gain_power"], sc.seed))
        if v["max_delay_s"] < 0 or v["max_delay_s"] >= v["num_taps"] / v["sample_rate"]:
            raise ScenarioError("max_delay_s must lie in [0, num_taps / sample_rate)", "channel",
                                "max_delay_s", sc.lines.get(("channel", "max_delay_s")))


# --------------------------------------------------------------------------- presets

def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


class _Emitter:
    def __init__(self, root: Path) -> None:
        self.root = root
        self.artifacts: list[str] = []

    def write(self, name: str, text: str) -> None:
        (self.root / name).write_text(text, encoding="utf-8", newline="")
        self.artifacts.append(name)


def _run_beampattern(sc: Scenario, out: _Emitter) -> None:
    lens, wl, grid = _lens(sc), _wavelength(sc), _grid(sc)
    f = sc["fpa"]
    sw = sc["sweep"]
    adc = _adc(sc)
    layout = FeedLayout.linear(f["feeds"], f["feed_pitch"], element_subarray_n=f["subarray_n"],
                               element_spacing=f["subarray_spacing"])
    models = fpa_beampatterns(lens, layout, wl, grid)
    gmax = max(float(p.power_db.max()) for p in models)

    # Rotation sweep: at every angle each chain sees the source tone scaled by
    # its beam gain; an integrator over the ADC samples gives the power.
    ref_amp = 0.5 * adc.full_scale
    t = sw["samples_per_angle"]
    tone = np.exp(2j * math.pi * sw["tone_hz"] / sw["sample_rate"] * np.arange(t))
    noise_var = ref_amp**2 / 10 ** (sw["snr_db"] / 10)
    rng = np.random.default_rng(sc.seed)
    summary = {"directivity_dbi": lens_directivity_dbi(lens, wl), "beams": []}
    for k, model in enumerate(models):
        amp = ref_amp * 10 ** ((model.power_db - gmax) / 20)
        noise = math.sqrt(noise_var / 2) * (rng.standard_normal((amp.size, t))
                                            + 1j * rng.standard_normal((amp.size, t)))
        samples, _ = quantize(amp[:, None] * tone[None, :] + noise, adc)
        power = np.mean(np.abs(samples) ** 2, axis=1)
        measured = 10 * np.log10(power) - 20 * math.log10(ref_amp) + gmax
        out.write(f"model_beam_{k}.csv", beampattern_to_csv(model))
        out.write(f"measured_beam_{k}.csv", beampattern_to_csv(Beampattern(grid, measured)))
        peak_model, peak_meas = model.peak(), Beampattern(grid, measured).peak()
        summary["beams"].append({
            "feed_offset_m": list(layout.feed_offsets[k]),
            "model_peak_deg": peak_model[0].azimuth_deg,
            "model_peak_dbi": peak_model[1],
            "measured_peak_deg": peak_meas[0].azimuth_deg,
            "measured_peak_dbi": peak_meas[1],
        })
    out.write("summary.json", _dump(summary))


def _run_lenslet(sc: Scenario, out: _Emitter) -> None:
    v = sc["lenslet"]
    lens, wl, grid = _lens(sc), _wavelength(sc), _grid(sc)
    spec = LensletArraySpec(v["num_lenses"], v["pitch"], lens)
    if v["element_csv"]:
        try:
            element = load_measured_pattern(v["element_csv"])
        except (OSError, PatternParseError) as exc:
            raise ScenarioError(f"cannot load measured element pattern: {exc}", "lenslet",
                                "element_csv", sc.lines.get(("lenslet", "element_csv"))) from None
    else:
        element = lens_beampattern(lens, (0.0, 0.0), wl, grid)
    out.write("element.csv", beampattern_to_csv(element))
    summary = {"element_hpbw_deg": half_power_width_deg(element),
               "grating_lobe_spacing_deg": math.degrees(math.asin(min(1.0, wl / spec.pitch))),
               "composites": []}
    for i, steer in enumerate(v["steer_deg"]):
        comp = lenslet_pattern(element, spec, Angle.deg(steer), wl, grid)
        out.write(f"lenslet_steer_{i}.csv", beampattern_to_csv(comp))
        peak = comp.peak()
        summary["composites"].append({"steer_deg": steer, "peak_deg": peak[0].azimuth_deg,
                                      "peak_dbi": peak[1], "hpbw_deg": half_power_width_deg(comp)})
    out.write("summary.json", _dump(summary))


@dataclass
class LinkRun:
    grid: Any
    specs: list
    received: np.ndarray
    noise_variance: float


def simulate_link(sc: Scenario) -> LinkRun:
    """Build, propagate and decode the multi-stream link of a link-60 scenario."""
    v = sc["link"]
    plan = _plan(sc)
    wl = SPEED_OF_LIGHT / v["carrier_hz"]
    geom = make_ula(v["elements"], v["spacing_wavelengths"] * wl, wl)
    tx_dirs = [Angle.deg(a) for a in v["tx_directions_deg"]]
    rx_dirs = [Angle.deg(a) for a in v["rx_directions_deg"]]
    # each Tx beam direction launches one specular path; by default it
    # arrives mirrored about broadside
    aoas = [Angle.deg(a) for a in v["path_aoa_deg"]] or [-d for d in tx_dirs]
    specs = random_streams(tx_dirs, v["payload_bits"], sc.seed)
    x = transmit_scene(specs, geom, plan)
    h = ch.specular_channel(geom, geom, tx_dirs, aoas)
    clean = ch.apply_channel(h, x)
    nv = noise_variance_for_snr(clean, v["snr_db"])
    r = clean + ch.complex_noise(clean.shape, nv, sc.seed + 1)
    bank = matched_beam_bank(geom, rx_dirs)
    return LinkRun(decode_grid(r, bank, plan, specs), specs, r, nv)


def _run_link(sc: Scenario, out: _Emitter) -> None:
    v = sc["link"]
    run = simulate_link(sc)
    grid = run.grid
    out.write("grid.json", grid.to_json() + "\n")
    rows, cols = grid.shape
    for b in range(rows):
        for s in range(cols):
            out.write(f"constellation_rx{b}_tx{s}.csv", grid.constellation_csv(b, s))
    lo = LoPlan.for_rf(v["carrier_hz"])
    ber = grid.metric("ber")
    summary = {
        "carrier_hz": v["carrier_hz"],
        "external_lo_hz": lo.external_lo_hz,
        "noise_variance": run.noise_variance,
        "locked_cells": int(grid.metric("locked").sum()),
        "decodable_streams": int(np.sum(np.any(ber == 0, axis=0))),
        "sync_trials": {"analog": sync_trial_count(rows, "analog").trials,
                        "digital": sync_trial_count(rows, "digital").trials},
    }
    out.write("link.json", _dump(summary))


def _run_calibrate(sc: Scenario, out: _Emitter) -> None:
    v = sc["calibration"]
    chains = len(sc["impairments"]["gain_db"])
    imps = _impairments(sc, chains)
    adc = _adc(sc)
    n = np.arange(v["samples"])
    tone = v["amplitude"] * np.exp(2j * math.pi * v["tone_hz"] / v["sample_rate"] * n)
    ref = np.tile(tone, (chains, 1))
    impaired = apply_chain_impairments(ref, imps)
    sigma2 = v["amplitude"] ** 2 / 10 ** (v["snr_db"] / 10)
    # one capture to estimate from, an independent one to verify on
    captures = []
    clipped = 0
    for i in range(2):
        noisy = impaired + ch.complex_noise(impaired.shape, sigma2, [sc.seed, i])
        q, c = quantize(noisy, adc)
        captures.append(q)
        clipped += c
    raw, check = captures

    iq_report = []
    balanced = np.empty_like(raw)
    for k in range(chains):
        g_hat, phi_hat = estimate_iq_imbalance(raw[k], v["tone_hz"], v["sample_rate"])
        balanced[k] = correct_iq_imbalance(raw[k], g_hat, phi_hat)
        verified = correct_iq_imbalance(check[k], g_hat, phi_hat)
        iq_report.append({
            "chain": k,
            "iq_gain_true": imps[k].iq_gain,
            "iq_phase_deg_true": imps[k].iq_phase_deg,
            "iq_gain_est": g_hat,
            "iq_phase_deg_est": math.degrees(phi_hat),
            "irr_before_db": measure_irr_db(check[k], v["tone_hz"], v["sample_rate"]),
            "irr_after_db": measure_irr_db(verified, v["tone_hz"], v["sample_rate"]),
        })
    cal = estimate_chain_mismatch(balanced, v["tone_hz"], v["sample_rate"])
    aligned = compensate(balanced, cal)
    a = aligned @ np.exp(-2j * math.pi * v["tone_hz"] / v["sample_rate"] * n) / n.size
    residual = np.abs(a / a[0] - 1)
    out.write("calibration.json", cal.to_json() + "\n")
    out.write("iq_calibration.json", _dump({
        "chains": iq_report,
        "adc_clipped_components": clipped,
        "residual_mismatch": residual.tolist(),
    }))


def _run_sync(sc: Scenario, out: _Emitter) -> None:
    v = sc["sync"]
    modes = ("analog", "digital") if v["mode"] == "both" else (v["mode"],)
    budgets = [sync_trial_count(v["n"], m) for m in modes]
    out.write("sync.json", _dump({"budgets": [
        {"mode": b.mode, "n_directions": b.n_directions, "trials": b.trials} for b in budgets
    ]}))


def _run_channel_stats(sc: Scenario, out: _Emitter) -> None:
    v = sc["channel"]
    wl = SPEED_OF_LIGHT / 60e9
    tx = make_ula(v["tx_elements"], v["spacing_wavelengths"] * wl, wl)
    rx = make_ula(v["rx_elements"], v["spacing_wavelengths"] * wl, wl)
    params = ch.ClusterParams(v["clusters"], v["subpaths"], math.radians(v["angle_spread_deg"]),
                              v["gain_power"], sc.seed)
    stat = ch.normalization_statistic(params, tx, rx, v["draws"])
    first = ch.draw_subpaths(params, v["max_delay_s"])
    h = ch.assemble_narrowband(first, tx, rx)
    out.write("subpaths.json", first.to_json() + "\n")
    out.write("channel.csv", h.to_csv())
    if v["num_taps"] > 1:
        tapped = ch.assemble_wideband(first, tx, rx, v["sample_rate"], v["num_taps"])
        for d, tap in enumerate(tapped.taps):
            out.write(f"channel_tap_{d}.csv", tap.to_csv())
    out.write("channel_stats.json", _dump({
        "draws": v["draws"],
        "mean_frobenius_sq_over_nm": float(stat.mean()),
        "std_frobenius_sq_over_nm": float(stat.std()),
        "gain_power": v["gain_power"],
        "first_draw_rank": int(np.linalg.matrix_rank(h.entries)),
    }))


RUNNERS: dict[str, Callable[[Scenario, _Emitter], None]] = {
    "beampattern-28": _run_beampattern,
    "lenslet-28": _run_lenslet,
    "link-60": _run_link,
    "calibrate": _run_calibrate,
    "sync-budget": _run_sync,
    "channel-stats": _run_channel_stats,
}


def run(sc: Scenario) -> int:
    """Execute a scenario; returns the process exit code."""
    out_dir = Path(sc.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        log.error("output directory %s is not writable: %s", out_dir, exc)
        return EXIT_OUTPUT
    emitter = _Emitter(out_dir)
    start = time.perf_counter()
    try:
        with np.errstate(invalid="raise", divide="ignore", over="raise"):
            RUNNERS[sc.preset](sc, emitter)
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("could not write artifacts: %s", exc)
        return EXIT_OUTPUT
    except (ValueError, ArithmeticError, EstimationError) as exc:
        log.error("numerical failure in %s: %s", sc.preset, exc)
        return EXIT_NUMERIC
    manifest = {
        "preset": sc.preset,
        "seed": sc.seed,
        "config_hash": sc.config_hash(),
        "artifacts": emitter.artifacts,
        "wall_time_s": time.perf_counter() - start,
    }
    try:
        (out_dir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    except OSError as exc:
        log.error("could not write manifest: %s", exc)
        return EXIT_OUTPUT
    log.info("%s: %d artifacts in %s", sc.preset, len(emitter.artifacts), out_dir)
    return EXIT_OK
