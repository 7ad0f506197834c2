"""Acceptance gate: one test per criterion, each recording a pass/fail line."""

import math
import time
import timeit

import numpy as np
import pytest
from scipy.signal import find_peaks

from multibeam.array import Angle, azimuth_grid, beampattern, make_ula, steering_vector
from multibeam.beamformer import CombinerConfig, HybridConfig, combine, matched_beam_bank, precode
from multibeam.channel import ChannelMatrix, ClusterParams, apply_channel, assemble_narrowband, complex_noise, draw_subpaths, normalization_statistic
from multibeam.cli import main
from multibeam.frontend import (
    ChainImpairment,
    QuantSpec,
    apply_chain_impairments,
    apply_iq_imbalance,
    correct_iq_imbalance,
    estimate_chain_mismatch,
    estimate_iq_imbalance,
    measure_irr_db,
    quantize,
)
from multibeam.lens import LensletArraySpec, LensSpec, half_power_width_deg, lens_beampattern, lens_directivity_dbi, lenslet_pattern
from multibeam.modem import analog_decode_grid, decode_grid, default_plan, sync_trial_count
from multibeam.scenario import PRESETS, parse_scenario, simulate_link

C = 299_792_458.0


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_1_lens_directivity(record_acceptance):
    spec = LensSpec(radius=0.05, loss_db=0.0)
    d = lens_directivity_dbi(spec, 0.0107)
    per_call = min(timeit.repeat(lambda: lens_directivity_dbi(spec, 0.0107), number=100, repeat=5)) / 100
    ok = 29.2 <= d <= 29.5 and per_call < 1e-3
    record_acceptance(1, ok, f"directivity {d:.3f} dBi, {per_call * 1e6:.1f} us per call")
    assert ok


def test_2_channel_normalization(record_acceptance):
    lam = C / 60e9
    tx = make_ula(4, lam / 2, lam)
    rx = make_ula(4, lam / 2, lam)
    start = time.perf_counter()
    stat = normalization_statistic(ClusterParams(2, 3, math.radians(5), 1.0, seed=0), tx, rx, 10_000)
    elapsed = time.perf_counter() - start
    ok = abs(stat.mean() - 1.0) <= 0.03 and elapsed < 10
    record_acceptance(2, ok, f"mean |H|^2/(NM) = {stat.mean():.4f} over 1e4 draws, {elapsed:.2f} s")
    assert ok


def test_3_pipeline_equals_dense_system_equation(record_acceptance):
    rng = np.random.default_rng(2024)
    lam = 0.005
    worst = 0.0
    for i in range(100):
        n, m = rng.integers(1, 9, size=2)
        n_rf, m_rf = rng.integers(1, n + 1), rng.integers(1, m + 1)
        ns = int(rng.integers(1, min(n_rf, m_rf) + 1))
        pre = HybridConfig(crandn(rng, n, n_rf), crandn(rng, n_rf, ns))
        comb = CombinerConfig(crandn(rng, m, m_rf), crandn(rng, m_rf, ns))
        sp = draw_subpaths(ClusterParams(2, 2, 0.1, seed=i))
        h = assemble_narrowband(sp, make_ula(n, lam / 2, lam), make_ula(m, lam / 2, lam)).entries
        a = crandn(rng, ns, 8)
        noise = complex_noise((m, 8), 0.1, seed=i)
        y = combine(comb, apply_channel(ChannelMatrix(h), precode(pre, a)) + noise)
        w = comb.w_rf @ comb.w_bb
        dense = w.conj().T @ h @ pre.f_rf @ pre.f_bb @ a + w.conj().T @ noise
        worst = max(worst, float(np.max(np.abs(y - dense))))
    ok = worst < 1e-10
    record_acceptance(3, ok, f"max |pipeline - dense| = {worst:.2e} over 100 instances")
    assert ok


def test_4_beam_bank_pointing(record_acceptance):
    lam = C / 60e9
    g = make_ula(4, lam / 2, lam)
    labels = [Angle.deg(d) for d in (-45, -15, 15, 45)]
    bank = matched_beam_bank(g, labels)
    grid = azimuth_grid(-90, 90, 0.01)
    errors, peaks = [], []
    for w, lab in zip(bank.weights, labels):
        # unit-modulus weights: gain relative to a single isotropic element
        pk, value = beampattern(g.num_elements * w, g, grid).peak()
        errors.append(abs(pk.azimuth_deg - lab.azimuth_deg))
        peaks.append(value)
    ok = max(errors) <= 0.2 and all(abs(p - 12.04) <= 0.01 for p in peaks)
    record_acceptance(4, ok, f"max pointing error {max(errors):.3f} deg, peaks "
                             f"{min(peaks):.3f}..{max(peaks):.3f} dB")
    assert ok


def test_5_lenslet_cascade(record_acceptance):
    lam = C / 28e9
    grid = azimuth_grid(-90, 90, 0.01)
    element = lens_beampattern(LensSpec(), (0.0, 0.0), lam, grid)
    spec = LensletArraySpec(4, 0.10)
    comp = lenslet_pattern(element, spec, Angle(), lam)
    az, p = comp.azimuth_deg, comp.power_db
    peaks, _ = find_peaks(p)
    # the composite lobe belonging to grating order m is the composite peak
    # nearest to the array-factor grating direction arcsin(m lambda / pitch)
    lobes = []
    for order in (-1, 0, 1):
        target = math.degrees(math.asin(order * lam / spec.pitch))
        lobes.append(az[peaks[np.argmin(np.abs(az[peaks] - target))]])
    spacing = float(np.mean(np.diff(lobes)))
    expected = math.degrees(math.asin(lam / spec.pitch))
    hp_comp, hp_elem = half_power_width_deg(comp), half_power_width_deg(element)
    spacing_ok = abs(spacing - 6.15) <= 0.1
    ok = spacing_ok and hp_comp < hp_elem
    record_acceptance(5, ok, f"lobe spacing {spacing:.3f} deg (array factor alone {expected:.3f}), "
                             f"HPBW {hp_comp:.2f} < {hp_elem:.2f} deg")
    assert hp_comp < hp_elem
    assert spacing_ok, f"composite lobes at {lobes} deg"


def test_6_calibration(record_acceptance):
    fs, f0, t = 245.76e6, 30.72e6, 4096
    tone = 0.5 * np.exp(2j * np.pi * f0 / fs * np.arange(t))
    imps = [ChainImpairment(), ChainImpairment(3, 30), ChainImpairment(-1.5, -80), ChainImpairment(0.7, 150)]
    truth = np.array([1] + [10 ** (-i.gain_db / 20) * np.exp(-1j * math.radians(i.phase_deg)) for i in imps[1:]])
    clean = apply_chain_impairments(np.tile(tone, (4, 1)), imps)
    noiseless_err = np.max(np.abs(np.array(estimate_chain_mismatch(clean, f0, fs).corrections) - truth))

    good = 0
    var = 0.25 / 10**4
    for seed in range(100):
        cal = estimate_chain_mismatch(clean + complex_noise(clean.shape, var, seed), f0, fs)
        good += np.max(np.abs(np.array(cal.corrections) - truth)) < 0.01

    g, phi = 1.1, math.radians(5)
    y = apply_iq_imbalance(tone, g, phi)
    irr_before = measure_irr_db(y, f0, fs)
    irr_after = measure_irr_db(correct_iq_imbalance(y, *estimate_iq_imbalance(y, f0, fs)), f0, fs)

    improvements = []
    var30 = 0.25 / 10**3
    for seed in range(100):
        est_block = y + complex_noise(t, var30, [seed, 0])
        check_block = y + complex_noise(t, var30, [seed, 1])
        g_hat, phi_hat = estimate_iq_imbalance(est_block, f0, fs)
        improvements.append(measure_irr_db(correct_iq_imbalance(check_block, g_hat, phi_hat), f0, fs)
                            - measure_irr_db(check_block, f0, fs))
    median = float(np.median(improvements))
    ok = (noiseless_err < 1e-9 and good >= 95 and abs(irr_before - 23.8) < 0.05
          and irr_after > 80 and median >= 30)
    record_acceptance(6, ok, f"noiseless err {noiseless_err:.1e}, 40 dB ok {good}/100, IRR "
                             f"{irr_before:.2f} -> {irr_after:.1f} dB, 30 dB median gain {median:.1f} dB")
    assert ok


def _link_scenario():
    return parse_scenario("[scenario]\npreset = link-60\nseed = 1\n[link]\nsnr_db = 20\npayload_bits = 10000\n")


def test_7_decode_grid(record_acceptance):
    start = time.perf_counter()
    grid = simulate_link(_link_scenario()).grid
    elapsed = time.perf_counter() - start
    ber, evm, locked = grid.metric("ber"), grid.metric("evm_percent"), grid.metric("locked")
    columns_ok = all(np.any((ber[:, s] == 0) & (evm[:, s] < 10)) for s in range(grid.shape[1]))
    ok = columns_ok and locked.sum() >= 4 and elapsed < 30
    record_acceptance(7, ok, f"every column decodable: {columns_ok}, locked {int(locked.sum())}/16, "
                             f"{elapsed:.2f} s")
    assert ok


def test_8_sync_budget(record_acceptance):
    counts = (sync_trial_count(4, "analog").trials, sync_trial_count(4, "digital").trials)
    sc = _link_scenario()
    run = simulate_link(sc)
    lam = C / 60e9
    bank = matched_beam_bank(make_ula(4, lam / 2, lam), run.grid.rx_beams)
    digital = decode_grid(run.received, bank, default_plan(), run.specs)
    analog, trials = analog_decode_grid(run.received, bank, default_plan(), run.specs)
    worst = 0.0
    for b in range(4):
        for s in range(4):
            worst = max(worst, float(np.max(np.abs(analog.cells[b][s].constellation
                                                   - digital.cells[b][s].constellation))))
            worst = max(worst, abs(analog.cells[b][s].evm_percent - digital.cells[b][s].evm_percent))
    ok = counts == (16, 1) and trials == 16 and worst <= 1e-10
    record_acceptance(8, ok, f"trials analog/digital {counts[0]}/{counts[1]}, "
                             f"max cell difference {worst:.1e}")
    assert ok


def test_9_quantizer_snr(record_acceptance):
    spec = QuantSpec(12, 1.0)
    n, k = 8192, 1021
    x = (1 - spec.step / 2) * np.sin(2 * np.pi * k * np.arange(n) / n)
    q, _ = quantize(x, spec)
    err = q.real - x
    snr = 10 * math.log10(np.mean(x**2) / np.mean(err**2))
    ok = 72 <= snr <= 76
    record_acceptance(9, ok, f"12-bit full-scale sine SNR {snr:.2f} dB")
    assert ok


def test_10_determinism(record_acceptance, tmp_path):
    differing = []
    for preset in sorted(PRESETS):
        outs = []
        for rep in range(2):
            root = tmp_path / f"{preset}-{rep}"
            assert main(["--preset", preset, "--seed", "11", "--output", str(root)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.name != "manifest.json"})
        if outs[0] != outs[1]:
            differing.append(preset)
    ok = not differing
    record_acceptance(10, ok, f"{len(PRESETS)} presets byte-identical" if ok else f"differ: {differing}")
    assert ok
