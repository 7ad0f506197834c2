import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import j1

from multibeam.array import Angle, Beampattern, PatternParseError, azimuth_grid, save_beampattern
from multibeam.lens import (
    FeedLayout,
    LensletArraySpec,
    LensSpec,
    OutOfFieldError,
    airy,
    beam_angle_to_feed,
    feed_to_beam_angle,
    fpa_beampatterns,
    half_power_width_deg,
    lens_beampattern,
    lens_directivity_dbi,
    lenslet_pattern,
    load_measured_pattern,
)

LAM = 299_792_458 / 28e9


def lossless(**kw):
    return LensSpec(loss_db=0.0, **kw)


# --- directivity -------------------------------------------------------

def test_directivity_of_ten_cm_lens():
    d = lens_directivity_dbi(lossless(), 0.0107)
    assert d == pytest.approx(10 * math.log10(4 * math.pi**2 * 0.05**2 / 0.0107**2), abs=1e-12)
    assert 29.2 <= d <= 29.5


def test_directivity_matches_integrated_airy_pattern():
    # D = 4 pi / integral |F|^2 dOmega for the circular-aperture field pattern, forward hemisphere
    ka = 2 * math.pi * 0.05 / LAM

    def f2(theta):
        u = ka * math.sin(theta)
        return (2 * j1(u) / u) ** 2 if u else 1.0

    omega, _ = integrate.quad(lambda t: f2(t) * math.sin(t), 0, math.pi / 2, limit=400, points=[0.2, 0.5])
    numeric = 10 * math.log10(4 * math.pi / (2 * math.pi * omega))
    assert lens_directivity_dbi(lossless(), LAM) == pytest.approx(numeric, abs=0.1)


def test_directivity_scaling():
    base = lens_directivity_dbi(lossless(), LAM)
    assert lens_directivity_dbi(lossless(radius=0.1), LAM) - base == pytest.approx(20 * math.log10(2))
    assert lens_directivity_dbi(lossless(), 2 * LAM) - base == pytest.approx(-20 * math.log10(2))
    assert lens_directivity_dbi(LensSpec(loss_db=1.5), LAM) == pytest.approx(base - 1.5)


def test_lens_spec_validation():
    assert LensSpec().focal_length == LensSpec().base_length
    with pytest.raises(ValueError):
        LensSpec(radius=0)
    with pytest.raises(ValueError):
        LensSpec(loss_db=-1)
    with pytest.raises(ValueError):
        lens_directivity_dbi(LensSpec(), 0)


# --- feed mapping ------------------------------------------------------

def test_on_axis_feed_gives_boresight():
    assert feed_to_beam_angle((0, 0), LensSpec()) == Angle(0, 0)


def test_displaced_feed_steers_opposite():
    spec = LensSpec(focal_length=0.057)
    a = feed_to_beam_angle((0.01, 0), spec)
    assert a.azimuth_deg == pytest.approx(-math.degrees(math.atan(0.01 / 0.057)))
    assert a.azimuth_deg == pytest.approx(-9.95, abs=0.01)


def test_feed_outside_focal_field_is_rejected():
    with pytest.raises(OutOfFieldError):
        feed_to_beam_angle((0.06, 0), LensSpec(focal_length=0.057))


@given(st.floats(-0.04, 0.04), st.floats(-0.04, 0.04))
def test_feed_mapping_round_trip(x, y):
    spec = LensSpec()
    back = beam_angle_to_feed(feed_to_beam_angle((x, y), spec), spec)
    assert back == pytest.approx((x, y), abs=1e-12)


# --- beampatterns ------------------------------------------------------

def test_airy_limits():
    assert airy(np.array([0.0]))[0] == 1.0
    assert abs(airy(np.array([3.8317059702075125]))[0]) < 1e-12


def test_on_axis_beam_peak_and_first_null():
    spec = LensSpec()
    pat = lens_beampattern(spec, (0, 0), LAM, azimuth_grid(-30, 30, 0.01))
    peak, value = pat.peak()
    assert peak.azimuth_deg == pytest.approx(0, abs=1e-9)
    assert value == pytest.approx(lens_directivity_dbi(spec, LAM))
    # first Airy zero: k r sin(psi) = 3.8317
    null = math.degrees(math.asin(3.8317059702075125 * LAM / (2 * math.pi * spec.radius)))
    az = pat.azimuth_deg
    window = (az > 3) & (az < 12)
    assert az[window][np.argmin(pat.power_db[window])] == pytest.approx(null, abs=0.01)


def test_mirrored_feeds_give_mirrored_patterns():
    grid = azimuth_grid(-40, 40, 0.1)
    left = lens_beampattern(LensSpec(), (-0.01, 0), LAM, grid)
    right = lens_beampattern(LensSpec(), (0.01, 0), LAM, grid)
    np.testing.assert_allclose(left.power_db, right.power_db[::-1], atol=1e-9)


def test_fpa_feeds_give_distinct_beams_at_mapped_angles():
    spec = LensSpec()
    layout = FeedLayout.linear(4, 0.0107)
    pats = fpa_beampatterns(spec, layout, LAM, azimuth_grid(-40, 40, 0.05))
    peaks = [p.peak()[0].azimuth_deg for p in pats]
    assert len(set(np.round(peaks, 3))) == 4
    for off, pk in zip(layout.feed_offsets, peaks):
        assert pk == pytest.approx(feed_to_beam_angle(off, spec).azimuth_deg, abs=0.05)


def test_elevation_cut_is_shaped_by_feed_column():
    grid = [Angle.deg(0, e) for e in np.arange(-60, 60.01, 0.5)]
    one = lens_beampattern(LensSpec(), (0, 0), LAM, grid, subarray_n=1)
    eight = lens_beampattern(LensSpec(), (0, 0), LAM, grid, subarray_n=8)
    assert np.all(eight.power_db <= one.power_db + 1e-9)
    assert eight.peak()[1] == pytest.approx(one.peak()[1])


def test_half_power_width_of_known_shape():
    az = np.arange(-10, 10.001, 0.01)
    pat = Beampattern(tuple(Angle.deg(a) for a in az), -3 * (az / 2) ** 2)
    assert half_power_width_deg(pat) == pytest.approx(4.0, abs=1e-3)


# --- lenslet cascade ---------------------------------------------------

def element():
    return lens_beampattern(LensSpec(), (0, 0), LAM, azimuth_grid(-90, 90, 0.01))


def test_single_lenslet_is_the_element():
    el = element()
    comp = lenslet_pattern(el, LensletArraySpec(1, 0.10), Angle(), LAM)
    np.testing.assert_allclose(comp.power_db, el.power_db, atol=1e-12)


def test_composite_bounded_by_element_plus_array_gain():
    el = element()
    for steer in (0, 3, -8):
        comp = lenslet_pattern(el, LensletArraySpec(4, 0.10), Angle.deg(steer), LAM)
        assert np.all(comp.power_db <= el.power_db + 20 * math.log10(4) + 1e-9)


def test_array_factor_grating_lobes_spaced_by_pitch():
    el = element()
    comp = lenslet_pattern(el, LensletArraySpec(4, 0.10), Angle(), LAM)
    af = comp.power_db - el.power_db
    az = comp.azimuth_deg
    expected = math.degrees(math.asin(LAM / 0.10))
    window = (az > 3) & (az < 9)
    assert az[window][np.argmax(af[window])] == pytest.approx(expected, abs=0.01)
    assert expected == pytest.approx(6.15, abs=0.01)


def test_composite_is_narrower_than_element():
    el = element()
    comp = lenslet_pattern(el, LensletArraySpec(4, 0.10), Angle(), LAM)
    assert half_power_width_deg(comp) < half_power_width_deg(el)


def test_pitch_smaller_than_diameter_is_rejected():
    with pytest.raises(ValueError):
        LensletArraySpec(4, 0.09)


def test_lenslet_on_other_grid_interpolates_and_refuses_extrapolation():
    el = lens_beampattern(LensSpec(), (0, 0), LAM, azimuth_grid(-20, 20, 0.1))
    spec = LensletArraySpec(2, 0.10)
    comp = lenslet_pattern(el, spec, Angle(), LAM, azimuth_grid(-10, 10, 0.05))
    assert len(comp.angles) == 401
    with pytest.raises(ValueError):
        lenslet_pattern(el, spec, Angle(), LAM, azimuth_grid(-30, 30, 1))


def test_measured_pattern_loading(tmp_path):
    el = lens_beampattern(LensSpec(), (0, 0), LAM, azimuth_grid(-20, 20, 0.5))
    path = save_beampattern(el, tmp_path / "meas.csv")
    np.testing.assert_array_equal(load_measured_pattern(path).power_db, el.power_db)
    bad = tmp_path / "bad.csv"
    bad.write_text("azimuth_deg,elevation_deg,power_db\n0,0,1\n0,0,2\n")
    with pytest.raises(PatternParseError, match="bad.csv"):
        load_measured_pattern(bad)
