import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvrfof import spectrum as sp
from nvrfof.errors import InvalidInputError
from nvrfof.spin import FieldVector, NVParameters

from oracles import half_depth_width

P0 = NVParameters()
GRID = (2800.0, 2940.0, 701)


def drive_at_s(s, p_sat=30.0, **kw):
    return sp.DriveParameters(10 * math.log10(s * p_sat) if s > 0 else -math.inf, p_sat, **kw)


@pytest.mark.parametrize(
    "i_off,i_on,expected",
    [(100, 100, 0.0), (100, 88.8, 0.112), (1000, 978, 0.022)],
)
def test_compute_contrast(i_off, i_on, expected):
    assert sp.compute_contrast(i_off, i_on) == pytest.approx(expected, abs=1e-12)


def test_compute_contrast_rejects_bad_intensities():
    with pytest.raises(InvalidInputError):
        sp.compute_contrast(0, 1)
    with pytest.raises(InvalidInputError):
        sp.compute_contrast(1, -1)


def test_saturation_linear_regime():
    d = sp.DriveParameters(p_rf=-60, p_sat=1.0, c_inf=0.1)
    assert sp.saturation_contrast(d) == pytest.approx(0.1 * 1e-6, rel=1e-5)


def test_saturation_half_point():
    d = drive_at_s(1.0, c_inf=0.1)
    assert sp.saturation_contrast(d) == pytest.approx(0.05)


def test_saturation_default_preset_value():
    d = sp.DriveParameters(p_rf=25, p_sat=30, c_inf=0.12)
    assert sp.saturation_contrast(d) == pytest.approx(0.12 * 316.227766 / 346.227766, rel=1e-9)
    assert sp.saturation_contrast(d) == pytest.approx(0.1096, abs=5e-5)


def test_broadened_fwhm():
    assert sp.broadened_fwhm(drive_at_s(0.0, fwhm0=8)) == 8
    assert sp.broadened_fwhm(drive_at_s(3.0, fwhm0=8)) == pytest.approx(16)
    assert sp.broadened_fwhm(drive_at_s(1.0, fwhm0=8)) == pytest.approx(11.314, abs=5e-4)


@given(p1=st.floats(-60, 40), dp=st.floats(0.01, 20))
def test_saturation_and_broadening_monotone(p1, dp):
    d1, d2 = sp.DriveParameters(p1), sp.DriveParameters(p1 + dp)
    assert sp.saturation_contrast(d2) >= sp.saturation_contrast(d1)
    assert sp.saturation_contrast(d2) < d2.c_inf
    assert sp.broadened_fwhm(d2) >= sp.broadened_fwhm(d1)


def test_calibrate_saturation_hits_both_points():
    c_inf, p_sat = sp.calibrate_saturation(0.0, 0.02, 25.0, 0.112)
    for p, c in [(0.0, 0.02), (25.0, 0.112)]:
        assert sp.saturation_contrast(sp.DriveParameters(p, p_sat, c_inf)) == pytest.approx(c, rel=1e-12)
    with pytest.raises(InvalidInputError):
        sp.calibrate_saturation(0.0, 0.01, 10.0, 0.2)  # super-linear growth cannot saturate


@pytest.mark.parametrize(
    "kwargs", [dict(p_sat=0), dict(c_inf=0), dict(c_inf=1), dict(fwhm0=0), dict(p_rf=math.nan)]
)
def test_drive_invariants(kwargs):
    with pytest.raises(InvalidInputError):
        sp.DriveParameters(**kwargs)


def test_zero_field_single_dip():
    d = sp.DriveParameters(p_rf=0.0)
    s = sp.synthesize_spectrum(P0, FieldVector(), d, (2800, 2940, 701))
    i = int(np.argmin(s.pl_normalized))
    assert s.frequencies[i] == pytest.approx(2870)
    # both transitions of all four orientations coincide: 8 x C/4
    assert s.pl_normalized[i] == pytest.approx(1 - 2 * sp.saturation_contrast(d), abs=1e-12)


def _local_minima(y):
    return [i for i in range(1, len(y) - 1) if y[i] < y[i - 1] and y[i] < y[i + 1]]


def test_aligned_field_dips():
    s = sp.synthesize_spectrum(P0, FieldVector.along([1, 1, 1], 11.2), sp.DriveParameters(), (2800, 2940, 1401))
    mins = s.frequencies[_local_minima(s.pl_normalized)]
    assert len(mins) == 4
    lines = sp.spectrum_lines(P0, FieldVector.along([1, 1, 1], 11.2), sp.DriveParameters())
    assert lines[0].center == pytest.approx(2838.64, abs=1e-9)
    assert lines[-1].center == pytest.approx(2901.36, abs=1e-9)
    # overlapping tails of the off-axis pair pull the sampled minima slightly
    assert mins[0] == pytest.approx(2838.64, abs=0.5)
    assert mins[-1] == pytest.approx(2901.36, abs=0.5)


def test_determinism_and_seed_dependence():
    args = (P0, FieldVector(0, 0, 5), sp.DriveParameters(), GRID, 0.01)
    a = sp.synthesize_spectrum(*args, seed=7)
    b = sp.synthesize_spectrum(*args, seed=7)
    c = sp.synthesize_spectrum(*args, seed=8)
    assert a.pl_normalized.tobytes() == b.pl_normalized.tobytes()
    assert not np.array_equal(a.pl_normalized, c.pl_normalized)


@pytest.mark.parametrize("grid", [(2800, 2940, 1), (2800, 2940, 0), (2940, 2800, 10), None])
def test_bad_grid(grid):
    with pytest.raises(InvalidInputError):
        sp.synthesize_spectrum(P0, FieldVector(), sp.DriveParameters(), grid)


def test_negative_noise_rejected():
    with pytest.raises(InvalidInputError):
        sp.synthesize_spectrum(P0, FieldVector(), sp.DriveParameters(), GRID, noise_sigma=-1)


@settings(max_examples=30, deadline=None)
@given(
    b=st.lists(st.floats(-40, 40), min_size=3, max_size=3),
    p=st.floats(-20, 30),
)
def test_normalization(b, p):
    s = sp.synthesize_spectrum(P0, FieldVector(*b), sp.DriveParameters(p), (1000, 5000, 4001))
    assert np.all(s.pl_normalized <= 1.0)
    # far from every line the PL is back to the off level
    assert s.pl_normalized[0] == pytest.approx(1.0, abs=1e-3)
    assert s.pl_normalized[-1] == pytest.approx(1.0, abs=1e-3)


def test_dip_depth_monotone_in_power():
    field = FieldVector(10, 0, 0)
    f0 = sp.spectrum_lines(P0, field, sp.DriveParameters())[0].center
    depths = []
    for p in [-10, 0, 5, 10, 20, 30]:
        s = sp.synthesize_spectrum(P0, field, sp.DriveParameters(p), (f0 - 1, f0 + 1, 3))
        depths.append(1 - s.pl_normalized[1])
    assert all(b > a for a, b in zip(depths, depths[1:]))


@pytest.mark.parametrize("p_rf", [-10.0, 0.0, 10.0, 20.0])
def test_fwhm_law(p_rf):
    d = sp.DriveParameters(p_rf)
    s = sp.synthesize_spectrum(P0, FieldVector(), d, (2870 - 400, 2870 + 400, 80001))
    width = half_depth_width(s.frequencies, s.pl_normalized)
    assert width == pytest.approx(sp.broadened_fwhm(d), rel=5e-3)


def test_spectrum_invariants():
    with pytest.raises(InvalidInputError):
        sp.Spectrum([1.0], [1.0])
    with pytest.raises(InvalidInputError):
        sp.Spectrum([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        sp.Spectrum([1.0, 2.0], [1.0, math.nan])
    with pytest.raises(InvalidInputError):
        sp.Spectrum([1.0, 2.0], [1.0])


# --- CSV ---------------------------------------------------------------------------


def test_csv_round_trip_lossless():
    s = sp.synthesize_spectrum(P0, FieldVector(1, 2, 3), sp.DriveParameters(-math.inf), GRID, 0.003, seed=3)
    s.meta.update({"label": "run 1", "quoted": "42", "nested": {"a": [1, 2]}, "pad": " x "})
    text = sp.spectrum_to_csv(s)
    back = sp.spectrum_from_csv(text)
    assert np.array_equal(back.frequencies, s.frequencies)
    assert np.array_equal(back.pl_normalized, s.pl_normalized)
    assert back.meta == s.meta
    assert back.meta["p_rf_dbm"] == -math.inf
    assert sp.spectrum_to_csv(back) == text


@pytest.mark.parametrize("key", ["", " k", "a=b", "a\nb"])
def test_csv_rejects_unrepresentable_keys(key):
    with pytest.raises(InvalidInputError):
        sp.spectrum_to_csv(sp.Spectrum([1.0, 2.0], [1.0, 1.0], {key: 1}))


def test_csv_header_first_data_line():
    text = sp.spectrum_to_csv(sp.Spectrum([1.0, 2.0], [0.5, 0.25], {"k": 1}))
    assert text.splitlines() == ["# k=1", sp.CSV_HEADER, "1.0,0.5", "2.0,0.25"]


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("", "empty file"),
        (sp.CSV_HEADER + "\n", "no data rows"),
        ("# a=1\n" + sp.CSV_HEADER + "\n1,2\n3,x\n", "line 4"),
        (sp.CSV_HEADER + "\n1,2\n1,3\n", "line 3"),
        ("freq,pl\n1,2\n", "line 1"),
        (sp.CSV_HEADER + "\n1,2,3\n", "line 2"),
        ("# nokey\n", "line 1"),
    ],
)
def test_csv_errors(text, fragment):
    with pytest.raises(sp.SpectrumFormatError, match=fragment):
        sp.spectrum_from_csv(text)


def test_write_read_file(tmp_path):
    s = sp.Spectrum([1.0, 2.0, 3.0], [1.0, 0.9, 1.0], {"seed": 5})
    path = tmp_path / "s.csv"
    sp.write_spectrum(path, s)
    back = sp.read_spectrum(path)
    assert back.meta == {"seed": 5}
    assert np.array_equal(back.pl_normalized, s.pl_normalized)
    assert [p.name for p in tmp_path.iterdir()] == ["s.csv"]
