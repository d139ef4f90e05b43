import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmepulse.compliance import (
    DME_SPECTRUM_LIMITS,
    FAA_SHAPE,
    ICAO_SHAPE,
    CalibrationConvention,
    PulseShapeMetrics,
    SpectrumReport,
    check_shape,
    check_spectrum,
    erp_spectrum,
    measure_pulse_shape,
    shape_violation,
    spectrum_excess,
)
from dmepulse.errors import ConfigurationError, MeasurementError
from dmepulse.waveform import SampledWaveform, SamplingConfig, gaussian_pulse

US = 1e-6


def metrics_us(rise, width, fall):
    return PulseShapeMetrics(rise * US, width * US, fall * US)


def exact_band_energy(x, dt, f_lo, f_hi):
    """Integral of |dt * DTFT(x)|^2 over [f_lo, f_hi] via the autocorrelation."""
    n = x.size
    r = np.correlate(x, x, mode="full")  # lags -(n-1)..(n-1): sum x[k+d] conj(x[k])
    d = np.arange(-(n - 1), n)
    w = 2 * np.pi * d * dt
    kern = np.where(d == 0, f_hi - f_lo,
                    (np.exp(-1j * w * f_hi) - np.exp(-1j * w * f_lo)) / np.where(d == 0, 1, -1j * w))
    return float(np.real(np.sum(r * kern))) * dt**2


def oracle_dbm(w, offsets=(-2.0, -0.8, 0.8, 2.0), ref=60.0):
    x, dt = w.samples, w.sample_interval
    e0 = exact_band_energy(x, dt, -0.25e6, 0.25e6)
    return {o: ref + 10 * math.log10(exact_band_energy(x, dt, o * 1e6 - 0.25e6, o * 1e6 + 0.25e6) / e0)
            for o in offsets}


def triangle(base=10 * US, rate=50e6, record=20 * US):
    t = np.arange(int(round(record * rate))) / rate
    peak = (record - base) / 2 + base / 2
    v = np.clip(1 - np.abs(t - peak) / (base / 2), 0, None)
    return SampledWaveform(v, 1 / rate)


def test_gaussian_shape_metrics():
    m = measure_pulse_shape(gaussian_pulse(3.5 * US))
    assert m.as_us() == pytest.approx((2.507, 3.5, 2.507), abs=0.01)


def test_triangle_shape_metrics():
    m = measure_pulse_shape(triangle())
    assert m.as_us() == pytest.approx((4.0, 5.0, 4.0), abs=1e-9)


def test_truncated_pulse_reports_edge():
    g = gaussian_pulse(3.5 * US)
    half = g.with_samples(g.samples[: len(g) // 2 + 1])
    with pytest.raises(MeasurementError) as exc:
        measure_pulse_shape(half)
    assert exc.value.edge == "falling"
    assert exc.value.threshold == 0.1
    with pytest.raises(MeasurementError):
        measure_pulse_shape(g.with_samples(np.zeros(len(g))))


def test_first_last_crossing_on_non_monotone_edge():
    t = np.arange(1000) / 50e6
    v = np.exp(-((t - 10e-6) / 2e-6) ** 2) + 0.15 * np.exp(-((t - 6e-6) / 0.4e-6) ** 2)
    w = SampledWaveform(v, 1 / 50e6)
    m = measure_pulse_shape(w)
    mag = w.magnitude
    first10 = np.argmax(mag >= 0.1 * mag.max())
    assert first10 * 0.02 < 6.0  # the bump is crossed first
    assert m.rise_time > 0


@pytest.mark.parametrize("k", [1e-3, 0.5, 7.0, 1e4])
def test_shape_scale_invariance(k):
    g = gaussian_pulse(3.5 * US)
    a = measure_pulse_shape(g)
    b = measure_pulse_shape(g.scaled(k))
    assert b.as_us() == pytest.approx(a.as_us(), rel=1e-12, abs=1e-12)


def test_shape_time_shift_invariance():
    g = gaussian_pulse(3.5 * US)
    moved = SampledWaveform(g.samples, g.sample_interval, start_time=123.4e-6)
    assert measure_pulse_shape(moved) == measure_pulse_shape(g)


def test_icao_faa_examples():
    assert check_shape(metrics_us(2.79, 3.43, 3.00), ICAO_SHAPE).passed
    v = check_shape(metrics_us(3.10, 3.50, 3.00), ICAO_SHAPE)
    assert v.failures == ["rise_time_us"]
    v = check_shape(metrics_us(2.88, 3.46, 3.05), FAA_SHAPE)
    assert v.failures == ["fall_time_us"]
    # FAA lower bounds are hard
    assert check_shape(metrics_us(1.4, 3.5, 2.0), FAA_SHAPE).failures == ["rise_time_us"]


def test_shape_margins_in_us():
    v = check_shape(metrics_us(2.79, 3.43, 3.00), ICAO_SHAPE)
    margins = {p.name: p.margin for p in v.parameters}
    assert margins["rise_time_us"] == pytest.approx(0.21)
    assert margins["width_us"] == pytest.approx(0.43)
    assert margins["fall_time_us"] == pytest.approx(0.5)


def test_verdict_json_shape():
    doc = json.loads(check_shape(metrics_us(2.79, 3.43, 3.0)).to_json())
    assert doc["authority"] == "ICAO"
    assert set(doc["parameters"][0]) == {"name", "value", "bound_low", "bound_high", "pass", "margin"}


def test_shape_violation_totals():
    assert shape_violation(metrics_us(2.8, 3.5, 2.9)) == 0
    # fall 3.2 violates FAA (<=3.0) by 0.2; rise 1.0 violates FAA (>=1.5) by 0.5
    assert shape_violation(metrics_us(1.0, 3.5, 3.2)) == pytest.approx(0.7)


def test_spectrum_examples():
    ok = SpectrumReport({-2.0: -0.3, -0.8: 15.8, 0.8: 16.8, 2.0: -0.1})
    assert check_spectrum(ok, DME_SPECTRUM_LIMITS).passed
    bad = SpectrumReport({-2.0: 7.7, -0.8: 24.9, 0.8: 25.4, 2.0: 6.5})
    assert len(check_spectrum(bad, DME_SPECTRUM_LIMITS).failures) == 4
    edge = SpectrumReport(dict(DME_SPECTRUM_LIMITS))
    v = check_spectrum(edge, DME_SPECTRUM_LIMITS)
    assert v.passed and all(p.margin == 0 for p in v.parameters)
    assert spectrum_excess(bad, DME_SPECTRUM_LIMITS) == pytest.approx(4.7 + 1.9 + 2.4 + 3.5)


def test_erp_matches_exact_band_integral():
    for w in (gaussian_pulse(3.5 * US), triangle(6 * US)):
        got = erp_spectrum(w).band_power_dbm
        want = oracle_dbm(w)
        for off in want:
            if want[off] > -80:  # below that the oracle's own sum is at round-off
                assert got[off] == pytest.approx(want[off], abs=0.01)


def test_erp_oracle_all_offsets_on_sharp_pulse():
    w = triangle(5 * US)
    want = oracle_dbm(w)
    assert min(want.values()) > -80
    got = erp_spectrum(w).band_power_dbm
    for off in want:
        assert got[off] == pytest.approx(want[off], abs=0.01)


def test_erp_complex_matches_oracle():
    g = gaussian_pulse(3.5 * US)
    t = g.times - 10e-6
    w = g.with_samples(g.samples * np.exp(1j * 0.3 * (t / 3e-6) ** 2))
    got = erp_spectrum(w).band_power_dbm
    want = oracle_dbm(w)
    assert got[0.8] != pytest.approx(got[-0.8], abs=1e-6)
    for off in want:
        if want[off] > -80:
            assert got[off] == pytest.approx(want[off], abs=0.01)


def test_erp_invariances():
    g = triangle(6 * US)
    base = erp_spectrum(g).band_power_dbm
    padded = erp_spectrum(g, nfft=2**18).band_power_dbm
    shifted = erp_spectrum(g.with_samples(np.roll(g.samples, 137))).band_power_dbm
    for off in base:
        assert abs(base[off] - padded[off]) < 0.01
        assert abs(base[off] - shifted[off]) < 0.01


def test_erp_calibration_is_an_offset():
    g = gaussian_pulse(3.5 * US)
    a = erp_spectrum(g).band_power_dbm
    b = erp_spectrum(g, CalibrationConvention(50.0)).band_power_dbm
    for off in a:
        assert b[off] == pytest.approx(a[off] - 10.0)


def test_erp_errors():
    g = gaussian_pulse(2 * US, SamplingConfig(record_length=10 * US))
    with pytest.raises(ConfigurationError):
        erp_spectrum(g)
    with pytest.raises(MeasurementError):
        erp_spectrum(SampledWaveform(np.zeros(1000), 2e-8))


def test_gaussian_below_sharper_pulse_at_08():
    g = erp_spectrum(gaussian_pulse(3.5 * US)).band_power_dbm
    tri = erp_spectrum(triangle(7 * US)).band_power_dbm
    assert g[0.8] < tri[0.8] and g[-0.8] < tri[-0.8]
    assert g[2.0] <= g[0.8]


@settings(max_examples=20, deadline=None)
@given(st.floats(2.5, 5.0), st.floats(0.1, 100.0))
def test_gaussian_erp_scale_free(width_us, k):
    g = gaussian_pulse(width_us * US)
    a = erp_spectrum(g).band_power_dbm
    b = erp_spectrum(g.scaled(k)).band_power_dbm
    for off in a:
        if a[off] > -100:
            assert b[off] == pytest.approx(a[off], abs=1e-6)
