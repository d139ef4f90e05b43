"""Pulse-shape and ERP-spectrum measurement with ICAO/FAA limit checks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, MeasurementError
from .waveform import SampledWaveform

US = 1e-6
BAND_WIDTH = 0.5e6
OFFSETS_MHZ = (-2.0, -0.8, 0.8, 2.0)
MIN_FFT = 2**16
MIN_SPECTRUM_RECORD = 20e-6

DME_SPECTRUM_LIMITS = {-2.0: 3.0, -0.8: 23.0, 0.8: 23.0, 2.0: 3.0}


def spectrum_limits(limit_08: float = 23.0, limit_20: float = 3.0) -> dict:
    return {-2.0: limit_20, -0.8: limit_08, 0.8: limit_08, 2.0: limit_20}


@dataclass(frozen=True)
class PulseShapeMetrics:
    rise_time: float
    width: float
    fall_time: float

    def as_us(self) -> tuple:
        return (self.rise_time / US, self.width / US, self.fall_time / US)


@dataclass(frozen=True)
class Bound:
    low: float | None = None
    high: float | None = None


@dataclass(frozen=True)
class ShapeSpec:
    """Bounds in seconds on rise time, width and fall time."""

    authority: str
    rise: Bound
    width: Bound
    fall: Bound

    def __post_init__(self):
        for b in (self.rise, self.width, self.fall):
            if b.low is not None and b.high is not None and b.low > b.high:
                raise ConfigurationError(f"{self.authority}: lower bound above upper bound")


ICAO_SHAPE = ShapeSpec("ICAO", Bound(None, 3.0 * US), Bound(3.0 * US, 4.0 * US), Bound(2.5 * US, 3.5 * US))
FAA_SHAPE = ShapeSpec("FAA", Bound(1.5 * US, 3.0 * US), Bound(3.0 * US, 4.0 * US), Bound(1.5 * US, 3.0 * US))


@dataclass(frozen=True)
class ParameterCheck:
    name: str
    value: float
    bound_low: float | None
    bound_high: float | None
    passed: bool
    margin: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass(frozen=True)
class ComplianceVerdict:
    authority: str
    parameters: tuple = ()

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.parameters)

    @property
    def failures(self) -> list:
        return [p.name for p in self.parameters if not p.passed]

    def to_dict(self) -> dict:
        return {"authority": self.authority, "parameters": [p.to_dict() for p in self.parameters]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _check(name, value, low, high, rel_tol=1e-9) -> ParameterCheck:
    margins = []
    if low is not None:
        margins.append(value - low)
    if high is not None:
        margins.append(high - value)
    margin = min(margins) if margins else math.inf
    # Inclusive bounds; the tolerance absorbs unit round-trip noise such as 3.0e-6 / 1e-6.
    tol = rel_tol * max(1.0, abs(value))
    return ParameterCheck(name, value, low, high, bool(margin >= -tol), margin)


# ---------------------------------------------------------------- crossings

def rising_crossing(mag: np.ndarray, threshold: float, dt: float) -> float:
    """Time (from record start) of the first upward crossing of ``threshold``."""
    above = mag >= threshold
    if not above.any():
        raise MeasurementError(f"signal never reaches {threshold:g}", threshold=threshold, edge="rising")
    i = int(np.argmax(above))
    if i == 0:
        raise MeasurementError(f"record starts above {threshold:g}; no rising crossing",
                               threshold=threshold, edge="rising")
    y0, y1 = mag[i - 1], mag[i]
    return (i - 1 + (threshold - y0) / (y1 - y0)) * dt


def falling_crossing(mag: np.ndarray, threshold: float, dt: float) -> float:
    """Time of the last downward crossing of ``threshold``."""
    above = mag >= threshold
    if not above.any():
        raise MeasurementError(f"signal never reaches {threshold:g}", threshold=threshold, edge="falling")
    i = mag.size - 1 - int(np.argmax(above[::-1]))
    if i == mag.size - 1:
        raise MeasurementError(f"record ends above {threshold:g}; no falling crossing",
                               threshold=threshold, edge="falling")
    y0, y1 = mag[i], mag[i + 1]
    return (i + (y0 - threshold) / (y0 - y1)) * dt


def measure_pulse_shape(w: SampledWaveform) -> PulseShapeMetrics:
    """10-90% rise, 50% width and 90-10% fall of ``|w|`` relative to its own peak."""
    mag = w.magnitude
    peak = mag.max()
    if peak <= 0:
        raise MeasurementError("all-zero waveform has no pulse shape")
    dt = w.sample_interval
    up = {}
    down = {}
    for frac in (0.1, 0.5, 0.9):
        try:
            up[frac] = rising_crossing(mag, frac * peak, dt)
        except MeasurementError as exc:
            raise MeasurementError(f"{int(frac * 100)}% rising-edge crossing missing: {exc}",
                                   threshold=frac, edge="rising") from None
        try:
            down[frac] = falling_crossing(mag, frac * peak, dt)
        except MeasurementError as exc:
            raise MeasurementError(f"{int(frac * 100)}% falling-edge crossing missing: {exc}",
                                   threshold=frac, edge="falling") from None
    return PulseShapeMetrics(
        rise_time=up[0.9] - up[0.1],
        width=down[0.5] - up[0.5],
        fall_time=down[0.1] - down[0.9],
    )


def check_shape(m: PulseShapeMetrics, spec: ShapeSpec = ICAO_SHAPE) -> ComplianceVerdict:
    """Bound check; values, bounds and margins are reported in microseconds."""

    def us(v):
        return None if v is None else v / US

    params = (
        _check("rise_time_us", m.rise_time / US, us(spec.rise.low), us(spec.rise.high)),
        _check("width_us", m.width / US, us(spec.width.low), us(spec.width.high)),
        _check("fall_time_us", m.fall_time / US, us(spec.fall.low), us(spec.fall.high)),
    )
    return ComplianceVerdict(spec.authority, params)


def shape_violation(m: PulseShapeMetrics, specs=(ICAO_SHAPE, FAA_SHAPE)) -> float:
    """Summed bound violation in microseconds over the intersection of ``specs``."""
    total = 0.0
    for value, attr in ((m.rise_time, "rise"), (m.width, "width"), (m.fall_time, "fall")):
        lows = [getattr(s, attr).low for s in specs if getattr(s, attr).low is not None]
        highs = [getattr(s, attr).high for s in specs if getattr(s, attr).high is not None]
        if lows:
            total += max(0.0, max(lows) - value)
        if highs:
            total += max(0.0, value - min(highs))
    return total / US


# ---------------------------------------------------------------- spectrum

@dataclass(frozen=True)
class CalibrationConvention:
    reference_peak_erp_dbm: float = 60.0
    description: str = ("0.5 MHz band centred on the channel frequency anchored to the "
                        "reference ERP (60 dBm = 1000 W); other bands relative to it")

    def __post_init__(self):
        if not math.isfinite(self.reference_peak_erp_dbm):
            raise ConfigurationError("reference ERP must be finite")


@dataclass(frozen=True)
class SpectrumReport:
    band_power_dbm: dict
    band_width: float = BAND_WIDTH
    calibration: CalibrationConvention = field(default_factory=CalibrationConvention)

    def __getitem__(self, offset_mhz):
        return self.band_power_dbm[offset_mhz]

    def to_dict(self) -> dict:
        return {
            "band_power_dbm": {f"{k:+.1f}": v for k, v in sorted(self.band_power_dbm.items())},
            "band_width_hz": self.band_width,
            "calibration": asdict(self.calibration),
        }


def energy_spectral_density(w: SampledWaveform, nfft: int | None = None):
    """Return (frequencies ascending, |X(f)|^2 dt^2) on a zero-padded DFT grid."""
    n = len(w)
    if nfft is None:
        nfft = max(MIN_FFT, 1 << (n - 1).bit_length())
    if nfft < n:
        raise ConfigurationError("nfft shorter than the record")
    dt = w.sample_interval
    x = w.samples
    if not np.any(x.imag):
        # Hermitian spectrum: one real FFT, mirrored onto the negative bins.
        half = (np.abs(np.fft.rfft(x.real, nfft)) * dt) ** 2
        pos = np.fft.rfftfreq(nfft, dt)
        neg = slice(nfft // 2, 0, -1)
        return np.concatenate((-pos[neg], pos)), np.concatenate((half[neg], half))
    spec = np.fft.fftshift(np.fft.fft(x, nfft))
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, dt))
    return freqs, (np.abs(spec) * dt) ** 2


def band_energy(freqs: np.ndarray, esd: np.ndarray, f_lo: float, f_hi: float) -> float:
    """Trapezoidal integral of ``esd`` over [f_lo, f_hi] with interpolated band edges."""
    inside = (freqs > f_lo) & (freqs < f_hi)
    f = np.concatenate(([f_lo], freqs[inside], [f_hi]))
    e = np.concatenate(([np.interp(f_lo, freqs, esd)], esd[inside], [np.interp(f_hi, freqs, esd)]))
    return float(np.trapezoid(e, f))


def erp_spectrum(w: SampledWaveform, cal: CalibrationConvention = CalibrationConvention(),
                 nfft: int | None = None, offsets_mhz=OFFSETS_MHZ) -> SpectrumReport:
    if w.duration < MIN_SPECTRUM_RECORD * (1 - 1e-9):
        raise ConfigurationError(
            f"record of {w.duration:g} s is shorter than the {MIN_SPECTRUM_RECORD:g} s minimum"
        )
    freqs, esd = energy_spectral_density(w, nfft)
    half = BAND_WIDTH / 2
    ref = band_energy(freqs, esd, -half, half)
    if not ref > 0:
        raise MeasurementError("waveform has no energy in the channel band")
    floor = ref * 1e-300
    out = {}
    for off in offsets_mhz:
        fc = off * 1e6
        e = band_energy(freqs, esd, fc - half, fc + half)
        out[off] = cal.reference_peak_erp_dbm + 10.0 * math.log10(max(e, floor) / ref)
    return SpectrumReport(out, BAND_WIDTH, cal)


def check_spectrum(r: SpectrumReport, limits: dict = DME_SPECTRUM_LIMITS) -> ComplianceVerdict:
    """Upper-limit check per offset; margin in dB (limit minus measured)."""
    if set(limits) - set(r.band_power_dbm):
        raise ConfigurationError("spectrum report lacks offsets named in the limits")
    params = tuple(
        _check(f"erp_{off:+.1f}MHz_dbm", r.band_power_dbm[off], None, limits[off], rel_tol=0.0)
        for off in sorted(limits)
    )
    return ComplianceVerdict("ICAO/FAA spectrum", params)


def spectrum_excess(r: SpectrumReport, limits: dict) -> float:
    """Sum of dB exceedances over the offsets in ``limits``."""
    return sum(max(0.0, r.band_power_dbm[o] - lim) for o, lim in limits.items())
