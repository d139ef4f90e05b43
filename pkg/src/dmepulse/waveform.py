"""Sampled complex-baseband waveforms and reference DME pulse synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError

N_GENES = 64
CHROMOSOME_DURATION = 12e-6


@dataclass(frozen=True)
class SamplingConfig:
    sample_rate: float = 50e6
    record_length: float = 20e-6

    def __post_init__(self):
        if self.sample_rate < 20e6:
            raise ConfigurationError(
                f"sample_rate {self.sample_rate:g} Hz is below the 20 MHz minimum"
            )
        if self.record_length <= 0:
            raise ConfigurationError("record_length must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.record_length * self.sample_rate))


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Uniformly sampled complex envelope.

    ``samples[i]`` is the envelope at ``start_time + i * sample_interval``.
    """

    samples: np.ndarray
    sample_interval: float
    start_time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1 or s.size == 0:
            raise ConfigurationError("waveform samples must be a non-empty 1-D array")
        if not self.sample_interval > 0:
            raise ConfigurationError("sample_interval must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.sample_interval

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) * self.sample_interval

    @property
    def duration(self) -> float:
        return self.samples.size * self.sample_interval

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)

    def with_samples(self, samples) -> "SampledWaveform":
        return SampledWaveform(samples, self.sample_interval, self.start_time)

    def scaled(self, k) -> "SampledWaveform":
        return self.with_samples(self.samples * k)

    def peak_normalized(self) -> "SampledWaveform":
        peak = self.magnitude.max()
        if peak == 0:
            raise ConfigurationError("cannot peak-normalize an all-zero waveform")
        return self.with_samples(self.samples / peak)

    def is_peak_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.magnitude.max() - 1.0) <= tol

    def same_grid(self, other: "SampledWaveform") -> bool:
        return (
            len(self) == len(other)
            and np.isclose(self.sample_interval, other.sample_interval, rtol=1e-12, atol=0)
            and np.isclose(self.start_time, other.start_time, rtol=0, atol=1e-6 * self.sample_interval)
        )

    def spline(self) -> CubicSpline:
        return CubicSpline(self.times, self.samples, bc_type="natural")

    def delayed(self, delay: float) -> "SampledWaveform":
        """Copy delayed by ``delay`` seconds on the same grid (zero before the record)."""
        if delay == 0:
            return self
        t = self.times - delay
        out = np.zeros(len(self), dtype=complex)
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        out[inside] = self.spline()(t[inside])
        return self.with_samples(out)


@dataclass(frozen=True)
class Chromosome:
    """64 amplitude genes in [0, 1] spread uniformly over a 12 us pulse."""

    genes: tuple
    duration: float = CHROMOSOME_DURATION
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = tuple(float(v) for v in np.asarray(self.genes, dtype=float).ravel())
        if len(g) != N_GENES:
            raise ConfigurationError(f"chromosome needs {N_GENES} genes, got {len(g)}")
        if not all(0.0 <= v <= 1.0 for v in g):
            raise ConfigurationError("every gene must lie in [0, 1]")
        object.__setattr__(self, "genes", g)

    @classmethod
    def clamped(cls, genes, **kw) -> "Chromosome":
        return cls(tuple(np.clip(np.asarray(genes, dtype=float), 0.0, 1.0)), **kw)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.genes)

    @property
    def knot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, N_GENES)

    def to_json(self) -> str:
        doc = {"n_genes": N_GENES, "duration_s": self.duration, "genes": list(self.genes)}
        if self.metadata:
            doc["metadata"] = self.metadata
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Chromosome":
        doc = json.loads(text)
        return cls(tuple(doc["genes"]), float(doc.get("duration_s", CHROMOSOME_DURATION)),
                   metadata=doc.get("metadata", {}))


def _record_grid(cfg: SamplingConfig) -> np.ndarray:
    return np.arange(cfg.n_samples) / cfg.sample_rate


def gaussian_pulse(half_amplitude_width: float, cfg: SamplingConfig = SamplingConfig()) -> SampledWaveform:
    """Peak-normalized Gaussian of the given 50% width, centred in the record."""
    if half_amplitude_width <= 0:
        raise ConfigurationError("half_amplitude_width must be positive")
    if cfg.record_length < 4 * half_amplitude_width:
        raise ConfigurationError(
            f"record of {cfg.record_length:g} s is shorter than 4x the pulse width"
        )
    sigma = half_amplitude_width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    t = _record_grid(cfg)
    centre = cfg.record_length / 2
    return SampledWaveform(np.exp(-((t - centre) ** 2) / (2 * sigma**2)), 1.0 / cfg.sample_rate)


def chromosome_offset(cfg: SamplingConfig, duration: float = CHROMOSOME_DURATION) -> float:
    """Start time of the 12 us chromosome span when centred in the record."""
    if cfg.record_length < duration:
        raise ConfigurationError("record is shorter than the chromosome duration")
    return (cfg.record_length - duration) / 2


def _chromosome_envelope(c: Chromosome, cfg: SamplingConfig) -> np.ndarray:
    spline = CubicSpline(c.knot_times, c.array, bc_type="natural")
    tau = _record_grid(cfg) - chromosome_offset(cfg, c.duration)
    env = np.zeros(tau.size)
    eps = 1e-6 / cfg.sample_rate  # grid round-off at the span ends
    inside = (tau >= -eps) & (tau <= c.duration + eps)
    env[inside] = spline(np.clip(tau[inside], 0.0, c.duration))
    return np.maximum(env, 0.0)


def synthesize_from_chromosome(c: Chromosome, cfg: SamplingConfig = SamplingConfig()) -> SampledWaveform:
    """Natural cubic spline through the genes, clamped to >= 0, peak-normalized.

    Outside the 12 us span the envelope is zero.
    """
    env = _chromosome_envelope(c, cfg)
    peak = env.max()
    if peak <= 0:
        raise ConfigurationError("chromosome produces an all-zero envelope")
    return SampledWaveform(env / peak, 1.0 / cfg.sample_rate)


def gaussian_chromosome(half_amplitude_width: float = 3.5e-6) -> Chromosome:
    """Chromosome sampling a Gaussian centred in the 12 us span (GA warm start)."""
    sigma = half_amplitude_width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    knots = np.linspace(0.0, CHROMOSOME_DURATION, N_GENES)
    genes = np.exp(-((knots - CHROMOSOME_DURATION / 2) ** 2) / (2 * sigma**2))
    return Chromosome(tuple(genes), metadata={"origin": f"gaussian {half_amplitude_width:g} s"})


def resample(w: SampledWaveform, new_rate: float) -> SampledWaveform:
    """Cubic-spline resampling over the same record span."""
    if new_rate <= 0:
        raise ConfigurationError("new_rate must be positive")
    if np.isclose(new_rate, w.sample_rate, rtol=1e-12, atol=0):
        return w
    n_new = max(1, int(round(w.duration * new_rate)))
    t_new = w.start_time + np.arange(n_new) / new_rate
    t_new = t_new[t_new <= w.times[-1] + 1e-15]
    if len(w) < 2:
        return SampledWaveform(np.full(t_new.size, w.samples[0]), 1.0 / new_rate, w.start_time)
    return SampledWaveform(w.spline()(t_new), 1.0 / new_rate, w.start_time)


def write_waveform_csv(w: SampledWaveform, path) -> None:
    """Write ``time_s,re,im`` CSV plus a ``.json`` sidecar with the sampling grid."""
    path = Path(path)
    lines = ["time_s,re,im"]
    for t, s in zip(w.times, w.samples):
        lines.append(f"{t:.15e},{s.real:.15e},{s.imag:.15e}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = {"sample_rate_hz": w.sample_rate, "start_time_s": w.start_time}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_waveform_csv(path) -> SampledWaveform:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        dt = 1.0 / meta["sample_rate_hz"]
        t0 = meta["start_time_s"]
    else:
        dt = float(data[1, 0] - data[0, 0])
        t0 = float(data[0, 0])
    return SampledWaveform(data[:, 1] + 1j * data[:, 2], dt, t0)
