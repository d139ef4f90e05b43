"""Behavioural stand-in for a DME transmitter chain and amplifier-side estimators.

The default plant is a static AM/AM curve (tanh saturation times a smooth
low-input dead zone) with a small AM/PM rotation, followed by a short FIR
memory filter and additive complex Gaussian noise whose standard deviation
has a floor term and a term proportional to the clean output magnitude.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import mpoly
from .errors import ConfigurationError
from .waveform import SampledWaveform


@dataclass(frozen=True)
class MemoryPolynomialModel:
    """y(n) = sum_k sum_m a_km u(n-m)|u(n-m)|^k + b, with ``coeffs[k, m] = a_km``."""

    coeffs: np.ndarray
    bias: complex = 0.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        if c.shape[0] < 1 or c.shape[1] < 1:
            raise ConfigurationError("memory polynomial needs K >= 1 and M >= 1")
        if not np.all(np.isfinite(c)) or not np.isfinite(self.bias):
            raise ConfigurationError("memory polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "bias", complex(self.bias))

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    @property
    def M(self) -> int:
        return self.coeffs.shape[1]

    @property
    def packed(self) -> np.ndarray:
        return mpoly.pack(self.coeffs, self.bias)

    @classmethod
    def from_packed(cls, vec, K: int, M: int) -> "MemoryPolynomialModel":
        a, b = mpoly.unpack(vec, K, M)
        return cls(a, b)

    @classmethod
    def identity(cls, K: int = 1, M: int = 1) -> "MemoryPolynomialModel":
        return cls.from_packed(mpoly.identity_coefficients(K, M), K, M)


def mp_forward(m: MemoryPolynomialModel, u: SampledWaveform) -> SampledWaveform:
    return u.with_samples(mpoly.evaluate(m.packed, u.samples, m.K, m.M))


@dataclass(frozen=True)
class PaSimulatorConfig:
    name: str = "custom"
    model: str = "composed"  # composed | memory_polynomial | identity
    ground_truth: MemoryPolynomialModel | None = None
    saturation_level: float = 1.25
    dead_zone_knee: float = 0.15
    dead_zone_floor: float = 0.5
    am_pm_rad: float = 0.2
    memory_taps: tuple = (0.9, 0.1)
    noise_floor_std: float = 0.0
    noise_relative_std: float = 0.0
    noise_bandwidth_hz: float | None = None  # None: white
    rng_seed: int = 0

    def __post_init__(self):
        if self.model not in ("composed", "memory_polynomial", "identity"):
            raise ConfigurationError(f"unknown plant model {self.model!r}")
        if self.model == "memory_polynomial" and self.ground_truth is None:
            raise ConfigurationError("memory_polynomial plant needs ground_truth coefficients")
        if self.noise_floor_std < 0 or self.noise_relative_std < 0:
            raise ConfigurationError("noise std must be non-negative")
        if self.noise_bandwidth_hz is not None and not self.noise_bandwidth_hz > 0:
            raise ConfigurationError("noise_bandwidth_hz must be positive or None")
        if not 0.0 <= self.dead_zone_knee <= 1.0:
            raise ConfigurationError("dead_zone_knee must lie in [0, 1]")
        if not 0.0 <= self.dead_zone_floor <= 1.0:
            raise ConfigurationError("dead_zone_floor must lie in [0, 1]")
        if self.saturation_level <= 0:
            raise ConfigurationError("saturation_level must be positive")
        object.__setattr__(self, "memory_taps", tuple(complex(t) for t in self.memory_taps))

    @property
    def noiseless(self) -> bool:
        return self.noise_floor_std == 0 and self.noise_relative_std == 0

    def with_(self, **changes) -> "PaSimulatorConfig":
        return replace(self, **changes)


def static_gain(cfg: PaSimulatorConfig, r) -> np.ndarray:
    """AM/AM gain |out|/|in| of the static stage at input magnitude ``r``."""
    r = np.asarray(r, dtype=float)
    A = cfg.saturation_level
    with np.errstate(invalid="ignore", divide="ignore"):
        sat = np.where(r > 0, A * np.tanh(r / A) / np.where(r > 0, r, 1.0), 1.0)
    k2 = cfg.dead_zone_knee**2
    dz = (r**2 + cfg.dead_zone_floor * k2) / (r**2 + k2) if k2 > 0 else np.ones_like(r)
    return sat * dz


def transfer_curve(cfg: PaSimulatorConfig, magnitudes) -> tuple:
    """(normalized output magnitude, AM/PM phase) of the static stage, noise-free."""
    r = np.asarray(magnitudes, dtype=float)
    return static_gain(cfg, r) * r, cfg.am_pm_rad * r**2


def clean_response(cfg: PaSimulatorConfig, u: SampledWaveform) -> np.ndarray:
    x = u.samples
    if cfg.model == "identity":
        return x.copy()
    if cfg.model == "memory_polynomial":
        g = cfg.ground_truth
        return mpoly.evaluate(g.packed, x, g.K, g.M)
    r = np.abs(x)
    s = x * static_gain(cfg, r) * np.exp(1j * cfg.am_pm_rad * r**2)
    y = np.zeros_like(s)
    for m, tap in enumerate(cfg.memory_taps):
        if m:
            y[m:] += tap * s[:-m]
        else:
            y += tap * s
    return y


def simulate_transmitter(cfg: PaSimulatorConfig, u: SampledWaveform,
                         rng: np.random.Generator | None = None) -> SampledWaveform:
    """Deterministic plant response plus seeded additive complex Gaussian noise.

    Without ``rng`` a fresh generator seeded from ``cfg.rng_seed`` is used, so
    repeated calls return identical output.
    """
    y = clean_response(cfg, u)
    if not cfg.noiseless:
        if rng is None:
            rng = np.random.default_rng(cfg.rng_seed)
        std = cfg.noise_floor_std + cfg.noise_relative_std * np.abs(y)
        if cfg.noise_bandwidth_hz is None:
            noise = _unit_noise(rng, y.size)
        else:
            noise = _lowpass_unit_noise(rng, y.size, cfg.noise_bandwidth_hz * u.sample_interval)
        y = y + std * noise
    return u.with_samples(y)


def _unit_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def _lowpass_unit_noise(rng: np.random.Generator, n: int, bw_cycles: float) -> np.ndarray:
    """``n`` samples of Gaussian-kernel low-passed noise with unit per-sample variance.

    ``bw_cycles`` is the kernel's frequency-domain standard deviation in
    cycles per sample. The white input is padded by the kernel length so
    every output sample sees the full kernel, at any bandwidth.
    """
    s = 1.0 / (2.0 * np.pi * bw_cycles)
    half = int(np.ceil(4.0 * s))
    h = np.exp(-0.5 * (np.arange(-half, half + 1) / s) ** 2)
    h /= np.sqrt(np.sum(h**2))
    return np.convolve(_unit_noise(rng, n + 2 * half), h, mode="valid")


def estimate_gain(u: SampledWaveform, y: SampledWaveform, window: tuple = (0.5, 0.9)) -> float:
    """Mean of |y|/|u| over samples whose input magnitude lies in ``window``."""
    if len(u) != len(y):
        raise ConfigurationError("input and output records differ in length")
    lo, hi = window
    mu = u.magnitude
    sel = (mu >= lo) & (mu <= hi) & (mu > 0)
    if sel.sum() < 10:
        raise ConfigurationError(f"gain window [{lo:g}, {hi:g}] holds {int(sel.sum())} samples, need >= 10")
    return float(np.mean(np.abs(y.samples[sel]) / mu[sel]))


def auto_gain_window(u: SampledWaveform, y: SampledWaveform, n_bins: int = 10) -> tuple:
    """Input-magnitude decile whose |y|/|u| ratio has the smallest variance."""
    if len(u) != len(y):
        raise ConfigurationError("input and output records differ in length")
    mu = u.magnitude
    active = mu > 1e-3 * mu.max() if mu.max() > 0 else np.zeros(mu.size, bool)
    if active.sum() < 100:
        raise ConfigurationError(f"need >= 100 active sample pairs, got {int(active.sum())}")
    order = np.argsort(mu[active], kind="stable")
    mags = mu[active][order]
    ratio = (np.abs(y.samples[active]) / mu[active])[order]
    best = None
    for chunk_m, chunk_r in zip(np.array_split(mags, n_bins), np.array_split(ratio, n_bins)):
        lo, hi = float(chunk_m[0]), float(chunk_m[-1])
        if hi <= lo:
            continue
        v = float(np.var(chunk_r))
        if best is None or v < best[0]:
            best = (v, lo, hi)
    if best is None:
        raise ConfigurationError("input magnitudes are degenerate; no usable gain window")
    return best[1], best[2]


@dataclass(frozen=True, eq=False)
class NsrProfile:
    mean: np.ndarray
    std: np.ndarray
    nsr: np.ndarray  # NaN where excluded
    included: np.ndarray
    total: float
    N: int
    excluded_count: int


def nsr_profile(pulses, floor_fraction: float = 0.01) -> NsrProfile:
    """Per-sample std/mean of |y| across an ensemble (std with divisor count - 1).

    Samples whose ensemble-mean magnitude is below ``floor_fraction`` of the
    mean's peak are excluded from the total.
    """
    pulses = list(pulses)
    if len(pulses) < 2:
        raise ConfigurationError("NSR needs an ensemble of at least 2 pulses")
    ref = pulses[0]
    if not all(p.same_grid(ref) for p in pulses[1:]):
        raise ConfigurationError("ensemble pulses are not on identical grids")
    mags = np.abs(np.stack([p.samples for p in pulses]))
    mean = mags.mean(axis=0)
    # spread about the first pulse, so identical members give exactly zero
    std = (mags - mags[0]).std(axis=0, ddof=1)
    included = mean > floor_fraction * mean.max() if mean.max() > 0 else np.zeros(mean.size, bool)
    nsr = np.full(mean.size, np.nan)
    nsr[included] = std[included] / mean[included]
    return NsrProfile(mean, std, nsr, included, float(np.sum(nsr[included])), int(mean.size),
                      int((~included).sum()))


# ---------------------------------------------------------------- profiles

PROFILE_NAMES = ("pa_highpower", "pa_lowpower")


def _parse_taps(text: str) -> tuple:
    return tuple(complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip())


def load_profile(name_or_path) -> PaSimulatorConfig:
    """Load a plant profile by shipped name (``pa_highpower``) or from a file path."""
    parser = configparser.ConfigParser()
    p = Path(str(name_or_path))
    if p.exists():
        parser.read_string(p.read_text())
        name = p.stem
    else:
        stem = str(name_or_path).removesuffix(".default")
        if stem not in PROFILE_NAMES and stem not in ("identity",):
            raise ConfigurationError(f"unknown plant profile {name_or_path!r}")
        if stem == "identity":
            return PaSimulatorConfig(name="identity", model="identity")
        text = resources.files("dmepulse.profiles").joinpath(f"{stem}.default").read_text()
        parser.read_string(text)
        name = stem
    return profile_from_parser(parser, name)


def profile_from_parser(parser: configparser.ConfigParser, name: str = "custom") -> PaSimulatorConfig:
    kw = {"name": parser.get("plant", "name", fallback=name)}
    kw["model"] = parser.get("plant", "model", fallback="composed")
    if parser.has_section("static"):
        s = parser["static"]
        kw["saturation_level"] = s.getfloat("saturation_level", 1.25)
        kw["dead_zone_knee"] = s.getfloat("dead_zone_knee", 0.15)
        kw["dead_zone_floor"] = s.getfloat("dead_zone_floor", 0.5)
        kw["am_pm_rad"] = s.getfloat("am_pm_rad", 0.2)
    if parser.has_section("memory"):
        kw["memory_taps"] = _parse_taps(parser.get("memory", "taps"))
    if parser.has_section("noise"):
        n = parser["noise"]
        kw["noise_floor_std"] = n.getfloat("floor_std", 0.0)
        kw["noise_relative_std"] = n.getfloat("relative_std", 0.0)
        bw = n.get("bandwidth_hz", "white").strip().lower()
        kw["noise_bandwidth_hz"] = None if bw in ("white", "none", "") else float(bw)
        kw["rng_seed"] = n.getint("rng_seed", 0)
    if parser.has_section("ground_truth"):
        g = parser["ground_truth"]
        K, M = g.getint("K"), g.getint("M")
        vec = _parse_taps(g.get("coefficients"))
        kw["ground_truth"] = MemoryPolynomialModel.from_packed(np.array(vec), K, M)
    return PaSimulatorConfig(**kw)


def profile_to_text(cfg: PaSimulatorConfig) -> str:
    parser = configparser.ConfigParser()
    parser["plant"] = {"name": cfg.name, "model": cfg.model}
    parser["static"] = {
        "saturation_level": repr(cfg.saturation_level),
        "dead_zone_knee": repr(cfg.dead_zone_knee),
        "dead_zone_floor": repr(cfg.dead_zone_floor),
        "am_pm_rad": repr(cfg.am_pm_rad),
    }
    parser["memory"] = {"taps": ", ".join(_fmt_complex(t) for t in cfg.memory_taps)}
    parser["noise"] = {
        "floor_std": repr(cfg.noise_floor_std),
        "relative_std": repr(cfg.noise_relative_std),
        "bandwidth_hz": "white" if cfg.noise_bandwidth_hz is None else repr(cfg.noise_bandwidth_hz),
        "rng_seed": str(cfg.rng_seed),
    }
    if cfg.ground_truth is not None:
        g = cfg.ground_truth
        parser["ground_truth"] = {
            "K": str(g.K), "M": str(g.M),
            "coefficients": ", ".join(_fmt_complex(c) for c in g.packed),
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _fmt_complex(c: complex) -> str:
    c = complex(c)
    return f"{c.real!r}{c.imag:+.17g}j"
