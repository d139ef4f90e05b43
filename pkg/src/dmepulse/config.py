"""Experiment configuration: one INI-style file with named sections, CLI flags on top.

Sections and keys (all optional; defaults below)::

    [experiment]  seed, out, threads
    [sampling]    sample_rate_hz, record_length_s
    [ga]          population_size, generations, stage1_generations, crossover_rate,
                  mutation_sigma, mutation_rate, tournament_size, elitism_fraction,
                  stage1_erp_limit_08_dbm, stage1_erp_limit_20_dbm,
                  stage2_erp_limit_08_dbm, stage2_erp_limit_20_dbm,
                  shape_penalty_weight, spectrum_penalty_weight, seed_pulse
    [plant]       profile
    [dpd]         nonlinearity_order, memory_depth, rank, mu, max_iterations,
                  convergence_tol, loop_iterations, gain_window, reestimate_gain,
                  stop_on_pass, pulse
    [evaluation]  alpha, phi_steps, delta_steps, delta_max_s, compare_pulse,
                  erp_limit_08_dbm, erp_limit_20_dbm, reference_peak_erp_dbm
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .compliance import CalibrationConvention, spectrum_limits
from .dpd import DpdLoopConfig
from .errors import ConfigurationError
from .ga import FitnessWeights, GaConfig
from .multipath import DEFAULT_ALPHA, DEFAULT_DELTA_MAX, DEFAULT_DELTA_STEPS, DEFAULT_PHI_STEPS
from .pa import PaSimulatorConfig, load_profile
from .waveform import SamplingConfig

# The stage-2 +-2 MHz design limit is tighter than the compliance limit (3 dBm)
# so the designed pulse leaves headroom for amplifier regrowth.
STAGE2_DESIGN_LIMIT_20_DBM = -5.0


@dataclass(frozen=True)
class GaSection:
    population_size: int = 200
    generations: int = 500
    stage1_generations: int | None = None
    crossover_rate: float = 0.9
    mutation_sigma: float = 0.02
    mutation_rate: float = 1.0 / 64
    tournament_size: int = 3
    elitism_fraction: float = 0.05
    stage1_erp_limit_08_dbm: float = 23.0
    stage1_erp_limit_20_dbm: float = 3.0
    stage2_erp_limit_08_dbm: float = 16.0
    stage2_erp_limit_20_dbm: float = STAGE2_DESIGN_LIMIT_20_DBM
    shape_penalty_weight: float = 100.0
    spectrum_penalty_weight: float = 10.0
    seed_pulse: str = "gaussian"


@dataclass(frozen=True)
class DpdSection:
    nonlinearity_order: int = 7
    memory_depth: int = 2
    rank: int | None = 12
    mu: float = 0.2
    max_iterations: int = 1  # damped steps per transmission
    convergence_tol: float = 1e-6
    loop_iterations: int = 16
    gain_window: tuple | str = "auto"
    reestimate_gain: bool = False
    stop_on_pass: bool = False
    pulse: str = "design/chromosome.json"


@dataclass(frozen=True)
class EvaluationSection:
    alpha: float = DEFAULT_ALPHA
    phi_steps: int = DEFAULT_PHI_STEPS
    delta_steps: int = DEFAULT_DELTA_STEPS
    delta_max_s: float = DEFAULT_DELTA_MAX
    compare_pulse: str = "gaussian"
    erp_limit_08_dbm: float = 23.0
    erp_limit_20_dbm: float = 3.0
    reference_peak_erp_dbm: float = 60.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    threads: int = 0  # 0: all cores
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    ga: GaSection = field(default_factory=GaSection)
    plant: str = "pa_highpower"
    dpd: DpdSection = field(default_factory=DpdSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    source: str | None = None

    @property
    def n_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def plant_config(self) -> PaSimulatorConfig:
        return load_profile(self.plant)

    def ga_config(self, initial_pulse=None) -> GaConfig:
        g = self.ga
        return GaConfig(population_size=g.population_size, generations=g.generations,
                        crossover_rate=g.crossover_rate, mutation_sigma=g.mutation_sigma,
                        mutation_rate=g.mutation_rate, tournament_size=g.tournament_size,
                        elitism_fraction=g.elitism_fraction, rng_seed=self.seed,
                        initial_pulse=initial_pulse, sampling=self.sampling)

    def stage_weights(self) -> tuple:
        g, e = self.ga, self.evaluation
        common = dict(shape_penalty_weight=g.shape_penalty_weight,
                      spectrum_penalty_weight=g.spectrum_penalty_weight, alpha=e.alpha)
        return (FitnessWeights(erp_limit_08_dbm=g.stage1_erp_limit_08_dbm,
                               erp_limit_20_dbm=g.stage1_erp_limit_20_dbm, **common),
                FitnessWeights(erp_limit_08_dbm=g.stage2_erp_limit_08_dbm,
                               erp_limit_20_dbm=g.stage2_erp_limit_20_dbm, **common))

    def dpd_config(self) -> DpdLoopConfig:
        d = self.dpd
        return DpdLoopConfig(K=d.nonlinearity_order, M=d.memory_depth, rank=d.rank, mu=d.mu,
                             max_iterations=d.max_iterations, convergence_tol=d.convergence_tol,
                             loop_iterations=d.loop_iterations, gain_window=d.gain_window,
                             reestimate_gain=d.reestimate_gain, stop_on_pass=d.stop_on_pass)

    def limits(self) -> dict:
        return spectrum_limits(self.evaluation.erp_limit_08_dbm, self.evaluation.erp_limit_20_dbm)

    def calibration(self) -> CalibrationConvention:
        return CalibrationConvention(self.evaluation.reference_peak_erp_dbm)

    def resolve(self, path: str) -> Path:
        """Paths in the config are relative to the output directory."""
        p = Path(path)
        return p if p.is_absolute() else self.out_dir / p

    def to_text(self) -> str:
        """Canonical INI rendering of the effective configuration."""
        p = configparser.ConfigParser()
        p["experiment"] = {"seed": str(self.seed), "out": self.out, "threads": str(self.threads)}
        p["sampling"] = {"sample_rate_hz": repr(self.sampling.sample_rate),
                         "record_length_s": repr(self.sampling.record_length)}
        p["ga"] = {k: _fmt(v) for k, v in vars(self.ga).items()}
        p["plant"] = {"profile": self.plant}
        d = dict(vars(self.dpd))
        d["rank"] = "full" if self.dpd.rank is None else str(self.dpd.rank)
        p["dpd"] = {k: _fmt(v) for k, v in d.items()}
        p["evaluation"] = {k: _fmt(v) for k, v in vars(self.evaluation).items()}
        buf = io.StringIO()
        p.write(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_rank(text: str):
    t = text.strip().lower()
    if t in ("full", "none"):
        return None
    return int(t)


def _parse_window(text: str):
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    parts = [float(x) for x in t.split(",")]
    if len(parts) != 2:
        raise ConfigurationError("gain_window must be 'auto' or 'low, high'")
    return tuple(parts)


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


_GA_TYPES = {"population_size": int, "generations": int, "stage1_generations": _optional_int,
             "tournament_size": int, "seed_pulse": str}
_DPD_TYPES = {"nonlinearity_order": int, "memory_depth": int, "rank": _parse_rank, "max_iterations": int,
              "loop_iterations": int, "gain_window": _parse_window, "pulse": str}
_EVAL_TYPES = {"phi_steps": int, "delta_steps": int, "compare_pulse": str}


def _section(parser, name, cls, types):
    if not parser.has_section(name):
        return cls()
    known = set(cls.__dataclass_fields__)
    kw = {}
    for key, raw in parser[name].items():
        if key not in known:
            raise ConfigurationError(f"unknown key [{name}] {key}")
        conv = types.get(key)
        if conv is None:
            default = cls.__dataclass_fields__[key].default
            if isinstance(default, bool):
                conv = lambda s: configparser.ConfigParser.BOOLEAN_STATES[s.strip().lower()]
            else:
                conv = float
        try:
            kw[key] = conv(raw)
        except (ValueError, KeyError) as exc:
            raise ConfigurationError(f"bad value for [{name}] {key}: {raw!r}") from exc
    return cls(**kw)


def load_config(path=None) -> ExperimentConfig:
    """Parse a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
    try:
        parser.read_string(p.read_text())
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {p}: {exc}") from exc
    allowed = {"experiment", "sampling", "ga", "plant", "dpd", "evaluation"}
    extra = set(parser.sections()) - allowed
    if extra:
        raise ConfigurationError(f"unknown config sections: {sorted(extra)}")
    kw = {"source": str(p)}
    if parser.has_section("experiment"):
        e = parser["experiment"]
        if "seed" in e:
            kw["seed"] = e.getint("seed")
        if "out" in e:
            kw["out"] = e.get("out")
        if "threads" in e:
            kw["threads"] = e.getint("threads")
    if parser.has_section("sampling"):
        s = parser["sampling"]
        kw["sampling"] = SamplingConfig(s.getfloat("sample_rate_hz", 50e6), s.getfloat("record_length_s", 20e-6))
    if parser.has_section("plant"):
        kw["plant"] = parser.get("plant", "profile", fallback="pa_highpower")
    kw["ga"] = _section(parser, "ga", GaSection, _GA_TYPES)
    kw["dpd"] = _section(parser, "dpd", DpdSection, _DPD_TYPES)
    kw["evaluation"] = _section(parser, "evaluation", EvaluationSection, _EVAL_TYPES)
    return ExperimentConfig(**kw)


def apply_overrides(cfg: ExperimentConfig, *, seed=None, out=None, threads=None, plant=None, rank=None,
                    nonlinearity_order=None, memory_depth=None) -> ExperimentConfig:
    """Flags win over the file."""
    top = {k: v for k, v in (("seed", seed), ("out", out), ("threads", threads), ("plant", plant))
           if v is not None}
    dpd = {}
    if rank is not None:
        dpd["rank"] = _parse_rank(str(rank))
    if nonlinearity_order is not None:
        dpd["nonlinearity_order"] = int(nonlinearity_order)
    if memory_depth is not None:
        dpd["memory_depth"] = int(memory_depth)
    if dpd:
        top["dpd"] = replace(cfg.dpd, **dpd)
    return replace(cfg, **top)
