"""Real-coded genetic algorithm for multipath-resistant pulse design.

Fitness (lower is better) is the multipath RMS range error of the pulse plus
weighted penalties for pulse-shape bound violations (us) and band-power
excess over the ERP limits (dB).  Constraints are soft during evolution and
a hard gate on the reported ``feasible`` flag.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .compliance import (FAA_SHAPE, ICAO_SHAPE, erp_spectrum, measure_pulse_shape, shape_violation,
                         spectrum_excess, spectrum_limits)
from .errors import ConfigurationError, MeasurementError
from .multipath import DEFAULT_ALPHA, multipath_rms
from .waveform import N_GENES, Chromosome, SamplingConfig, gaussian_chromosome, synthesize_from_chromosome

log = logging.getLogger(__name__)

DEGENERATE_PENALTY = 1e6


@dataclass(frozen=True)
class FitnessWeights:
    multipath_weight: float = 1.0
    shape_penalty_weight: float = 100.0
    spectrum_penalty_weight: float = 10.0
    erp_limit_08_dbm: float = 16.0
    erp_limit_20_dbm: float = 3.0
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if min(self.multipath_weight, self.shape_penalty_weight, self.spectrum_penalty_weight) < 0:
            raise ConfigurationError("fitness weights must be non-negative")
        if not (math.isfinite(self.erp_limit_08_dbm) and math.isfinite(self.erp_limit_20_dbm)):
            raise ConfigurationError("ERP limits must be finite")

    @property
    def limits(self) -> dict:
        return spectrum_limits(self.erp_limit_08_dbm, self.erp_limit_20_dbm)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 200
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_sigma: float = 0.02
    mutation_rate: float = 1.0 / N_GENES
    tournament_size: int = 3
    elitism_fraction: float = 0.05
    rng_seed: int = 0
    initial_pulse: Chromosome | None = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigurationError("population_size must be >= 2")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate", "elitism_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma < 0 or self.tournament_size < 1:
            raise ConfigurationError("mutation_sigma must be >= 0 and tournament_size >= 1")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.elitism_fraction * self.population_size)))

    def seed_chromosome(self) -> Chromosome:
        return self.initial_pulse if self.initial_pulse is not None else gaussian_chromosome()


class FitnessBreakdown(NamedTuple):
    fitness: float
    rms_m: float
    shape_violation_us: float
    spectrum_excess_db: float
    degenerate: bool

    @property
    def feasible(self) -> bool:
        return not self.degenerate and self.shape_violation_us == 0 and self.spectrum_excess_db == 0


def fitness_breakdown(c: Chromosome, w: FitnessWeights = FitnessWeights(),
                      cfg: SamplingConfig = SamplingConfig()) -> FitnessBreakdown:
    try:
        pulse = synthesize_from_chromosome(c, cfg)
        shape = shape_violation(measure_pulse_shape(pulse), (ICAO_SHAPE, FAA_SHAPE))
        excess = spectrum_excess(erp_spectrum(pulse), w.limits)
        rms = multipath_rms(pulse, w.alpha) if w.multipath_weight else 0.0
    except (MeasurementError, ConfigurationError):
        return FitnessBreakdown(DEGENERATE_PENALTY, math.nan, math.nan, math.nan, True)
    f = w.multipath_weight * rms + w.shape_penalty_weight * shape + w.spectrum_penalty_weight * excess
    return FitnessBreakdown(float(f), rms, shape, excess, False)


def evaluate_fitness(c: Chromosome, w: FitnessWeights = FitnessWeights(),
                     cfg: SamplingConfig = SamplingConfig()) -> float:
    return fitness_breakdown(c, w, cfg).fitness


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    feasible_count: int


@dataclass
class GaResult:
    best: Chromosome
    breakdown: FitnessBreakdown
    history: list
    config: GaConfig
    weights: FitnessWeights

    @property
    def feasible(self) -> bool:
        return self.breakdown.feasible

    def history_csv(self) -> str:
        lines = ["generation,best_fitness,feasible_count"]
        lines += [f"{h.generation},{h.best_fitness:.12e},{h.feasible_count}" for h in self.history]
        return "\n".join(lines) + "\n"

    def violations(self) -> dict:
        b = self.breakdown
        return {"shape_violation_us": b.shape_violation_us, "spectrum_excess_db": b.spectrum_excess_db,
                "degenerate": b.degenerate}


class _Evaluator:
    """Memoized fitness; results depend only on the genes, so order is irrelevant."""

    def __init__(self, w: FitnessWeights, sampling: SamplingConfig, threads: int = 1):
        self.w = w
        self.sampling = sampling
        self.threads = max(1, int(threads))
        self.cache: dict = {}

    def __call__(self, pop: np.ndarray) -> list:
        keys = [row.tobytes() for row in pop]
        todo = {k: row for k, row in zip(keys, pop) if k not in self.cache}
        items = list(todo.items())

        def one(item):
            return item[0], fitness_breakdown(Chromosome(tuple(item[1])), self.w, self.sampling)

        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                done = list(ex.map(one, items))
        else:
            done = [one(it) for it in items]
        self.cache.update(done)
        return [self.cache[k] for k in keys]


def _initial_population(seed: np.ndarray, cfg: GaConfig, rng: np.random.Generator) -> np.ndarray:
    pop = np.empty((cfg.population_size, N_GENES))
    pop[0] = seed
    noise = rng.normal(0.0, cfg.mutation_sigma, (cfg.population_size - 1, N_GENES))
    pop[1:] = np.clip(seed + noise, 0.0, 1.0)
    return pop


def _tournament(fit: np.ndarray, size: int, rng: np.random.Generator) -> int:
    picks = rng.integers(0, fit.size, size)
    return int(picks[np.argmin(fit[picks])])


def _ranking_key(b: FitnessBreakdown):
    return (not b.feasible, b.fitness)


def evolve(cfg: GaConfig = GaConfig(), w: FitnessWeights = FitnessWeights(), threads: int = 1,
           progress: Callable | None = None) -> GaResult:
    """Elitist GA: tournament selection, whole-arithmetic crossover, Gaussian mutation.

    All randomness comes from one generator seeded with ``cfg.rng_seed``; the
    returned best is the lowest-fitness feasible individual of the final
    population, or the lowest-fitness individual when none is feasible.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    evaluate = _Evaluator(w, cfg.sampling, threads)
    pop = _initial_population(cfg.seed_chromosome().array, cfg, rng)
    scores = evaluate(pop)
    fit = np.array([s.fitness for s in scores])
    history = [GenerationRecord(0, float(fit.min()), sum(s.feasible for s in scores))]
    n_elite = min(cfg.n_elite, cfg.population_size)

    for gen in range(1, cfg.generations + 1):
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[:n_elite]]
        while len(children) < cfg.population_size:
            a = pop[_tournament(fit, cfg.tournament_size, rng)]
            b = pop[_tournament(fit, cfg.tournament_size, rng)]
            if rng.random() < cfg.crossover_rate:
                lam = rng.random()
                child = lam * a + (1.0 - lam) * b
            else:
                child = a.copy()
            mask = rng.random(N_GENES) < cfg.mutation_rate
            if mask.any():
                child[mask] += rng.normal(0.0, cfg.mutation_sigma, int(mask.sum()))
            children.append(np.clip(child, 0.0, 1.0))
        pop = np.array(children)
        scores = evaluate(pop)
        fit = np.array([s.fitness for s in scores])
        history.append(GenerationRecord(gen, float(fit.min()), sum(s.feasible for s in scores)))
        if progress is not None:
            progress(history[-1])
        if gen % 50 == 0:
            log.info("generation %d: best fitness %.4f, %d feasible", gen, fit.min(), history[-1].feasible_count)

    best_i = min(range(len(scores)), key=lambda i: _ranking_key(scores[i]))
    best = Chromosome(tuple(pop[best_i]), metadata={"rng_seed": cfg.rng_seed,
                                                      "generations": cfg.generations,
                                                      "erp_limit_08_dbm": w.erp_limit_08_dbm,
                                                      "erp_limit_20_dbm": w.erp_limit_20_dbm})
    return GaResult(best, scores[best_i], history, cfg, w)


STAGE1_WEIGHTS = FitnessWeights(erp_limit_08_dbm=23.0, erp_limit_20_dbm=3.0)
STAGE2_WEIGHTS = FitnessWeights(erp_limit_08_dbm=16.0, erp_limit_20_dbm=3.0)


def design_two_stage(cfg: GaConfig = GaConfig(), stage1: FitnessWeights = STAGE1_WEIGHTS,
                     stage2: FitnessWeights = STAGE2_WEIGHTS, threads: int = 1,
                     stage1_generations: int | None = None) -> tuple:
    """Gaussian-seeded run under the 23 dBm mask, then a run under ``stage2`` seeded with its best."""
    first_cfg = replace(cfg, initial_pulse=cfg.initial_pulse,
                        generations=cfg.generations if stage1_generations is None else stage1_generations)
    first = evolve(first_cfg, stage1, threads)
    second = evolve(replace(cfg, initial_pulse=first.best, rng_seed=cfg.rng_seed + 1), stage2, threads)
    return first, second
