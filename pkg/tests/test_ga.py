import math

import numpy as np
import pytest

from dmepulse.compliance import erp_spectrum, measure_pulse_shape, shape_violation, spectrum_excess
from dmepulse.errors import ConfigurationError
from dmepulse.ga import (
    DEGENERATE_PENALTY,
    STAGE1_WEIGHTS,
    FitnessWeights,
    GaConfig,
    design_two_stage,
    evaluate_fitness,
    evolve,
    fitness_breakdown,
)
from dmepulse.multipath import multipath_rms
from dmepulse.waveform import N_GENES, Chromosome, gaussian_chromosome, synthesize_from_chromosome

SMALL = GaConfig(population_size=8, generations=4, rng_seed=3)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        GaConfig(population_size=1)
    with pytest.raises(ConfigurationError):
        GaConfig(crossover_rate=1.5)
    with pytest.raises(ConfigurationError):
        GaConfig(generations=-1)
    with pytest.raises(ConfigurationError):
        FitnessWeights(shape_penalty_weight=-1)
    with pytest.raises(ConfigurationError):
        FitnessWeights(erp_limit_08_dbm=math.inf)
    assert GaConfig().n_elite == 10


def test_fitness_composition_on_gaussian_seed():
    c = gaussian_chromosome()
    w = FitnessWeights(erp_limit_08_dbm=-10.0, erp_limit_20_dbm=-60.0)
    b = fitness_breakdown(c, w)
    pulse = synthesize_from_chromosome(c)
    assert b.rms_m == pytest.approx(multipath_rms(pulse))
    assert b.shape_violation_us == pytest.approx(shape_violation(measure_pulse_shape(pulse)))
    assert b.spectrum_excess_db == pytest.approx(spectrum_excess(erp_spectrum(pulse), w.limits))
    assert b.spectrum_excess_db > 0 and not b.feasible
    assert b.fitness == pytest.approx(b.rms_m + 100 * b.shape_violation_us + 10 * b.spectrum_excess_db)
    assert evaluate_fitness(c, w) == b.fitness


def test_gaussian_seed_is_feasible_under_loose_mask():
    b = fitness_breakdown(gaussian_chromosome(), STAGE1_WEIGHTS)
    assert b.feasible
    assert 20 < b.rms_m < 32


def test_degenerate_pulse_penalty():
    flat = Chromosome(tuple([0.0] * N_GENES))
    b = fitness_breakdown(flat)
    assert b.degenerate and b.fitness == DEGENERATE_PENALTY and not b.feasible


def test_zero_generations_returns_feasible_seed():
    seed = gaussian_chromosome()
    res = evolve(GaConfig(population_size=6, generations=0, initial_pulse=seed), STAGE1_WEIGHTS)
    assert res.feasible
    assert len(res.history) == 1
    assert res.breakdown.fitness <= fitness_breakdown(seed, STAGE1_WEIGHTS).fitness


def test_evolve_is_deterministic():
    a = evolve(SMALL, STAGE1_WEIGHTS)
    b = evolve(SMALL, STAGE1_WEIGHTS)
    assert a.best.to_json() == b.best.to_json()
    assert a.history_csv() == b.history_csv()
    threaded = evolve(SMALL, STAGE1_WEIGHTS, threads=3)
    assert threaded.best.to_json() == a.best.to_json()


def test_seed_changes_the_run():
    a = evolve(SMALL, STAGE1_WEIGHTS)
    b = evolve(GaConfig(population_size=8, generations=4, rng_seed=4), STAGE1_WEIGHTS)
    assert a.best.genes != b.best.genes


def test_elitism_keeps_best_fitness_monotone():
    res = evolve(GaConfig(population_size=10, generations=8, rng_seed=1), STAGE1_WEIGHTS)
    best = [h.best_fitness for h in res.history]
    assert np.all(np.diff(best) <= 0)
    assert res.breakdown.fitness == pytest.approx(best[-1])


def test_history_csv_format():
    res = evolve(SMALL, STAGE1_WEIGHTS)
    lines = res.history_csv().splitlines()
    assert lines[0] == "generation,best_fitness,feasible_count"
    assert len(lines) == SMALL.generations + 2
    gen, fit, count = lines[-1].split(",")
    assert int(gen) == SMALL.generations and 0 <= int(count) <= SMALL.population_size


def test_genes_stay_in_unit_interval():
    res = evolve(GaConfig(population_size=8, generations=3, mutation_sigma=0.8, mutation_rate=1.0), STAGE1_WEIGHTS)
    assert min(res.best.genes) >= 0 and max(res.best.genes) <= 1


def test_feasible_beats_lower_infeasible_fitness():
    # without penalties the rough copies score better, yet the feasible seed must be reported
    w = FitnessWeights(erp_limit_08_dbm=16.0, erp_limit_20_dbm=3.0, spectrum_penalty_weight=0.0,
                       shape_penalty_weight=0.0)
    cfg = GaConfig(population_size=12, generations=0, mutation_sigma=0.3)
    res = evolve(cfg, w)
    assert fitness_breakdown(gaussian_chromosome(), w).feasible
    assert res.feasible


def test_two_stage_lineage():
    first, second = design_two_stage(GaConfig(population_size=6, generations=2, rng_seed=5))
    assert first.weights.erp_limit_08_dbm == 23.0
    assert second.weights.erp_limit_08_dbm == 16.0
    assert second.config.initial_pulse == first.best
    assert second.config.rng_seed == 6
    assert second.best.metadata["erp_limit_08_dbm"] == 16.0
