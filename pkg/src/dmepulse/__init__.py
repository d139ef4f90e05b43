"""Software pipeline for multipath-resistant DME pulses through a noisy high-power amplifier.

Pulse synthesis and compliance metrics, two-ray multipath ranging error,
GA pulse design, a behavioural amplifier model and TSVD-regularized
indirect-learning predistortion.
"""

from .compliance import (DME_SPECTRUM_LIMITS, FAA_SHAPE, ICAO_SHAPE, CalibrationConvention, check_shape,
                         check_spectrum, erp_spectrum, measure_pulse_shape)
from .dpd import DpdLoopConfig, build_regressor, fit_postdistorter, run_dpd_loop, tsvd_solve
from .errors import ConfigurationError, DivergenceError, MeasurementError
from .ga import FitnessWeights, GaConfig, design_two_stage, evaluate_fitness, evolve
from .multipath import MultipathScenario, compose_multipath, range_error_surface, summarize
from .pa import MemoryPolynomialModel, PaSimulatorConfig, load_profile, nsr_profile, simulate_transmitter
from .waveform import Chromosome, SampledWaveform, SamplingConfig, gaussian_pulse, synthesize_from_chromosome

__version__ = "0.1.0"
