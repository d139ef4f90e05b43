"""Indirect-learning digital predistortion with truncated-SVD pseudo-inverses.

The postdistorter is a memory polynomial with bias fitted to map the
gain-normalized amplifier output back onto the amplifier input.  Its
coefficients are refined by damped Newton steps whose pseudo-inverse keeps
only the ``rank`` largest singular triplets of the regressor, then copied to
the predistorter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import mpoly
from .compliance import (DME_SPECTRUM_LIMITS, FAA_SHAPE, ICAO_SHAPE, CalibrationConvention, check_shape,
                         check_spectrum, erp_spectrum, measure_pulse_shape)
from .errors import ConfigurationError, DivergenceError, MeasurementError
from .pa import PaSimulatorConfig, auto_gain_window, estimate_gain, simulate_transmitter
from .waveform import SampledWaveform

log = logging.getLogger(__name__)

RANK_FLOOR = 1e-12
DIVERGENCE_RUN = 5
ROUNDOFF_RESIDUAL = 1e-13
METRIC_FIELDS = ("iter", "nmse", "residual_norm", "erp_m08", "erp_p08", "erp_m20", "erp_p20",
                 "rise_us", "width_us", "fall_us", "rank_effective")


def build_regressor(signal, K: int, M: int) -> np.ndarray:
    """Regressor with zero pre-record history and a trailing all-ones bias column."""
    samples = signal.samples if isinstance(signal, SampledWaveform) else signal
    return mpoly.basis(samples, K, M)


@dataclass(frozen=True, eq=False)
class TsvdFactor:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    singular_values: np.ndarray
    requested_rank: int

    @property
    def rank(self) -> int:
        return self.S.size

    @property
    def condition_number(self) -> float:
        return float(self.S[0] / self.S[-1])

    def solve(self, target) -> np.ndarray:
        return self.V @ ((self.U.conj().T @ np.asarray(target, dtype=complex)) / self.S)


def tsvd_factor(A: np.ndarray, r: int | None = None) -> TsvdFactor:
    """Keep the ``r`` largest singular triplets, never any below 1e-12 * s_max."""
    L, n = A.shape
    r = min(L, n) if r is None else int(r)
    if not 1 <= r <= min(L, n):
        raise ConfigurationError(f"rank {r} outside [1, {min(L, n)}]")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0:
        raise ConfigurationError("regressor is identically zero")
    usable = int(np.count_nonzero(s > RANK_FLOOR * s[0]))
    keep = min(r, usable)
    return TsvdFactor(U[:, :keep], s[:keep], Vh[:keep].conj().T, s, r)


class TsvdSolution(NamedTuple):
    coefficients: np.ndarray
    rank: int


def tsvd_solve(A: np.ndarray, target, r: int | None = None) -> TsvdSolution:
    """Minimum-norm least squares restricted to the top-``r`` singular subspace."""
    target = np.asarray(target, dtype=complex)
    if target.shape != (A.shape[0],):
        raise ConfigurationError("target length does not match the regressor rows")
    f = tsvd_factor(A, r)
    return TsvdSolution(f.solve(target), f.rank)


@dataclass(frozen=True)
class DpdLoopConfig:
    K: int = 7
    M: int = 2
    rank: int | None = 12  # None: full K*M + 1
    mu: float = 0.2
    max_iterations: int = 1  # damped steps per transmission
    convergence_tol: float = 1e-6
    loop_iterations: int = 16
    gain_window: tuple | str = "auto"
    reestimate_gain: bool = False
    stop_on_pass: bool = False

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise ConfigurationError("K and M must be >= 1")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigurationError("relaxation mu must lie in [0, 1]")
        if self.rank is not None and not 1 <= self.rank <= self.n_coefficients:
            raise ConfigurationError(f"rank {self.rank} outside [1, {self.n_coefficients}]")
        if self.gain_window != "auto":
            lo, hi = self.gain_window
            if not 0 <= lo < hi:
                raise ConfigurationError("gain window must satisfy 0 <= low < high")
            object.__setattr__(self, "gain_window", (float(lo), float(hi)))

    @property
    def n_coefficients(self) -> int:
        return self.K * self.M + 1

    @property
    def effective_rank_request(self) -> int:
        return self.n_coefficients if self.rank is None else self.rank


@dataclass
class DpdState:
    coefficients: np.ndarray
    gain: float
    iteration: int = 0
    residual_norm: float = math.inf
    converged: bool = False
    rank_effective: int = 0
    residual_history: list = field(default_factory=list)

    @property
    def bias(self) -> complex:
        return complex(self.coefficients[-1])


def fit_postdistorter(y: SampledWaveform, u: SampledWaveform, cfg: DpdLoopConfig, G: float,
                      a0=None) -> DpdState:
    """Damped Newton refinement a <- a + mu * pinv_r(Y) (u - Y a), Y built from y / G."""
    if len(y) != len(u):
        raise ConfigurationError("y and u differ in length")
    if not G > 0:
        raise ConfigurationError("gain G must be positive")
    Y = build_regressor(y.samples / G, cfg.K, cfg.M)
    factor = tsvd_factor(Y, cfg.effective_rank_request)
    a = mpoly.identity_coefficients(cfg.K, cfg.M) if a0 is None else np.array(a0, dtype=complex)
    if a.size != cfg.n_coefficients:
        raise ConfigurationError("initial coefficient vector has the wrong length")
    target = u.samples
    # a residual at round-off level cannot shrink further, whatever its relative jitter
    floor = ROUNDOFF_RESIDUAL * float(np.linalg.norm(target))
    history = []
    state = DpdState(a, G, 0, math.inf, False, factor.rank, history)
    growth = 0
    for p in range(cfg.max_iterations + 1):
        e = target - Y @ a
        norm = float(np.linalg.norm(e))
        history.append(norm)
        state.iteration, state.residual_norm, state.coefficients = p, norm, a
        if p:
            prev = history[-2]
            growth = growth + 1 if norm > prev else 0
            if growth >= DIVERGENCE_RUN:
                raise DivergenceError(f"residual grew for {growth} consecutive iterations", history)
            if cfg.mu > 0 and abs(prev - norm) <= cfg.convergence_tol * max(prev, 1e-300):
                state.converged = True
                break
        if norm <= floor and cfg.mu > 0:
            state.converged = True
            break
        if p == cfg.max_iterations:
            break
        a = a + cfg.mu * factor.solve(e)
    return state


def apply_predistorter(a, x: SampledWaveform, K: int, M: int) -> SampledWaveform:
    return x.with_samples(mpoly.evaluate(a, x.samples, K, M))


# ---------------------------------------------------------------- closed loop

def nmse(y: SampledWaveform, G: float, target: SampledWaveform) -> float:
    ref = np.sum(np.abs(target.samples) ** 2)
    return float(np.sum(np.abs(y.samples / G - target.samples) ** 2) / ref)


@dataclass
class IterationMetrics:
    iter: int
    nmse: float
    residual_norm: float
    erp: dict
    shape_us: tuple
    rank_effective: int
    shape_pass: bool
    spectrum_pass: bool

    @property
    def compliant(self) -> bool:
        return self.shape_pass and self.spectrum_pass

    def row(self) -> list:
        return [self.iter, self.nmse, self.residual_norm, self.erp[-0.8], self.erp[0.8],
                self.erp[-2.0], self.erp[2.0], *self.shape_us, self.rank_effective]


@dataclass
class DpdResult:
    final_y: SampledWaveform
    final_u: SampledWaveform
    state: DpdState
    metrics: list
    compliant: bool
    best_iteration: int

    def metrics_csv(self) -> str:
        lines = [",".join(METRIC_FIELDS)]
        for m in self.metrics:
            cells = []
            for v in m.row():
                cells.append(str(v) if isinstance(v, int) else f"{v:.12e}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate_transmission(y: SampledWaveform, cal: CalibrationConvention = CalibrationConvention(),
                          limits: dict = DME_SPECTRUM_LIMITS, shape_specs=(ICAO_SHAPE, FAA_SHAPE)):
    """(band powers, shape in us or NaNs, shape pass, spectrum pass) of one transmission."""
    report = erp_spectrum(y, cal)
    spec_ok = check_spectrum(report, limits).passed
    erp = report.band_power_dbm
    try:
        m = measure_pulse_shape(y)
        shape = m.as_us()
        shape_ok = all(check_shape(m, s).passed for s in shape_specs)
    except MeasurementError:
        shape, shape_ok = (math.nan,) * 3, False
    return erp, shape, shape_ok, spec_ok


def run_dpd_loop(target: SampledWaveform, plant: PaSimulatorConfig, cfg: DpdLoopConfig,
                 rng: np.random.Generator | None = None,
                 cal: CalibrationConvention = CalibrationConvention(),
                 limits: dict = DME_SPECTRUM_LIMITS) -> DpdResult:
    """Transmit, normalize by G, fit the postdistorter, copy it to the predistorter, repeat.

    Iteration 0 is the uncompensated transmission; iterations 1.. use the
    predistorter.  ``rng`` defaults to a generator seeded from ``plant.rng_seed``.
    """
    if not target.is_peak_normalized(1e-9):
        raise ConfigurationError("target must be peak-normalized")
    if rng is None:
        rng = np.random.default_rng(plant.rng_seed)

    def window_for(u, y):
        return auto_gain_window(u, y) if cfg.gain_window == "auto" else cfg.gain_window

    u = target
    y = simulate_transmitter(plant, u, rng)
    G = estimate_gain(u, y, window_for(u, y))
    log.debug("estimated gain G=%.6g", G)
    a = mpoly.identity_coefficients(cfg.K, cfg.M)
    state = DpdState(a, G)

    metrics = []

    def record(it, y, G, residual, rank):
        err = nmse(y, G, target)
        if not math.isfinite(err) or err > 1e6:
            raise DivergenceError(f"transmitted waveform diverged at iteration {it} (nmse={err:g})",
                                  [m.nmse for m in metrics])
        erp, shape, shape_ok, spec_ok = evaluate_transmission(y, cal, limits)
        metrics.append(IterationMetrics(it, err, residual, erp, shape, rank, shape_ok, spec_ok))

    record(0, y, G, math.nan, 0)
    best = (metrics[0].compliant, -metrics[0].nmse, 0, y, u)
    for it in range(1, cfg.loop_iterations + 1):
        state = fit_postdistorter(y, u, cfg, G, a0=state.coefficients)
        u = apply_predistorter(state.coefficients, target, cfg.K, cfg.M)
        y = simulate_transmitter(plant, u, rng)
        record(it, y, G, state.residual_norm, state.rank_effective)
        if cfg.reestimate_gain:
            G = estimate_gain(target, y, window_for(target, y))
        cur = metrics[-1]
        cand = (cur.compliant, -cur.nmse, it, y, u)
        if cand[:2] > best[:2]:
            best = cand
        if cfg.stop_on_pass and cur.compliant:
            break
        prev = metrics[-2].nmse
        if abs(prev - cur.nmse) <= 1e-3 * max(prev, 1e-300):
            break
    last = metrics[-1]
    return DpdResult(y, u, state, metrics, last.compliant, best[2])
