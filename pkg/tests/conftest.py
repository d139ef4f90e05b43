import time

import pytest

ACCEPTANCE: dict = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    """Remember one acceptance outcome; printed in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


@pytest.fixture(scope="session")
def ga_design():
    """The default seeded two-stage design, run once per session: (first, second, seconds)."""
    from dmepulse.config import ExperimentConfig
    from dmepulse.ga import design_two_stage
    from dmepulse.waveform import gaussian_chromosome

    cfg = ExperimentConfig()
    w1, w2 = cfg.stage_weights()
    t0 = time.perf_counter()
    first, second = design_two_stage(cfg.ga_config(gaussian_chromosome()), w1, w2, cfg.n_threads,
                                     stage1_generations=cfg.ga.stage1_generations)
    return first, second, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
