"""Command-line batch runner: ``design``, ``dpd``, ``evaluate`` and ``report``.

Every artifact lands under ``--out`` with a fixed name; JSON is written with
sorted keys and no timestamps so that identical config and seed give
byte-identical files.  Exit status: 0 compliant/feasible, 1 computed but
non-compliant, 2 execution error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .compliance import (FAA_SHAPE, ICAO_SHAPE, check_shape, check_spectrum, energy_spectral_density,
                         erp_spectrum, measure_pulse_shape)
from .config import ExperimentConfig, apply_overrides, load_config
from .dpd import run_dpd_loop
from .errors import ConfigurationError, DivergenceError, MeasurementError
from .ga import design_two_stage, evolve
from .multipath import range_error_surface, summarize
from .pa import profile_to_text, transfer_curve
from .waveform import Chromosome, gaussian_chromosome, gaussian_pulse, synthesize_from_chromosome, write_waveform_csv

log = logging.getLogger("dmepulse")

EXIT_OK, EXIT_NONCOMPLIANT, EXIT_ERROR = 0, 1, 2

REQUIRED_ARTIFACTS = (
    "design/chromosome.json", "design/verdict.json", "design/history.csv",
    "dpd/metrics.csv", "dpd/verdict.json",
    "evaluate/summary.json", "evaluate/verdict.json", "evaluate/surface.csv",
)


def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    """JSON-safe copy: NaN/inf become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_csv(path: Path, header, columns) -> None:
    rows = [",".join(header)]
    for vals in zip(*columns):
        rows.append(",".join(f"{v:.12e}" for v in vals))
    _write_text(path, "\n".join(rows) + "\n")


def _read_chromosome(cfg: ExperimentConfig, spec: str) -> Chromosome:
    """Chromosome JSON looked up relative to --out first, then as given."""
    for p in (cfg.resolve(spec), Path(spec)):
        if p.is_file():
            return Chromosome.from_json(p.read_text())
    raise ConfigurationError(f"pulse artifact not found: {spec}")


def _load_pulse(cfg: ExperimentConfig, spec: str):
    """A chromosome JSON path or ``gaussian``."""
    if spec == "gaussian":
        return "gaussian", gaussian_pulse(3.5e-6, cfg.sampling)
    return str(spec), synthesize_from_chromosome(_read_chromosome(cfg, spec), cfg.sampling)


def _compliance(pulse, cfg: ExperimentConfig) -> dict:
    m = measure_pulse_shape(pulse)
    report = erp_spectrum(pulse, cfg.calibration())
    verdicts = [check_shape(m, ICAO_SHAPE), check_shape(m, FAA_SHAPE), check_spectrum(report, cfg.limits())]
    return {
        "shape_us": dict(zip(("rise", "width", "fall"), m.as_us())),
        "spectrum": report.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
        "pass": all(v.passed for v in verdicts),
    }


# ---------------------------------------------------------------- commands

def cmd_design(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir / "design"
    w1, w2 = cfg.stage_weights()
    threads = cfg.n_threads
    log.info("design: seed=%d threads=%d", cfg.seed, threads)
    stages = {}
    if cfg.ga.seed_pulse == "gaussian":
        first, second = design_two_stage(cfg.ga_config(gaussian_chromosome()), w1, w2, threads,
                                         stage1_generations=cfg.ga.stage1_generations)
        stages["stage1"] = first
        _write_text(out / "stage1_chromosome.json", first.best.to_json())
        _write_text(out / "stage1_history.csv", first.history_csv())
    else:
        seed = _read_chromosome(cfg, cfg.ga.seed_pulse)
        second = evolve(replace(cfg.ga_config(seed), rng_seed=cfg.seed + 1), w2, threads)
    stages["stage2"] = second

    pulse = synthesize_from_chromosome(second.best, cfg.sampling)
    _write_text(out / "chromosome.json", second.best.to_json())
    write_waveform_csv(pulse, out / "waveform.csv")
    _write_text(out / "history.csv", second.history_csv())
    _write_text(out / "config.ini", cfg.to_text())
    summary = {
        "seed": cfg.seed,
        "feasible": second.feasible,
        "stages": {
            name: {
                "erp_limit_08_dbm": r.weights.erp_limit_08_dbm,
                "erp_limit_20_dbm": r.weights.erp_limit_20_dbm,
                "fitness": r.breakdown.fitness,
                "multipath_rms_m": r.breakdown.rms_m,
                "feasible": r.feasible,
                "violations": r.violations(),
                "generations": r.config.generations,
                "rng_seed": r.config.rng_seed,
            }
            for name, r in stages.items()
        },
    }
    try:
        summary["compliance"] = _compliance(pulse, cfg)
    except MeasurementError as exc:
        summary["compliance"] = {"error": str(exc), "pass": False}
    _dump_json(out / "verdict.json", summary)
    log.info("design: feasible=%s", second.feasible)
    return EXIT_OK if second.feasible else EXIT_NONCOMPLIANT


def cmd_dpd(cfg: ExperimentConfig, pulse_spec: str | None = None) -> int:
    out = cfg.out_dir / "dpd"
    name, target = _load_pulse(cfg, pulse_spec or cfg.dpd.pulse)
    plant = cfg.plant_config()
    dcfg = cfg.dpd_config()
    rng = np.random.default_rng(cfg.seed)
    log.info("dpd: plant=%s K=%d M=%d rank=%s seed=%d", plant.name, dcfg.K, dcfg.M,
             "full" if dcfg.rank is None else dcfg.rank, cfg.seed)
    _write_text(out / "config.ini", cfg.to_text())
    _write_text(out / "plant.ini", profile_to_text(plant))
    try:
        result = run_dpd_loop(target, plant, dcfg, rng, cfg.calibration(), cfg.limits())
    except DivergenceError as exc:
        _dump_json(out / "verdict.json", {"error": "divergence", "message": str(exc),
                                          "history": list(exc.history), "pass": False})
        log.error("dpd diverged: %s", exc)
        return EXIT_ERROR
    _write_text(out / "metrics.csv", result.metrics_csv())
    write_waveform_csv(result.final_y, out / "final_output.csv")
    write_waveform_csv(result.final_u, out / "predistorted_input.csv")

    G = result.state.gain
    r = np.linspace(0.0, 1.0, 201)
    mag, phase = transfer_curve(plant, r)
    _write_csv(out / "plant_transfer.csv", ("input_mag", "output_mag", "am_pm_rad"), (r, mag, phase))
    _write_csv(out / "am_am.csv", ("target_mag", "output_mag_over_G"),
               (target.magnitude, result.final_y.magnitude / G))
    last = result.metrics[-1]
    verdict = {
        "pulse": name,
        "plant": plant.name,
        "seed": cfg.seed,
        "K": dcfg.K, "M": dcfg.M, "rank": "full" if dcfg.rank is None else dcfg.rank,
        "gain": G,
        "iterations": last.iter,
        "best_iteration": result.best_iteration,
        "final": {
            "nmse": last.nmse,
            "erp_dbm": {f"{k:+.1f}": v for k, v in sorted(last.erp.items())},
            "shape_us": dict(zip(("rise", "width", "fall"), last.shape_us)),
            "shape_pass": last.shape_pass,
            "spectrum_pass": last.spectrum_pass,
        },
        "raw": {
            "erp_dbm": {f"{k:+.1f}": v for k, v in sorted(result.metrics[0].erp.items())},
            "spectrum_pass": result.metrics[0].spectrum_pass,
        },
        "pass": result.compliant,
    }
    _dump_json(out / "verdict.json", verdict)
    return EXIT_OK if result.compliant else EXIT_NONCOMPLIANT


def cmd_evaluate(cfg: ExperimentConfig, pulse_spec: str | None = None) -> int:
    out = cfg.out_dir / "evaluate"
    ev = cfg.evaluation
    name, pulse = _load_pulse(cfg, pulse_spec or cfg.dpd.pulse)
    cname, compare = _load_pulse(cfg, ev.compare_pulse)

    def sweep(p):
        return range_error_surface(p, ev.alpha, ev.phi_steps, ev.delta_steps, ev.delta_max_s)

    surface = sweep(pulse)
    s_main = summarize(surface)
    c_surface = sweep(compare)
    s_cmp = summarize(c_surface)
    _write_text(out / "surface.csv", surface.to_csv())
    _write_text(out / "config.ini", cfg.to_text())

    ratio = s_main.rms / s_cmp.rms if s_cmp.rms > 0 else math.nan
    _dump_json(out / "summary.json", {
        "pulse": name, "compare_pulse": cname, "alpha": ev.alpha,
        "multipath": s_main.to_dict(), "compare_multipath": s_cmp.to_dict(),
        "rms_ratio": ratio,
        "rms_reduction_percent": 100.0 * (1.0 - ratio) if math.isfinite(ratio) else ratio,
    })

    comp = _compliance(pulse, cfg)
    _dump_json(out / "verdict.json", {"pulse": name, **comp})

    # Plot-ready series: pulse shapes, ERP spectra and range-error curves.
    t_us = pulse.times * 1e6
    _write_csv(out / "pulse_shapes.csv", ("time_us", "pulse", "compare"),
               (t_us, pulse.magnitude, compare.magnitude))
    f, e = energy_spectral_density(pulse)
    _, ec = energy_spectral_density(compare)
    keep = np.abs(f) <= 5e6
    ref = e[np.argmin(np.abs(f))]
    ref_c = ec[np.argmin(np.abs(f))]
    with np.errstate(divide="ignore"):
        _write_csv(out / "spectrum.csv", ("freq_mhz", "pulse_db", "compare_db"),
                   (f[keep] / 1e6, 10 * np.log10(e[keep] / ref), 10 * np.log10(ec[keep] / ref_c)))
    rows = surface.phase_extreme_rows()
    i0 = [i for i in rows if np.cos(surface.phi_grid[i]) > 0]
    ipi = [i for i in rows if np.cos(surface.phi_grid[i]) < 0]
    cols = [surface.delta_grid * 1e6]
    header = ["delta_us"]
    for label, surf in (("pulse", surface), ("compare", c_surface)):
        for tag, idx in (("in_phase_m", i0), ("out_of_phase_m", ipi)):
            if idx:
                cols.append(surf.errors[idx[0]])
                header.append(f"{label}_{tag}")
    _write_csv(out / "range_error_curves.csv", header, cols)
    return EXIT_OK if comp["pass"] else EXIT_NONCOMPLIANT


def _read_json(path: Path):
    return json.loads(path.read_text())


def cmd_report(cfg: ExperimentConfig, run_dir: str | None = None) -> int:
    root = Path(run_dir) if run_dir else cfg.out_dir
    missing = [a for a in REQUIRED_ARTIFACTS if not (root / a).is_file()]
    if missing:
        raise ConfigurationError("missing artifacts under " + str(root) + ": " + ", ".join(missing))
    design = _read_json(root / "design/verdict.json")
    dpd = _read_json(root / "dpd/verdict.json")
    summary = _read_json(root / "evaluate/summary.json")
    evaluation = _read_json(root / "evaluate/verdict.json")
    metrics = (root / "dpd/metrics.csv").read_text().strip().splitlines()
    report = {
        "design": design,
        "dpd": {**dpd, "metrics_rows": len(metrics) - 1},
        "evaluate": {"summary": summary, "verdict": evaluation},
        "pass": bool(design.get("feasible")) and bool(dpd.get("pass")) and bool(evaluation.get("pass")),
    }
    _dump_json(root / "report.json", report)
    _write_text(root / "report.txt", _report_table(report))
    return EXIT_OK if report["pass"] else EXIT_NONCOMPLIANT


def _fmt(v, spec=".2f"):
    return format(v, spec) if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)


def _report_table(r: dict) -> str:
    d, p, s, e = r["design"], r["dpd"], r["evaluate"]["summary"], r["evaluate"]["verdict"]
    lines = ["section   item                         value"]
    lines.append(f"design    feasible                     {d.get('feasible')}")
    for name, st in sorted(d.get("stages", {}).items()):
        lines.append(f"design    {name} multipath rms (m)     {_fmt(st.get('multipath_rms_m'))}")
    if "error" in p:
        lines.append(f"dpd       error                        {p['error']}")
    else:
        fin = p["final"]
        lines.append(f"dpd       K / M / rank                 {p['K']} / {p['M']} / {p['rank']}")
        lines.append(f"dpd       iterations                   {p['iterations']}")
        lines.append(f"dpd       final nmse                   {_fmt(fin['nmse'], '.3e')}")
        for k, v in sorted(fin["erp_dbm"].items(), key=lambda kv: float(kv[0])):
            lines.append(f"dpd       erp {k:>5} MHz (dBm)          {_fmt(v)}")
        lines.append(f"dpd       pass                         {p['pass']}")
    mp = s["multipath"]
    lines.append(f"evaluate  max in-phase (m)             {_fmt(mp['max_in_phase_m'])}")
    lines.append(f"evaluate  max out-of-phase (m)         {_fmt(mp['max_out_of_phase_m'])}")
    lines.append(f"evaluate  rms (m)                      {_fmt(mp['rms_m'])}")
    lines.append(f"evaluate  rms ratio vs {s['compare_pulse']:<15} {_fmt(s['rms_ratio'], '.3f')}")
    lines.append(f"evaluate  compliance pass              {e['pass']}")
    lines.append(f"overall   pass                         {r['pass']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI sections)")
    common.add_argument("--seed", type=int, help="global rng seed (overrides the file)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for fitness evaluation (default: all cores)")
    common.add_argument("--plant", help="plant profile name or path")
    common.add_argument("--rank", help="TSVD rank, or 'full'")
    common.add_argument("--nonlinearity-order", type=int, dest="nonlinearity_order")
    common.add_argument("--memory-depth", type=int, dest="memory_depth")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dmepulse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="two-stage GA pulse design")
    for name, text in (("dpd", "closed-loop predistortion against the plant"),
                       ("evaluate", "multipath sweep and compliance of a pulse")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--pulse", help="chromosome JSON (relative to --out) or 'gaussian'")
    rp = sub.add_parser("report", parents=[common], help="aggregate a run directory")
    rp.add_argument("run_dir", nargs="?", help="run directory (default: --out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = apply_overrides(load_config(args.config), seed=args.seed, out=args.out, threads=args.threads,
                              plant=args.plant, rank=args.rank, nonlinearity_order=args.nonlinearity_order,
                              memory_depth=args.memory_depth)
        if args.command == "design":
            return cmd_design(cfg)
        if args.command == "dpd":
            return cmd_dpd(cfg, args.pulse)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.pulse)
        return cmd_report(cfg, args.run_dir)
    except (ConfigurationError, MeasurementError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
