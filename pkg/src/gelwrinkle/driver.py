"""
Scenario and sweep drivers: build the model from a configuration, run the
transient with stability probing and write every artifact to disk.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constitutive as cm
from . import output
from .assembly import Model
from .mesh import FILM, cached_mesh
from .solver import NewtonConfig, Schedule, SolverFailure, TransientRun
from .stability import StabilityReport, sweep_for_instability

log = logging.getLogger(__name__)

WORKERS_ENV = "GELWRINKLE_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NO_CROSSING = 4


def config_digest(cfg):
    """Hash of every setting that influences the computed numbers (output excluded)."""
    raw = cfg.resolved()
    raw.pop("output")
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=float).encode()).hexdigest()[:16]


def build_model(cfg):
    mesh = cached_mesh(cfg.scenario, cache_dir=cfg.output.get("mesh_cache"), **cfg.mesh_params())
    return Model(mesh, cfg.params)


def build_schedule(cfg):
    """The ramp starts from the film's preswollen chemical potential."""
    s = cfg.schedule
    mu0 = cm.initial_state(cfg.params[FILM])[1]
    mu_bar = mu0 if s["mu_bar"] is None else s["mu_bar"]
    return Schedule(mu0=mu0, mu_bar=mu_bar, ramp=s["ramp"], t_end=s["t_end"], tau0=s["tau0"],
                    tau_growth=s["tau_growth"], tau_max=s["tau_max"], max_cuts=s["max_cuts"])


def build_run(cfg, model=None):
    model = build_model(cfg) if model is None else model
    sv = cfg.solver
    newton = NewtonConfig(tol_rel=sv["tol_rel"], tol_abs=sv["tol_abs"], max_iter=sv["max_iter"],
                          line_search=sv["line_search"])
    return TransientRun(model, build_schedule(cfg), newton, config_hash=config_digest(cfg))


@dataclass
class ScenarioResult:
    exit_code: int
    report: StabilityReport
    outdir: Path
    message: str = ""


def run_scenario(cfg, outdir=None):
    """Run one scenario and write its artifacts into ``outdir``.

    Files written: ``config.resolved.yaml``, ``timeseries.csv``,
    ``fields_initial.vtk``, ``fields_final.vtk`` (plus ``fields_NNNNN.vtk``
    every ``output.snapshot_every`` steps), ``report.yaml``; when a crossing
    is found also ``mode.vtk`` and ``checkpoint_stable.npz``; figures
    ``growth.png`` and ``mode.png`` when ``output.plots`` is set.
    """
    outdir = Path(outdir or cfg.output["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    output.write_resolved_config(outdir / "config.resolved.yaml", cfg)
    run = build_run(cfg)
    model = run.model
    st = run.state
    output.write_state_vtk(outdir / "fields_initial.vtk", model, st.d, st.history, st.tau, "t=0")

    every = cfg.output["snapshot_every"]

    def snapshot(r, rec):
        if every and rec.step % every == 0:
            s = r.state
            output.write_state_vtk(outdir / f"fields_{rec.step:05d}.vtk", model, s.d,
                                   r.prev_history, s.tau, f"t={s.t:.9g}")

    extra = {"scenario": cfg.scenario, "config_hash": run.config_hash}
    code, message = EXIT_OK, ""
    try:
        if cfg.stability["enabled"]:
            report = sweep_for_instability(run, tol_g=cfg.stability["tol_g"], callback=snapshot)
        else:
            run.run(callback=snapshot)
            report = StabilityReport(found=False)
    except SolverFailure as exc:
        report = StabilityReport(found=False)
        code, message = EXIT_SOLVER, str(exc)
        extra["failure"] = message
    output.write_timeseries(outdir / "timeseries.csv", run.records)
    s = run.state
    if run.prev_history is not None:
        output.write_state_vtk(outdir / "fields_final.vtk", model, s.d, run.prev_history, s.tau,
                               f"t={s.t:.9g}")
    if report.found:
        if report.mode is not None:
            output.write_mode_vtk(outdir / "mode.vtk", model.mesh, report.mode,
                                  f"critical mode N_c={report.N_c:g}")
        lo, lo_prev = report.stable_state
        ck = TransientRun(model, run.schedule, run.newton, run.config_hash)
        ck.state, ck.prev_history = lo.copy(), lo_prev
        ck.save_checkpoint(outdir / "checkpoint_stable.npz")
    elif code == EXIT_OK and cfg.stability["enabled"]:
        code, message = EXIT_NO_CROSSING, f"no crossing before t_end={cfg.schedule['t_end']}"
    extra["status"] = {EXIT_OK: "ok", EXIT_SOLVER: "solver_failure",
                       EXIT_NO_CROSSING: "no_crossing"}[code]
    output.write_report(outdir / "report.yaml", report, extra)
    if cfg.output["plots"]:
        from . import plots

        plots.plot_timeseries(run.records, outdir / "growth.png", report)
        if report.found and report.mode is not None:
            plots.plot_mode(report.mode, model.mesh, outdir / "mode.png", report.N_c)
    return ScenarioResult(code, report, outdir, message)


def _sweep_point(args):
    cfg, outdir = args
    try:
        res = run_scenario(cfg, outdir)
    except Exception as exc:  # a failing point must not stop the sweep
        log.exception("sweep point failed")
        return None, f"error: {type(exc).__name__}: {exc}"
    status = {EXIT_OK: "ok", EXIT_SOLVER: "solver_failure", EXIT_NO_CROSSING: "no_crossing"}[res.exit_code]
    return res.report.summary(), status


def worker_count(default=1):
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_sweep(cfg, sweep, outdir=None, workers=None):
    """Run every sweep point into its own subdirectory and write ``sweep.csv``.

    Returns (exit code, rows).  The exit code is nonzero only when every
    point failed.
    """
    outdir = Path(outdir or cfg.output["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    workers = worker_count() if workers is None else workers
    jobs = []
    for k, v in enumerate(sweep.values):
        pcfg = cfg.with_value(sweep.parameter, v)
        jobs.append((pcfg, outdir / f"point_{k:03d}"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = []
    for v, (summary, status) in zip(sweep.values, results):
        row = {"parameter": sweep.parameter, "value": v, "status": status}
        if summary and summary["found"]:
            row.update(g_c=summary["g_c"], N_c=summary["N_c"], t_c=summary["t_c"],
                       bracket_width=summary["bracket_width"])
        else:
            row.update(g_c=np.nan, N_c=np.nan, t_c=np.nan, bracket_width=np.nan)
        rows.append(row)
    output.write_sweep_table(outdir / "sweep.csv", rows)
    if cfg.output["plots"]:
        from . import plots

        plots.plot_sweep(sweep.parameter, rows, outdir / "sweep.png")
    if all(r["status"] not in ("ok", "no_crossing") for r in rows):
        return EXIT_SOLVER, rows
    return EXIT_OK, rows


def probe_checkpoint(cfg, path):
    """Restore a checkpoint and probe the stiffness of its last accepted step."""
    from .stability import probe_stability

    run = build_run(cfg)
    run.restore_checkpoint(path)
    K = run.stiffness()
    probe = probe_stability(K)
    return run, probe
