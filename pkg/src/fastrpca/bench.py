"""Synthetic experiments: convergence per sampling rate, run time against
dimension, and error against wall time."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Optional

import numpy as np

from .factors import DivergenceError, IterationTrace, log_linear_fit
from .full import FullSolverConfig, solve_full
from .partial import PartialSolverConfig, bernoulli_sample, solve_partial
from .synth import SynthSpec, generate_instance, ground_truth, observe

# the stopping rule at 4e-4 halts synthetic runs near 10% error; benches run
# to convergence instead
BENCH_STOP_TOL = 1e-14
# gamma = 2 leaves a fixed point near 5e-4 at p = 0.2 (too few kept entries in
# heavily corrupted lines); gamma = 3 converges but about twice as slowly
BENCH_PARTIAL_GAMMA = 2.5
BENCH_MAX_ITERS = 1000
TARGET_ERROR = 1e-3


def full_config(rank, alpha, **kw):
    kw.setdefault("stop_tol", BENCH_STOP_TOL)
    kw.setdefault("max_iters", BENCH_MAX_ITERS)
    return FullSolverConfig(rank, alpha, **kw)


def partial_config(rank, alpha, p=None, **kw):
    """Partial-solver settings used by the benches.

    Step ``eta_c / sigma_1`` as in the full solver and ``gamma = 2.5``.
    """
    kw.setdefault("gamma", BENCH_PARTIAL_GAMMA)
    kw.setdefault("stop_tol", BENCH_STOP_TOL)
    kw.setdefault("max_iters", BENCH_MAX_ITERS)
    kw.setdefault("scale_eta_by_mu_r", False)
    return PartialSolverConfig(rank, alpha, p=p, **kw)


def scaling_rate(d, r):
    """``0.15 r^2 log(d) / d`` clamped to 1."""
    return min(1.0, 0.15 * r * r * math.log(d) / d)


@dataclass
class RunResult:
    label: str
    params: dict
    trace: IterationTrace
    status: str = "ok"               # ok | diverged | failed
    message: str = ""
    wall_time: Optional[float] = None
    final_rel_error: Optional[float] = None
    final_distance: Optional[float] = None
    decay_slope: Optional[float] = None
    decay_r2: Optional[float] = None

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def decays(self):
        """Log error over the middle third of iterations falls with R^2 >= 0.9."""
        return (self.decay_slope is not None and self.decay_slope < 0
                and self.decay_r2 >= 0.9)

    def time_to(self, target=TARGET_ERROR):
        """Elapsed time of the first record with relative error <= ``target``."""
        for rec in self.trace.records:
            if rec.rel_recon_error is not None and rec.rel_recon_error <= target:
                return rec.elapsed
        return None

    def summary(self):
        out = {k: getattr(self, k) for k in ("label", "status", "message", "wall_time",
                                               "final_rel_error", "final_distance",
                                               "decay_slope", "decay_r2")}
        out.update(params=self.params, iterations=len(self.trace) - 1 if len(self.trace) else 0,
                   stopped_by=self.trace.stopped_by, time_to_target=self.time_to())
        return out


@dataclass
class ExperimentReport:
    name: str
    spec: dict
    runs: List[RunResult] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def iter_records(self):
        """Per-iteration records for every run, then one summary record."""
        for k, run in enumerate(self.runs):
            for rec in run.trace.to_records():
                yield {"kind": "iteration", "run": k, "label": run.label, **rec}
        yield {"kind": "summary", "experiment": self.name, "spec": self.spec,
               "runs": [r.summary() for r in self.runs], **self.summary}

    def write_jsonl(self, path):
        with open(path, "w", newline="\n") as fh:
            for rec in self.iter_records():
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _cfg_dict(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def _finish(run, gt, factors):
    if gt is not None and factors is not None:
        run.final_distance = gt.distance(factors.U, factors.V)
        run.final_rel_error = gt.reconstruction_error(factors.U, factors.V)[1]
    errs = run.trace.column("rel_recon_error")
    if run.ok and errs.size >= 6 and np.all(np.isfinite(errs)):
        n = errs.size
        slope, r2 = log_linear_fit(errs, n // 3, 2 * n // 3)
        if math.isfinite(slope):
            run.decay_slope, run.decay_r2 = slope, r2
    return run


def _run(label, params, solve, gt):
    """Time ``solve()`` and wrap its outcome; failures are recorded, not raised."""
    t0 = time.perf_counter()
    try:
        factors, _, trace = solve()
    except DivergenceError as err:
        run = RunResult(label, params, err.trace or IterationTrace(), "diverged", str(err))
        run.wall_time = time.perf_counter() - t0
        return _finish(run, None, None)
    except (ValueError, ArithmeticError) as err:
        return RunResult(label, params, IterationTrace(), "failed", str(err))
    run = RunResult(label, params, trace, wall_time=time.perf_counter() - t0)
    return _finish(run, gt, factors)


def _spec_dict(spec):
    return {**asdict(spec), "scale": spec.scale}


def run_convergence_experiment(spec, p_list, cfg=None, partial_cfg=None):
    """Error trace per sampling rate; ``p = 1`` runs the full solver.

    The full-observation baseline is added when absent from a non-empty
    ``p_list``. ``cfg`` / ``partial_cfg`` default to :func:`full_config` and
    :func:`partial_config`; the partial template gets each ``p`` substituted.
    """
    report = ExperimentReport("convergence", _spec_dict(spec))
    p_list = sorted({float(p) for p in p_list}, reverse=True)
    if not p_list:
        return report
    if p_list[0] != 1.0:
        p_list.insert(0, 1.0)
    cfg = cfg or full_config(spec.r, spec.alpha)
    partial_cfg = partial_cfg or partial_config(spec.r, spec.alpha)
    Y, _, _ = generate_instance(spec)
    gt = ground_truth(spec)
    for p in p_list:
        if p == 1.0:
            run = _run("p=1", _cfg_dict(cfg), lambda: solve_full(Y, cfg, gt), gt)
        else:
            inst = bernoulli_sample(Y, p, spec.seed)
            try:
                pc = replace(partial_cfg, p=p)
            except ValueError as err:
                report.runs.append(RunResult(f"p={p:g}", {"p": p}, IterationTrace(), "failed", str(err)))
                continue
            run = _run(f"p={p:g}", _cfg_dict(pc), lambda: solve_partial(inst, pc, gt), gt)
        report.runs.append(run)
    report.summary = {
        "p_list": p_list,
        "all_decay": all(r.decays for r in report.runs if r.ok),
        "final_rel_errors": [r.final_rel_error for r in report.runs],
    }
    return report


def run_scaling_experiment(d_list, r, alpha, cfg=None, seed=0):
    """Wall time of the partial solver at ``p = 0.15 r^2 log(d) / d`` per ``d``.

    Data generation and sampling are untimed, and the timed solve runs
    without ground truth; errors are computed afterwards. The summary carries
    the least-squares slope of ``log(time)`` on ``log(d)`` (absent with fewer
    than two successful runs).
    """
    d_list = [int(d) for d in d_list]
    if any(b <= a for a, b in zip(d_list, d_list[1:])):
        raise ValueError("d_list must be strictly increasing")
    template = cfg or partial_config(r, alpha)
    report = ExperimentReport("scaling", {"d_list": d_list, "r": r, "alpha": alpha, "seed": seed})
    for d in d_list:
        spec = SynthSpec(d, r, alpha, seed=seed)
        p = scaling_rate(d, r)
        try:
            pc = replace(template, p=p)
        except ValueError as err:
            report.runs.append(RunResult(f"d={d}", {"d": d, "p": p}, IterationTrace(), "failed", str(err)))
            continue
        inst = observe(spec, p)
        gt = ground_truth(spec)
        params = {"d": d, "p": p, "observed": inst.observed.nnz, **_cfg_dict(pc)}
        report.runs.append(_run(f"d={d}", params, lambda: solve_partial(inst, pc), gt))
    good = [(run.params["d"], run.wall_time) for run in report.runs if run.ok]
    slope = None
    if len(good) >= 2:
        ld, lt = np.log(np.array(good, dtype=float)).T
        slope = float(np.polyfit(ld, lt, 1)[0])
    report.summary = {
        "slope": slope,
        "wall_times": [run.wall_time for run in report.runs],
        "final_rel_errors": [run.final_rel_error for run in report.runs],
        "all_recovered": all(run.ok and run.final_rel_error is not None
                             and run.final_rel_error <= TARGET_ERROR for run in report.runs),
    }
    if slope is None:
        del report.summary["slope"]
    return report


def run_accuracy_vs_time(spec, cfgs, labels=None):
    """Error against elapsed time for each solver configuration.

    A :class:`PartialSolverConfig` with ``p`` set runs on a Bernoulli sample
    of the same instance (sampled before the clock starts); anything else runs
    the full solver.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("need at least one configuration")
    labels = labels or [f"p={c.p:g}" if isinstance(c, PartialSolverConfig) and c.p else "full"
                        for c in cfgs]
    report = ExperimentReport("accuracy_vs_time", _spec_dict(spec))
    Y, _, _ = generate_instance(spec)
    gt = ground_truth(spec)
    for label, c in zip(labels, cfgs):
        if isinstance(c, PartialSolverConfig):
            inst = bernoulli_sample(Y, c.p or 1.0, spec.seed)
            run = _run(label, _cfg_dict(c), lambda: solve_partial(inst, c, gt), gt)
        else:
            run = _run(label, _cfg_dict(c), lambda: solve_full(Y, c, gt), gt)
        report.runs.append(run)
    report.summary = {
        "target": TARGET_ERROR,
        "time_to_target": {run.label: run.time_to() for run in report.runs},
        "curves": {run.label: [(rec.elapsed, rec.rel_recon_error) for rec in run.trace.records]
                   for run in report.runs},
    }
    return report
