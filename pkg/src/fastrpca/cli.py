"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 solver
divergence. Failures print one JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench, io
from .factors import DivergenceError
from .full import FullSolverConfig, solve_full
from .metrics import reconstruction_error
from .partial import ObservedInstance, PartialSolverConfig, bernoulli_sample, solve_partial
from .synth import SynthSpec, generate_instance

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

PRESETS = {
    # static-camera background subtraction settings; eta = 1 / (2 sigma_1)
    "fb-separation": dict(rank=10, alpha=0.2, mu=10.0, gamma=1.0, eta_c=0.5,
                          stop_tol=4e-4, scale_eta_by_mu_r=False),
}
DEFAULT_MASK_THRESHOLD = 0.1

SOLVER_KEYS = ("rank", "alpha", "gamma", "eta", "eta_c", "max_iters", "mu", "stop_tol",
               "seed", "p", "scale_eta_by_mu_r")
CONFIG_KEYS = SOLVER_KEYS + ("preset", "format", "threads", "trace_out", "mask_threshold")


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    output: Optional[Path] = None
    solver: dict = field(default_factory=dict)
    preset: Optional[str] = None
    seed: int = 0
    threads: Optional[int] = None
    trace_out: Optional[Path] = None
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def full_config(self):
        return _build(FullSolverConfig, self.solver)

    def partial_config(self, p=None):
        params = dict(self.solver)
        if p is not None:
            params["p"] = p
        return _build(PartialSolverConfig, params)


def _build(cls, params):
    names = {f.name for f in fields(cls)}
    kw = {k: v for k, v in params.items() if k in names and v is not None}
    if "rank" not in kw or "alpha" not in kw:
        raise ConfigError("--rank and --alpha are required (or use --preset)")
    try:
        return cls(**kw)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _solver_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver")
    g.add_argument("--rank", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--eta-c", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--stop-tol", type=float)
    g.add_argument("--p", type=float, help="observation rate (estimated from the support if absent)")
    g.add_argument("--mu", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--config", type=Path, help="JSON file of option values")
    g.add_argument("--format", choices=io.FORMATS, help="output matrix format (default csv)")
    g.add_argument("--threads", type=int, help="BLAS thread limit")
    g.add_argument("--trace-out", type=Path, help="per-iteration JSONL trace")
    return p


def build_parser():
    common = _solver_flags()
    parser = _Parser(prog="fastrpca", description="Robust PCA by factored gradient descent.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", parents=[common], help="write a synthetic instance")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--d2", type=int)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("decompose", parents=[common], help="fully observed robust PCA")
    s.add_argument("input", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--truth", type=Path, help="dense low-rank component, for error reporting")

    s = sub.add_parser("complete", parents=[common], help="robust PCA from observed entries")
    s.add_argument("input", type=Path, help="Matrix Market coordinate file, or a dense matrix with --subsample")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--subsample", type=float, help="Bernoulli-sample a dense input at this rate")
    s.add_argument("--truth", type=Path)

    s = sub.add_parser("bench-convergence", parents=[common], help="error trace per sampling rate")
    s.add_argument("--d", type=int, default=500)
    s.add_argument("--p-list", default="1,0.5,0.2")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("bench-scaling", parents=[common], help="run time against dimension")
    s.add_argument("--d-list", default="1000,2000,4000")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("bench-accuracy", parents=[common], help="error against wall time")
    s.add_argument("--d", type=int, default=1000)
    s.add_argument("--p-list", default="1,0.2")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("separate", parents=[common], help="background/foreground split of PGM frames")
    s.add_argument("frames", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--mask-threshold", type=float)
    return parser


def _float_list(text, name):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be comma-separated numbers") from None


def _load_config_file(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path}: expected a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {unknown}")
    return data


def resolve_config(args):
    """Merge preset, config file and explicit flags (later wins) and validate paths."""
    ns = vars(args)
    merged = {}
    file_vals = _load_config_file(args.config) if args.config else {}
    preset = ns.get("preset") or file_vals.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        merged.update(PRESETS[preset])
    merged.update(file_vals)
    merged.update({k: v for k, v in ns.items() if k in CONFIG_KEYS and v is not None})
    cfg = CliConfig(args.subcommand, preset=preset)
    cfg.solver = {k: merged[k] for k in SOLVER_KEYS if k in merged}
    cfg.seed = int(merged.get("seed", 0))
    cfg.solver["seed"] = cfg.seed
    cfg.threads = merged.get("threads")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg.format = merged.get("format", "csv")
    if cfg.format not in io.FORMATS:
        raise ConfigError(f"unknown format {cfg.format!r}")
    cfg.trace_out = Path(merged["trace_out"]) if merged.get("trace_out") else None
    cfg.output = args.out
    for name in ("input", "truth", "frames"):
        path = ns.get(name)
        if path is not None:
            if not Path(path).exists():
                raise FileNotFoundError(f"{name} not found: {path}")
            cfg.inputs[name] = Path(path)
    cfg.extra = {k: ns[k] for k in ("d", "d2", "p_list", "d_list", "subsample") if ns.get(k) is not None}
    cfg.extra["mask_threshold"] = merged.get("mask_threshold", DEFAULT_MASK_THRESHOLD)
    for target in (cfg.output, cfg.trace_out):
        if target is not None:
            parent = target if target.suffix == "" else target.parent
            parent.mkdir(parents=True, exist_ok=True)
    return cfg


# -- helpers ---------------------------------------------------------------

def _write_trace(cfg, trace, default_path=None):
    path = cfg.trace_out or default_path
    if path is None:
        return None
    with open(path, "w", newline="\n") as fh:
        for rec in trace.to_records():
            fh.write(json.dumps(bench._jsonable(rec), sort_keys=True) + "\n")
    return path


def _summary(run_trace, **extra):
    last = run_trace.records[-1]
    out = {"status": "ok", "iterations": last.iter, "stopped_by": run_trace.stopped_by,
           "final_loss": last.loss, "warnings": run_trace.warnings}
    out.update(extra)
    return bench._jsonable(out)


def _write_outputs(cfg, factors, sparse):
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = io.write_factors(factors, out, cfg.format)
    io.write_matrix(sparse, out / "S.mtx", "matrix-market")
    return [str(p) for p in paths] + [str(out / "S.mtx")]


def _truth_error(cfg, factors):
    if "truth" not in cfg.inputs:
        return {}
    M = io.read_matrix(cfg.inputs["truth"])
    if isinstance(M, ObservedInstance):
        raise ConfigError("--truth must be a dense matrix")
    if M.shape != (factors.U.shape[0], factors.V.shape[0]):
        raise ConfigError(f"--truth is {M.shape}, factors give {(factors.U.shape[0], factors.V.shape[0])}")
    err, rel = reconstruction_error(factors.U, factors.V, M)
    return {"error": err, "rel_error": rel}


# -- subcommands -----------------------------------------------------------

def cmd_generate(cfg):
    d = cfg.extra["d"]
    rank, alpha = cfg.solver.get("rank"), cfg.solver.get("alpha")
    if rank is None or alpha is None:
        raise ConfigError("--rank and --alpha are required")
    try:
        spec = SynthSpec(d, rank, alpha, seed=cfg.seed, d2=cfg.extra.get("d2"))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    Y, M, S = generate_instance(spec)
    ext = {"csv": ".csv", "raw-binary": ".bin", "matrix-market": ".mtx"}[cfg.format]
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(Y, out / f"Y{ext}", cfg.format)
    io.write_matrix(M, out / f"M{ext}", cfg.format)
    io.write_matrix(S, out / "S.mtx", "matrix-market")
    return {"status": "ok", "shape": list(spec.shape), "corrupted": S.nnz,
            "files": [str(out / f"Y{ext}"), str(out / f"M{ext}"), str(out / "S.mtx")]}


def cmd_decompose(cfg):
    Y = io.read_matrix(cfg.inputs["input"])
    if isinstance(Y, ObservedInstance):
        raise ConfigError("decompose needs a dense matrix; use 'complete' for observed entries")
    solver_cfg = cfg.full_config()
    factors, sparse, trace = solve_full(Y, solver_cfg)
    files = _write_outputs(cfg, factors, sparse)
    trace_path = _write_trace(cfg, trace, Path(cfg.output) / "trace.jsonl")
    return _summary(trace, files=files, trace=str(trace_path), **_truth_error(cfg, factors))


def cmd_complete(cfg):
    data = io.read_matrix(cfg.inputs["input"])
    rate = cfg.extra.get("subsample")
    if isinstance(data, ObservedInstance):
        if rate is not None:
            raise ConfigError("--subsample applies to dense inputs only")
        inst = data
    else:
        if rate is None:
            rate = 1.0
        if not 0.0 < rate <= 1.0:
            raise ConfigError("--subsample must lie in (0, 1]")
        inst = bernoulli_sample(data, rate, cfg.seed)
        if cfg.solver.get("p") is None:
            cfg.solver["p"] = rate
    solver_cfg = cfg.partial_config()
    factors, sparse, trace = solve_partial(inst, solver_cfg)
    files = _write_outputs(cfg, factors, sparse)
    trace_path = _write_trace(cfg, trace, Path(cfg.output) / "trace.jsonl")
    return _summary(trace, observed=inst.observed.nnz, files=files, trace=str(trace_path),
                    **_truth_error(cfg, factors))


def _bench_rank_alpha(cfg, rank=5, alpha=0.1):
    return cfg.solver.get("rank", rank), cfg.solver.get("alpha", alpha)


def _bench_overrides(cfg):
    return {k: v for k, v in cfg.solver.items()
            if k not in ("rank", "alpha", "p") and v is not None}


def _bench_configs(cfg, rank, alpha):
    kw = _bench_overrides(cfg)
    try:
        full = bench.full_config(rank, alpha, **{k: v for k, v in kw.items() if k != "scale_eta_by_mu_r"})
        part = bench.partial_config(rank, alpha, **kw)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None
    return full, part


def _finish_report(cfg, report):
    report.write_jsonl(cfg.output)
    summary = next(r for r in report.iter_records() if r["kind"] == "summary")
    summary.pop("curves", None)
    return bench._jsonable({"status": "ok", "report": str(cfg.output), **summary})


def cmd_bench_convergence(cfg):
    rank, alpha = _bench_rank_alpha(cfg)
    try:
        spec = SynthSpec(cfg.extra["d"], rank, alpha, seed=cfg.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    full, part = _bench_configs(cfg, rank, alpha)
    p_list = _float_list(cfg.extra["p_list"], "--p-list")
    return _finish_report(cfg, bench.run_convergence_experiment(spec, p_list, full, part))


def cmd_bench_scaling(cfg):
    rank, alpha = _bench_rank_alpha(cfg)
    d_list = [int(x) for x in _float_list(cfg.extra["d_list"], "--d-list")]
    _, part = _bench_configs(cfg, rank, alpha)
    try:
        report = bench.run_scaling_experiment(d_list, rank, alpha, part, seed=cfg.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return _finish_report(cfg, report)


def cmd_bench_accuracy(cfg):
    rank, alpha = _bench_rank_alpha(cfg)
    try:
        spec = SynthSpec(cfg.extra["d"], rank, alpha, seed=cfg.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    full, part = _bench_configs(cfg, rank, alpha)
    cfgs = []
    for p in _float_list(cfg.extra["p_list"], "--p-list"):
        try:
            cfgs.append(full if p == 1.0 else PartialSolverConfig(**{**vars(part), "p": p}))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    return _finish_report(cfg, bench.run_accuracy_vs_time(spec, cfgs))


def cmd_separate(cfg):
    """Low-rank background and thresholded foreground masks per frame.

    The background of frame ``j`` is ``U V[j]^T``, formed one column at a
    time; with ``p < 1`` no dense pixels-by-frames product is ever built.
    """
    stack = io.read_frames(cfg.inputs["frames"])
    p = cfg.solver.get("p")
    threshold = float(cfg.extra["mask_threshold"])
    if not threshold >= 0:
        raise ConfigError("--mask-threshold must be nonnegative")
    Y = stack.matrix
    if p is None or p >= 1.0:
        factors, sparse, trace = solve_full(Y, cfg.full_config())
    else:
        inst = bernoulli_sample(Y, p, cfg.seed)
        factors, sparse, trace = solve_partial(inst, cfg.partial_config(p))
    out = Path(cfg.output)
    bg_dir, fg_dir = out / "background", out / "foreground"
    bg_dir.mkdir(parents=True, exist_ok=True)
    fg_dir.mkdir(parents=True, exist_ok=True)
    moving = []
    for j, name in enumerate(stack.names):
        bg = factors.U @ factors.V[j]
        mask = np.abs(Y[:, j] - bg) > threshold
        moving.append(int(mask.sum()))
        io.write_frame(bg_dir, name, bg, stack.height, stack.width)
        io.write_frame(fg_dir, name, mask.astype(np.float64), stack.height, stack.width)
    trace_path = _write_trace(cfg, trace, out / "trace.jsonl")
    return _summary(trace, frames=stack.n_frames, foreground_pixels=moving,
                    background=str(bg_dir), foreground=str(fg_dir), trace=str(trace_path))


COMMANDS = {
    "generate": cmd_generate,
    "decompose": cmd_decompose,
    "complete": cmd_complete,
    "bench-convergence": cmd_bench_convergence,
    "bench-scaling": cmd_bench_scaling,
    "bench-accuracy": cmd_bench_accuracy,
    "separate": cmd_separate,
}


def _error(code, kind, err):
    record = {"status": "error", "exit_code": code, "kind": kind, "message": str(err)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


@contextlib.contextmanager
def _thread_limit(n):
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=n):
        yield


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        with _thread_limit(cfg.threads):
            result = COMMANDS[cfg.subcommand](cfg)
    except DivergenceError as err:
        return _error(EXIT_DIVERGED, "divergence", err)
    except (io.ParseError, OSError) as err:
        return _error(EXIT_IO, "io", err)
    except (ConfigError, ValueError) as err:
        return _error(EXIT_CONFIG, "config", err)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
