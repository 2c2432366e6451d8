"""Error against iteration for several sampling rates on one synthetic instance."""
import argparse

from fastrpca.bench import run_convergence_experiment
from fastrpca.synth import SynthSpec


def _num(x, spec=".2e"):
    return "n/a" if x is None else format(x, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=500)
    ap.add_argument("--r", type=int, default=5)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--p", type=float, nargs="+", default=[1.0, 0.5, 0.2])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="convergence.jsonl")
    args = ap.parse_args()

    report = run_convergence_experiment(SynthSpec(args.d, args.r, args.alpha, seed=args.seed), args.p)
    report.write_jsonl(args.out)
    for run in report.runs:
        print(f"{run.label:>8}  {run.status:<8} iters={len(run.trace) - 1:<5} "
              f"rel_error={_num(run.final_rel_error)}  slope={_num(run.decay_slope, '.3f')}  r2={_num(run.decay_r2, '.4f')}")
    print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
