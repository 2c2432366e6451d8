"""Wall time of the partial solver at p = 0.15 r^2 log(d) / d against d."""
import argparse

from fastrpca.bench import run_scaling_experiment


def _num(x, spec=".2e"):
    return "n/a" if x is None else format(x, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, nargs="+", default=[1000, 2000, 4000])
    ap.add_argument("--r", type=int, default=5)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="scaling.jsonl")
    args = ap.parse_args()

    report = run_scaling_experiment(args.d, args.r, args.alpha, seed=args.seed)
    report.write_jsonl(args.out)
    for run in report.runs:
        print(f"d={run.params['d']:<6} p={run.params['p']:.4f}  {run.status:<8} "
              f"time={_num(run.wall_time, '.2f')}s  rel_error={_num(run.final_rel_error)}")
    slope = report.summary.get("slope")
    print("log-log slope:", "n/a" if slope is None else f"{slope:.3f}")
    print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
