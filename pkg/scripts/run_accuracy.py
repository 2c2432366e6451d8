"""Error against wall time for the full solver and subsampled runs."""
import argparse

from fastrpca.bench import full_config, partial_config, run_accuracy_vs_time
from fastrpca.synth import SynthSpec


def _num(x, spec=".2e"):
    return "n/a" if x is None else format(x, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=1000)
    ap.add_argument("--r", type=int, default=5)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--p", type=float, nargs="+", default=[0.2, 0.1])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="accuracy.jsonl")
    args = ap.parse_args()

    spec = SynthSpec(args.d, args.r, args.alpha, seed=args.seed)
    cfgs = [full_config(args.r, args.alpha)] + [partial_config(args.r, args.alpha, p=p) for p in args.p]
    report = run_accuracy_vs_time(spec, cfgs)
    report.write_jsonl(args.out)
    for run in report.runs:
        t = run.time_to()
        print(f"{run.label:>8}  time_to_1e-3={'n/a' if t is None else f'{t:.2f}s':<8} "
              f"total={_num(run.wall_time, '.2f')}s  rel_error={_num(run.final_rel_error)}")
    print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
