"""Background subtraction on a synthetic moving-box sequence.

Writes the frames as PGM files, runs the ``separate`` subcommand and reports
the worst per-pixel background error against the known background.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from fastrpca.cli import main as cli_main
from fastrpca.io import read_frames, write_frames
from fastrpca.synth import moving_box_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("fb_demo"))
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--size", type=int, default=40)
    ap.add_argument("extra", nargs="*", help="flags passed to 'separate', e.g. -- --rank 1 --stop-tol 1e-10")
    args = ap.parse_args()

    F, bg = moving_box_sequence(args.frames, args.size, args.size)
    frames = args.out / "frames"
    write_frames(F, args.size, args.size, frames)
    argv = ["separate", str(frames), "--preset", "fb-separation", "--out", str(args.out / "result")]
    code = cli_main(argv + args.extra)
    if code:
        sys.exit(code)
    back = read_frames(args.out / "result" / "background")
    err = np.abs(back.matrix - bg[:, None]).max(axis=0)
    print(json.dumps({"max_pixel_error": float(err.max()), "per_frame": err.round(4).tolist()}))


if __name__ == "__main__":
    main()
