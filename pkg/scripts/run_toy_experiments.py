#!/usr/bin/env python3
"""Run both toy experiments for the entropy predictor and the k-NN baseline.

Writes plot-ready CSV dumps plus a metrics JSON per experiment into
--out-dir (default toy_out/). Equivalent to the `maxentnn toy-reg` and
`maxentnn toy-clf` commands, bundled for one-shot reproduction.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from maxentnn.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--train", type=int, default=500)
    parser.add_argument("--eval", type=int, default=50)
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--out-dir", default="toy_out")
    parser.add_argument("--parallel", type=int, default=1)
    args = parser.parse_args()

    common = [
        "--seed", str(args.seed), "--train", str(args.train),
        "--eval", str(args.eval), "--k", str(args.k),
        "--out-dir", args.out_dir, "--parallel", str(args.parallel),
    ]
    for command in ("toy-reg", "toy-clf"):
        code = cli_main([command, *common])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
