"""Reference-scale synthetic run through the CLI with stage timings.

    python scripts/reference_scale.py --seed 0 --out runs/reference
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from vmad.cli import main as vmad

STRATEGIES = "avg,med,vote=0.1:0.9:0.1,wavg=q:synth,best=q:synth,rnd=1,mxd"


def stage(name: str, argv: list[str]) -> float:
    start = time.perf_counter()
    if vmad(argv) != 0:
        raise SystemExit(f"{name} failed")
    took = time.perf_counter() - start
    print(f"{name}: {took:.2f}s", file=sys.stderr)
    return took


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/reference")
    args = p.parse_args(argv)
    out = Path(args.out)
    sim = out / "sim"
    data = ["--manifest", str(sim / "manifest.csv"), "--scores", str(sim / "scores.csv")]

    total = stage("simulate", ["simulate", "--preset", "reference", "--seed", str(args.seed), "--out", str(sim)])
    total += stage("fuse", ["fuse", *data, "--mad-track", "mad:synth", "--strategies", STRATEGIES,
                            "--out", str(out / "fused.csv")])
    total += stage("eval", ["eval", "--fused", str(out / "fused.csv"), "--out", str(out / "eval"), "--svg"])
    print(f"simulate+fuse+eval: {total:.2f}s", file=sys.stderr)
    stage("train", ["train", *data, "--layout", "mad:synth,q:synth", "--seed", str(args.seed),
                    "--out", str(out / "model.txt")])
    stage("predict", ["predict", "--model", str(out / "model.txt"), *data, "--subset", "test",
                      "--seed", str(args.seed), "--out", str(out / "svr.csv")])
    stage("eval svr", ["eval", "--fused", str(out / "svr.csv"), "--out", str(out / "eval_svr")])
    return 0


if __name__ == "__main__":
    sys.exit(main())
