"""Trend experiment: fusion strategies and the SVR fuser over a seed x coupling grid.

Writes one CSV row per (coupling, seed, strategy) with the EER on the full
dataset and on the held-out half used for the SVR comparison.

    python scripts/trend_suite.py --seeds 20 --couplings 0.5,1,2 --out trend.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace

import numpy as np

from vmad.fusion import apply_strategy, parse_strategies
from vmad.metrics import LabeledScoreSet, det_curve, eer
from vmad.model import Label
from vmad.svr import feature_matrix, fit_layout, parse_layout, predict, split_dataset, targets_for, train_svr
from vmad.synth import MAD_TRACK, ScenarioConfig, generate_scenario

STRATEGIES = "avg,med,vote=0.5,wavg=q:synth,best=q:synth,rnd=1,mxd"


def eer_of(attempts, values) -> float:
    b = np.array([v for a, v in zip(attempts, values) if a.label is Label.BONAFIDE])
    m = np.array([v for a, v in zip(attempts, values) if a.label is Label.MORPH])
    return eer(det_curve(LabeledScoreSet(b, m)))[0]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--couplings", default="0.5,1,2")
    p.add_argument("--layout", default="mad:synth,q:synth")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1e-3)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", default="-")
    args = p.parse_args(argv)

    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("coupling", "seed", "strategy", "eer_full", "eer_test"))
    for coupling in (float(v) for v in args.couplings.split(",")):
        for seed in range(args.seeds):
            ds = generate_scenario(replace(ScenarioConfig(), quality_noise_coupling=coupling, seed=seed))
            train, test = split_dataset(list(ds.attempts), 0.5, seed=seed)
            for s in parse_strategies(STRATEGIES, MAD_TRACK):
                full = apply_strategy(ds, s)
                part = apply_strategy(ds, s, test)
                w.writerow((
                    coupling, seed, s.spec,
                    f"{eer_of(ds.attempts, [v.value for v in full]):.6f}",
                    f"{eer_of(test, [v.value for v in part]):.6f}",
                ))
            layout = fit_layout(parse_layout(args.layout), ds, train)
            model = train_svr(
                feature_matrix(ds, train, layout), targets_for(train),
                c=args.c, gamma=args.gamma, epsilon=args.epsilon, layout=layout,
            )
            test_eer = eer_of(test, predict(model, feature_matrix(ds, test, layout)))
            w.writerow((coupling, seed, "svr=" + "+".join(layout.tracks), "", f"{test_eer:.6f}"))
            out.flush()
    if out is not sys.stdout:
        out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
