"""Run the three Coord algorithms on a scenario and report deviation from the oracle.

    python scripts/convergence.py --scenario STAR-C1 --frames 100000 --out results/star
"""

import argparse

import numpy as np

from coordsim import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="STAR-C1")
    ap.add_argument("--frames", type=int, default=100_000)
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--tol", type=float, default=0.05)
    ap.add_argument("--out", default=None, help="write traces and summary.json here")
    a = ap.parse_args()
    sc = harness.load_scenario(a.scenario)
    seeds = [int(s) for s in a.seeds.split(",")]
    res = harness.run_experiment(sc, a.out, algorithms=["dual", "steep", "ind"], seeds=seeds, frames=a.frames)
    by_alg = {}
    for s in res.summaries:
        by_alg.setdefault(s["algorithm"], []).append(s)
    for alg, rows in by_alg.items():
        devs = np.array([r["deviation_inf"] for r in rows], dtype=float)
        settle = [r["frames_to_convergence"] for r in rows]
        print(f"{alg:6s} within {a.tol:g}: {int(np.sum(devs <= a.tol))}/{len(devs)}  "
              f"max dev {np.nanmax(devs):.4f}  settling frames {settle}")


if __name__ == "__main__":
    main()
