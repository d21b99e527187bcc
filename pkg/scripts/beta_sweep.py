"""Gain against time-to-convergence as β grows.

    python scripts/beta_sweep.py --scenario STAR-C1 --betas 0.5,1,2,5 --out results/sweep
"""

import argparse

from coordsim import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="STAR-C1")
    ap.add_argument("--betas", default="0.5,1,2,5")
    ap.add_argument("--algo", default="steep", choices=["dual", "steep", "ind"])
    ap.add_argument("--frames", type=int, default=None)
    ap.add_argument("--out", default="results/sweep")
    a = ap.parse_args()
    sc = harness.load_scenario(a.scenario)
    if a.frames:
        sc = harness.dataclasses.replace(sc, frames=a.frames)
    sw = harness.sweep_beta(sc, [float(b) for b in a.betas.split(",")], a.out, algorithm=a.algo)
    print(f"{'beta':>6} {'gain':>9} {'frames':>8} unsettled")
    for r in sw.rows:
        print(f"{r['beta']:6g} {r['gain']:9.4f} {r['frames_to_convergence']:8.0f} {r['unsettled_runs']}")


if __name__ == "__main__":
    main()
