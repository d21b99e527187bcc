"""Nash equilibria of the coordination game and their gap to the social optimum.

    python scripts/nash.py --betas 0.5,1,2,5,20
"""

import argparse

from coordsim import game, harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", default="LINE-EX,STAR-C1,COMP-C1")
    ap.add_argument("--betas", default="0.5,1,2,5,20")
    a = ap.parse_args()
    print(f"{'scenario':8s} {'beta':>6} {'NE gain':>9} {'social':>9} {'gap':>8} {'bound':>8} rounds")
    for sid in a.scenarios.split(","):
        sc = harness.load_scenario(sid)
        net = sc.network()
        spec = sc.objective_spec(net)
        for beta in (float(b) for b in a.betas.split(",")):
            r = game.find_ne(game.GameInstance(net, spec, beta))
            print(f"{sid:8s} {beta:6g} {r.ne_gain:9.4f} {r.social_opt_gain:9.4f} "
                  f"{r.gap_to_social_opt:8.4f} {r.poa_bound:8.4f} {r.rounds}")


if __name__ == "__main__":
    main()
