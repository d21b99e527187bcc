"""Command-line entry point: ``coordsim <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import game, harness, oracle, verify
from .graph import ConfigurationError, SizeError

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coordsim", description="Distributed coordination simulator and exact oracles.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate Coord-* algorithms on a scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--algo", choices=["dual", "steep", "ind", "all"])
    r.add_argument("--frames", type=int)
    r.add_argument("--seed", type=int, action="append", help="repeatable; defaults to the scenario seeds")
    r.add_argument("--beta", type=float)
    r.add_argument("--out", required=True)

    e = sub.add_parser("exact", help="solve the regularized program by enumeration")
    e.add_argument("--scenario", required=True)
    e.add_argument("--beta", type=float)
    e.add_argument("--schedule", type=_floats, help="increasing β list for continuation")
    e.add_argument("--out", required=True)

    g = sub.add_parser("game", help="Nash equilibrium and potential ascent")
    g.add_argument("--scenario", required=True)
    g.add_argument("--beta", type=float, required=True)
    g.add_argument("--steps", type=int, default=2000, help="gradient-dynamics steps for the ascent trace")
    g.add_argument("--alpha", type=float, default=1.0, help="gradient-dynamics step size")
    g.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="β sweep: converged gain and frames to convergence")
    s.add_argument("--scenario", required=True)
    s.add_argument("--betas", type=_floats, required=True)
    s.add_argument("--algo", choices=["dual", "steep", "ind"])
    s.add_argument("--frames", type=int)
    s.add_argument("--out", required=True)

    v = sub.add_parser("verify", help="run the oracle/CDM/game property checks")
    v.add_argument("--only", default="", help="subset of check letters, e.g. 'abf'")

    c = sub.add_parser("columns", help="print trace CSV column indices for gnuplot")
    c.add_argument("--scenario", required=True)
    return p


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(a) -> int:
    sc = harness.load_scenario(a.scenario)
    if a.frames is not None and a.frames < 1:
        raise UsageError("--frames must be >= 1")
    algs = None if a.algo in (None, "all") else [a.algo]
    if a.algo == "all":
        algs = list(harness.coord.ALGORITHMS)
    res = harness.run_experiment(sc, _outdir(a.out), algorithms=algs, seeds=a.seed, beta=a.beta,
                                 frames=a.frames)
    for s in res.summaries:
        dev = "n/a" if s["deviation_inf"] is None else f"{s['deviation_inf']:.4f}"
        print(f"{s['scenario']} {s['algorithm']} seed={s['seed']} beta={s['beta']:g} "
              f"gain={s['final_gain']:.4f} deviation={dev}")
    return EXIT_OK


def cmd_exact(a) -> int:
    sc = harness.load_scenario(a.scenario)
    net = sc.network()
    spec = sc.objective_spec(net)
    if a.schedule:
        sols = oracle.solve_cg_opt(net, spec, a.schedule)
    else:
        sols = [oracle.solve_a_cg_opt(net, spec, a.beta if a.beta is not None else sc.beta)]
    out = _outdir(a.out)
    payload = {"scenario": sc.id, "solutions": [s.to_json() for s in sols],
               "lambda": sols[-1].to_json()["lambda"], "gain": sols[-1].gain}
    harness.write_json(payload, out / f"{sc.id}_exact.json")
    lam = ", ".join(f"{k}={v:.4f}" for k, v in payload["lambda"].items())
    print(f"{sc.id} beta={sols[-1].beta:g} gain={sols[-1].gain:.4f} lambda: {lam}")
    return EXIT_OK


def cmd_game(a) -> int:
    sc = harness.load_scenario(a.scenario)
    net = sc.network()
    inst = game.GameInstance(net, sc.objective_spec(net), a.beta)
    res = game.find_ne(inst)
    out = _outdir(a.out)
    harness.write_json({"scenario": sc.id, "beta": a.beta, **res.to_json()}, out / f"{sc.id}_game.json")
    theta0 = oracle._initial_theta(net, inst.spec, a.beta)
    thetas = [theta0]
    pots = [game.potential(inst, theta0)]
    for _ in range(a.steps):
        thetas.append(game.gradient_dynamics_step(inst, thetas[-1], a.alpha))
        pots.append(game.potential(inst, thetas[-1]))
    cols = ["step", "potential"] + [f"theta_{x}" for x in net.labels]
    path = out / f"{sc.id}_ascent.csv"
    with path.open("w") as fh:
        fh.write(f"# schema: coordsim-ascent-v1 sha256={hashlib.sha256(','.join(cols).encode()).hexdigest()[:16]}\n")
        fh.write(",".join(cols) + "\n")
        data = np.column_stack([np.arange(len(pots)), pots, np.array(thetas)])
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    print(f"{sc.id} beta={a.beta:g} NE gain={res.ne_gain:.4f} social={res.social_opt_gain:.4f} "
          f"gap={res.gap_to_social_opt:.4g} bound={res.poa_bound:.4g} rounds={res.rounds}")
    return EXIT_OK


def cmd_sweep(a) -> int:
    sc = harness.load_scenario(a.scenario)
    if a.frames is not None:
        sc = harness.dataclasses.replace(sc, frames=a.frames)
    res = harness.sweep_beta(sc, a.betas, _outdir(a.out), algorithm=a.algo)
    for r in res.rows:
        print(f"beta={r['beta']:g} gain={r['gain']:.4f} frames_to_convergence={r['frames_to_convergence']:.0f}")
    return EXIT_OK


def cmd_verify(a) -> int:
    keys = [k for k in a.only if k in verify.CHECKS] or None
    results = verify.run_all(keys)
    for r in results:
        print(f"{r.line()} [{r.seconds:.2f}s]")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NONCONV


def cmd_columns(a) -> int:
    print(harness.gnuplot_columns(harness.load_scenario(a.scenario).network()))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "exact": cmd_exact, "game": cmd_game, "sweep": cmd_sweep,
            "verify": cmd_verify, "columns": cmd_columns}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(a, "cmd", None) == "exact" and a.beta is not None and a.schedule:
            raise UsageError("give either --beta or --schedule, not both")
        return COMMANDS[a.cmd](a)
    except (UsageError, ConfigurationError, SizeError, game.BracketError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except oracle.NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
