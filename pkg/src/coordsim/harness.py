"""Scenarios, experiment orchestration and CSV/JSON emission."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import coord, oracle
from .graph import ENUMERATION_CAP, ConfigurationError, Network, build_topology
from .objective import ClampBounds, ObjectiveSpec, a1_bounds, builtin_objective

log = logging.getLogger(__name__)

TRACE_SCHEMA = "coordsim-trace-v1"
SUMMARY_KEYS = ("scenario", "algorithm", "beta", "seed", "final_gain", "final_sbar", "oracle_gain",
                "oracle_lambda", "deviation_inf", "gap_bound")
CONVERGENCE_WINDOW = 100
CONVERGENCE_REL = 1e-4


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    n: int
    m: int | None = None
    seed: int = 0

    def build(self) -> Network:
        return build_topology(self.kind, self.n, self.m, self.seed)


@dataclass(frozen=True)
class Scenario:
    id: str
    topology: TopologySpec
    objective: str
    beta: float = 5.0
    algorithm: str = "all"
    frames: int = 100_000
    T: float = 10.0
    alpha: float = 0.5
    step_scale: float = 3.0
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    bounds: ClampBounds | None = None

    def __post_init__(self):
        if self.algorithm not in coord.ALGORITHMS + ("all",):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.frames < 1:
            raise ConfigurationError("frames must be >= 1")
        if not (self.beta > 0 and self.T > 0):
            raise ConfigurationError("beta and T must be positive")
        if not self.seeds:
            raise ConfigurationError("at least one seed is needed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def algorithms(self) -> tuple[str, ...]:
        return coord.ALGORITHMS if self.algorithm == "all" else (self.algorithm,)

    def network(self) -> Network:
        return self.topology.build()

    def objective_spec(self, net: Network | None = None) -> ObjectiveSpec:
        return builtin_objective(self.objective, net or self.network())

    def clamp_bounds(self, beta: float | None = None) -> ClampBounds:
        if self.bounds is not None:
            return self.bounds
        return a1_bounds(self.objective_spec(), self.beta if beta is None else beta)


PRESETS = {
    "STAR-C1": Scenario("STAR-C1", TopologySpec("star", 5), "C1"),
    "COMP-C1": Scenario("COMP-C1", TopologySpec("complete", 4), "C1"),
    "RAND-C1": Scenario("RAND-C1", TopologySpec("random", 15, 21, 7), "C1", beta=4.0, algorithm="ind"),
    "RAND-C2": Scenario("RAND-C2", TopologySpec("random", 15, 21, 7), "C2", beta=4.0),
    "LINE-EX": Scenario("LINE-EX", TopologySpec("line", 3), "line-example"),
}

# file key -> (Scenario field, parser)
_KEYS = {
    "id": ("id", str),
    "base": (None, str),
    "topology.kind": ("kind", str),
    "topology.n": ("n", int),
    "topology.m": ("m", int),
    "topology.seed": ("tseed", int),
    "objective.name": ("objective", str),
    "run.beta": ("beta", float),
    "run.frames": ("frames", int),
    "run.T": ("T", float),
    "run.alpha": ("alpha", float),
    "run.step_scale": ("step_scale", float),
    "run.seeds": ("seeds", lambda v: tuple(int(x) for x in v.replace(",", " ").split())),
    "run.algorithm": ("algorithm", str),
    "bounds.theta_min": ("theta_min", float),
    "bounds.theta_max": ("theta_max", float),
    "bounds.rate_epsilon": ("rate_epsilon", float),
}


class ScenarioParseError(ConfigurationError):
    pass


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    """Parse the flat ``key = value`` format; ``base = PRESET`` inherits a preset."""
    vals: dict[str, object] = {}
    base = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ScenarioParseError(f"{source}:{lineno}: unknown key {key!r}")
        name, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ValueError as exc:
            raise ScenarioParseError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        if name is None:
            if parsed not in PRESETS:
                raise ScenarioParseError(f"{source}:{lineno}: unknown base preset {parsed!r}")
            base = PRESETS[parsed]
        else:
            vals[name] = parsed
    return _assemble(vals, base, source)


def _assemble(vals, base, source):
    topo = base.topology if base else None
    if any(k in vals for k in ("kind", "n", "m", "tseed")) or topo is None:
        if "kind" not in vals and topo is None:
            raise ScenarioParseError(f"{source}: topology.kind is required")
        kind = vals.get("kind", topo.kind if topo else None)
        n = vals.get("n", topo.n if topo else None)
        if n is None:
            raise ScenarioParseError(f"{source}: topology.n is required")
        m = vals.get("m", topo.m if topo else None)
        topo = TopologySpec(kind, n, m, vals.get("tseed", topo.seed if topo else 0))
    objective = vals.get("objective", base.objective if base else None)
    if objective is None:
        raise ScenarioParseError(f"{source}: objective.name is required")
    bounds = base.bounds if base else None
    bkeys = ("theta_min", "theta_max", "rate_epsilon")
    if any(k in vals for k in bkeys):
        if not ("theta_min" in vals and "theta_max" in vals):
            raise ScenarioParseError(f"{source}: bounds override needs both theta_min and theta_max")
        bounds = ClampBounds(vals["theta_min"], vals["theta_max"], vals.get("rate_epsilon", 1e-4))
    kw = {k: v for k, v in vals.items() if k in {f.name for f in dataclasses.fields(Scenario)}}
    kw.update(topology=topo, objective=objective, bounds=bounds)
    kw.setdefault("id", base.id if base else Path(source).stem)
    try:
        sc = dataclasses.replace(base, **kw) if base else Scenario(**kw)
        sc.objective_spec(sc.network())
    except (ConfigurationError, ValueError) as exc:
        raise ScenarioParseError(f"{source}: {exc}") from None
    return sc


def load_scenario(name_or_path: str | os.PathLike) -> Scenario:
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]
    path = Path(key)
    if not path.is_file():
        raise ConfigurationError(f"unknown preset or missing file {key!r}; presets: {', '.join(PRESETS)}")
    return parse_scenario_text(path.read_text(), str(path))


# ---------------------------------------------------------------- outputs

def trace_header(net: Network) -> list[str]:
    labels = net.labels
    return (["t", "gain"] + [f"theta_{x}" for x in labels] + [f"sbar_{x}" for x in labels]
            + [f"shat_{x}" for x in labels])


def schema_line(columns) -> str:
    digest = hashlib.sha256(",".join(columns).encode()).hexdigest()[:16]
    return f"# schema: {TRACE_SCHEMA} sha256={digest}"


def write_trace_csv(trace: coord.Trace, path: str | os.PathLike) -> Path:
    cols = trace_header(trace.net)
    data = np.column_stack([trace.t, trace.gain, trace.theta, trace.s_bar, trace.s_hat])
    path = Path(path)
    with path.open("w") as fh:
        fh.write(schema_line(cols) + "\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    return path


def read_trace_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        cols = fh.readline().rstrip("\n").split(",")
        if first != schema_line(cols):
            raise ValueError(f"{path}: schema line does not match header")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return cols, data


def gnuplot_columns(net: Network) -> str:
    """``using`` indices for every trace column, one per line."""
    return "\n".join(f"{k + 1}\t{c}" for k, c in enumerate(trace_header(net)))


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def write_json(obj, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")
    return path


# ---------------------------------------------------------- experiments

def convergence_frame(gain, window: int = CONVERGENCE_WINDOW, rel: float = CONVERGENCE_REL) -> int | None:
    """First frame from which the trailing-window gain spread stays below ``rel``·|gain|.

    Returns None when the run never settles (the last frame still violates).
    """
    g = np.asarray(gain, dtype=float)
    if len(g) < window:
        return None
    win = sliding_window_view(g, window)
    with np.errstate(invalid="ignore"):
        spread = win.max(axis=1) - win.min(axis=1)
        ok = np.isfinite(spread) & (spread <= rel * np.abs(g[window - 1:]))
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return int(bad[-1] + window) if len(bad) else window - 1


def worker_count(n_cells: int) -> int:
    cap = os.environ.get("COORDSIM_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_cells))


@dataclass(frozen=True)
class Cell:
    scenario: Scenario
    algorithm: str
    seed: int
    beta: float


def oracle_solution(sc: Scenario, beta: float) -> oracle.ExactSolution | None:
    net = sc.network()
    if net.n_nodes > ENUMERATION_CAP:
        log.info("%s: %d nodes exceeds the enumeration cap, oracle comparison disabled", sc.id, net.n_nodes)
        return None
    return oracle.solve_a_cg_opt(net, sc.objective_spec(net), beta)


def run_cell(cell: Cell) -> coord.Trace:
    sc = cell.scenario
    net = sc.network()
    spec = sc.objective_spec(net)
    bounds = sc.clamp_bounds(cell.beta)
    return coord.run(net, spec, cell.algorithm, cell.beta, sc.frames, T=sc.T, seed=cell.seed,
                     bounds=bounds, alpha=sc.alpha, step_scale=sc.step_scale,
                     meta={"scenario": sc.id})


def summarize(cell: Cell, trace: coord.Trace, exact: oracle.ExactSolution | None) -> dict:
    net = trace.net
    sbar = trace.final_sbar
    out = {
        "scenario": cell.scenario.id,
        "algorithm": cell.algorithm,
        "beta": cell.beta,
        "seed": cell.seed,
        "final_gain": trace.final_gain,
        "final_sbar": net.as_dict(sbar),
        "oracle_gain": None,
        "oracle_lambda": None,
        "deviation_inf": None,
        "gap_bound": net.n_nodes * math.log(2) / cell.beta,
        "frames": int(trace.meta["frames"]),
        "events": int(trace.meta["events"]),
        "messages": int(trace.meta["messages"]),
        "frames_to_convergence": convergence_frame(trace.gain),
        "clamped_frames": int(np.sum(trace.clamped)),
    }
    if exact is not None:
        out["oracle_gain"] = exact.gain
        out["oracle_lambda"] = net.as_dict(exact.lambda_star)
        out["deviation_inf"] = float(np.max(np.abs(sbar - exact.lambda_star)))
    return out


@dataclass
class ExperimentResult:
    scenario: Scenario
    traces: dict[tuple[str, int, float], coord.Trace] = field(repr=False)
    summaries: list[dict]


def _cell_stem(cell: Cell) -> str:
    return f"{cell.scenario.id}_{cell.algorithm}_b{cell.beta:g}_s{cell.seed}"


def _execute(cells: list[Cell], out_dir: Path | None, exact: dict, workers: int | None):
    traces, summaries = {}, []
    workers = worker_count(len(cells)) if workers is None else workers

    def collect(cell, trace):
        summ = summarize(cell, trace, exact.get(cell.beta))
        traces[(cell.algorithm, cell.seed, cell.beta)] = trace
        summaries.append(summ)
        if out_dir is not None:
            write_trace_csv(trace, out_dir / f"{_cell_stem(cell)}.csv")
            write_json(summ, out_dir / f"{_cell_stem(cell)}.json")

    try:
        if workers <= 1:
            for cell in cells:
                collect(cell, run_cell(cell))
        else:
            with ProcessPoolExecutor(workers) as pool:
                for cell, trace in zip(cells, pool.map(run_cell, cells)):
                    collect(cell, trace)
    finally:
        # whatever finished is on disk even if a later cell failed
        if out_dir is not None and summaries:
            write_json(summaries, out_dir / "summary.json")
    return traces, summaries


def run_experiment(scenario: Scenario, out_dir: str | os.PathLike | None = None,
                   workers: int | None = None, algorithms=None, seeds=None, beta: float | None = None,
                   frames: int | None = None) -> ExperimentResult:
    """One trace per (algorithm, seed); overrides replace the scenario's values."""
    sc = scenario
    if frames is not None or beta is not None:
        sc = dataclasses.replace(sc, frames=frames or sc.frames, beta=beta or sc.beta)
    algs = tuple(algorithms) if algorithms else sc.algorithms
    seeds = tuple(seeds) if seeds else sc.seeds
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    exact = {sc.beta: oracle_solution(sc, sc.beta)}
    cells = [Cell(sc, a, s, sc.beta) for a in algs for s in seeds]
    traces, summaries = _execute(cells, out, exact, workers)
    return ExperimentResult(sc, traces, summaries)


@dataclass
class SweepResult:
    scenario: Scenario
    algorithm: str
    rows: list[dict]

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] if r[key] is not None else np.nan for r in self.rows], dtype=float)

    def to_csv(self, path: str | os.PathLike) -> Path:
        cols = ["beta", "gain", "frames_to_convergence", "oracle_gain", "gap_bound"]
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# schema: coordsim-sweep-v1 sha256={hashlib.sha256(','.join(cols).encode()).hexdigest()[:16]}\n")
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                fh.write(",".join("nan" if r[c] is None else repr(float(r[c])) for c in cols) + "\n")
        return path


def sweep_beta(scenario: Scenario, betas, out_dir: str | os.PathLike | None = None,
               workers: int | None = None, algorithm: str | None = None) -> SweepResult:
    """Final gain and frames-to-convergence per β, medians over the scenario seeds.

    A scenario set to ``all`` sweeps Coord-steep. A run that never settles
    counts as converging at its last frame.
    """
    betas = sorted(float(b) for b in betas)
    if not betas or betas[0] <= 0:
        raise ValueError("betas must be nonempty and positive")
    alg = algorithm or ("steep" if scenario.algorithm == "all" else scenario.algorithm)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    exact = {b: oracle_solution(scenario, b) for b in betas}
    cells = [Cell(scenario, alg, s, b) for b in betas for s in scenario.seeds]
    _, summaries = _execute(cells, out, exact, workers)
    rows = []
    for b in betas:
        mine = [s for s in summaries if s["beta"] == b]
        ftc = [s["frames_to_convergence"] if s["frames_to_convergence"] is not None else scenario.frames
               for s in mine]
        ex = exact[b]
        rows.append({
            "beta": b,
            "gain": float(np.median([s["final_gain"] for s in mine])),
            "frames_to_convergence": float(np.median(ftc)),
            "unsettled_runs": sum(s["frames_to_convergence"] is None for s in mine),
            "oracle_gain": ex.gain if ex is not None else None,
            "gap_bound": scenario.network().n_nodes * math.log(2) / b,
            "seeds": [s["seed"] for s in mine],
            "per_seed_gain": [s["final_gain"] for s in mine],
            "per_seed_frames": ftc,
        })
    res = SweepResult(scenario, alg, rows)
    if out is not None:
        res.to_csv(out / f"{scenario.id}_sweep.csv")
        write_json(rows, out / f"{scenario.id}_sweep.json")
    return res
