"""Benchmark harness: built-in problems, convergence tests, profile CSVs.

The suite runs solver configurations over a registry of small problems with
known optima, scores every evaluation with a feasibility-aware merit value,
and condenses the runs into performance profiles (evaluations relative to
the best solver per problem) and data profiles (evaluations normalized by
the cost of one simplex gradient, ``n + 1``).  An optional multiplicative
Gaussian noise wrapper makes the objective stochastic while the scoring
still uses the true objective values.

Everything is deterministic: the noise stream is a counter-based generator
seeded from the run coordinates, so identical invocations produce
byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .driver import Options, minimize
from .problem import Problem, build_problem

# Merit constants: full credit below the tight violation, disqualification
# above the loose one, and a linear penalty in between.
FEAS_TIGHT = 1e-10
FEAS_LOOSE = 1e-5
VIOLATION_WEIGHT = 1e5

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Deterministic Gaussian stream.


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a string; stable across platforms."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def run_seed(problem: str, solver: str, seed: int) -> int:
    """Seed for one (problem, solver, repetition) noise stream."""
    return fnv1a64(f"{problem}|{solver}|{seed}")


class GaussianStream:
    """Standard normal draws from a 64-bit counter generator.

    The state advances by the SplitMix64 recurrence and each draw feeds two
    uniform variates into the Box-Muller transform (cosine branch only), so
    the sequence depends on nothing but the seed.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def _next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def _uniform(self) -> float:
        # in (0, 1]: the +1 keeps log() finite on the zero word.
        return ((self._next_u64() >> 11) + 1) * 2.0 ** -53

    def normal(self) -> float:
        u1 = self._uniform()
        u2 = self._uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def noisy_wrap(p: Problem, sigma: float, seed: int) -> Problem:
    """Fresh problem whose objective is ``(1 + eps) f`` with eps ~ N(0, s^2).

    One draw per evaluation, in evaluation order; ``sigma = 0`` reproduces
    the clean values exactly. Constraints are left untouched.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    stream = GaussianStream(seed)
    base = p.objective

    def noisy(x: np.ndarray) -> float:
        f = base(x)
        if sigma > 0.0:
            f = (1.0 + sigma * stream.normal()) * float(f)
        return f

    return Problem(noisy, p.lower.copy(), p.upper.copy(), p.a_ub, p.b_ub,
                   p.a_eq, p.b_eq, p.c_ub, p.c_eq)


# ---------------------------------------------------------------------------
# Merit and convergence test.


def benchmark_merit(f: float, cub: np.ndarray, ceq: np.ndarray) -> float:
    """Feasibility-aware score of one evaluation.

    The objective value counts as-is when the l-infinity violation is within
    FEAS_TIGHT, is disqualified (infinite) at or above FEAS_LOOSE, and is
    penalized linearly in between.
    """
    viol = float(max(0.0, np.max(cub, initial=0.0),
                     np.max(np.abs(ceq), initial=0.0)))
    if viol <= FEAS_TIGHT:
        return float(f)
    if viol >= FEAS_LOOSE:
        return math.inf
    return float(f) + VIOLATION_WEIGHT * viol


def converged_at(history: Sequence[float], phi0: float, phi_star: float,
                 tau: float) -> float:
    """First 1-based evaluation count achieving the tau-convergence test.

    The test asks for a decrease of at least a (1 - tau) share of the best
    achievable one: phi0 - phi >= (1 - tau)(phi0 - phi_star). The decrease
    form keeps an infinite starting merit meaningful - any finite merit
    passes, a still-infinite one does not. Returns ``inf`` when no entry
    qualifies.
    """
    need = (1.0 - tau) * (float(phi0) - float(phi_star))
    for i, phi in enumerate(history, start=1):
        if float(phi0) - float(phi) >= need:
            return float(i)
    return math.inf


# ---------------------------------------------------------------------------
# Built-in problems.


@dataclasses.dataclass
class BenchProblem:
    """Registry entry: a raw objective plus a factory for fresh instances."""

    name: str
    n: int
    x0: np.ndarray
    fun: Callable[[np.ndarray], float]
    make: Callable[[], Problem]


def _rosen(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2
                        + (1.0 - x[:-1]) ** 2))


def _registry() -> dict[str, BenchProblem]:
    entries: list[BenchProblem] = []

    def add(name, x0, fun, **kwargs):
        x0 = np.asarray(x0, dtype=float)
        entries.append(BenchProblem(
            name=name, n=x0.size, x0=x0, fun=fun,
            make=lambda: build_problem(fun, n=x0.size, **kwargs)))

    # Unconstrained classics; the minimizer and optimum are noted per entry.
    add("sphere", [1.0, 2.0, -1.0, 0.5],
        lambda x: float(x @ x))                       # 0 at the origin
    add("quartic", [1.0, -1.0, 1.0],
        lambda x: float(np.sum(np.asarray(x) ** 4)))  # 0 at the origin
    add("illcond", [1.0, 1.0, 1.0, 1.0],
        lambda x: float(np.sum([1.0, 10.0, 100.0, 1000.0]
                               * np.asarray(x) ** 2)))  # 0 at the origin
    add("rosen2", [-1.2, 1.0], _rosen)                # 0 at all-ones
    add("rosen5", [1.3, 0.7, 0.8, 1.9, 1.2], _rosen)  # 0 at all-ones
    add("beale", [1.0, 1.0],
        lambda x: float((1.5 - x[0] + x[0] * x[1]) ** 2
                        + (2.25 - x[0] + x[0] * x[1] ** 2) ** 2
                        + (2.625 - x[0] + x[0] * x[1] ** 3) ** 2))
    # beale: 0 at (3, 0.5)
    add("booth", [0.0, 0.0],
        lambda x: float((x[0] + 2.0 * x[1] - 7.0) ** 2
                        + (2.0 * x[0] + x[1] - 5.0) ** 2))  # 0 at (1, 3)
    add("sixhump", [0.5, -0.5],
        lambda x: float((4.0 - 2.1 * x[0] ** 2 + x[0] ** 4 / 3.0) * x[0] ** 2
                        + x[0] * x[1]
                        + (-4.0 + 4.0 * x[1] ** 2) * x[1] ** 2))
    # sixhump: -1.0316... at (+-0.0898, -+0.7127)
    add("himmelblau", [0.0, 0.0],
        lambda x: float((x[0] ** 2 + x[1] - 11.0) ** 2
                        + (x[0] + x[1] ** 2 - 7.0) ** 2))  # 0, four minima

    # Bound-constrained: optimum pressed against the upper bounds.
    add("boundbox", [0.0, 0.0, 0.0],
        lambda x: float(np.sum((np.asarray(x) - 2.0) ** 2)),
        xl=[-1.0, -1.0, -1.0], xu=[1.0, 1.0, 1.0])   # 3 at (1, 1, 1)

    # Linearly constrained.
    add("linqp", [2.0, 0.0],
        lambda x: float((x[0] - 1.0) ** 2 + (x[1] - 2.5) ** 2),
        xl=[0.0, 0.0],
        aub=[[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0]],
        bub=[2.0, 6.0, 2.0])                          # 0.8 at (1.4, 1.7)
    add("cornerlp", [0.1, 0.1],
        lambda x: float(-x[0] - 2.0 * x[1]),
        xl=[0.0, 0.0], xu=[1.0, 1.0],
        aub=[[1.0, 1.0]], bub=[1.5])                  # -2.5 at (0.5, 1)
    add("eqlin", [0.0, 0.0],
        lambda x: float((x[0] + 3.0) ** 2 + (x[1] + 4.0) ** 2),
        aeq=[[1.0, -1.0]], beq=[1.0])                 # 0 at (-3, -4)

    # Nonlinearly constrained.
    add("conemin", [1.0, 1.0, 1.0],
        lambda x: float(x[2]),
        aub=[[-5.0, 1.0, -1.0], [5.0, 1.0, -1.0]], bub=[0.0, 0.0],
        cub=lambda x: np.array([x[0] ** 2 + x[1] ** 2 + 4.0 * x[1] - x[2]]))
    # conemin: -3 at (0, -3, -3)
    add("ringeq", [2.0, 1.0],
        lambda x: float(x[0] + x[1]),
        ceq=lambda x: np.array([(x[0] - 0.15) ** 2 + (x[1] + 0.35) ** 2
                                - 2.3]))
    # ringeq: -2.345... at (0.15, -0.35) - sqrt(1.15) * (1, 1)

    return {entry.name: entry for entry in entries}


REGISTRY = _registry()

# Solver configurations exposed on the command line.
SOLVERS = {
    "default": "broyden",
    "min-frobenius": "min_frobenius",
}


# ---------------------------------------------------------------------------
# Runs and profiles.


@dataclasses.dataclass
class RunRecord:
    """One (problem, solver, seed) run with its per-evaluation merits."""

    problem: str
    n: int
    solver: str
    seed: int
    nfev: int
    status: str
    best_f: float
    best_maxcv: float
    merits: np.ndarray
    t: dict[float, float] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass
class ProfileCurve:
    """Per-solver step curves sharing one alpha grid."""

    tau: float
    points: dict[str, list[tuple[float, float]]]

    @property
    def alphas(self) -> list[float]:
        first = next(iter(self.points.values()), [])
        return [a for a, _ in first]


def merit_history(p: Problem, fun: Callable[[np.ndarray], float],
                  recompute: bool) -> np.ndarray:
    """Merit of every recorded evaluation, using the true objective.

    With ``recompute`` the objective is re-evaluated at the recorded points
    (needed when the run saw a noise-wrapped objective); otherwise the
    recorded values are trusted.
    """
    out = np.empty(len(p.history))
    for i, rec in enumerate(p.history):
        f = fun(rec.x) if recompute else rec.f
        out[i] = benchmark_merit(f, rec.cub, rec.ceq)
    return out


def best_merits(records: Sequence[RunRecord]) -> dict[str, float]:
    """Least merit seen per problem over every run in the comparison."""
    out: dict[str, float] = {}
    for rec in records:
        least = float(np.min(rec.merits)) if rec.merits.size else math.inf
        out[rec.problem] = min(out.get(rec.problem, math.inf), least)
    return out


def _t_table(records: Sequence[RunRecord], tau: float,
             phi_star: dict[str, float] | None,
             ) -> tuple[dict[tuple[str, str], float], dict[str, int]]:
    """Evaluations-to-converge per (problem, solver), seeds averaged."""
    if phi_star is None:
        phi_star = best_merits(records)
    phi0: dict[str, float] = {}
    for rec in records:
        phi0.setdefault(rec.problem, float(rec.merits[0]))
    per_run: dict[tuple[str, str], list[float]] = {}
    dims: dict[str, int] = {}
    for rec in records:
        t = converged_at(rec.merits, phi0[rec.problem],
                         phi_star[rec.problem], tau)
        per_run.setdefault((rec.problem, rec.solver), []).append(t)
        dims[rec.problem] = rec.n
    table = {key: sum(ts) / len(ts) for key, ts in per_run.items()}
    return table, dims


def _step_curve(values: dict[str, list[float]], grid: list[float],
                n_problems: int) -> dict[str, list[tuple[float, float]]]:
    points: dict[str, list[tuple[float, float]]] = {}
    for solver, costs in values.items():
        costs = sorted(c for c in costs if math.isfinite(c))
        pts = []
        for alpha in grid:
            solved = sum(1 for c in costs if c <= alpha)
            pts.append((alpha, solved / n_problems))
        points[solver] = pts
    return points


def performance_profile(records: Sequence[RunRecord], tau: float,
                        phi_star: dict[str, float] | None = None,
                        ) -> ProfileCurve:
    """Fraction of problems solved within a factor alpha of the best solver.

    For each problem the cost ratio is the solver's evaluations-to-converge
    over the least one among the compared solvers; the curve is sampled at
    every distinct finite ratio.
    """
    table, dims = _t_table(records, tau, phi_star)
    solvers = sorted({s for _, s in table}, key=_solver_order)
    problems = sorted(dims)
    ratios: dict[str, list[float]] = {s: [] for s in solvers}
    for prob in problems:
        best = min(table.get((prob, s), math.inf) for s in solvers)
        for s in solvers:
            t = table.get((prob, s), math.inf)
            ratios[s].append(t / best if math.isfinite(t) else math.inf)
    grid = sorted({r for rs in ratios.values() for r in rs
                   if math.isfinite(r)})
    return ProfileCurve(tau, _step_curve(ratios, grid, len(problems)))


def data_profile(records: Sequence[RunRecord], tau: float,
                 phi_star: dict[str, float] | None = None) -> ProfileCurve:
    """Fraction of problems solved within ``alpha`` simplex gradients.

    The cost of a run is its evaluations-to-converge divided by ``n + 1``;
    the curve starts at (0, 0) and is sampled at every distinct finite cost.
    """
    table, dims = _t_table(records, tau, phi_star)
    solvers = sorted({s for _, s in table}, key=_solver_order)
    problems = sorted(dims)
    costs: dict[str, list[float]] = {s: [] for s in solvers}
    for prob in problems:
        for s in solvers:
            t = table.get((prob, s), math.inf)
            costs[s].append(t / (dims[prob] + 1))
    grid = [0.0] + sorted({c for cs in costs.values() for c in cs
                           if math.isfinite(c) and c > 0.0})
    return ProfileCurve(tau, _step_curve(costs, grid, len(problems)))


def _solver_order(solver: str) -> tuple[int, str]:
    known = list(SOLVERS)
    return (known.index(solver) if solver in known else len(known), solver)


# ---------------------------------------------------------------------------
# Suite execution.


@dataclasses.dataclass
class SuiteConfig:
    solvers: list[str]
    problems: list[str]
    taus: list[float]
    sigma: float = 0.0
    seeds: int = 1
    maxfev_mult: int = 500
    rhobeg: float = 1.0
    rhoend: float = 1e-6


def _solve_once(entry: BenchProblem, solver: str, seed: int,
                cfg: SuiteConfig, noisy: bool) -> RunRecord:
    p = entry.make()
    if noisy:
        p = noisy_wrap(p, cfg.sigma, run_seed(entry.name, solver, seed))
    res = minimize(p, entry.x0, Options(
        rhobeg=cfg.rhobeg, rhoend=cfg.rhoend,
        maxfev=cfg.maxfev_mult * entry.n,
        model_policy=SOLVERS[solver]))
    merits = merit_history(p, entry.fun, recompute=noisy)
    best_f = float(entry.fun(np.asarray(res.x))) if noisy else res.fun
    return RunRecord(problem=entry.name, n=entry.n, solver=solver, seed=seed,
                     nfev=res.nfev, status=res.status, best_f=best_f,
                     best_maxcv=res.maxcv, merits=merits)


def run_suite(cfg: SuiteConfig) -> list[RunRecord]:
    """Run every (problem, solver, seed) combination and attach the
    per-tau convergence counts to the records.

    With noise, each combination is repeated for every seed and one clean
    run per combination additionally feeds the per-problem best merit (it
    produces no record of its own).
    """
    for name in cfg.problems:
        if name not in REGISTRY:
            raise KeyError(f"unknown problem {name!r}; known: "
                           + ", ".join(REGISTRY))
    for solver in cfg.solvers:
        if solver not in SOLVERS:
            raise KeyError(f"unknown solver {solver!r}; known: "
                           + ", ".join(SOLVERS))
    noisy = cfg.sigma > 0.0
    seeds = range(cfg.seeds) if noisy else (0,)
    records: list[RunRecord] = []
    floor: dict[str, float] = {}
    for name in cfg.problems:
        entry = REGISTRY[name]
        for solver in cfg.solvers:
            for seed in seeds:
                records.append(_solve_once(entry, solver, seed, cfg, noisy))
            if noisy:
                clean = _solve_once(entry, solver, 0, cfg, noisy=False)
                least = float(np.min(clean.merits))
                floor[name] = min(floor.get(name, math.inf), least)
    phi_star = best_merits(records)
    for name, least in floor.items():
        phi_star[name] = min(phi_star[name], least)
    for rec in records:
        phi0 = float(rec.merits[0])
        for tau in cfg.taus:
            rec.t[tau] = converged_at(rec.merits, phi0,
                                      phi_star[rec.problem], tau)
    return records


# ---------------------------------------------------------------------------
# CSV output.


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def tau_label(tau: float) -> str:
    """Compact tau name used in headers and file names: 0.001 -> 1e-3."""
    if tau > 0.0:
        exp = round(math.log10(tau))
        if 10.0 ** exp == tau:
            return f"1e{exp}" if exp < 0 else repr(float(tau))
    return repr(float(tau))


def write_runs_csv(records: Sequence[RunRecord], taus: Sequence[float],
                   path: Path) -> None:
    header = ["problem", "n", "solver", "seed", "nfev", "status", "best_f",
              "best_maxcv"] + [f"t_tau_{tau_label(t)}" for t in taus]
    lines = [",".join(header)]
    for rec in records:
        row = [rec.problem, rec.n, rec.solver, rec.seed, rec.nfev,
               rec.status, rec.best_f, rec.best_maxcv]
        row += [rec.t[t] for t in taus]
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_profile_csv(curve: ProfileCurve, solvers: Sequence[str],
                      path: Path) -> None:
    lines = [",".join(["alpha"] + list(solvers))]
    grid = curve.alphas
    for i, alpha in enumerate(grid):
        row = [alpha] + [curve.points[s][i][1] for s in solvers]
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_outputs(records: Sequence[RunRecord], cfg: SuiteConfig,
                  outdir: Path) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "runs.csv"]
    write_runs_csv(records, cfg.taus, paths[0])
    for tau in cfg.taus:
        label = tau_label(tau)
        perf = performance_profile(records, tau)
        data = data_profile(records, tau)
        for kind, curve in (("perf", perf), ("data", data)):
            path = outdir / f"{kind}_{label}.csv"
            write_profile_csv(curve, cfg.solvers, path)
            paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Command line.


def _parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Run the built-in benchmark suite and write profile "
                    "CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a suite")
    run.add_argument("--solvers", default=",".join(SOLVERS),
                     help="comma-separated solver ids "
                          f"(known: {', '.join(SOLVERS)})")
    run.add_argument("--problems", default="all",
                     help="comma-separated problem names, or 'all' "
                          f"(known: {', '.join(REGISTRY)})")
    run.add_argument("--tau", default="1e-1,1e-3,1e-5,1e-7",
                     help="comma-separated convergence tolerances")
    run.add_argument("--sigma", type=float, default=0.0,
                     help="relative Gaussian noise level on the objective")
    run.add_argument("--seeds", type=int, default=10,
                     help="noisy repetitions per run (ignored when sigma=0)")
    run.add_argument("--maxfev-mult", type=int, default=500,
                     help="evaluation budget as a multiple of the dimension")
    run.add_argument("--rhobeg", type=float, default=1.0)
    run.add_argument("--rhoend", type=float, default=1e-6)
    run.add_argument("--out", type=Path, required=True,
                     help="output directory for the CSV files")
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    problems = (list(REGISTRY) if args.problems == "all"
                else args.problems.split(","))
    cfg = SuiteConfig(
        solvers=args.solvers.split(","),
        problems=problems,
        taus=[float(t) for t in args.tau.split(",")],
        sigma=args.sigma,
        seeds=args.seeds,
        maxfev_mult=args.maxfev_mult,
        rhobeg=args.rhobeg,
        rhoend=args.rhoend,
    )
    try:
        records = run_suite(cfg)
    except KeyError as exc:
        print(f"bench: {exc.args[0]}", file=sys.stderr)
        return 2
    paths = write_outputs(records, cfg, args.out)
    solved = sum(1 for rec in records
                 if math.isfinite(rec.t.get(cfg.taus[-1], math.inf)))
    print(f"{len(records)} runs; {solved} converged at tau={cfg.taus[-1]:g}; "
          f"wrote {len(paths)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
