"""Dykstra benchmark: random possibility vectors and predictions, swept over tolerances.

Instance ``k`` draws from substream ``k`` of ``SeedSequence(seed)``, so every
tolerance sees the same instances. ``pi`` is ``n`` iid Uniform(0, 1] values
divided by their maximum; ``q`` is Dirichlet(1, ..., 1).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from posskl.dykstra import kl_project
from posskl.feasible import build_feasible_set

BENCH_COLUMNS = ("tolerance", "convergence_rate", "mean_cycles", "p90_cycles",
                 "mean_final_violation", "mean_time_s")
PI_LAW = "iid Uniform(0,1] / max"
Q_LAW = "Dirichlet(1,...,1)"


@dataclass(frozen=True)
class BenchRow:
    tolerance: float
    convergence_rate: float
    mean_cycles: float
    p90_cycles: float
    mean_final_violation: float
    mean_time_s: float


def random_instance(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # 1 - U maps [0, 1) onto (0, 1]
    u = 1.0 - rng.random(n)
    pi = u / u.max()
    pi[np.argmax(u)] = 1.0
    q = rng.dirichlet(np.ones(n))
    return pi, q


def instances(n: int, runs: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    children = np.random.SeedSequence(seed).spawn(runs)
    return [random_instance(n, np.random.default_rng(c)) for c in children]


def run_benchmark(n: int = 100, tolerances=(1e-2, 1e-3, 1e-4), max_cycles: int = 1000,
                  runs: int = 100, seed: int = 0) -> list[BenchRow]:
    if n < 2 or runs < 1:
        raise ValueError("need n >= 2 and runs >= 1")
    cases = [(build_feasible_set(pi), q) for pi, q in instances(n, runs, seed)]
    rows = []
    for tol in tolerances:
        cyc, viol, conv, wall = [], [], [], []
        for fs, q in cases:
            rep = kl_project(q, fs, tol=tol, max_cycles=max_cycles)
            cyc.append(rep.cycles_used)
            viol.append(rep.final_violation)
            conv.append(rep.converged)
            wall.append(rep.wall_time)
        rows.append(BenchRow(float(tol), float(np.mean(conv)), float(np.mean(cyc)),
                             float(np.percentile(cyc, 90)), float(np.mean(viol)),
                             float(np.mean(wall))))
    return rows


def to_csv(rows: list[BenchRow], meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps({**meta, "pi_law": PI_LAW, "q_law": Q_LAW}, sort_keys=True) + "\n")
    buf.write(",".join(BENCH_COLUMNS) + "\n")
    for r in rows:
        # wall time is the only nondeterministic column
        buf.write(f"{r.tolerance:g},{r.convergence_rate:.3f},{r.mean_cycles:.2f},"
                  f"{r.p90_cycles:.1f},{r.mean_final_violation:.3e},{r.mean_time_s:.3e}\n")
    return buf.getvalue()
