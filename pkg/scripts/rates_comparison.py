"""GD vs AGM on random quadratics across condition numbers.

Writes one CSV row per (condition number, seed, solver) with the number of
iterations needed to reach f - f* <= tol, plus the final gap.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from descent_forge.core import Oracle, Problem, StopRule
from descent_forge.first_order import AGMConfig, GDConfig, agm, gradient_descent
from descent_forge.linesearch import StepRule
from descent_forge.linsolve import solve_linear, sym_eig
from descent_forge.problems import random_spd
from descent_forge.stochastic import make_rng


@dataclass
class RatesConfig:
    d: int = 30
    conds: list[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    seeds: int = 5
    tol: float = 1e-8
    max_iters: int = 20_000
    out: str = "-"


def quadratic(d: int, cond: float, seed: int) -> tuple[Problem, np.ndarray]:
    A = random_spd(d, cond, seed=seed)
    b = make_rng(seed, 1).standard_normal(d)
    xs = solve_linear(A, b)
    w = sym_eig(A)[0]
    o = Oracle(lambda x: 0.5 * float(x @ A @ x) - float(b @ x), lambda x: A @ x - b, lambda x: A)
    pr = Problem(o, d, L=float(w.max()), mu=float(w.min()), x_star=xs, f_star=o.value(xs))
    return pr, make_rng(seed, 2).standard_normal(d)


def iters_to_tol(rep, f_star: float, tol: float):
    return next((r.k for r in rep.trace if r.f - f_star <= tol), None)


def run(cfg: RatesConfig) -> list[dict]:
    rows = []
    stop = StopRule(grad_tol=1e-10, max_iters=cfg.max_iters)
    for cond in cfg.conds:
        for seed in range(cfg.seeds):
            pr, x0 = quadratic(cfg.d, cond, seed)
            step = StepRule.fixed(1.0 / pr.L)
            reps = {"gd": gradient_descent(pr, GDConfig(step, stop=stop), x0),
                    "agm": agm(pr, AGMConfig(step_rule=step, stop=stop), x0)}
            for name, rep in reps.items():
                rows.append({"cond": cond, "seed": seed, "solver": name,
                             "iters_to_tol": iters_to_tol(rep, pr.f_star, cfg.tol),
                             "final_gap": rep.trace[-1].f - pr.f_star})
    return rows


def parse(argv=None) -> RatesConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    base = RatesConfig()
    for f in fields(RatesConfig):
        default = getattr(base, f.name)
        if isinstance(default, list):
            ap.add_argument(f"--{f.name}", type=float, nargs="+", default=default)
        else:
            ap.add_argument(f"--{f.name}", type=type(default), default=default)
    return RatesConfig(**vars(ap.parse_args(argv)))


def main(argv=None) -> None:
    cfg = parse(argv)
    rows = run(cfg)
    out = sys.stdout if cfg.out == "-" else open(cfg.out, "w", newline="")
    w = csv.DictWriter(out, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if out is not sys.stdout:
        out.close()
    print(f"# config {asdict(cfg)}", file=sys.stderr)


if __name__ == "__main__":
    main()
