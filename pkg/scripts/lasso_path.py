"""Lasso regularisation path solved three ways.

For each lambda on a log grid, runs coordinate descent, proximal gradient
and ADMM from cold starts and reports objective values, the spread between
them, support size and iteration counts.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from descent_forge.core import StopRule
from descent_forge.distributed import admm_lasso
from descent_forge.nonsmooth import lasso_cd, lasso_objective
from descent_forge.problems import lasso_problem
from descent_forge.proximal import ProxGradConfig, proximal_gradient
from descent_forge.stochastic import make_rng


@dataclass
class LassoPathConfig:
    n: int = 100
    d: int = 40
    k_true: int = 5
    noise: float = 0.1
    n_lam: int = 8
    seed: int = 0
    out: str = "-"


def make_data(cfg: LassoPathConfig):
    rng = make_rng(cfg.seed, 0)
    X = rng.standard_normal((cfg.n, cfg.d))
    beta = np.zeros(cfg.d)
    beta[: cfg.k_true] = rng.choice([-1.0, 1.0], cfg.k_true) * rng.uniform(1, 3, cfg.k_true)
    return X, X @ beta + cfg.noise * rng.standard_normal(cfg.n)


def run(cfg: LassoPathConfig) -> list[dict]:
    X, y = make_data(cfg)
    lam_max = float(np.max(np.abs(X.T @ y)))
    rows = []
    pg_cfg = ProxGradConfig(stop=StopRule(grad_tol=1e-10, max_iters=50_000))
    for lam in np.geomspace(lam_max, 1e-3 * lam_max, cfg.n_lam):
        reps = {"cd": lasso_cd(X, y, lam),
                "prox_grad": proximal_gradient(lasso_problem(X, y, lam), config=pg_cfg),
                "admm": admm_lasso(X, y, lam)}
        fs = {k: lasso_objective(X, y, lam, r.x) for k, r in reps.items()}
        spread = max(fs.values()) - min(fs.values())
        for k, r in reps.items():
            rows.append({"lam": lam, "solver": k, "objective": fs[k], "spread": spread,
                         "support": int(np.sum(np.abs(r.x) > 1e-8)), "iters": len(r.trace),
                         "status": r.status})
    return rows


def parse(argv=None) -> LassoPathConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    base = LassoPathConfig()
    for f in fields(LassoPathConfig):
        ap.add_argument(f"--{f.name}", type=type(getattr(base, f.name)), default=getattr(base, f.name))
    return LassoPathConfig(**vars(ap.parse_args(argv)))


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
