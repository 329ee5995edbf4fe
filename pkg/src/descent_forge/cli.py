"""Command-line harness: ``run``, ``compare`` and ``check-grad``.

A run config is a JSON object::

    {"problem": {"kind": "ls", "data": "train.csv", "seed": 0, "params": {...}},
     "solver": {"name": "first_order.gradient_descent", "params": {...}},
     "stop": {"grad_tol": 1e-6, "max_iters": 1000},
     "seed": 0, "x0": null, "output": "trace.jsonl"}

``data`` paths are resolved relative to the config file. A problem may
instead name a factory ``"factory": "module:function"`` returning a
:class:`Problem`. ``DESCENTFORGE_SEED`` overrides ``seed``.
"""

from __future__ import annotations

import argparse
import csv
import importlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import distributed, first_order, linsolve, newton_barrier, nonsmooth, proximal, quasi_newton, scp, stochastic
from .core import CapabilityError, DescentForgeError, Oracle, ParameterError, Problem, Report, StopRule, check_gradient
from .linesearch import StepRule
from .problems import KINDS, DataError, make_problem

EXIT_OK, EXIT_CHECK_FAILED, EXIT_MAX_ITERS, EXIT_FAILED = 0, 1, 2, 3
EXIT_UNKNOWN, EXIT_CONFIG, EXIT_NO_INPUT = 64, 65, 66
GRAD_CHECK_TOL = 1e-5
SEED_ENV = "DESCENTFORGE_SEED"


class UnknownNameError(DescentForgeError):
    pass


# -- solver registry ----------------------------------------------------------

def _step(p: dict, default: StepRule = StepRule()) -> StepRule:
    return StepRule(**p["step"]) if "step" in p else default


def _schedule(p: dict) -> stochastic.Schedule:
    return stochastic.Schedule(**p.get("schedule", {}))


def _stoch_config(p: dict, stop: StopRule, seed: int) -> stochastic.StochConfig:
    keys = ("gamma", "gamma1", "gamma2", "eps", "svrg_m", "elementwise_v", "gnorm_source")
    return stochastic.StochConfig(schedule=_schedule(p), stop=stop, seed=seed,
                                  **{k: p[k] for k in keys if k in p})


def _lasso_data(problem: Problem):
    if problem.data is None or problem.reg is None or problem.reg.kind != "l1":
        raise CapabilityError("solver needs a lasso problem")
    return problem.data.A, problem.data.labels, problem.reg.lam


def _consensus_terms(problem: Problem):
    if problem.name != "consensus_average":
        raise CapabilityError("consensus ADMM needs the consensus_average problem")

    def term(c):
        return Oracle(value=lambda x: 0.5 * float((x[0] - c) ** 2), gradient=lambda x: np.array([x[0] - c]),
                      prox=lambda t, v: (np.asarray(v, dtype=float) + t * c) / (1 + t))

    return [term(float(c)) for c in problem.data]


def _scp(problem, p, stop, seed, x0):
    cfg = scp.ScpConfig(stop=stop, **{k: p[k] for k in ("alpha", "beta", "gamma", "lambda_pen", "mode") if k in p})
    x = np.zeros(problem.d) if x0 is None else x0
    return scp.scp_solve(problem, cfg, scp.TrustRegion.box(x, float(p.get("radius", 0.5))), x0=x)


@dataclass(frozen=True)
class SolverEntry:
    fn: Callable[..., Report]
    stochastic: bool = False


SOLVERS: dict[str, SolverEntry] = {
    "first_order.gradient_descent": SolverEntry(lambda pr, p, stop, seed, x0: first_order.gradient_descent(
        pr, first_order.GDConfig(_step(p), float(p.get("momentum_alpha", 0.0)), stop), x0)),
    "first_order.agm": SolverEntry(lambda pr, p, stop, seed, x0: first_order.agm(
        pr, first_order.AGMConfig(p.get("gamma_seq", "nesterov"), _step(p), stop), x0)),
    "stochastic.sgd": SolverEntry(lambda pr, p, stop, seed, x0: stochastic.sgd(
        pr, _stoch_config(p, stop, seed), x0), True),
    "stochastic.minibatch_sgd": SolverEntry(lambda pr, p, stop, seed, x0: stochastic.minibatch_sgd(
        pr, _stoch_config(p, stop, seed),
        stochastic.BatchPlan(pr.oracle.term_count, int(p.get("batch_size", 10)),
                             p.get("mode", "without_replacement"), seed), x0), True),
    "stochastic.sag": SolverEntry(lambda pr, p, stop, seed, x0: stochastic.sag(
        pr, _stoch_config(p, stop, seed), x0), True),
    "stochastic.svrg": SolverEntry(lambda pr, p, stop, seed, x0: stochastic.svrg(
        pr, _stoch_config(p, stop, seed), x0), True),
    "stochastic.adaptive_sgd": SolverEntry(lambda pr, p, stop, seed, x0: stochastic.adaptive_sgd(
        pr, _stoch_config(p, stop, seed), p.get("variant", "adam"), x0), True),
    "proximal.proximal_gradient": SolverEntry(lambda pr, p, stop, seed, x0: proximal.proximal_gradient(
        pr, None, x0, proximal.ProxGradConfig(_step(p), float(p.get("gamma", 1.0)), stop,
                                              bool(p.get("warm_start", False))))),
    "nonsmooth.subgradient_method": SolverEntry(lambda pr, p, stop, seed, x0: nonsmooth.subgradient_method(
        pr, p.get("mode", "full"), None,
        nonsmooth.SubgradConfig(_schedule(p), stop, seed, int(p.get("batch_size", 1))), x0), True),
    "nonsmooth.lasso_cd": SolverEntry(lambda pr, p, stop, seed, x0: nonsmooth.lasso_cd(
        *_lasso_data(pr), stop, x0)),
    "newton_barrier.newton_unconstrained": SolverEntry(lambda pr, p, stop, seed, x0:
                                                       newton_barrier.newton_unconstrained(
                                                           pr, _step(p, StepRule.fixed(1.0)), stop, x0)),
    "newton_barrier.newton_equality": SolverEntry(lambda pr, p, stop, seed, x0: newton_barrier.newton_equality(
        pr, x0, stop, bool(p.get("infeasible_start", False)), _step(p, StepRule.fixed(1.0)))),
    "newton_barrier.interior_point": SolverEntry(lambda pr, p, stop, seed, x0: newton_barrier.interior_point(
        pr, newton_barrier.BarrierConfig(**{k: p[k] for k in ("t0", "mu_factor", "eps_gap", "max_stages")
                                            if k in p}), x0)),
    "linsolve.nonlinear_cg": SolverEntry(lambda pr, p, stop, seed, x0: linsolve.nonlinear_cg(
        pr.oracle, np.zeros(pr.d) if x0 is None else x0, p.get("beta", "pr"), stop)),
    "quasi_newton.qn_solve": SolverEntry(lambda pr, p, stop, seed, x0: quasi_newton.qn_solve(
        pr, p.get("variant", "bfgs"), x0, stop, p.get("track", "inverse"))),
    "quasi_newton.lbfgs": SolverEntry(lambda pr, p, stop, seed, x0: quasi_newton.lbfgs_solve(
        pr, int(p.get("m", 10)), x0, stop)),
    "distributed.admm_lasso": SolverEntry(lambda pr, p, stop, seed, x0: distributed.admm_lasso(
        *_lasso_data(pr), float(p.get("rho", 1.0)), stop, x0)),
    "distributed.consensus_admm": SolverEntry(lambda pr, p, stop, seed, x0: distributed.consensus_admm(
        _consensus_terms(pr), pr.d, float(p.get("rho", 1.0)), stop, x0)),
    "distributed.method_of_multipliers": SolverEntry(lambda pr, p, stop, seed, x0:
                                                     distributed.method_of_multipliers(
                                                         pr, float(p.get("rho", 1.0)), "exact", stop, x0)),
    "distributed.dual_ascent": SolverEntry(lambda pr, p, stop, seed, x0: distributed.dual_ascent(
        pr, float(p.get("eta", 0.5)), "exact", stop, x0)),
    "scp.scp_solve": SolverEntry(_scp),
}
ALIASES = {"gd": "first_order.gradient_descent", "agm": "first_order.agm", "sgd": "stochastic.sgd",
           "prox_grad": "proximal.proximal_gradient", "cd": "nonsmooth.lasso_cd", "admm": "distributed.admm_lasso",
           "newton": "newton_barrier.newton_unconstrained", "ipm": "newton_barrier.interior_point",
           "bfgs": "quasi_newton.qn_solve", "lbfgs": "quasi_newton.lbfgs", "ncg": "linsolve.nonlinear_cg",
           "scp": "scp.scp_solve"}


# -- config -------------------------------------------------------------------

@dataclass
class RunConfig:
    problem: dict
    solver: str
    solver_params: dict = field(default_factory=dict)
    stop: StopRule = field(default_factory=StopRule)
    seed: Optional[int] = None
    x0: Optional[list] = None
    output: Optional[str] = None
    base_dir: str = "."
    label: Optional[str] = None

    @property
    def entry(self) -> SolverEntry:
        return SOLVERS[self.solver]


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParameterError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ParameterError(f"{path} must hold a JSON object")
    return obj


def _stop_rule(d: dict) -> StopRule:
    d = dict(d)
    if d.get("max_iters") in (None, "inf"):
        d["max_iters"] = math.inf
    return StopRule(**d)


def load_config(path: str, env: Optional[dict] = None) -> RunConfig:
    """Parse and validate a run config; unknown names raise
    :class:`UnknownNameError`."""
    env = os.environ if env is None else env
    raw = _read_json(path)
    try:
        problem = dict(raw["problem"])
        solver = raw["solver"]
    except (KeyError, TypeError):
        raise ParameterError(f"{path} needs 'problem' and 'solver' objects") from None
    if isinstance(solver, str):
        solver = {"name": solver}
    name = ALIASES.get(solver.get("name"), solver.get("name"))
    if name not in SOLVERS:
        raise UnknownNameError(f"unknown solver {solver.get('name')!r}")
    if "factory" not in problem and problem.get("kind") not in KINDS:
        raise UnknownNameError(f"unknown problem {problem.get('kind')!r}")
    seed = raw.get("seed")
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ParameterError(f"{SEED_ENV} must be an integer") from None
    if SOLVERS[name].stochastic and seed is None:
        raise ParameterError(f"solver {name} is stochastic and needs a seed")
    try:
        stop = _stop_rule(raw.get("stop", {}))
    except TypeError as e:
        raise ParameterError(f"bad stop rule: {e}") from None
    return RunConfig(problem, name, dict(solver.get("params", {})), stop, None if seed is None else int(seed),
                     raw.get("x0"), raw.get("output"), os.path.dirname(os.path.abspath(path)), raw.get("name"))


def problem_key(cfg: RunConfig) -> str:
    """Canonical identity of the configured problem (for ``compare``)."""
    spec = dict(cfg.problem)
    spec.setdefault("seed", cfg.seed if cfg.seed is not None else 0)
    if isinstance(spec.get("data"), str):
        spec["data"] = os.path.normpath(os.path.join(cfg.base_dir, spec["data"]))
    return json.dumps(spec, sort_keys=True)


def build_problem(spec: dict, base_dir: str = ".", seed: Optional[int] = None) -> Problem:
    spec = dict(spec)
    pseed = int(spec.get("seed", 0 if seed is None else seed))
    params = dict(spec.get("params", {}))
    if "factory" in spec:
        mod, _, attr = spec["factory"].partition(":")
        try:
            fn = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError):
            raise UnknownNameError(f"cannot import problem factory {spec['factory']!r}") from None
        return fn(seed=pseed, **params)
    data = spec.get("data")
    if isinstance(data, str):
        data = os.path.join(base_dir, data)
    elif isinstance(data, dict):
        data = (np.asarray(data["A"], dtype=float), np.asarray(data["labels"], dtype=float))
    return make_problem(spec["kind"], data, seed=pseed, **params)


# -- running ------------------------------------------------------------------

def exit_code(status: str) -> int:
    return {"converged": EXIT_OK, "max_iters": EXIT_MAX_ITERS}.get(status, EXIT_FAILED)


@dataclass
class RunResult:
    config: RunConfig
    problem: Problem
    report: Report
    wall_ms: float


def execute(cfg: RunConfig) -> RunResult:
    problem = build_problem(cfg.problem, cfg.base_dir, cfg.seed)
    x0 = None if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    t0 = time.perf_counter()
    rep = cfg.entry.fn(problem, cfg.solver_params, cfg.stop, 0 if cfg.seed is None else cfg.seed, x0)
    return RunResult(cfg, problem, rep, 1000 * (time.perf_counter() - t0))


def trace_lines(res: RunResult, deterministic: bool) -> list[str]:
    lines = [json.dumps(r.to_json(timing=not deterministic), sort_keys=True) for r in res.report.trace]
    summary = res.report.summary()
    summary.update(solver=res.config.solver, problem=res.problem.name, seed=res.config.seed,
                   wall_ms=0.0 if deterministic else res.wall_ms)
    if res.problem.f_star is not None:
        summary["gap"] = _gap(res)
    lines.append(json.dumps(summary, sort_keys=True))
    return lines


def _gap(res: RunResult) -> float:
    return float(_final_objective(res) - res.problem.f_star)


def _final_objective(res: RunResult) -> float:
    p, x = res.problem, np.asarray(res.report.x, dtype=float)
    if x.shape == (p.d,):
        return float(p.total_value(x))
    return float(res.report.f)


def write_trace(path: str, lines: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fail(msg: str, code: int) -> int:
    print(f"descent-forge: {msg}", file=sys.stderr)
    return code


def _guard(fn: Callable[[], int]) -> int:
    """Map library errors to exit codes."""
    try:
        return fn()
    except UnknownNameError as e:
        return _fail(str(e), EXIT_UNKNOWN)
    except DataError as e:
        return _fail(str(e), EXIT_NO_INPUT)
    except CapabilityError as e:
        return _fail(f"capability error: {e}", EXIT_CONFIG)
    except (ParameterError, KeyError, TypeError) as e:
        return _fail(f"invalid config: {e}", EXIT_CONFIG)


def cmd_run(args) -> int:
    def go():
        cfg = load_config(args.config)
        res = execute(cfg)
        out = args.trace or cfg.output
        lines = trace_lines(res, args.deterministic)
        if out:
            write_trace(out if os.path.isabs(out) or args.trace else os.path.join(cfg.base_dir, out), lines)
        print(lines[-1])
        return exit_code(res.report.status)

    return _guard(go)


METRICS = ("final_f", "iters_to_tol", "wall_ms")


def iters_to_tol(res: RunResult, tol: float) -> Optional[int]:
    """First iteration with ``f - f* <= tol`` (``gnorm <= tol`` when the
    optimum is unknown); ``None`` if never reached."""
    fs = res.problem.f_star
    for r in res.report.trace:
        if fs is not None:
            if r.f - fs <= tol:
                return r.k
        elif r.gnorm is not None and r.gnorm <= tol:
            return r.k
    return None


def compare_rows(results: list[RunResult], metric: str, tol: float) -> tuple[list[str], list[list]]:
    with_gap = all(r.problem.f_star is not None for r in results)
    header = ["solver", metric] + (["gap"] if with_gap else []) + ["status"]
    rows = []
    for r in results:
        if metric == "final_f":
            val = repr(_final_objective(r))
        elif metric == "iters_to_tol":
            n = iters_to_tol(r, tol)
            val = "" if n is None else str(n)
        else:
            val = f"{r.wall_ms:.3f}"
        row = [r.config.label or r.config.solver, val]
        if with_gap:
            row.append(repr(_gap(r)))
        rows.append(row + [r.report.status])
    return header, rows


def cmd_compare(args) -> int:
    def go():
        if len(args.configs) < 2:
            return _fail("compare needs at least two configs", EXIT_CONFIG)
        cfgs = [load_config(c) for c in args.configs]
        keys = {problem_key(c) for c in cfgs}
        if len(keys) != 1:
            return _fail("configs describe different problems", EXIT_CONFIG)
        jobs = max(1, args.jobs)
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                results = list(pool.map(execute, cfgs))
        else:
            results = [execute(c) for c in cfgs]
        header, rows = compare_rows(results, args.metric, args.tol)
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return EXIT_OK

    return _guard(go)


def check_grad_report(problem: Problem, points: int = 3, seed: int = 0) -> list[float]:
    rng = stochastic.make_rng(seed, 7)
    return [float(check_gradient(problem.oracle, rng.standard_normal(problem.d))) for _ in range(points)]


def cmd_check_grad(args) -> int:
    def go():
        raw = _read_json(args.problem)
        spec = raw.get("problem", raw)
        if "factory" not in spec and spec.get("kind") not in KINDS:
            raise UnknownNameError(f"unknown problem {spec.get('kind')!r}")
        base = os.path.dirname(os.path.abspath(args.problem))
        problem = build_problem(spec, base, raw.get("seed"))
        errs = check_grad_report(problem, args.points, args.seed)
        worst = float(max(errs))
        print(json.dumps({"problem": problem.name, "max_rel_error": worst, "errors": errs,
                          "tol": GRAD_CHECK_TOL, "ok": bool(worst <= GRAD_CHECK_TOL)}))
        return EXIT_OK if worst <= GRAD_CHECK_TOL else EXIT_CHECK_FAILED

    return _guard(go)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="descent-forge", description="Run and compare descent-forge solvers.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one config and write a JSONL trace")
    r.add_argument("config")
    r.add_argument("--trace", help="trace output path (overrides the config)")
    r.add_argument("--deterministic", action="store_true", help="write t_ms and wall_ms as 0")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="compare configs over one problem (CSV to stdout)")
    c.add_argument("configs", nargs="+")
    c.add_argument("--metric", choices=METRICS, default="final_f")
    c.add_argument("--tol", type=float, default=1e-6, help="tolerance for iters_to_tol")
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_compare)
    g = sub.add_parser("check-grad", help="finite-difference gradient check")
    g.add_argument("problem")
    g.add_argument("--points", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_check_grad)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
