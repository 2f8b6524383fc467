"""Command-line front end.

Exit codes: 0 success, 1 malformed or empty configuration, 2 contract or
precondition violation, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .blockenc import be_from_matrix
from .classical import ClassicalEsscherProblem, solve_lambda, verify_duality
from .errors import ContractError, NonConvergenceError, QEsscherError, RangeError
from .instances import generate_instance
from .io import (
    RunConfig,
    RunReport,
    decode_access,
    decode_density,
    decode_matrix,
    decode_real_vector,
    encode_problem,
    load_schema,
)
from .quantum import QuantumEsscherProblem, solve, wirtinger_stationarity_check
from .quest import QuestInput, cost_report, extract_normalized_state, q_esscher_blockencoding

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT, EXIT_NONCONVERGENCE = 0, 1, 2, 3

DEFAULTS = {
    "epsilon": 1e-3,
    "tol": 1e-9,
    "seed": 0,
    "method": "auto",
    "max_iter": 10_000,
    "rank_tol": 1e-10,
    "wirtinger_h": 1e-5,
    "observable_error": 0.0,
    "strict_guard": False,
    "sweep_epsilons": [1e-2, 1e-3, 1e-4],
    "sweep_kappas": [2.0, 4.0, 8.0, 16.0],
}

SUBCOMMAND_MODE = {
    "classical": "classical",
    "qesscher": "quantum-exact",
    "quest": "quest",
    "extract": "extract",
    "sweep": "sweep",
}

QUEST_FAMILY = ("quest", "extract", "sweep")

GEN_MODE = {"classical": "classical", "quantum": "quantum-exact", "quest": "quest"}


class ConfigError(Exception):
    """Malformed configuration; ``lines`` are printed one per row."""

    def __init__(self, lines: Sequence[str]):
        super().__init__("\n".join(lines))
        self.lines = list(lines)


def _field(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def validate_config(data, source: str = "<config>") -> None:
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        lines = [f"{source}: field {_field(best.absolute_path)}: {best.message}"]
        for e in errors:
            if e is not best:
                lines.append(f"{source}: field {_field(e.absolute_path)}: {e.message}")
        raise ConfigError(lines)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    if not text.strip():
        raise ConfigError([f"{source}: empty configuration"])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"{source}:{e.lineno}:{e.colno}: {e.msg}"])
    if not isinstance(data, dict) or not data:
        raise ConfigError([f"{source}: configuration must be a non-empty JSON object"])
    validate_config(data, source)
    return RunConfig.from_dict(data)


def _expand(problem: dict, seed: int) -> dict:
    if "generate" not in problem:
        return problem
    g = dict(problem["generate"])
    kind = g.pop("kind")
    s = int(g.pop("seed", seed))
    return encode_problem(generate_instance(kind, s, **g))


@dataclass
class Prepared:
    config: RunConfig
    problem: dict
    data: dict


def prepare(config: RunConfig) -> Prepared:
    """Decode the JSON problem into arrays; decoding failures are config errors."""
    problem = _expand(config.problem, config.seed)
    p = problem
    try:
        if config.mode == "classical":
            data = {"P": decode_real_vector(p["P"]), "X": np.asarray(p["X"], dtype=float),
                    "m": decode_real_vector(p["m"])}
        elif config.mode == "quantum-exact":
            data = {"rho": decode_density(p["rho"]), "H": [decode_matrix(H) for H in p["H"]],
                    "m": decode_real_vector(p["m"])}
        else:
            data = {"access": decode_access(p["rho"]), "H": [decode_matrix(H) for H in p["H"]],
                    "theta": decode_real_vector(p["theta"]), "kappa": float(p["kappa"])}
    except KeyError as e:
        raise ConfigError([f"field problem/{e.args[0]}: required for mode {config.mode}"])
    except (ContractError, ValueError) as e:
        raise ConfigError([f"field problem: {e}"])
    return Prepared(config, problem, data)


def _resolved(config: RunConfig) -> dict:
    out = config.to_dict()
    out.setdefault("epsilon", DEFAULTS["epsilon"])
    out.setdefault("tol", DEFAULTS["tol"])
    out.setdefault("seed", DEFAULTS["seed"])
    return out


def _opt(config: RunConfig, problem: dict, key: str):
    if key in config.options:
        return config.options[key]
    if key in problem:
        return problem[key]
    return DEFAULTS[key]


def _run_classical(prep: Prepared, tol: float):
    d = prep.data
    prob = ClassicalEsscherProblem(d["P"], d["X"], d["m"])
    sol = solve_lambda(prob, tol=tol, max_iter=_opt(prep.config, prep.problem, "max_iter"),
                       method=_opt(prep.config, prep.problem, "method"))
    gap, res = verify_duality(sol, prob)
    return {
        "lambda_star": sol.lambda_star,
        "Q_star": sol.Q_star.weights,
        "dual_value": sol.dual_value,
        "primal_value": sol.primal_value,
        "duality_gap": gap,
        "residuals": res,
        "gradient_norm": sol.gradient_norm,
        "iterations": sol.iterations,
        "dropped_atoms": sol.diagnostics["dropped_atoms"],
    }, [], None


def _run_quantum(prep: Prepared, tol: float):
    d = prep.data
    prob = QuantumEsscherProblem(d["rho"], d["H"], d["m"])
    rank_tol = _opt(prep.config, prep.problem, "rank_tol")
    sol = solve(prob, tol=tol, max_iter=_opt(prep.config, prep.problem, "max_iter"),
                method=_opt(prep.config, prep.problem, "method"), rank_tol=rank_tol)
    stat = wirtinger_stationarity_check(sol, prob, h=_opt(prep.config, prep.problem, "wirtinger_h"),
                                        rank_tol=rank_tol)
    return {
        "lambda_star": sol.lambda_star,
        "sigma_star": sol.sigma_star.matrix,
        "dual_value": sol.dual_value,
        "primal_value": sol.primal_value,
        "duality_gap": sol.primal_value - sol.dual_value,
        "residuals": sol.residuals,
        "gradient_norm": sol.gradient_norm,
        "kernel_norm": sol.kernel_norm,
        "support_rank": sol.support_rank,
        "stationarity_residual": stat,
        "iterations": sol.iterations,
    }, [], None


def _quest_input(prep: Prepared, eps: float, kappa: Optional[float] = None) -> QuestInput:
    d = prep.data
    err = float(_opt(prep.config, prep.problem, "observable_error"))
    rng = np.random.default_rng(prep.config.seed)
    obs = [be_from_matrix(H, alpha=1.0, error=err, rng=rng) for H in d["H"]]
    return QuestInput(d["access"], d["kappa"] if kappa is None else kappa, obs, d["theta"], eps,
                      strict_guard=bool(_opt(prep.config, prep.problem, "strict_guard")))


def _run_quest(prep: Prepared, eps: float):
    out = q_esscher_blockencoding(_quest_input(prep, eps))
    be = out.be_sigma
    return {
        "measured_error": out.measured_error,
        "claimed_error": be.eps,
        "epsilon": eps,
        "within_epsilon": bool(out.measured_error <= eps),
        "alpha": be.alpha,
        "ancillas": be.ancillas,
        "system_qubits": be.system_qubits,
        "subnormalization": out.subnormalization,
        "beta": out.beta,
        "b": out.b,
        "eps_be": out.eps_be,
        "budget_closed": out.budget_closed,
        "guard_satisfied": out.guard_satisfied,
        "all_stages_ok": out.all_stages_ok,
        "notes": list(out.notes),
    }, [s.as_dict() for s in out.stages], out.cost.as_dict()


def _run_extract(prep: Prepared, eps: float):
    inp = _quest_input(prep, eps)
    r = extract_normalized_state(inp, eps)
    return {
        "state": r.state.matrix,
        "reference": r.reference.matrix,
        "success_probability": r.success_probability,
        "expected_probability": r.expected_probability,
        "trace_distance": r.trace_dist,
        "within_epsilon": bool(r.trace_dist <= eps),
        "aa_iterations_formula": r.aa_iterations_formula,
        "eps_internal": r.eps_internal,
        "claimed_block_error": r.claimed_block_error,
        "block_measured_error": r.block_measured_error,
        "budget_closed": r.budget_closed,
    }, [s.as_dict() for s in r.stages], cost_report(inp).as_dict()


def _run_sweep(prep: Prepared, jobs: int = 1):
    p, cfg = prep.problem, prep.config
    epsilons = [float(e) for e in p.get("epsilons", DEFAULTS["sweep_epsilons"])]
    kappas = [float(k) for k in p.get("kappas", DEFAULTS["sweep_kappas"])]
    lam_min = float(np.linalg.eigvalsh(prep.data["access"].density())[0])
    grid = [(k, e) for k in kappas for e in epsilons]

    def row(ke):
        k, e = ke
        c = cost_report(_quest_input(prep, e, kappa=k))
        return {"kappa": k, "epsilon": e, "kappa_covers_rho": bool(lam_min >= 1 / k - 1e-9), **c.as_dict()}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        rows = list(ex.map(row, grid))
    return {"rows": rows, "epsilons": epsilons, "kappas": kappas}, [], None


def run(config: RunConfig, jobs: int = 1) -> RunReport:
    """Execute one configuration and return its report."""
    t0 = time.perf_counter()
    prep = prepare(config)
    resolved = _resolved(config)
    eps, tol = float(resolved["epsilon"]), float(resolved["tol"])
    mode = config.mode
    if mode == "classical":
        sol, audit, cost = _run_classical(prep, tol)
    elif mode == "quantum-exact":
        sol, audit, cost = _run_quantum(prep, tol)
    elif mode == "quest":
        sol, audit, cost = _run_quest(prep, eps)
    elif mode == "extract":
        sol, audit, cost = _run_extract(prep, eps)
    elif mode == "sweep":
        sol, audit, cost = _run_sweep(prep, jobs)
    else:
        raise ConfigError([f"field mode: unknown mode {mode!r}"])
    resolved["problem"] = prep.problem
    wall = (time.perf_counter() - t0) * 1e3
    return RunReport(mode, resolved, dict(DEFAULTS), sol, audit, cost, wall, __version__, int(resolved["seed"]))


def _default_problem(mode: str, seed: int) -> dict:
    kind = {"classical": "classical", "quantum-exact": "quantum"}.get(mode, "quest")
    return {"generate": {"kind": kind, "seed": seed}}


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.3e}"


def _summary(report: RunReport) -> list:
    s = report.solution
    lines = [f"mode: {report.mode}"]
    for key in ("lambda_star", "duality_gap", "measured_error", "claimed_error", "trace_distance",
                "success_probability", "stationarity_residual"):
        if key in s:
            lines.append(f"{key}: {s[key]}")
    for row in report.audit:
        flag = "ok" if row["within_claim"] and row["matches_formula"] else "FAIL"
        lines.append(f"  {row['stage']:<22s} alpha={row['alpha']:<10.5g} a={row['ancillas']:<3d} "
                     f"claimed={row['claimed_error']:.3e} measured={_fmt(row['measured_error'])} {flag}")
    return lines


def _emit(report: RunReport, out: Optional[str]) -> None:
    text = report.to_json()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print("\n".join(_summary(report)))
        print(f"report written to {out}")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qesscher",
        description="Esscher transform solvers and the block-encoded Esscher construction.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("config", nargs="?", default=None,
                           help="JSON RunConfig ('-' for stdin); omitted: a seeded random instance")
        p.add_argument("--epsilon", type=float, default=None,
                       help=f"target output error (default {DEFAULTS['epsilon']})")
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULTS['seed']})")
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
        p.add_argument("--tol", type=float, default=None, help=f"solver tolerance (default {DEFAULTS['tol']})")

    helps = {
        "classical": "solve the classical minimum relative entropy problem",
        "qesscher": "solve the quantum problem exactly (mode quantum-exact)",
        "quest": "build the block-encoded Esscher state and audit every stage",
        "extract": "extract the normalised Esscher state by post-selection",
        "sweep": "cost reports over a grid of epsilon and kappa",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        common(p)
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p = sub.add_parser("run", help="run a config, dispatching on its mode")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")

    g = sub.add_parser("gen", help="emit a seeded random RunConfig")
    g.add_argument("kind", choices=sorted(GEN_MODE))
    common(g, with_config=False)
    g.add_argument("--n", type=int, default=None, help="qubits (quantum, quest)")
    g.add_argument("--d", type=int, default=None, help="number of observables or moment dimension")
    g.add_argument("--omega", type=int, default=None, help="sample space size (classical)")
    g.add_argument("--kappa", type=float, default=None, help="condition number bound (quantum, quest)")
    g.add_argument("--rank", type=int, default=None, help="rank of rho (quantum)")
    return ap


def _gen(args) -> int:
    size = {k: getattr(args, k) for k in ("n", "d", "omega", "kappa", "rank") if getattr(args, k) is not None}
    seed = DEFAULTS["seed"] if args.seed is None else args.seed
    inst = generate_instance(args.kind, seed, **size)
    problem = encode_problem({k: v for k, v in inst.items() if k not in ("kind", "seed")})
    cfg = RunConfig(GEN_MODE[args.kind], problem, epsilon=args.epsilon, seed=seed, tol=args.tol)
    text = cfg.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _config_from_args(args) -> RunConfig:
    mode = SUBCOMMAND_MODE.get(args.command)
    if args.config is None:
        if mode is None:
            raise ConfigError(["run: a config file is required"])
        seed = DEFAULTS["seed"] if args.seed is None else args.seed
        cfg = RunConfig(mode, _default_problem(mode, seed), seed=seed)
    else:
        src = args.config
        try:
            text = _read(src)
        except OSError as e:
            raise ConfigError([f"{src}: cannot read: {e.strerror}"])
        cfg = parse_config_text(text, src)
        if mode is not None and cfg.mode != mode:
            if cfg.mode in QUEST_FAMILY and mode in QUEST_FAMILY:
                cfg.mode = mode
            else:
                raise ConfigError([f"{src}: field mode: config is for {cfg.mode!r}, subcommand expects {mode!r}"])
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol is not None:
        cfg.tol = args.tol
    if args.out is not None:
        cfg.output_path = args.out
    validate_config(cfg.to_dict(), args.config or "<arguments>")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return _gen(args)
        cfg = _config_from_args(args)
        report = run(cfg, jobs=getattr(args, "jobs", 1))
        _emit(report, cfg.output_path)
        return EXIT_OK
    except ConfigError as e:
        for line in e.lines:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, RangeError) as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except QEsscherError as e:
        print(f"contract error: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
