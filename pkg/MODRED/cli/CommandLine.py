"""
Command-line entry point.

Subcommands:
    primes, signopt, reduce, table1, table2, probe, security, soundness, selftest

Data goes to standard output (or ``--out``), logs to standard error. Exit codes: 0 success,
2 invalid input or usage, 1 internal error or a failed check.
"""

import argparse
import json
import logging
import math
import sys
from typing import Any, Callable, Dict, Sequence

import numpy as np
import pandas as pd

from MODRED.ALGO.ModuleReduction import CRT_MODES, SIGN_METHODS, SIZE_REDUCE_MODES, ReductionOptions, reduce_module
from MODRED.ALGO.SignOptimization import (
    SignProblem,
    branch_and_bound,
    local_search,
    lp_lower_bound,
    solve_exhaustive,
    tower_greedy,
)
from MODRED.base.Config import load_config
from MODRED.base.Cyclotomic import RingElement, RingParams, galois_embed
from MODRED.base.LogUnits import unit_log_basis
from MODRED.base.ModuleGS import basis_from_json, k_gram_schmidt, k_inner
from MODRED.base.SplitNTT import COMPAT_PRIME, SplitPrimeContext, find_split_primes, intt, ntt
from MODRED.base.utils import ModRedException, ObjectOperation
from MODRED.harness.Experiments import (
    ExperimentConfig,
    covering_probe,
    oracle_experiment,
    planted_experiment,
    sign_comparison_experiment,
    soundness_experiment,
    security_accounting,
    table1_experiment,
    table2_experiment,
)
from MODRED.harness.Sampling import cbd_basis, trial_rng

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"


class CommandFailed(Exception):
    """A subcommand ran but one of its checks did not pass."""


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", choices=("json", "csv"), default="json", help="Output format.")
    parser.add_argument("--out", default=None, help="Write the result to this file instead of standard output.")
    parser.add_argument("--config", default=None, help="Path of the ini configuration file.")
    parser.add_argument("--log-level", default=None, help="Logging level (overrides [logging] level).")
    parser.add_argument("--seed", type=int, default=None, help="Master seed.")
    parser.add_argument("--trials", type=int, default=None, help="Trials per parameter set.")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for independent runs.")
    parser.add_argument("--paper-compat", action="store_true", help="Published experiment parameters.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modred", description="Module lattice reduction over 2-power cyclotomic rings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("primes", help="Totally split primes p = 1 mod 2n with product at least a target.")
    p.add_argument("--n", type=int, required=True, help="Ring degree, a power of two.")
    p.add_argument("--target", type=int, default=None, help="Lower bound on P (default ceil(n/2)).")
    p.add_argument("--override", type=int, nargs="+", default=None, help="Explicit primes to validate.")

    p = sub.add_parser("signopt", help="Balanced sign selection for one k.")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--method", choices=("exhaustive", "greedy", "local", "bnb", "lp"), default="exhaustive")
    p.add_argument("--node-budget", type=int, default=None)
    p.add_argument("--lp-balance", choices=("disjunction", "interval"), default="disjunction")
    p.add_argument("--matrix-out", default=None, help="Also write the error matrix as CSV.")
    p.add_argument("--units-out", default=None, help="Also write the folded unit log basis as CSV.")

    p = sub.add_parser("reduce", help="Run the module reduction on a basis JSON file.")
    p.add_argument("--input", required=True, help="Basis document {k, d, vectors}.")
    p.add_argument("--signs", choices=SIGN_METHODS, default=None)
    p.add_argument("--size-reduce", choices=SIZE_REDUCE_MODES, default=None)
    p.add_argument("--crt-mode", choices=CRT_MODES, default=None)

    p = sub.add_parser("table1", help="Balance constants of CBD bases.")
    p.add_argument("--k", type=int, nargs="+", default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--eta", type=int, default=None)

    p = sub.add_parser("table2", help="Balanced discrepancy by solver.")
    p.add_argument("--k", type=int, nargs="+", default=None)
    p.add_argument("--node-budget", type=int, default=None)
    p.add_argument("--no-timing", action="store_true", help="Omit the wall-clock column.")

    p = sub.add_parser("probe", help="Covering-radius probe on the worst-case target.")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=("coordinate", "randomized", "exhaustive"), default="coordinate")
    p.add_argument("--retries", type=int, default=None)

    p = sub.add_parser("security", help="Hermite-factor accounting for an MLWE instance.")
    p.add_argument("--C", type=float, default=1.08)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--log2-gamma", type=float, default=128.0)
    p.add_argument("--q", type=int, default=3329)
    p.add_argument("--eta", type=int, default=2)

    p = sub.add_parser("soundness", help="Seeded pipeline runs with their checks.")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eta", type=int, default=None)
    p.add_argument("--kind", choices=("cbd", "planted", "oracle", "signs"), default="cbd")

    sub.add_parser("selftest", help="Exactness checks on a small instance.")

    for subparser in sub.choices.values():
        _add_common(subparser)
    return parser


def _emit(payload: Any, args: argparse.Namespace) -> None:
    """Serialize a dict or DataFrame in the requested format to --out or standard output."""
    if isinstance(payload, dict) and args.output == "csv":
        payload = pd.json_normalize(payload)
    if args.out:
        if isinstance(payload, pd.DataFrame) and args.output == "csv":
            ObjectOperation.save_csv(payload, args.out)
        elif isinstance(payload, pd.DataFrame):
            ObjectOperation.save_json(payload.to_dict("records"), args.out)
        else:
            ObjectOperation.save_json(payload, args.out)
        logger.info(f"Wrote {args.command} output to {args.out}")
        return
    if isinstance(payload, pd.DataFrame):
        text = payload.to_csv(index=False) if args.output == "csv" else json.dumps(payload.to_dict("records"), indent=2)
    else:
        text = json.dumps(payload, indent=2)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _experiment_config(args: argparse.Namespace, config: dict, k_key: str) -> ExperimentConfig:
    return ExperimentConfig(
        k_values=tuple(args.k or config[k_key]),
        d=getattr(args, "d", None) or config["harness.d"],
        eta=getattr(args, "eta", None) or config["harness.eta"],
        trials=args.trials or config["harness.trials"],
        seed=config["harness.seed"] if args.seed is None else args.seed,
        out=args.out,
        paper_compat=args.paper_compat,
        jobs=args.jobs,
        timing=not getattr(args, "no_timing", False),
    )


def cmd_primes(args: argparse.Namespace, config: dict) -> dict:
    target = args.target if args.target is not None else max(1, math.ceil(args.n / 2))
    override = args.override
    if args.paper_compat and override is None:
        override = [config["splitntt.paper_compat_prime"]]
    basis = find_split_primes(args.n, target, override)
    searched = basis if override is None else find_split_primes(args.n, target)
    compat_prime = config["splitntt.paper_compat_prime"]
    compat = None
    if (compat_prime - 1) % (2 * args.n) == 0:
        compat = find_split_primes(args.n, target, [compat_prime]).to_dict()
    return {"n": args.n, "target": target, **basis.to_dict(), "searched": searched.to_dict(), "compat": compat}


def cmd_signopt(args: argparse.Namespace, config: dict) -> dict:
    prob = SignProblem.for_k(args.k, config["logunits.column_offset"])
    if args.matrix_out:
        prob.matrix.to_csv(args.matrix_out)
    if args.units_out:
        unit_log_basis(args.k, config["cyclotomic.precision_bits"]).to_csv(args.units_out)
    seed = 0 if args.seed is None else args.seed
    budget = args.node_budget or config["signopt.bnb_node_budget"]
    if args.method == "lp":
        bound = lp_lower_bound(prob, args.lp_balance)
        return {
            "k": args.k, "N_s": prob.N_s, "method": "lp", "status": "bound-only", "discrepancy": None,
            "lower_bound": bound, "s": None, "nodes": 0, "wall_time_ms": None,
        }
    if args.method == "exhaustive":
        solution = solve_exhaustive(prob, config["signopt.exhaustive_limit"])
    elif args.method == "greedy":
        solution = tower_greedy(prob, config["signopt.greedy_level_enum_limit"])
    elif args.method == "local":
        solution = local_search(
            prob,
            seed,
            config["signopt.local_search_schedule"],
            config["signopt.local_search_restarts"],
            config["signopt.local_search_max_iter"],
        )
    else:
        solution = branch_and_bound(prob, budget, seed, config["signopt.optimality_tol"])
    return solution.to_dict()


def cmd_reduce(args: argparse.Namespace, config: dict) -> Any:
    basis = basis_from_json(ObjectOperation.load_json(args.input))
    options = ReductionOptions.from_config(
        config,
        signs=args.signs,
        size_reduce_mode=args.size_reduce,
        crt_mode=args.crt_mode,
        seed=args.seed,
    )
    report = reduce_module(basis, options)
    payload = report.to_dict()
    if args.output == "csv":
        payload = pd.DataFrame([{k: v for k, v in line.items() if k != "alpha"} for line in payload["per_line"]])
    _emit(payload, args)
    if not report.passed:
        raise CommandFailed("Reduction report failed its membership or power-mean check")
    return None


def cmd_table1(args: argparse.Namespace, config: dict) -> pd.DataFrame:
    return table1_experiment(_experiment_config(args, config, "harness.table1_k"))


def cmd_table2(args: argparse.Namespace, config: dict) -> pd.DataFrame:
    experiment = _experiment_config(args, config, "harness.table2_k")
    return table2_experiment(
        experiment,
        config["signopt.exhaustive_limit"],
        args.node_budget or config["signopt.bnb_node_budget"],
    )


def cmd_probe(args: argparse.Namespace, config: dict) -> dict:
    retries = args.retries or config["harness.probe_retries"]
    seed = config["harness.seed"] if args.seed is None else args.seed
    return covering_probe(args.k, args.strategy, retries, seed).to_dict()


def cmd_security(args: argparse.Namespace, config: dict) -> dict:
    return security_accounting(args.C, args.d, args.n, args.log2_gamma, args.q, args.eta)


def cmd_soundness(args: argparse.Namespace, config: dict) -> None:
    experiment = ExperimentConfig(
        k_values=(args.k,),
        d=args.d,
        eta=args.eta or config["harness.eta"],
        trials=args.trials or 200,
        seed=config["harness.seed"] if args.seed is None else args.seed,
        jobs=args.jobs,
        svp_max_dim=config["harness.svp_max_dim"],
        options=ReductionOptions.from_config(config),
    )
    if args.kind == "cbd":
        frame = soundness_experiment(args.k, experiment)
        passed = bool(frame[["membership", "power_mean"]].all(axis=None))
    elif args.kind == "planted":
        frame = planted_experiment(args.k, experiment)
        passed = bool(frame["unscrambled"].mean() >= 0.95)
    elif args.kind == "oracle":
        frame = oracle_experiment(experiment, args.k)
        passed = bool((frame["ratio"] >= 1 - 1e-9).all())
    else:
        frame = sign_comparison_experiment(args.k, experiment)
        passed = bool(frame["milp_norm"].mean() <= frame["greedy_norm"].mean() * (1 + 1e-9))
    _emit(frame, args)
    if not passed:
        raise CommandFailed(f"Soundness run ({args.kind}) did not meet its acceptance check")
    return None


def selftest_checks(seed: int = 0) -> Dict[str, bool]:
    """Trace orthogonality, NTT round trip, K-orthogonality of GS vectors and the k = 4 discrepancy."""
    checks: Dict[str, bool] = {}

    params = RingParams(4)
    n = params.n
    embedded = np.array([galois_embed(RingElement.monomial(params, a)).values for a in range(n)])
    gram = embedded @ embedded.conj().T
    checks["trace_orthogonality"] = bool(np.allclose(gram, n * np.eye(n), rtol=1e-9, atol=1e-9))

    ctx = SplitPrimeContext.build(COMPAT_PRIME, 256)
    rng = trial_rng(seed)
    polys = rng.integers(0, COMPAT_PRIME, size=(20, 256))
    checks["ntt_round_trip"] = all(np.array_equal(intt(ntt(a, ctx), ctx), a) for a in polys)

    data = k_gram_schmidt(cbd_basis(params, 2, 2, seed, 0))
    checks["gs_orthogonality"] = k_inner(data.gs[1], data.gs[0]).is_zero()

    anchor = solve_exhaustive(SignProblem.for_k(4)).discrepancy
    checks["delta_star_k4"] = abs(anchor - 0.4407) <= 5e-4
    return checks


def cmd_selftest(args: argparse.Namespace, config: dict) -> None:
    checks = selftest_checks(0 if args.seed is None else args.seed)
    passed = all(checks.values())
    payload: Any = {"checks": checks, "passed": passed}
    if args.output == "csv":
        payload = pd.DataFrame({"check": list(checks), "passed": list(checks.values())})
    _emit(payload, args)
    for name, ok in checks.items():
        logger.info(f"selftest {name}: {'pass' if ok else 'FAIL'}")
    if not passed:
        raise CommandFailed("Self-test failed")
    return None


COMMANDS: Dict[str, Callable[[argparse.Namespace, dict], Any]] = {
    "primes": cmd_primes,
    "signopt": cmd_signopt,
    "reduce": cmd_reduce,
    "table1": cmd_table1,
    "table2": cmd_table2,
    "probe": cmd_probe,
    "security": cmd_security,
    "soundness": cmd_soundness,
    "selftest": cmd_selftest,
}


def run(argv: Sequence[str] | None = None) -> int:
    """
    Parse argv, run one subcommand and return its exit code.

    Returns:
        int: 0 on success, 2 on invalid input or usage, 1 on internal error or failed check.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = load_config(args.config)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    level = (args.log_level or config["logging.level"]).upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, force=True)

    try:
        payload = COMMANDS[args.command](args, config)
        if payload is not None:
            _emit(payload, args)
        return EXIT_OK
    except CommandFailed as e:
        logger.error(str(e))
        return EXIT_FAILED
    except (ValueError, KeyError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ModRedException as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILED
    except Exception as e:
        logger.exception(f"{args.command} crashed: {e}")
        return EXIT_FAILED


def main() -> None:
    sys.exit(run(sys.argv[1:]))
