# ************************************************************
#  integrations/cli.py
# ************************************************************

"""
Command-line module for the BMO spline toolkit.

Subcommands decompose functions, reconstruct and check decompositions, evaluate
norms, and run the rate experiments. Experiment commands write CSV/JSON/SVG
reports and exit with 1 when an embedded check fails, 2 on a usage or
configuration error, 0 otherwise.
"""

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import coloredlogs
import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from core import corpus
from core.bspline import METHODS, SplineDecomposition, decompose, reconstruct
from core.config import LOG_LEVEL, Config, load_config, load_constants
from core.errors import BmoSplinesError, DecompositionError
from core.funcspace import QuadratureRule
from core.norms import (
    CoeffSequence,
    besov_norm_E,
    besov_norm_modulus,
    besov_norm_Q,
    bmo_norm,
    bmo_qk_norm,
    ltau_norm,
)
from core.nterm import (
    ORACLE_MAX_NODES,
    RateReport,
    bernstein_experiment,
    compare_bmo_linf,
    counterexample_growth,
    jackson_rate_experiment,
    sigma_n_gq_greedy,
    sigma_n_gq_oracle,
    sup_distance,
)
from core.partition import MultilevelPartition, NestedStructure, load_partition, save_partition
from integrations import reports

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

NORM_VARIANTS = ("bmo", "bmo-qk", "besov-e", "besov-q", "besov-mod")
BERNSTEIN_GRID = [1, 2, 4, 8, 16, 32, 64]
RECONSTRUCT_TOL = 1e-9
# Sequence-space Jackson constant is recorded for trees up to this depth.
JACKSON_SEQ_MAX_DEPTH = 6

# argparse dest -> Config field
CONFIG_FLAGS = (
    "window", "k", "L", "q", "alpha", "seed", "n_grid", "output_dir", "partition",
    "jitter", "gauss_order", "n_jobs", "trials", "eps_grid", "depth", "bmo_q",
)


@dataclass(frozen=True)
class Check:
    """Embedded assertion of an experiment command."""

    name: str
    expected: str
    actual: str
    passed: bool


def setup_logging(verbose: bool = False) -> None:
    coloredlogs.install(
        level="DEBUG" if verbose else LOG_LEVEL,
        stream=sys.stderr,
        fmt="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def diff_report(checks: Iterable[Check]) -> str:
    """Failed checks as a unified-diff style listing of expected against actual."""
    lines = ["--- expected", "+++ actual"]
    for c in checks:
        lines.append(f"@@ {c.name} @@")
        lines.append(f"-{c.expected}")
        lines.append(f"+{c.actual}")
    return "\n".join(lines)


def _finish(checks: Sequence[Check]) -> int:
    failed = [c for c in checks if not c.passed]
    if failed:
        print(diff_report(failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _progress(items: Iterable, desc: str) -> Iterable:
    return tqdm(items, desc=desc, leave=False, disable=not sys.stderr.isatty())


def _stem(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", os.path.basename(name))


def _slope(value: float, defined: bool) -> str:
    return f"{value:.4f}" if defined else "undefined"


def _partition(config: Config, args: argparse.Namespace) -> MultilevelPartition:
    path = getattr(args, "partition_file", None)
    return load_partition(path) if path else config.build_partition()


def _rule(config: Config, partition: MultilevelPartition) -> QuadratureRule:
    return QuadratureRule.from_partition(partition, config.gauss_order)


def cmd_decompose(config: Config, args: argparse.Namespace) -> int:
    """Decompose a function and write the decomposition JSON."""
    partition = _partition(config, args)
    f = corpus.resolve(args.fn, partition, config.seed)
    dec = decompose(f, partition, config.q, _rule(config, partition).for_function(f), args.method)
    out = args.out or os.path.join(config.output_dir, f"decomposition_{_stem(f.name)}.json")
    data = dec.to_dict()
    data["config_hash"] = config.config_hash()
    reports.write_json(out, data)
    if args.save_partition:
        save_partition(partition, args.save_partition)
    total = 0
    for m, c in dec.levels.items():
        label = "base" if m == 0 else f"level {m}"
        print(f"{label}: {len(c)} coefficients")
        total += len(c)
    print(f"total: {total} coefficients -> {out}")
    return EXIT_OK


def cmd_reconstruct(config: Config, args: argparse.Namespace) -> int:
    """Rebuild the spline of a decomposition file; with --check compare it with the source function."""
    partition = _partition(config, args)
    try:
        with open(args.dec, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DecompositionError(f"cannot read decomposition file {args.dec}: {e}") from e
    dec = SplineDecomposition.from_dict(data, partition)
    S = reconstruct(dec)
    print(f"reconstructed {dec.name or args.dec}: {len(S.breakpoints) - 1} pieces")
    if not args.check:
        return EXIT_OK
    source = corpus.resolve(args.fn or dec.name, partition, config.seed)
    err = sup_distance(source, S, partition, _rule(config, partition))
    print(json.dumps({"name": source.name, "sup_error": err, "tol": args.tol, "config_hash": config.config_hash()}, sort_keys=True))
    return _finish([Check("reconstruction", f"sup_error <= {args.tol:g}", f"sup_error = {err:.3e}", err <= args.tol)])


def norm_result(config: Config, partition: MultilevelPartition, fn_id: str, variant: str) -> Dict[str, Any]:
    """
    Evaluate one norm variant of one function.

    Returns:
        Dict[str, Any]: JSON-ready result with the config hash.
    """
    f = corpus.resolve(fn_id, partition, config.seed)
    rule = _rule(config, partition)
    alpha = config.alpha[0]
    out: Dict[str, Any] = {"fn": fn_id, "variant": variant, "k": config.k, "q": config.q, "config_hash": config.config_hash()}
    if variant == "bmo":
        est = bmo_norm(f, partition, config.q, rule)
        out.update(value=est.value, argmax=[est.argmax.lo, est.argmax.hi], family_size=est.family_size)
        return out
    if variant == "bmo-qk":
        out["value"] = bmo_qk_norm(f, partition, config.q, config.k, rule)
        return out
    if variant == "besov-e":
        norm = besov_norm_E(f, partition, alpha, config.k, config.q, rule)
    elif variant == "besov-q":
        norm = besov_norm_Q(decompose(f, partition, config.q, rule.for_function(f)), alpha)
    else:
        norm = besov_norm_modulus(f, partition, alpha, config.k, rule)
    out.update(alpha=norm.alpha, tau=norm.tau, q=norm.q, value=norm.value)
    return out


def cmd_norm(config: Config, args: argparse.Namespace) -> int:
    """Print one JSON object per requested function."""
    partition = _partition(config, args)
    if config.n_jobs > 1 and len(args.fn) > 1:
        results = Parallel(n_jobs=config.n_jobs)(
            delayed(norm_result)(config, partition, fn, args.variant) for fn in args.fn
        )
    else:
        results = [norm_result(config, partition, fn, args.variant) for fn in _progress(args.fn, "norm")]
    for r in results:
        print(json.dumps(r, sort_keys=True))
    return EXIT_OK


def _annotated_alpha(fn_id: str) -> Optional[float]:
    try:
        return corpus.entry(fn_id).alpha
    except BmoSplinesError:
        return None


def _jackson_verdict(report: RateReport, bound: float) -> RateReport:
    normalized = report.normalized[np.isfinite(report.normalized)]
    peak = float(np.max(normalized)) if normalized.size else None
    ok = peak is None or peak <= bound
    extra = {**report.extra, "normalized_max": peak, "normalized_bound": bound, "normalized_ok": ok}
    return replace(report, extra=extra)


def cmd_rates(config: Config, args: argparse.Namespace) -> int:
    """Jackson experiment for every configured alpha."""
    partition = _partition(config, args)
    f = corpus.resolve(args.fn, partition, config.seed)
    constants = load_constants()
    smooth = _annotated_alpha(args.fn)
    checks = []
    for alpha in _progress(config.alpha, "rates"):
        report = jackson_rate_experiment(
            f, partition, alpha, config.k, config.q, config.n_grid, config.config_hash(), config.bmo_q,
            _rule(config, partition),
        )
        report = _jackson_verdict(report, constants["jackson_normalized"])
        stem = f"rates_{_stem(f.name)}_a{alpha:g}"
        reports.write_rate_report(config.output_dir, stem, report, svg=not args.no_svg)
        print(f"{f.name} alpha={alpha:g}: slope {_slope(report.slope, report.slope_defined)}")
        if smooth is None or alpha > smooth:
            continue
        checks.append(
            Check(
                f"{stem} Besov norm",
                "stable under refinement",
                "precondition_failed = true" if report.precondition_failed else "stable under refinement",
                not report.precondition_failed,
            )
        )
        peak = report.extra["normalized_max"]
        checks.append(
            Check(
                f"{stem} normalized error",
                f"max error * n^alpha / ||f||_B <= {report.extra['normalized_bound']:g}",
                f"max = {'undefined' if peak is None else f'{peak:.4f}'}",
                report.extra["normalized_ok"],
            )
        )
        if report.slope_defined:
            bound = -alpha + constants["slope_headroom"]
            checks.append(
                Check(f"{stem} slope", f"slope <= {bound:.4f}", f"slope = {report.slope:.4f}", report.slope <= bound)
            )
    return _finish(checks)


def cmd_linf(config: Config, args: argparse.Namespace) -> int:
    """Greedy residuals in BMO and in the sup norm on the same grid."""
    partition = _partition(config, args)
    f = corpus.resolve(args.fn, partition, config.seed)
    dec = decompose(f, partition, config.q, _rule(config, partition).for_function(f))
    bmo, linf = compare_bmo_linf(dec, config.n_grid, config.alpha[0], config.config_hash(), config.bmo_q)
    checks = []
    for report, norm in ((bmo, "bmo"), (linf, "linf")):
        reports.write_rate_report(config.output_dir, f"linf_{_stem(f.name)}_{norm}", report, svg=not args.no_svg)
        print(f"{f.name} {norm}: slope {_slope(report.slope, report.slope_defined)}")
    for n, b, u in zip(bmo.n, bmo.error, linf.error):
        checks.append(Check(f"n={n} BMO against sup norm", f"bmo <= 2*linf = {2 * u:.6g}", f"bmo = {b:.6g}", b <= 2 * u + 1e-12))
    return _finish(checks)


def cmd_bernstein(config: Config, args: argparse.Namespace) -> int:
    """Worst random ratio ||g||_B / (n^alpha ||g||_BMO) per n."""
    partition = _partition(config, args)
    report = bernstein_experiment(
        partition,
        config.alpha[0],
        config.k,
        config.trials,
        config.n_grid,
        config.seed,
        q=config.q,
        bmo_q=config.bmo_q,
        bspline_order=2 if args.continuous else None,
        n_jobs=config.n_jobs,
        config_hash=config.config_hash(),
    )
    reports.write_rate_report(config.output_dir, report.fn_id, report, svg=not args.no_svg)
    print(f"{report.fn_id}: slope {_slope(report.slope, report.slope_defined)} over {config.trials} trials")
    bound = load_constants()["bernstein_slope"]
    checks = []
    if report.slope_defined:
        checks.append(
            Check("bernstein slope", f"|slope| <= {bound:g}", f"slope = {report.slope:.4f}", abs(report.slope) <= bound)
        )
    return _finish(checks)


def cmd_counterexample(config: Config, args: argparse.Namespace) -> int:
    """Besov values of the smoothed indicator against ln(1/eps)."""
    partition = _partition(config, args)
    report = counterexample_growth(partition, config.eps_grid, 1.0, config.k, 1.0, config.config_hash())
    reports.write_csv(
        os.path.join(config.output_dir, "counterexample.csv"),
        ("eps", "value"),
        zip(report.eps, report.values),
        report.config_hash,
    )
    reports.write_json(os.path.join(config.output_dir, "counterexample.json"), report.to_dict())
    print(f"counterexample: slope {report.slope:.4f}, R^2 {report.r_squared:.4f}")
    r2 = load_constants()["counterexample_r2"]
    return _finish(
        [
            Check("values increasing as eps shrinks", "increasing = true", f"increasing = {str(report.increasing).lower()}", report.increasing),
            Check("growth slope", "slope > 0", f"slope = {report.slope:.4f}", report.slope > 0),
            Check("linear fit in ln(1/eps)", f"R^2 >= {r2:g}", f"R^2 = {report.r_squared:.4f}", report.r_squared >= r2),
        ]
    )


def gq_trial(structure: NestedStructure, values: np.ndarray, q: float, taus: Sequence[float], oracle: bool) -> np.ndarray:
    """
    Greedy/oracle ratio and normalized greedy residuals for n = 1..size-1.

    Returns:
        np.ndarray: Shape (size - 1, 1 + len(taus)); the ratio column is nan without the oracle.
    """
    h = CoeffSequence(structure, values)
    norms = [ltau_norm(h, tau) for tau in taus]
    rows = []
    for n in range(1, structure.size):
        _, greedy = sigma_n_gq_greedy(h, n, q)
        ratio = np.nan
        if oracle:
            best = sigma_n_gq_oracle(h, n, q)
            ratio = greedy / best if best > 0 else (1.0 if greedy == 0 else np.inf)
        rows.append([ratio] + [greedy * n ** (1.0 / tau) / z if z > 0 else 0.0 for tau, z in zip(taus, norms)])
    return np.array(rows)


def cmd_gq_bench(config: Config, args: argparse.Namespace) -> int:
    """Greedy against exhaustive n-term selection in g^q on random trees."""
    structure = NestedStructure.dyadic_tree(config.depth)
    oracle = structure.size <= ORACLE_MAX_NODES
    rng = np.random.default_rng(config.seed)
    draws = rng.standard_normal((config.trials, structure.size))
    taus = list(args.tau)
    if config.n_jobs > 1:
        tables = Parallel(n_jobs=config.n_jobs)(
            delayed(gq_trial)(structure, v, config.bmo_q, taus, oracle) for v in draws
        )
    else:
        tables = [gq_trial(structure, v, config.bmo_q, taus, oracle) for v in _progress(draws, "gq-bench")]
    worst = np.max(np.stack(tables), axis=0)
    n = np.arange(1, structure.size)
    header = ["n", "greedy_over_oracle"] + [f"jackson_tau{tau:g}" for tau in taus]
    rows = [[int(i)] + [None if np.isnan(v) else float(v) for v in row] for i, row in zip(n, worst)]
    reports.write_csv(os.path.join(config.output_dir, "gq_bench.csv"), header, rows, config.config_hash())
    summary = {
        "depth": config.depth,
        "nodes": structure.size,
        "trials": config.trials,
        "q": config.bmo_q,
        "max_greedy_over_oracle": None if not oracle else float(np.max(worst[:, 0])),
        "max_jackson": {f"{tau:g}": float(np.max(worst[:, 1 + i])) for i, tau in enumerate(taus)},
        "config_hash": config.config_hash(),
    }
    reports.write_json(os.path.join(config.output_dir, "gq_bench.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    constants = load_constants()
    checks = []
    if oracle:
        bound = constants["greedy_oracle"]
        value = summary["max_greedy_over_oracle"]
        checks.append(Check("greedy against oracle", f"ratio <= {bound:g}", f"ratio = {value:.4f}", value <= bound))
    if config.depth <= JACKSON_SEQ_MAX_DEPTH:
        bound = constants["jackson_seq"] * constants["headroom"]
        for tau, value in summary["max_jackson"].items():
            checks.append(Check(f"sequence Jackson tau={tau}", f"normalized <= {bound:g}", f"normalized = {value:.4f}", value <= bound))
    else:
        logger.warning("No recorded sequence Jackson constant for depth %d", config.depth)
    return _finish(checks)


COMMANDS: Dict[str, Callable[[Config, argparse.Namespace], int]] = {
    "decompose": cmd_decompose,
    "reconstruct": cmd_reconstruct,
    "norm": cmd_norm,
    "rates": cmd_rates,
    "linf": cmd_linf,
    "bernstein": cmd_bernstein,
    "counterexample": cmd_counterexample,
    "gq-bench": cmd_gq_bench,
}


def _config_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file, merged under the flags")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("--partition-file", help="Load the partition from a JSON file instead of building it")
    common.add_argument("--window", type=float, nargs=2, metavar=("A", "B"))
    common.add_argument("--k", type=int, help="Spline order, 2..4")
    common.add_argument("--L", type=int, help="Finest level")
    common.add_argument("--q", type=float, help="Exponent of the local errors")
    common.add_argument("--alpha", type=float, nargs="+", help="Smoothness values")
    common.add_argument("--seed", type=int)
    common.add_argument("--n-grid", dest="n_grid", type=int, nargs="+")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--partition", choices=("dyadic", "perturbed"))
    common.add_argument("--jitter", type=float)
    common.add_argument("--gauss-order", dest="gauss_order", type=int)
    common.add_argument("--n-jobs", dest="n_jobs", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--eps-grid", dest="eps_grid", type=float, nargs="+")
    common.add_argument("--depth", type=int)
    common.add_argument("--bmo-q", dest="bmo_q", type=float, help="Exponent of the BMO estimator")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = argparse.ArgumentParser(
        prog="bmo-splines", description="n-term B-spline approximation in BMO: decompositions, norms and rates."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common], help="Write the multilevel decomposition of a function")
    p.add_argument("--fn", required=True, help="Corpus id or CSV path")
    p.add_argument("--method", choices=METHODS, default="insertion")
    p.add_argument("--out", help="Output file (default: <output-dir>/decomposition_<fn>.json)")
    p.add_argument("--save-partition", help="Also write the partition JSON here")

    p = sub.add_parser("reconstruct", parents=[common], help="Rebuild the spline of a decomposition file")
    p.add_argument("--dec", required=True, help="Decomposition JSON")
    p.add_argument("--check", action="store_true", help="Compare with the source function")
    p.add_argument("--fn", help="Source function (default: the name stored in the file)")
    p.add_argument("--tol", type=float, default=RECONSTRUCT_TOL)

    p = sub.add_parser("norm", parents=[common], help="Evaluate a norm, one JSON object per function")
    p.add_argument("--fn", required=True, nargs="+")
    p.add_argument("--variant", choices=NORM_VARIANTS, default="bmo")

    for name, text in (("rates", "Jackson rate experiment"), ("linf", "BMO against sup-norm greedy rates")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--fn", required=True)
        p.add_argument("--no-svg", action="store_true")

    p = sub.add_parser("bernstein", parents=[common], help="Bernstein ratio experiment (n grid defaults to 1..64)")
    p.add_argument("--continuous", action="store_true", help="Draw g from order-2 B-splines")
    p.add_argument("--no-svg", action="store_true")

    sub.add_parser("counterexample", parents=[common], help="Smoothed indicator growth in ln(1/eps)")

    p = sub.add_parser("gq-bench", parents=[common], help="Greedy against exhaustive selection in g^q")
    p.add_argument("--tau", type=float, nargs="+", default=[0.5, 1.0])
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    values = {name: getattr(args, name, None) for name in CONFIG_FLAGS}
    if values["window"] is not None:
        values["window"] = tuple(values["window"])
    if args.command == "bernstein" and values["n_grid"] is None:
        values["n_grid"] = BERNSTEIN_GRID
    return values


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, load the configuration and run a subcommand.

    Returns:
        int: 0 on success, 1 when an embedded check fails, 2 on a usage or configuration error.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = load_config(args.config, overrides_from(args))
        logger.info("Running %s (config %s)", args.command, config.config_hash())
        return COMMANDS[args.command](config, args)
    except BmoSplinesError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
