"""Command-line interface: bounds, check, simulate, oracle.

Exit codes: 0 success, 1 oracle-suite failure, 2 invalid configuration or
data, 3 overlap failure, 4 infeasible restriction set.  Reports are JSON with
sorted keys so a fixed (input, config, seed) triple produces byte-identical
output.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .analytic import REGIME_COMBINED, makarov_interval, supermodular_bounds, phi_indicator_bounds
from .data import Dataset, StepCdf, load_csv, load_x_marginal_csv, validate_overlap, write_csv
from .errors import (
    DataError,
    InfeasibleModelError,
    OverlapError,
    ValidationError,
)
from .estimands import Population, PsiSpec, materialize_psi, NuisanceSet, population_weight, parse_psi
from .estimator import DteBoundsEstimator, __version__, as_dataset
from .identify import identify_system
from .lp import ConstraintOptions, sharp_bounds_lp
from .oracles import (
    block_uniform_population,
    discretize_population,
    makarov_scan_oracle,
    permutation_oracle,
    random_population,
    reference_lp_value,
    sample_drpt,
)

EXIT_OK = 0
EXIT_SUITE_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_OVERLAP = 3
EXIT_INFEASIBLE = 4


def _emit(obj: dict, output: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_error(exc: Exception, output: str | None, code: int) -> int:
    _emit({"error": {"type": type(exc).__name__, "message": str(exc)}}, output)
    return code


def _human_interval_table(report: dict) -> str:
    lines = ["regime         lower    upper    width"]
    for name in sorted(report.get("intervals", {})):
        iv = report["intervals"][name]
        lines.append(
            f"{name:<13} {iv['lower']:8.4f} {iv['upper']:8.4f} {iv['upper'] - iv['lower']:8.4f}"
        )
    if "width_reduction_pct" in report:
        lines.append(f"width reduction from combining: {report['width_reduction_pct']:.1f}%")
    return "\n".join(lines)


def _load_dataset(args) -> Dataset:
    marginal = load_x_marginal_csv(args.x_marginal) if getattr(args, "x_marginal", None) else None
    ds = load_csv(args.input)
    if marginal is not None:
        ds = Dataset(
            y=ds.y, d=ds.d, g=ds.g, x=ds.x, w=ds.w,
            covariate_cells=ds.covariate_cells, x_marginal=marginal,
        )
    return ds


def cmd_bounds(args) -> int:
    try:
        ds = _load_dataset(args)
        est = DteBoundsEstimator(
            psi=args.psi,
            population=args.population,
            regime=args.regime,
            msi=args.msi,
            grm=args.grm,
            force_lp=args.lp,
            grid=args.grid,
            threads=args.threads,
            var_cap=args.var_cap,
        )
        est.fit(ds)
    except (ValidationError, DataError) as exc:
        return _emit_error(exc, args.output, EXIT_VALIDATION)
    except OverlapError as exc:
        return _emit_error(exc, args.output, EXIT_OVERLAP)
    except InfeasibleModelError as exc:
        return _emit_error(exc, args.output, EXIT_INFEASIBLE)
    _emit(est.report_, args.output)
    if args.output:
        print(_human_interval_table(est.report_))
    else:
        print(_human_interval_table(est.report_), file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        ds = _load_dataset(args)
    except (ValidationError, DataError) as exc:
        return _emit_error(exc, args.output, EXIT_VALIDATION)
    overlap = validate_overlap(ds)
    report = {
        "schema_version": 1,
        "tool_version": __version__,
        "overlap": overlap.as_dict(),
        "balance": {
            "note": (
                "descriptive only: cell shares per arm; equality of the latent "
                "populations across arms is a design assumption that data cannot test"
            ),
        },
    }
    if overlap.passed:
        report["balance"]["cell_shares"] = {
            g: ds.cell_probs_in_arm(g) for g in ("exp", "obs")
        }
        est = DteBoundsEstimator(psi=args.psi, regime="combined")
        est.fit(ds)
        report["mixture_residual_max"] = est.system_.max_mixture_residual()
        report["repair_log"] = [e.as_dict() for e in est.system_.repair_log]
        report["gain"] = est.gain_.as_dict()
    _emit(report, args.output)
    return EXIT_OK if overlap.passed else EXIT_OVERLAP


def cmd_simulate(args) -> int:
    try:
        pop = block_uniform_population(args.a, args.b)
        disc = discretize_population(pop, k=args.grid_k)
        arm_probs = tuple(float(p) for p in args.arm_probs.split(","))
        ds = sample_drpt(disc, n=args.n, arm_probs=arm_probs, seed=args.seed)
    except ValidationError as exc:
        return _emit_error(exc, None, EXIT_VALIDATION)
    write_csv(ds, args.output)
    system = disc.to_identified_system()
    spec = PsiSpec(family="fraction-benefit")
    table = materialize_psi(spec, NuisanceSet(), disc.grid.points, disc.grid.points)
    weights = population_weight(Population(), system)
    grid_comb = phi_indicator_bounds(system, table, weights, regime="combined")
    grid_exp = phi_indicator_bounds(system, table, weights, regime="experimental")
    sidecar = {
        "population": {"a": args.a, "b": args.b, "p_s1": 0.5, "grid_k": args.grid_k},
        "true_theta": disc.true_theta(table.values),
        "exact_intervals": {
            "experimental": list(pop.exact_positive_effect_interval(combined=False)),
            "combined": list(pop.exact_positive_effect_interval(combined=True)),
        },
        "grid_intervals": {
            "experimental": [grid_exp.lower, grid_exp.upper],
            "combined": [grid_comb.lower, grid_comb.upper],
        },
        "seed": args.seed,
        "n": args.n,
        "arm_probs": list(arm_probs),
    }
    _emit(sidecar, args.output + ".truths.json")
    print(f"wrote {args.n} records to {args.output} (+ sidecar)", file=sys.stderr)
    return EXIT_OK


def _suite_lp_vs_analytic(seed: int, n_instances: int, bug: float) -> float:
    worst = 0.0
    for t in range(n_instances):
        pop = random_population(seed * 1000 + t, max_grid=5, max_cells=2)
        system = pop.to_identified_system()
        weights = population_weight(Population(), system)
        rng = np.random.default_rng(seed * 77 + t)
        delta = float(rng.uniform(-1.5, 1.5))
        spec = PsiSpec(family="te-cdf", delta=delta)
        table = materialize_psi(spec, NuisanceSet(), pop.grid.points, pop.grid.points)
        analytic = phi_indicator_bounds(system, table, weights, regime=REGIME_COMBINED)
        lp = sharp_bounds_lp(system, table, weights, regime=REGIME_COMBINED)
        worst = max(
            worst,
            abs(analytic.lower - lp.lower) + bug,
            abs(analytic.upper - lp.upper),
        )
    return worst


def _suite_permutation(seed: int, n_instances: int, bug: float) -> float:
    from .analytic import antimonotone_expectation, comonotone_expectation
    from .data import OutcomeGrid

    worst = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n = int(rng.integers(2, 7))
        g1 = np.sort(rng.uniform(-1, 1, size=n))
        g0 = np.sort(rng.uniform(-1, 1, size=n))
        density = rng.exponential(size=(n, n))
        psi = np.cumsum(np.cumsum(density, axis=0), axis=1)  # nonneg cross increments
        u = np.full(n, 1.0 / n)
        f1 = StepCdf(OutcomeGrid(np.unique(g1)), np.cumsum(u)) if len(np.unique(g1)) == n else None
        if f1 is None:
            continue
        f0 = StepCdf(OutcomeGrid(np.unique(g0)), np.cumsum(u)) if len(np.unique(g0)) == n else None
        if f0 is None:
            continue
        lo, hi = permutation_oracle(psi, g1, g0)
        worst = max(
            worst,
            abs(antimonotone_expectation(psi, f1, f0) - lo) + bug,
            abs(comonotone_expectation(psi, f1, f0) - hi),
        )
    return worst


def _suite_makarov_scan(seed: int, n_instances: int, bug: float) -> float:
    from .data import OutcomeGrid

    worst = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n1 = int(rng.integers(2, 9))
        n0 = int(rng.integers(2, 9))
        g1 = np.unique(np.round(rng.uniform(-2, 2, size=n1), 1))
        g0 = np.unique(np.round(rng.uniform(-2, 2, size=n0), 1))
        if g1.size < 2 or g0.size < 2:
            continue
        p1 = rng.exponential(size=g1.size)
        p0 = rng.exponential(size=g0.size)
        v1 = np.cumsum(p1 / p1.sum())
        v0 = np.cumsum(p0 / p0.sum())
        v1[-1] = 1.0
        v0[-1] = 1.0
        f1 = StepCdf(OutcomeGrid(g1), v1)
        f0 = StepCdf(OutcomeGrid(g0), v0)
        delta = float(rng.uniform(-2, 2))
        lo, hi = makarov_interval(f1, f0, delta)
        olo, ohi = makarov_scan_oracle(f1, f0, delta)
        worst = max(worst, abs(lo - olo) + bug, abs(hi - ohi))
    return worst


def cmd_oracle(args) -> int:
    bug = 1e-3 if args.inject_bug else 0.0
    suites = {
        "lp-vs-analytic": (_suite_lp_vs_analytic, 20, 1e-6),
        "permutation-vs-coupling": (_suite_permutation, 60, 1e-10),
        "indicator-scan-vs-engine": (_suite_makarov_scan, 200, 1e-12),
    }
    results = {}
    failed = False
    for name, (fn, n_instances, tol) in suites.items():
        worst = float(fn(args.seed, n_instances, bug))
        ok = bool(worst <= tol)
        failed = failed or not ok
        results[name] = {"max_deviation": worst, "tolerance": tol, "passed": ok}
        print(f"{name:<28} {'PASS' if ok else 'FAIL'}  max deviation {worst:.3e}")
    _emit({"schema_version": 1, "tool_version": __version__, "suites": results}, args.output)
    return EXIT_SUITE_FAILURE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtebounds",
        description=(
            "Sharp identified intervals for distributional treatment-effect "
            "parameters from combined randomized and self-selection samples."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser("bounds", help="compute identified intervals from a CSV")
    p_bounds.add_argument("--input", required=True)
    p_bounds.add_argument("--psi", default="fraction-benefit")
    p_bounds.add_argument("--population", default="all")
    p_bounds.add_argument("--regime", default="both", choices=["both", "combined", "experimental"])
    p_bounds.add_argument("--msi", action="store_true")
    p_bounds.add_argument("--grm", action="store_true")
    p_bounds.add_argument("--lp", action="store_true", help="force the LP route")
    p_bounds.add_argument("--grid", default="union")
    p_bounds.add_argument("--x-marginal", dest="x_marginal", default=None)
    p_bounds.add_argument("--threads", type=int, default=1)
    p_bounds.add_argument("--var-cap", dest="var_cap", type=int, default=250_000)
    p_bounds.add_argument("--output", default=None)
    p_bounds.set_defaults(func=cmd_bounds)

    p_check = sub.add_parser("check", help="overlap, balance, and diagnostic report")
    p_check.add_argument("--input", required=True)
    p_check.add_argument("--psi", default="fraction-benefit")
    p_check.add_argument("--x-marginal", dest="x_marginal", default=None)
    p_check.add_argument("--output", default=None)
    p_check.set_defaults(func=cmd_check)

    p_sim = sub.add_parser("simulate", help="write a reference three-arm sample")
    p_sim.add_argument("--a", type=float, default=0.8)
    p_sim.add_argument("--b", type=float, default=0.2)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--grid-k", dest="grid_k", type=int, default=200)
    p_sim.add_argument("--arm-probs", dest="arm_probs", default="0.25,0.25,0.5")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_oracle = sub.add_parser("oracle", help="run the independent-oracle equivalence suites")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--output", default=None)
    p_oracle.add_argument(
        "--inject-bug", dest="inject_bug", action="store_true",
        help="test hook: perturb one engine value so the suites must fail",
    )
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DataError) as exc:
        return _emit_error(exc, getattr(args, "output", None), EXIT_VALIDATION)
    except OverlapError as exc:
        return _emit_error(exc, getattr(args, "output", None), EXIT_OVERLAP)
    except InfeasibleModelError as exc:
        return _emit_error(exc, getattr(args, "output", None), EXIT_INFEASIBLE)


if __name__ == "__main__":
    sys.exit(main())
