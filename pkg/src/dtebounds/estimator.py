"""Scikit-learn-style front door for the bounds pipeline.

``DteBoundsEstimator`` composes ingestion, identification, estimand
materialization, and the bounding engines behind a single ``fit``.  It
follows the usual estimator conventions: constructor arguments are stored
verbatim, all validation happens in ``fit``, fitted state lands in
trailing-underscore attributes, and ``get_params``/``set_params`` work for
grid searches and cloning.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from . import analytic
from .analytic import (
    REGIME_COMBINED,
    REGIME_EXPERIMENTAL,
    BoundsInterval,
    gain_diagnostic,
    phi_indicator_bounds,
    supermodular_bounds,
)
from .data import Dataset, ObservationRecord, build_grid, validate_overlap
from .errors import ValidationError
from .estimands import (
    GENERAL,
    PHI_INDICATOR,
    SUB_MODULAR,
    SUPER_MODULAR,
    Population,
    PsiSpec,
    estimate_nuisances,
    materialize_psi,
    parse_population,
    parse_psi,
    population_weight,
)
from .identify import identify_system
from .lp import ConstraintOptions, sharp_bounds_lp

__version__ = "0.1.0"

_REGIMES = ("both", "combined", "experimental")


def _parse_grid_param(grid) -> tuple[str, int | None]:
    if isinstance(grid, str):
        head, _, arg = grid.partition(":")
        if head == "union":
            return "union", None
        if head in ("equal-width", "quantile"):
            try:
                return head, int(arg)
            except ValueError:
                raise ValidationError(f"grid policy {grid!r} needs an integer size") from None
        raise ValidationError(f"unknown grid policy {grid!r}")
    if isinstance(grid, (tuple, list)) and len(grid) == 2:
        return str(grid[0]), int(grid[1])
    raise ValidationError(f"cannot interpret grid parameter {grid!r}")


def as_dataset(X, schema: Mapping[str, str] | None = None, x_marginal=None) -> Dataset:
    """Coerce fit input into a Dataset.

    Accepts a Dataset, a pandas DataFrame with columns y/d/g (plus optional
    x, w; names remappable through ``schema``), or an iterable of mappings
    with those keys.
    """
    if isinstance(X, Dataset):
        return X
    schema = dict(schema or {})
    col = {k: schema.get(k, k) for k in ("y", "d", "g", "x", "w")}
    if not isinstance(X, pd.DataFrame):
        X = pd.DataFrame(list(X))
    for name in ("y", "d", "g"):
        if col[name] not in X.columns:
            raise ValidationError(f"input is missing required column {col[name]!r}")
    records = []
    for i, row in enumerate(X.itertuples(index=False), start=1):
        row = row._asdict() if hasattr(row, "_asdict") else dict(zip(X.columns, row))
        try:
            records.append(
                ObservationRecord(
                    y=float(row[col["y"]]),
                    d=int(row[col["d"]]),
                    g=str(row[col["g"]]).strip().lower(),
                    x=str(row[col["x"]]).strip() if col["x"] in row and row[col["x"]] is not None else "ALL",
                    w=float(row[col["w"]]) if col["w"] in row and row[col["w"]] is not None else 1.0,
                )
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"row {i}: malformed record ({exc})") from None
    return Dataset.from_records(records, x_marginal=x_marginal)


class DteBoundsEstimator(BaseEstimator):
    """Identified-interval estimator for distributional treatment-effect parameters.

    Parameters
    ----------
    psi : str or PsiSpec, default="fraction-benefit"
        Target parameter family.  String forms: ``fraction-benefit``,
        ``fraction-harmed``, ``te-cdf:<delta>``, ``ate-disadv:<c>``,
        ``upward:<c>``, ``correlation``.
    population : str or Population, default="all"
        Target population: ``all``, ``s=0``/``s=1`` (self-selection type),
        ``x=<cell>``, or ``g=exp``/``g=obs``.
    regime : {"both", "combined", "experimental"}, default="both"
        Which identified intervals to compute.  "experimental" uses only the
        randomized arm's margins; "combined" also conditions on the
        identified self-selection type.
    msi : bool, default=False
        Impose mutual stochastic monotonicity of the potential outcomes
        (combined regime, LP route).
    grm : bool, default=False
        Impose self-selection consistent with a generalized Roy model
        (combined regime, LP route).
    force_lp : bool, default=False
        Use the LP route even when a closed form exists.
    grid : str or (policy, k), default="union"
        Outcome grid policy: ``union``, ``equal-width:<k>``, ``quantile:<k>``.
    x_marginal : mapping, optional
        External covariate marginal P(X=x); defaults to pooled frequencies.
    schema : mapping, optional
        Column-name remapping for DataFrame input.
    threads : int, default=1
        Worker threads for per-cell computation.  Results are aggregated in
        fixed cell order, so outputs are identical across thread counts.
    var_cap : int, default=250000
        Safety cap on the number of LP variables.

    Attributes
    ----------
    system_ : IdentifiedCdfSystem
        All identified conditional CDFs, selection probabilities, diagnostics.
    psi_table_ : PsiTable
        The materialized target table with its shape class.
    intervals_ : dict
        Regime name -> BoundsInterval.
    interval_ : tuple
        (lower, upper) of the most informative requested regime.
    report_ : dict
        JSON-serializable summary of configuration, intervals, diagnostics.
    """

    def __init__(
        self,
        psi="fraction-benefit",
        population="all",
        regime="both",
        msi=False,
        grm=False,
        force_lp=False,
        grid="union",
        x_marginal=None,
        schema=None,
        threads=1,
        var_cap=250_000,
    ):
        self.psi = psi
        self.population = population
        self.regime = regime
        self.msi = msi
        self.grm = grm
        self.force_lp = force_lp
        self.grid = grid
        self.x_marginal = x_marginal
        self.schema = schema
        self.threads = threads
        self.var_cap = var_cap

    def _resolved_spec(self) -> PsiSpec:
        spec = parse_psi(self.psi) if isinstance(self.psi, str) else self.psi
        pop = (
            parse_population(self.population)
            if isinstance(self.population, str)
            else self.population
        )
        if not isinstance(spec, PsiSpec) or not isinstance(pop, Population):
            raise ValidationError("psi/population must be strings or spec objects")
        return PsiSpec(
            family=spec.family, delta=spec.delta, c=spec.c, table=spec.table, population=pop
        )

    def fit(self, X, y=None):
        if self.regime not in _REGIMES:
            raise ValidationError(f"regime must be one of {_REGIMES}, got {self.regime!r}")
        spec = self._resolved_spec()
        opts = ConstraintOptions(msi=bool(self.msi), grm=bool(self.grm))
        want_exp = self.regime in ("both", "experimental")
        want_comb = self.regime in ("both", "combined")
        if (opts.msi or opts.grm) and not want_comb:
            raise ValidationError(
                "msi/grm restrictions condition on the selection type; "
                "use regime 'combined' or 'both'"
            )
        if spec.population.kind == "selection" and not want_comb:
            raise ValidationError(
                "selection-type populations are out of reach of the randomized arm alone; "
                "use regime 'combined' or 'both'"
            )

        ds = as_dataset(X, schema=self.schema, x_marginal=self.x_marginal)
        self.overlap_ = validate_overlap(ds)
        policy, k = _parse_grid_param(self.grid)
        grid = build_grid(ds, policy=policy, k=k)
        self.system_ = identify_system(ds, grid=grid)
        self.nuisances_ = estimate_nuisances(ds, spec)
        self.psi_table_ = materialize_psi(spec, self.nuisances_, grid.points, grid.points)
        self.weights_ = population_weight(spec.population, self.system_)
        self.gain_ = gain_diagnostic(self.system_, self.psi_table_)

        intervals: dict[str, BoundsInterval] = {}
        if want_exp:
            intervals["experimental"] = self._one_regime(REGIME_EXPERIMENTAL, opts=ConstraintOptions())
        if want_comb:
            intervals["combined"] = self._one_regime(REGIME_COMBINED, opts=opts)
        self.intervals_ = intervals
        best = intervals.get("combined", intervals.get("experimental"))
        self.interval_ = (best.lower, best.upper)
        self.report_ = self._build_report(spec, opts)
        return self

    def _one_regime(self, regime: str, opts: ConstraintOptions) -> BoundsInterval:
        table = self.psi_table_
        needs_lp = (
            self.force_lp
            or opts.msi
            or opts.grm
            or table.shape == GENERAL
        )
        if needs_lp:
            return sharp_bounds_lp(
                self.system_, table, self.weights_, opts=opts, regime=regime, var_cap=self.var_cap
            )
        if table.shape == PHI_INDICATOR:
            return phi_indicator_bounds(
                self.system_, table, self.weights_, regime=regime, threads=self.threads
            )
        if table.shape in (SUPER_MODULAR, SUB_MODULAR):
            return supermodular_bounds(
                self.system_, table, self.weights_, regime=regime, threads=self.threads
            )
        raise ValidationError(f"no engine for shape {table.shape!r}")  # pragma: no cover

    def _build_report(self, spec: PsiSpec, opts: ConstraintOptions) -> dict:
        report = {
            "schema_version": 1,
            "tool_version": __version__,
            "config": {
                "psi": self.psi if isinstance(self.psi, str) else spec.family,
                "population": spec.population.label(),
                "regime": self.regime,
                "msi": bool(self.msi),
                "grm": bool(self.grm),
                "force_lp": bool(self.force_lp),
                "grid": self.grid if isinstance(self.grid, str) else list(self.grid),
            },
            "intervals": {k: v.as_dict() for k, v in self.intervals_.items()},
            "diagnostics": {
                "overlap": self.overlap_.as_dict(),
                "selection_prob": {
                    x: self.system_.selection.p1_given_x[x] for x in self.system_.cells
                },
                "repair_log": [e.as_dict() for e in self.system_.repair_log],
                "mixture_residual_max": self.system_.max_mixture_residual(),
                "gain": self.gain_.as_dict(),
                "psi_shape": self.psi_table_.shape,
            },
        }
        if "experimental" in self.intervals_ and "combined" in self.intervals_:
            w_exp = self.intervals_["experimental"].width()
            w_comb = self.intervals_["combined"].width()
            report["width_reduction_pct"] = (
                100.0 * (w_exp - w_comb) / w_exp if w_exp > 0 else 0.0
            )
        if spec.family in ("fraction-benefit", "fraction-harmed"):
            report["diagnostics"]["tie_note"] = (
                "on a discrete grid the benefit and harm shares need not sum "
                "to one: mass can sit exactly on y1 = y0"
            )
            report["complement"] = self._complement_intervals(spec, opts)
        return report

    def _complement_intervals(self, spec: PsiSpec, opts: ConstraintOptions) -> dict:
        """The mirrored fraction family, reported alongside for tie awareness."""
        other = "fraction-harmed" if spec.family == "fraction-benefit" else "fraction-benefit"
        mirror = PsiSpec(family=other, population=spec.population)
        table = materialize_psi(
            mirror, self.nuisances_, self.system_.grid.points, self.system_.grid.points
        )
        out = {}
        for name, interval in self.intervals_.items():
            regime = REGIME_COMBINED if name == "combined" else REGIME_EXPERIMENTAL
            if interval.regime.endswith("lp"):
                res = sharp_bounds_lp(
                    self.system_, table, self.weights_, opts=opts, regime=regime, var_cap=self.var_cap
                )
            else:
                res = phi_indicator_bounds(self.system_, table, self.weights_, regime=regime)
            out[name] = {"family": other, "lower": res.lower, "upper": res.upper}
        return out
