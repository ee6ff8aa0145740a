"""Target-parameter specifications and their grid materializations.

A target parameter is an expectation E[psi(Y1, Y0)] over the joint law of the
two potential outcomes, restricted to a target population.  ``materialize_psi``
turns a family spec into a value matrix on a grid pair together with a shape
classification that decides which bounding engine applies:

* super-/sub-modular tables use quantile-coupling bounds,
* monotone 0/1 indicator tables use indicator-event (sup/inf) bounds,
* anything else goes through the linear program.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import EXP, OBS, Dataset
from .errors import DataError, ValidationError
from .identify import IdentifiedCdfSystem

SUPER_MODULAR = "super-modular"
SUB_MODULAR = "sub-modular"
PHI_INDICATOR = "phi-indicator"
GENERAL = "general"

_SHAPE_TOL = 1e-9

FAMILIES = (
    "fraction-benefit",
    "fraction-harmed",
    "te-cdf",
    "ate-disadv",
    "upward",
    "correlation",
    "custom",
)


@dataclass(frozen=True)
class Population:
    """Target subpopulation: everyone, one selection type, one cell, or one arm."""

    kind: str = "all"  # all | selection | cell | group
    s: int | None = None
    x: str | None = None
    g: str | None = None

    def __post_init__(self):
        if self.kind not in ("all", "selection", "cell", "group"):
            raise ValidationError(f"unknown population kind {self.kind!r}")
        if self.kind == "selection" and self.s not in (0, 1):
            raise ValidationError("selection population needs s in {0, 1}")
        if self.kind == "cell" and not self.x:
            raise ValidationError("cell population needs a cell label")
        if self.kind == "group" and self.g not in (EXP, OBS):
            raise ValidationError(f"group population needs g in {{{EXP!r}, {OBS!r}}}")

    def label(self) -> str:
        return {
            "all": "all",
            "selection": f"s={self.s}",
            "cell": f"x={self.x}",
            "group": f"g={self.g}",
        }[self.kind]


@dataclass(frozen=True)
class PsiSpec:
    """One parameter family plus its target population."""

    family: str
    delta: float | None = None
    c: float | None = None
    table: np.ndarray | None = None
    population: Population = Population()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.family == "te-cdf":
            if self.delta is None or not np.isfinite(self.delta):
                raise ValidationError("te-cdf needs a finite delta")
        if self.family in ("ate-disadv", "upward"):
            if self.c is None or not np.isfinite(self.c):
                raise ValidationError(f"{self.family} needs a finite threshold c")
        if self.family == "custom" and self.table is None:
            raise ValidationError("custom family needs a value table")


@dataclass(frozen=True)
class NuisanceSet:
    """Point-identified constants estimated from the randomized arm."""

    p_y0_le_c: float | None = None
    mean_y1: float | None = None
    mean_y0: float | None = None
    var_y1: float | None = None
    var_y0: float | None = None
    p_population: float = 1.0


@dataclass(frozen=True)
class PhiIndicatorInfo:
    """Metadata for indicator tables: the event and its staircase orientation."""

    event: str  # te-cdf | benefit | harmed | custom
    delta: float | None
    orientation: tuple[bool, bool]  # (flip_y1, flip_y0) mapping the region to canonical form


@dataclass(frozen=True)
class PsiTable:
    """psi(y1, y0) materialized on a grid pair, with its shape class."""

    grid1: np.ndarray
    grid0: np.ndarray
    values: np.ndarray
    shape: str
    phi: PhiIndicatorInfo | None = None
    shape_diagnostics: Mapping[str, float] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid1), len(self.grid0)):
            raise ValidationError(
                f"psi table shape {v.shape} does not match grids "
                f"({len(self.grid1)}, {len(self.grid0)})"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("psi table contains non-finite values")
        object.__setattr__(self, "values", v)


def _adjacent_minors(values: np.ndarray) -> np.ndarray:
    """Cross increments psi(i,j) + psi(i+1,j+1) - psi(i,j+1) - psi(i+1,j)."""
    v = values
    return v[:-1, :-1] + v[1:, 1:] - v[:-1, 1:] - v[1:, :-1]


def _staircase_orientation(mask: np.ndarray) -> tuple[bool, bool] | None:
    """Axis flips that make a monotone 0/1 region lower-left closed, or None.

    A region is monotone when it is closed under moving one coordinate in a
    fixed direction; equivalently, some combination of axis flips turns it
    into a staircase anchored at the lower-left corner.
    """
    for flip1 in (False, True):
        for flip0 in (False, True):
            m = mask[:: -1 if flip1 else 1, :: -1 if flip0 else 1]
            counts = m.sum(axis=1)
            if np.any(np.diff(counts) > 0):
                continue
            # rows must be prefixes: all ones packed to the left
            ok = True
            for row, cnt in zip(m, counts):
                if cnt and not row[:cnt].all():
                    ok = False
                    break
            if ok:
                return (flip1, flip0)
    return None


def classify_shape(values: np.ndarray) -> tuple[str, dict]:
    """Classify a value matrix via its adjacent 2x2 minors and level sets.

    Adjacent minors are sufficient on a grid: any rectangle's cross increment
    is a sum of adjacent ones.  Indicator detection requires {0,1} values and
    a monotone region.  Diagnostics report the extreme minors so callers can
    judge how close a table is to strict modularity.
    """
    values = np.asarray(values, dtype=float)
    diag: dict = {}
    if values.shape[0] >= 2 and values.shape[1] >= 2:
        minors = _adjacent_minors(values)
        diag["min_minor"] = float(np.min(minors))
        diag["max_minor"] = float(np.max(minors))
        if diag["min_minor"] >= -_SHAPE_TOL:
            return SUPER_MODULAR, diag
        if diag["max_minor"] <= _SHAPE_TOL:
            return SUB_MODULAR, diag
    else:
        diag["min_minor"] = 0.0
        diag["max_minor"] = 0.0
        return SUPER_MODULAR, diag
    binary = np.all(np.abs(values - np.round(values)) <= _SHAPE_TOL) and np.all(
        (values < 0.5) | (np.abs(values - 1.0) <= _SHAPE_TOL)
    ) and np.all((values > 0.5) | (np.abs(values) <= _SHAPE_TOL))
    if binary:
        orientation = _staircase_orientation(values >= 0.5)
        if orientation is not None:
            diag["orientation"] = orientation
            return PHI_INDICATOR, diag
    return GENERAL, diag


def estimate_nuisances(ds: Dataset, spec: PsiSpec) -> NuisanceSet:
    """Estimate the constants the family needs, from the randomized arm only."""
    p_y0_le_c = mean_y1 = mean_y0 = var_y1 = var_y0 = None
    if spec.family in ("ate-disadv", "upward"):
        m = ds.mask(d=0, g=EXP)
        total = float(np.sum(ds.w[m]))
        if total <= 0:
            raise DataError("no randomized-arm control records for threshold nuisance")
        p_y0_le_c = float(np.sum(ds.w[m & (ds.y <= spec.c)])) / total
        if p_y0_le_c <= 0:
            raise ValidationError(
                f"P(Y0 <= {spec.c}) is estimated as zero; the family divides by it"
            )
    if spec.family == "correlation":
        means, variances = {}, {}
        for d in (0, 1):
            m = ds.mask(d=d, g=EXP)
            total = float(np.sum(ds.w[m]))
            if total <= 0:
                raise DataError(f"no randomized-arm d={d} records for moment nuisances")
            mu = float(np.sum(ds.w[m] * ds.y[m])) / total
            means[d] = mu
            variances[d] = float(np.sum(ds.w[m] * (ds.y[m] - mu) ** 2)) / total
            if variances[d] <= 0:
                raise ValidationError(f"Var(Y{d}) is estimated as zero; correlation undefined")
        mean_y1, mean_y0 = means[1], means[0]
        var_y1, var_y0 = variances[1], variances[0]

    pop = spec.population
    total_w = float(np.sum(ds.w))
    if pop.kind == "all":
        p_pop = 1.0
    elif pop.kind == "selection":
        p_pop = float(np.sum(ds.w[ds.mask(d=pop.s, g=OBS)])) / total_w
    elif pop.kind == "cell":
        p_pop = ds.cell_probs().get(pop.x, 0.0)
    else:
        p_pop = float(np.sum(ds.w[ds.mask(g=pop.g)])) / total_w
    if p_pop <= 0:
        raise ValidationError(f"target population {pop.label()!r} has zero probability")
    return NuisanceSet(
        p_y0_le_c=p_y0_le_c,
        mean_y1=mean_y1,
        mean_y0=mean_y0,
        var_y1=var_y1,
        var_y0=var_y0,
        p_population=p_pop,
    )


def difference_event_mask(grid1: np.ndarray, grid0: np.ndarray, delta: float) -> np.ndarray:
    """Region {y1 - y0 <= delta}; one predicate shared by tables and scans."""
    return np.subtract.outer(np.asarray(grid1, float), np.asarray(grid0, float)) <= delta


def materialize_psi(
    spec: PsiSpec,
    nuis: NuisanceSet,
    grid1: np.ndarray,
    grid0: np.ndarray,
) -> PsiTable:
    """Build the psi value matrix for a family and classify its shape."""
    g1 = np.asarray(grid1, dtype=float)
    g0 = np.asarray(grid0, dtype=float)
    phi = None
    if spec.family == "fraction-benefit":
        # strict event {y1 > y0} = complement of the weak difference event at 0
        values = (~difference_event_mask(g1, g0, 0.0)).astype(float)
        shape, diag = PHI_INDICATOR, {}
        phi = PhiIndicatorInfo(event="benefit", delta=0.0, orientation=(True, False))
    elif spec.family == "fraction-harmed":
        values = np.less.outer(g1, g0).astype(float)
        shape, diag = PHI_INDICATOR, {}
        phi = PhiIndicatorInfo(event="harmed", delta=0.0, orientation=(False, True))
    elif spec.family == "te-cdf":
        values = difference_event_mask(g1, g0, spec.delta).astype(float)
        shape, diag = PHI_INDICATOR, {}
        phi = PhiIndicatorInfo(event="te-cdf", delta=spec.delta, orientation=(False, True))
    elif spec.family == "ate-disadv":
        if nuis.p_y0_le_c is None:
            raise ValidationError("ate-disadv needs the P(Y0 <= c) nuisance")
        values = np.subtract.outer(g1, g0) * (g0 <= spec.c)[None, :] / nuis.p_y0_le_c
        shape, diag = classify_shape(values)
    elif spec.family == "upward":
        if nuis.p_y0_le_c is None:
            raise ValidationError("upward needs the P(Y0 <= c) nuisance")
        values = np.outer(g1 > spec.c, g0 <= spec.c).astype(float) / nuis.p_y0_le_c
        shape, diag = classify_shape(values)
    elif spec.family == "correlation":
        if nuis.var_y1 is None or nuis.var_y0 is None:
            raise ValidationError("correlation needs moment nuisances")
        scale = float(np.sqrt(nuis.var_y1 * nuis.var_y0))
        values = np.outer(g1 - nuis.mean_y1, g0 - nuis.mean_y0) / scale
        shape, diag = SUPER_MODULAR, {}
    elif spec.family == "custom":
        values = np.asarray(spec.table, dtype=float)
        if values.shape != (len(g1), len(g0)):
            raise ValidationError(
                f"custom table shape {values.shape} does not match grids "
                f"({len(g1)}, {len(g0)})"
            )
        shape, diag = classify_shape(values)
    else:  # pragma: no cover - guarded by PsiSpec validation
        raise ValidationError(f"unknown family {spec.family!r}")

    if shape == PHI_INDICATOR and phi is None:
        orientation = diag.get("orientation")
        if orientation is None:
            orientation = _staircase_orientation(values >= 0.5) or (False, False)
        phi = PhiIndicatorInfo(event="custom", delta=None, orientation=orientation)
    return PsiTable(grid1=g1, grid0=g0, values=values, shape=shape, phi=phi, shape_diagnostics=diag)


@dataclass(frozen=True)
class PopulationWeights:
    """Normalized cell weights for aggregating per-cell bounds.

    ``combined`` assigns weight to each (s, x) cell; ``experimental`` to each
    x cell, or None when the population conditions on the latent S and is
    therefore out of reach of the randomized arm alone.
    """

    combined: Mapping[tuple[int, str], float]
    experimental: Mapping[str, float] | None
    normalizer: float


def population_weight(population: Population, system: IdentifiedCdfSystem) -> PopulationWeights:
    """Cell weights P(S=s, X=x | population), normalized to sum to one."""
    raw: dict[tuple[int, str], float] = {}
    for x in system.cells:
        for s in (0, 1):
            m = system.mass(s, x)
            if population.kind == "all":
                raw[(s, x)] = m
            elif population.kind == "selection":
                raw[(s, x)] = m if s == population.s else 0.0
            elif population.kind == "cell":
                raw[(s, x)] = system.selection.p(s, x) if x == population.x else 0.0
            else:  # group: reweight cells to the arm's covariate distribution
                raw[(s, x)] = system.selection.p(s, x) * system.arm_cell_probs[population.g][x]
    normalizer = sum(raw.values())
    if normalizer <= 0:
        raise ValidationError(f"population {population.label()!r} has zero probability")
    combined = {k: v / normalizer for k, v in raw.items()}
    experimental: dict[str, float] | None
    if population.kind == "selection":
        experimental = None
    else:
        experimental = {}
        for x in system.cells:
            experimental[x] = combined[(0, x)] + combined[(1, x)]
    return PopulationWeights(combined=combined, experimental=experimental, normalizer=normalizer)


def parse_psi(text: str, custom_loader=None) -> PsiSpec:
    """Parse a CLI-style family token, e.g. 'te-cdf:0.5' or 'upward:50'."""
    head, _, arg = text.partition(":")
    head = head.strip().lower()
    if head in ("fraction-benefit", "fraction-harmed", "correlation"):
        if arg:
            raise ValidationError(f"family {head!r} takes no argument")
        return PsiSpec(family=head)
    if head == "te-cdf":
        try:
            return PsiSpec(family=head, delta=float(arg))
        except ValueError:
            raise ValidationError(f"te-cdf needs a numeric delta, got {arg!r}") from None
    if head in ("ate-disadv", "upward"):
        try:
            return PsiSpec(family=head, c=float(arg))
        except ValueError:
            raise ValidationError(f"{head} needs a numeric threshold, got {arg!r}") from None
    if head == "custom":
        if custom_loader is None:
            raise ValidationError("custom psi tables need a file loader")
        return PsiSpec(family="custom", table=custom_loader(arg))
    raise ValidationError(f"unknown psi spec {text!r}")


def parse_population(text: str) -> Population:
    """Parse a CLI-style population token: all | s=0|1 | x=<label> | g=exp|obs."""
    t = text.strip()
    if t.lower() == "all":
        return Population()
    key, _, val = t.partition("=")
    key = key.strip().lower()
    if key == "s":
        if val not in ("0", "1"):
            raise ValidationError(f"population s= needs 0 or 1, got {val!r}")
        return Population(kind="selection", s=int(val))
    if key == "x":
        return Population(kind="cell", x=val.strip())
    if key == "g":
        return Population(kind="group", g=val.strip().lower())
    raise ValidationError(f"unknown population spec {text!r}")
