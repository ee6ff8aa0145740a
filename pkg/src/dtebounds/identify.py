"""Identification of self-selection-conditional outcome distributions.

The self-selection variable S is the treatment an individual would choose
when free to choose.  It is observed in the self-selection arm (S = D there)
and latent in the randomized arm.  Combining the two arms identifies, per
covariate cell x:

* p(x) = P(S=1 | x), the share choosing treatment among the obs arm;
* F_{Y_d | S=s, x} for all four (d, s) pairs.  The d = s curves are plain
  stratum ECDFs from the obs arm.  The d != s curves are counterfactual and
  come from inverting the mixture
  F_{Y_d | x} = P(S=d|x) F_{Y_d|S=d,x} + P(S=s|x) F_{Y_d|S=s,x},
  where the left side is the randomized-arm ECDF.

The raw inversion need not be a CDF in finite samples.  It is repaired by
clipping to [0, 1], monotone rearrangement (sorting the value sequence), and
forcing the terminal value to 1; the sup-norm size of the repair is logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import EXP, OBS, Dataset, OutcomeGrid, StepCdf, snap_to_grid, validate_overlap
from .errors import DataError, OverlapError


@dataclass(frozen=True)
class SelectionProbabilities:
    """P(S=1 | x) per covariate cell."""

    p1_given_x: Mapping[str, float]

    def p(self, s: int, x: str) -> float:
        p1 = self.p1_given_x[x]
        return p1 if s == 1 else 1.0 - p1


@dataclass(frozen=True)
class RepairEvent:
    x: str
    d: int
    s: int
    sup_change: float

    def as_dict(self) -> dict:
        return {"x": self.x, "d": self.d, "s": self.s, "sup_change": self.sup_change}


@dataclass(frozen=True)
class IdentifiedCdfSystem:
    """All identified outcome distributions on one shared grid.

    ``conditional[(d, s, x)]`` holds F_{Y_d | S=s, X=x}; ``marginal[(d, x)]``
    holds the randomized-arm F_{Y_d | X=x}.  ``cell_probs`` carries P(X=x)
    and ``arm_cell_probs[g]`` the per-arm cell frequencies P(X=x | G=g).
    """

    grid: OutcomeGrid
    cells: tuple[str, ...]
    cell_probs: Mapping[str, float]
    selection: SelectionProbabilities
    conditional: Mapping[tuple[int, int, str], StepCdf]
    marginal: Mapping[tuple[int, str], StepCdf]
    arm_cell_probs: Mapping[str, Mapping[str, float]]
    repair_log: tuple[RepairEvent, ...] = ()
    mixture_residuals: Mapping[tuple[int, str], float] = field(default_factory=dict)

    def mass(self, s: int, x: str) -> float:
        """P(S=s, X=x)."""
        return self.selection.p(s, x) * self.cell_probs[x]

    def combined_cells(self) -> list[tuple[int, str]]:
        """(s, x) cells with positive mass, in fixed deterministic order."""
        return [(s, x) for x in self.cells for s in (0, 1) if self.mass(s, x) > 0]

    def max_repair(self) -> float:
        return max((e.sup_change for e in self.repair_log), default=0.0)

    def max_mixture_residual(self) -> float:
        return max(self.mixture_residuals.values(), default=0.0)


@dataclass(frozen=True)
class MarginSet:
    """Joint pmfs f_{Y_d, S, X} on the shared grid, one array per d.

    ``pmf[d]`` has shape (n_grid, 2, n_cells) and sums to one.
    """

    grid: OutcomeGrid
    cells: tuple[str, ...]
    pmf: Mapping[int, np.ndarray]
    mass_sx: np.ndarray  # shape (2, n_cells): P(S=s, X=x)

    def __post_init__(self):
        for d in (0, 1):
            total = float(np.sum(self.pmf[d]))
            if abs(total - 1.0) > 1e-9:
                raise DataError(f"margin pmf for d={d} sums to {total!r}, not 1")


def selection_prob(ds: Dataset, x: str) -> float:
    """Weighted share of d=1 among self-selection-arm records in cell x."""
    m = ds.mask(g=OBS, x=x)
    total = float(np.sum(ds.w[m]))
    if total <= 0:
        raise OverlapError(f"cell {x!r} has no self-selection-arm records")
    return float(np.sum(ds.w[m & (ds.d == 1)])) / total


def _repair_cdf(raw: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip to [0,1], sort (monotone rearrangement), force terminal value 1."""
    fixed = np.clip(raw, 0.0, 1.0)
    fixed = np.sort(fixed)
    fixed[-1] = 1.0
    return fixed, float(np.max(np.abs(fixed - raw)))


def cdf_given_selection(ds: Dataset, d: int, s: int, x: str, grid: OutcomeGrid) -> StepCdf:
    """F_{Y_d | S=s, X=x} on ``grid`` (repaired when counterfactual)."""
    cdf, _ = _cdf_given_selection(ds, d, s, x, grid)
    return cdf


def _cdf_given_selection(
    ds: Dataset, d: int, s: int, x: str, grid: OutcomeGrid
) -> tuple[StepCdf, RepairEvent | None]:
    if d == s:
        m = ds.mask(d=s, g=OBS, x=x)
        if not np.any(m):
            raise OverlapError(f"cell {x!r} has no (d={s}, g=obs) records")
        return StepCdf.from_weighted(ds.y[m], ds.w[m], grid), None
    p_d = selection_prob(ds, x) if d == 1 else 1.0 - selection_prob(ds, x)
    p_s = 1.0 - p_d
    if p_s <= 0:
        raise OverlapError(
            f"cell {x!r}: P(D={s} | obs) is zero, counterfactual curve undefined"
        )
    m_exp = ds.mask(d=d, g=EXP, x=x)
    m_obs = ds.mask(d=d, g=OBS, x=x)
    if not np.any(m_exp) or not np.any(m_obs):
        raise OverlapError(f"cell {x!r} lacks d={d} records in one arm")
    f_exp = StepCdf.from_weighted(ds.y[m_exp], ds.w[m_exp], grid).values
    f_obs = StepCdf.from_weighted(ds.y[m_obs], ds.w[m_obs], grid).values
    raw = (f_exp - p_d * f_obs) / p_s
    fixed, sup_change = _repair_cdf(raw)
    event = RepairEvent(x=x, d=d, s=s, sup_change=sup_change) if sup_change > 1e-12 else None
    return StepCdf(grid, fixed), event


def identify_system(ds: Dataset, grid: OutcomeGrid | None = None) -> IdentifiedCdfSystem:
    """Identify all conditional CDFs, selection probabilities, and diagnostics.

    Requires overlap: every cell must have records in all four (d, g) strata.
    All curves are evaluated on one shared grid (default: the union of
    observed outcomes) so mixture arithmetic subtracts commensurable steps.
    """
    report = validate_overlap(ds)
    if not report.passed:
        raise OverlapError(f"overlap failed in cells: {sorted({f[0] for f in report.failing})}")
    if grid is None:
        grid = OutcomeGrid(np.unique(ds.y))
    elif not set(np.unique(ds.y)) <= set(grid.points):
        # binned grid policy: discretize outcomes onto the representatives
        snapped = snap_to_grid(ds.y, grid)
        ds = Dataset(
            y=snapped, d=ds.d, g=ds.g, x=ds.x, w=ds.w,
            covariate_cells=ds.covariate_cells, x_marginal=ds.x_marginal,
        )

    p1 = {x: selection_prob(ds, x) for x in ds.covariate_cells}
    selection = SelectionProbabilities(p1_given_x=p1)
    conditional: dict[tuple[int, int, str], StepCdf] = {}
    marginal: dict[tuple[int, str], StepCdf] = {}
    repair_log: list[RepairEvent] = []
    residuals: dict[tuple[int, str], float] = {}

    for x in ds.covariate_cells:
        for d in (0, 1):
            m = ds.mask(d=d, g=EXP, x=x)
            marginal[(d, x)] = StepCdf.from_weighted(ds.y[m], ds.w[m], grid)
        for d in (0, 1):
            for s in (0, 1):
                cdf, event = _cdf_given_selection(ds, d, s, x, grid)
                conditional[(d, s, x)] = cdf
                if event is not None:
                    repair_log.append(event)
        for d in (0, 1):
            mix = p1[x] * conditional[(d, 1, x)].values + (1 - p1[x]) * conditional[(d, 0, x)].values
            residuals[(d, x)] = float(np.max(np.abs(mix - marginal[(d, x)].values)))

    return IdentifiedCdfSystem(
        grid=grid,
        cells=ds.covariate_cells,
        cell_probs=ds.cell_probs(),
        selection=selection,
        conditional=conditional,
        marginal=marginal,
        arm_cell_probs={EXP: ds.cell_probs_in_arm(EXP), OBS: ds.cell_probs_in_arm(OBS)},
        repair_log=tuple(repair_log),
        mixture_residuals=residuals,
    )


def margins_pmf(system: IdentifiedCdfSystem) -> MarginSet:
    """Joint pmfs f_{Y_d, S, X} obtained by differencing the conditional CDFs."""
    n = len(system.grid)
    cells = system.cells
    mass_sx = np.zeros((2, len(cells)))
    pmf = {d: np.zeros((n, 2, len(cells))) for d in (0, 1)}
    for xi, x in enumerate(cells):
        for s in (0, 1):
            m = system.mass(s, x)
            mass_sx[s, xi] = m
            if m <= 0:
                continue
            for d in (0, 1):
                p = system.conditional[(d, s, x)].pmf()
                # differencing a cumulative curve turns exact zeros into
                # roundoff dust; drop it so support stays honest
                p[p < 1e-14] = 0.0
                pmf[d][:, s, xi] = p * m
    return MarginSet(grid=system.grid, cells=cells, pmf=pmf, mass_sx=mass_sx)
