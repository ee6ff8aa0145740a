"""Sharp bounds by linear programming over the joint-pmf polytope.

Variables are the joint probabilities f(y1, y0, s, x) on the grid product,
pruned to the support of the identified margins.  The base program fixes both
margin pmfs f_{Y_d, S, X} and maximizes/minimizes the weighted expectation of
the target table.  Two optional restriction families add inequality rows:

* ``msi``: within every (s, x) cell, each potential outcome is stochastically
  nondecreasing in the other.  Scaled cumulative rows compare adjacent
  conditioning outcomes; the denominators are the fixed identified margins,
  which the margin equalities make exact.
* ``grm``: within every x cell, the treatment-effect survival function under
  self-selected treatment dominates the one under self-selected control,
  at every attainable effect threshold.

The embedded solver is a dense two-phase simplex with Bland's anti-cycling
rule: deterministic, dependency-free, and adequate for the grid sizes this
package targets.  Optimality is certified by nonnegative reduced costs plus
an explicit primal/dual objective comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import warnings

import numpy as np
from scipy.linalg import lu_factor as scipy_lu_factor, lu_solve as scipy_lu_solve

from .analytic import (
    REGIME_COMBINED,
    REGIME_COMBINED_LP,
    REGIME_EXPERIMENTAL,
    BoundsInterval,
    phi_indicator_bounds,
    supermodular_bounds,
)
from .data import OutcomeGrid
from .errors import InfeasibleModelError, SolverError, ValidationError
from .estimands import PHI_INDICATOR, SUB_MODULAR, SUPER_MODULAR, PopulationWeights, PsiTable
from .identify import IdentifiedCdfSystem, MarginSet, margins_pmf

_PIVOT_TOL = 1e-11
_ENTER_TOL = 1e-9
_FEAS_TOL = 1e-9
_COND_FLOOR = 1e-12  # conditioning masses below this are treated as zero

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class ConstraintOptions:
    msi: bool = False
    grm: bool = False

    def label(self) -> str:
        parts = [name for name, on in (("msi", self.msi), ("grm", self.grm)) if on]
        return "+".join(parts) if parts else "none"


@dataclass(frozen=True)
class LpProblem:
    """A dense LP: optimize objective @ f subject to eq rows, ge rows, and box bounds."""

    objective: np.ndarray
    eq: np.ndarray
    eq_rhs: np.ndarray
    ge: np.ndarray  # ge @ f >= ge_rhs
    ge_rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    direction: str  # "min" | "max"
    var_index: tuple = ()
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        n = self.objective.size
        for name, arr, rhs in (("eq", self.eq, self.eq_rhs), ("ge", self.ge, self.ge_rhs)):
            if arr.shape != (rhs.size, n):
                raise ValidationError(f"{name} rows do not match the variable dimension")
            if not np.all(np.isfinite(rhs)):
                raise ValidationError(f"{name} right-hand sides must be finite")
        if self.direction not in ("min", "max"):
            raise ValidationError(f"direction must be min or max, got {self.direction!r}")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def permuted(self, order: np.ndarray) -> "LpProblem":
        """The same program with columns reordered (for self-consistency checks)."""
        return LpProblem(
            objective=self.objective[order],
            eq=self.eq[:, order],
            eq_rhs=self.eq_rhs,
            ge=self.ge[:, order],
            ge_rhs=self.ge_rhs,
            lb=self.lb[order],
            ub=self.ub[order],
            direction=self.direction,
            var_index=tuple(self.var_index[i] for i in order) if self.var_index else (),
            meta=self.meta,
        )

    def dump(self) -> str:
        """Plain-text fixed layout for diffing against other solvers."""

        def fmt(vec) -> str:
            return " ".join("%.17g" % v for v in vec)

        lines = [
            "dtebounds-lp v1",
            f"direction {self.direction}",
            f"vars {self.n_vars}",
            "objective",
            fmt(self.objective),
            f"eq {self.eq_rhs.size}",
        ]
        for row, rhs in zip(self.eq, self.eq_rhs):
            lines.append(f"{fmt(row)} | %.17g" % rhs)
        lines.append(f"ge {self.ge_rhs.size}")
        for row, rhs in zip(self.ge, self.ge_rhs):
            lines.append(f"{fmt(row)} | %.17g" % rhs)
        lines.append("bounds")
        lines.append(fmt(self.lb))
        lines.append(fmt(self.ub))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SolveReport:
    status: str
    value: float
    primal: np.ndarray | None
    residuals: float
    iterations: int
    duality_gap: float

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "value": self.value,
            "residuals": self.residuals,
            "iterations": self.iterations,
            "duality_gap": self.duality_gap,
        }


def build_lp(
    margins: MarginSet,
    psi: PsiTable,
    opts: ConstraintOptions = ConstraintOptions(),
    direction: str = "min",
    cell_multipliers: Mapping[tuple[int, str], float] | None = None,
    var_cap: int = 250_000,
) -> LpProblem:
    """Assemble the joint-pmf program for one optimization direction.

    Margin equalities are imposed pmf-level, one row per (grid point, s, x)
    over the full shared grid; variables exist only where both margins carry
    mass.  Population weighting enters the objective as per-cell multipliers,
    never the constraints.
    """
    grid = margins.grid.points
    n = grid.size
    cells = margins.cells
    pmf1, pmf0 = margins.pmf[1], margins.pmf[0]
    if psi.values.shape != (n, n):
        raise ValidationError("psi table must live on the shared margin grid")

    marg1 = pmf1.sum(axis=0)
    marg0 = pmf0.sum(axis=0)
    if float(np.max(np.abs(marg1 - marg0))) > 1e-9:
        raise ValidationError("the two margin pmfs disagree on the implied (s, x) marginal")

    # variable layout: cell-major (x, then s), then y1-support-major
    var_index: list[tuple[int, int, int, str]] = []
    var_pos: dict[tuple[int, int, int], int] = {}
    support1: dict[tuple[int, int], np.ndarray] = {}
    support0: dict[tuple[int, int], np.ndarray] = {}
    for xi, x in enumerate(cells):
        for s in (0, 1):
            if marg1[s, xi] <= 0:
                continue
            s1 = np.flatnonzero(pmf1[:, s, xi] > 0)
            s0 = np.flatnonzero(pmf0[:, s, xi] > 0)
            support1[(s, xi)] = s1
            support0[(s, xi)] = s0
            for i1 in s1:
                for i0 in s0:
                    var_pos[(int(i1), int(i0), 2 * xi + s)] = len(var_index)
                    var_index.append((int(i1), int(i0), s, x))
    nv = len(var_index)
    if nv == 0:
        raise ValidationError("no variables: margins carry no mass")
    if nv > var_cap:
        raise ValidationError(
            f"{nv} joint-pmf variables exceed the cap of {var_cap}; use a coarser grid"
        )

    objective = np.zeros(nv)
    for pos, (i1, i0, s, x) in enumerate(var_index):
        lam = 1.0 if cell_multipliers is None else cell_multipliers.get((s, x), 0.0)
        objective[pos] = psi.values[i1, i0] * lam

    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    eq_rows.append(np.ones(nv))
    eq_rhs.append(1.0)
    for d in (1, 0):
        pmf_d = pmf1 if d == 1 else pmf0
        for xi, x in enumerate(cells):
            for s in (0, 1):
                if marg1[s, xi] <= 0:
                    continue
                for yi in range(n):
                    row = np.zeros(nv)
                    if d == 1:
                        if yi in support1[(s, xi)]:
                            for i0 in support0[(s, xi)]:
                                row[var_pos[(yi, int(i0), 2 * xi + s)]] = 1.0
                    else:
                        if yi in support0[(s, xi)]:
                            for i1 in support1[(s, xi)]:
                                row[var_pos[(int(i1), yi, 2 * xi + s)]] = 1.0
                    eq_rows.append(row)
                    eq_rhs.append(float(pmf_d[yi, s, xi]))

    ge_rows: list[np.ndarray] = []
    ge_rhs: list[float] = []
    skipped = {"msi_zero_mass": 0, "grm_zero_mass": 0}

    if opts.msi:
        for xi, x in enumerate(cells):
            for s in (0, 1):
                if marg1[s, xi] <= 0:
                    skipped["msi_zero_mass"] += 1
                    continue
                for d, dprime in ((1, 0), (0, 1)):
                    pmf_dp = pmf1 if dprime == 1 else pmf0
                    sup_d = support1[(s, xi)] if d == 1 else support0[(s, xi)]
                    sup_all = support1[(s, xi)] if dprime == 1 else support0[(s, xi)]
                    # conditioning on numerically-zero-mass outcomes carries
                    # no content and would blow up the scaled coefficients
                    sup_dp = sup_all[pmf_dp[sup_all, s, xi] >= _COND_FLOOR]
                    if sup_dp.size < len(sup_all):
                        skipped["msi_zero_mass"] += len(sup_all) - sup_dp.size
                    # adjacent conditioning pairs chain to all pairs;
                    # the top t point is vacuous (both sides equal one)
                    for a, b in zip(sup_dp[:-1], sup_dp[1:]):
                        m_a = float(pmf_dp[a, s, xi])
                        m_b = float(pmf_dp[b, s, xi])
                        for t in sup_d[:-1]:
                            row = np.zeros(nv)
                            for yd in sup_d[sup_d <= t]:
                                if d == 1:
                                    row[var_pos[(int(yd), int(a), 2 * xi + s)]] += 1.0 / m_a
                                    row[var_pos[(int(yd), int(b), 2 * xi + s)]] -= 1.0 / m_b
                                else:
                                    row[var_pos[(int(a), int(yd), 2 * xi + s)]] += 1.0 / m_a
                                    row[var_pos[(int(b), int(yd), 2 * xi + s)]] -= 1.0 / m_b
                            ge_rows.append(row)
                            ge_rhs.append(0.0)

    if opts.grm:
        for xi, x in enumerate(cells):
            m1 = float(marg1[1, xi])
            m0 = float(marg1[0, xi])
            if m1 < _COND_FLOOR or m0 < _COND_FLOOR:
                skipped["grm_zero_mass"] += 1
                continue
            diffs = set()
            for s in (0, 1):
                for i1 in support1[(s, xi)]:
                    for i0 in support0[(s, xi)]:
                        diffs.add(float(grid[i1] - grid[i0]))
            thresholds = sorted(diffs)
            sentinel = thresholds[0] - 1.0
            for c in [sentinel] + thresholds[:-1]:
                row = np.zeros(nv)
                for s, scale in ((1, 1.0 / m1), (0, -1.0 / m0)):
                    for i1 in support1[(s, xi)]:
                        for i0 in support0[(s, xi)]:
                            if grid[i1] - grid[i0] > c:
                                row[var_pos[(int(i1), int(i0), 2 * xi + s)]] += scale
                if np.any(row != 0.0):
                    ge_rows.append(row)
                    ge_rhs.append(0.0)

    return LpProblem(
        objective=objective,
        eq=np.array(eq_rows) if eq_rows else np.zeros((0, nv)),
        eq_rhs=np.array(eq_rhs),
        ge=np.array(ge_rows) if ge_rows else np.zeros((0, nv)),
        ge_rhs=np.array(ge_rhs),
        lb=np.zeros(nv),
        ub=np.ones(nv),
        direction=direction,
        var_index=tuple(var_index),
        meta={"skipped": skipped, "options": opts.label()},
    )


def _upper_bounds_implied(problem: LpProblem) -> bool:
    """True when some all-ones equality row caps every variable below its ub."""
    if not np.all(np.isfinite(problem.ub)):
        return False
    for row, rhs in zip(problem.eq, problem.eq_rhs):
        if np.all(row == 1.0) and rhs <= float(np.min(problem.ub)) + 1e-15:
            return True
    return False


class _Restart(Exception):
    """Internal signal: numerical corruption detected, retry more conservatively."""


class _Factor:
    """Basis representation: an LU factorization plus product-form updates."""

    def __init__(self, B: np.ndarray):
        with warnings.catch_warnings():
            # scipy warns (rather than raises) on exactly singular input
            warnings.simplefilter("ignore")
            self.lu = scipy_lu_factor(B)
        if float(np.min(np.abs(np.diag(self.lu[0])))) == 0.0:
            raise _Restart
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = scipy_lu_solve(self.lu, v)
        for r, w in self.etas:
            t = x[r] / w[r]
            x = x - w * t
            x[r] = t
        return x

    def btran(self, u: np.ndarray) -> np.ndarray:
        y = u.astype(float).copy()
        for r, w in reversed(self.etas):
            y[r] = (y[r] - (y @ w - y[r] * w[r])) / w[r]
        return scipy_lu_solve(self.lu, y, trans=1)

    def update(self, r: int, w: np.ndarray) -> None:
        self.etas.append((r, w))


def solve_lp(problem: LpProblem, iteration_factor: int = 50) -> SolveReport:
    """Two-phase revised simplex with product-form basis updates.

    Dantzig pricing with a Bland anti-cycling fallback; the basis is
    refactorized periodically and every terminal verdict is confirmed on a
    freshly factorized basis.  Any numerical corruption (singular or
    inaccurate basis, negative basics) triggers a deterministic restart with
    per-pivot refactorization.  Optimality is certified by nonnegative
    reduced costs together with an explicit primal/dual objective comparison
    on the standardized system.
    """
    if np.any(problem.lb != 0):
        raise SolverError("the embedded solver requires zero lower bounds")
    nv = problem.n_vars
    c_orig = problem.objective.astype(float)
    c_min = -c_orig if problem.direction == "max" else c_orig.copy()

    coefs: list[np.ndarray] = []
    rhss: list[float] = []
    kinds: list[str] = []

    def add_row(coef: np.ndarray, rhs: float, kind: str) -> None:
        # equilibrate rows and normalize to nonnegative right-hand sides
        scale = float(np.max(np.abs(coef)))
        if scale > 0:
            coef, rhs = coef / scale, rhs / scale
        if rhs < 0:
            coef, rhs = -coef, -rhs
            kind = {"ge": "le", "le": "ge", "eq": "eq"}[kind]
        coefs.append(coef)
        rhss.append(rhs)
        kinds.append(kind)

    for row, rhs in zip(problem.eq, problem.eq_rhs):
        add_row(row.astype(float), float(rhs), "eq")
    for row, rhs in zip(problem.ge, problem.ge_rhs):
        add_row(row.astype(float), float(rhs), "ge")
    if not _upper_bounds_implied(problem):
        for i in range(nv):
            if np.isfinite(problem.ub[i]):
                e = np.zeros(nv)
                e[i] = 1.0
                add_row(e, float(problem.ub[i]), "le")

    m0 = len(coefs)
    if m0 == 0:
        raise SolverError("the program has no constraint rows")
    n_ge = kinds.count("ge")
    n_le = kinds.count("le")
    n_art = kinds.count("eq") + kinds.count("ge")
    ncols0 = nv + n_ge + n_le + n_art
    A0 = np.zeros((m0, ncols0))
    b0 = np.array(rhss, dtype=float)
    basis0 = np.full(m0, -1, dtype=int)
    art_mask0 = np.zeros(ncols0, dtype=bool)
    surplus_at, slack_at, art_at = nv, nv + n_ge, nv + n_ge + n_le
    for i, (coef, kind) in enumerate(zip(coefs, kinds)):
        A0[i, :nv] = coef
        if kind == "ge":
            A0[i, surplus_at] = -1.0
            surplus_at += 1
        if kind == "le":
            A0[i, slack_at] = 1.0
            basis0[i] = slack_at
            slack_at += 1
        if kind in ("eq", "ge"):
            A0[i, art_at] = 1.0
            basis0[i] = art_at
            art_mask0[art_at] = True
            art_at += 1

    cap = iteration_factor * (m0 + ncols0)
    iterations = 0

    def report(status: str, x: np.ndarray | None, gap: float) -> SolveReport:
        if x is None:
            return SolveReport(status, float("nan"), None, float("nan"), iterations, float("nan"))
        res = 0.0
        if problem.eq_rhs.size:
            res = max(res, float(np.max(np.abs(problem.eq @ x - problem.eq_rhs))))
        if problem.ge_rhs.size:
            res = max(res, float(np.max(np.maximum(problem.ge_rhs - problem.ge @ x, 0.0))))
        res = max(res, float(np.max(np.maximum(-x, 0.0), initial=0.0)))
        res = max(res, float(np.max(np.maximum(x - problem.ub, 0.0), initial=0.0)))
        return SolveReport(status, float(c_orig @ x), x, res, iterations, gap)

    def attempt(refactor_every: int, min_pivot: float) -> SolveReport:
        nonlocal iterations
        iterations = 0
        A = A0.copy()
        b = b0.copy()
        basis = basis0.copy()
        art_mask = art_mask0.copy()
        m, ncols = A.shape

        def refactor() -> tuple[_Factor, np.ndarray]:
            try:
                factor = _Factor(A[:, basis])
            except (np.linalg.LinAlgError, ValueError):
                raise _Restart from None
            xb = factor.ftran(b)
            err = float(np.max(np.abs(A[:, basis] @ xb - b)))
            if not err <= 1e-7:  # also catches NaN from a near-singular factor
                raise _Restart
            if not float(np.min(xb)) >= -1e-7:
                raise _Restart  # infeasible basics: ratio-test drift
            np.clip(xb, 0.0, None, out=xb)
            return factor, xb

        def run_phase(cost: np.ndarray, barred: np.ndarray) -> tuple[str, _Factor, np.ndarray]:
            nonlocal iterations
            barred = barred.copy()
            factor, xb = refactor()
            stall = 0
            stall_limit = max(20, m)
            while True:
                if iterations >= cap:
                    return STATUS_ITERATION_LIMIT, factor, xb
                fresh = not factor.etas
                y = factor.btran(cost[basis])
                reduced = cost - y @ A
                in_basis = np.zeros(ncols, dtype=bool)
                in_basis[basis] = True
                eligible = (reduced < -_ENTER_TOL) & ~barred & ~in_basis
                if not eligible.any():
                    if fresh:
                        return "optimal", factor, xb
                    factor, xb = refactor()
                    continue
                candidates = np.flatnonzero(eligible)
                bland = stall >= stall_limit
                if not bland:
                    candidates = candidates[np.argsort(reduced[candidates], kind="stable")]
                step = None
                skipped_improving = False
                for cand in candidates:
                    w = factor.ftran(A[:, int(cand)])
                    pos = np.flatnonzero(w > min_pivot)
                    if pos.size == 0:
                        if reduced[cand] < -1e-6:
                            skipped_improving = True
                        continue
                    ratios = xb[pos] / w[pos]
                    best = float(ratios.min())
                    if bland:
                        ties = pos[np.flatnonzero(ratios <= best + 1e-15)]
                        r = int(ties[np.argmin(basis[ties])])
                    else:
                        # near-ties are admitted only while the infeasibility
                        # they induce on other basics stays negligible, and the
                        # largest pivot among them keeps the basis conditioned
                        slack = xb[pos] - best * w[pos]
                        ties = pos[np.flatnonzero(slack <= 1e-11)]
                        r = int(ties[np.argmax(w[ties])])
                    step = (r, int(cand), w)
                    break
                if step is None:
                    if not fresh:
                        factor, xb = refactor()
                        continue
                    if skipped_improving:
                        # an improving column with only noise-level entries: on
                        # a bounded program this is breakdown, not a ray
                        raise _Restart
                    return "optimal", factor, xb
                r, j, w = step
                theta = xb[r] / w[r]
                before = float(cost[basis] @ xb)
                xb = xb - w * theta
                xb[r] = theta
                np.clip(xb, 0.0, None, out=xb)
                factor.update(r, w)
                if art_mask[basis[r]]:
                    barred[basis[r]] = True  # artificials never re-enter
                basis[r] = j
                iterations += 1
                stall = stall + 1 if abs(float(cost[basis] @ xb) - before) <= 1e-12 else 0
                if len(factor.etas) >= refactor_every:
                    factor, xb = refactor()

        # phase 1: minimize the artificial total
        cost1 = np.zeros(ncols)
        cost1[art_mask] = 1.0
        status, factor, xb = run_phase(cost1, barred=np.zeros(ncols, dtype=bool))
        if status != "optimal":
            return report(status, None, float("nan"))
        if float(cost1[basis] @ xb) > _FEAS_TOL:
            return report(STATUS_INFEASIBLE, None, float("nan"))

        # drive leftover artificials out of the basis; unpivotable rows are
        # linearly dependent and are deleted together with their artificials
        drop_rows: list[int] = []
        for i in range(m):
            if art_mask[basis[i]]:
                e = np.zeros(m)
                e[i] = 1.0
                tableau_row = factor.btran(e) @ A
                entries = np.where(art_mask, 0.0, np.abs(tableau_row))
                j = int(np.argmax(entries))
                if entries[j] > 1e-6:
                    w = factor.ftran(A[:, j])
                    if abs(w[i]) <= _PIVOT_TOL:
                        raise _Restart
                    theta = xb[i] / w[i]
                    xb = xb - w * theta
                    xb[i] = theta
                    np.clip(xb, 0.0, None, out=xb)
                    factor.update(i, w)
                    basis[i] = j
                else:
                    drop_rows.append(i)
        keep_rows = np.setdiff1d(np.arange(m), drop_rows)
        keep_cols = ~art_mask
        col_map = np.cumsum(keep_cols) - 1
        A = A[np.ix_(keep_rows, keep_cols)]
        b = b[keep_rows]
        basis = col_map[basis[keep_rows]]
        m, ncols = A.shape

        # phase 2 on the cleaned system
        cost2 = np.zeros(ncols)
        cost2[:nv] = c_min
        status, factor, xb = run_phase(cost2, barred=np.zeros(ncols, dtype=bool))
        if status != "optimal":
            return report(status, None, float("nan"))

        x = np.zeros(ncols)
        x[basis] = xb
        primal = x[:nv]
        duals = factor.btran(cost2[basis])
        gap = abs(float(cost2[basis] @ xb) - float(duals @ b))
        scale = max(1.0, abs(float(cost2[basis] @ xb)))
        return report(STATUS_OPTIMAL, primal, gap / scale)

    for refactor_every, min_pivot in ((40, 1e-7), (5, 1e-7), (1, 1e-7)):
        try:
            return attempt(refactor_every=refactor_every, min_pivot=min_pivot)
        except _Restart:
            continue
    raise SolverError("simplex basis became singular even with per-pivot refactorization")


def _experimental_margins(system: IdentifiedCdfSystem) -> MarginSet:
    """Randomized-arm margins recast as a single-selection-stratum MarginSet."""
    n = len(system.grid)
    cells = system.cells
    mass_sx = np.zeros((2, len(cells)))
    pmf = {d: np.zeros((n, 2, len(cells))) for d in (0, 1)}
    for xi, x in enumerate(cells):
        px = system.cell_probs[x]
        mass_sx[1, xi] = px
        for d in (0, 1):
            pmf[d][:, 1, xi] = system.marginal[(d, x)].pmf() * px
    return MarginSet(grid=system.grid, cells=cells, pmf=pmf, mass_sx=mass_sx)


def sharp_bounds_lp(
    system: IdentifiedCdfSystem,
    psi: PsiTable,
    weights: PopulationWeights,
    opts: ConstraintOptions = ConstraintOptions(),
    regime: str = REGIME_COMBINED,
    var_cap: int = 250_000,
) -> BoundsInterval:
    """Solve both directions of the joint-pmf program and return the interval.

    With no options enabled and a table whose shape admits a closed form, the
    closed-form interval is recomputed and the discrepancy recorded.
    """
    if regime == REGIME_COMBINED:
        margins = margins_pmf(system)
        multipliers = {
            (s, x): (weights.combined[(s, x)] / system.mass(s, x)) if system.mass(s, x) > 0 else 0.0
            for x in system.cells
            for s in (0, 1)
        }
    elif regime == REGIME_EXPERIMENTAL:
        if opts.msi or opts.grm:
            raise ValidationError(
                "msi/grm restrictions condition on the selection type; "
                "they need the combined regime"
            )
        if weights.experimental is None:
            raise ValidationError(
                "this population conditions on the latent selection type; "
                "it is out of reach of the randomized arm alone"
            )
        margins = _experimental_margins(system)
        multipliers = {
            (1, x): weights.experimental[x] / system.cell_probs[x] if system.cell_probs[x] > 0 else 0.0
            for x in system.cells
        }
    else:
        raise ValidationError(f"unknown regime {regime!r}")

    values = {}
    reports = {}
    n_vars = 0
    for direction in ("min", "max"):
        prob = build_lp(
            margins, psi, opts=opts, direction=direction, cell_multipliers=multipliers, var_cap=var_cap
        )
        n_vars = prob.n_vars
        rep = solve_lp(prob)
        if rep.status == STATUS_INFEASIBLE:
            raise InfeasibleModelError(
                f"assumption set ({opts.label()}) is empty given the data"
            )
        if rep.status != STATUS_OPTIMAL:
            raise SolverError(f"LP solve failed with status {rep.status!r}")
        values[direction] = rep.value
        reports[direction] = rep

    diagnostics = {
        "engine": "linear-program",
        "options": opts.label(),
        "lp_status": {d: reports[d].as_dict() for d in ("min", "max")},
        "n_vars": n_vars,
    }
    if not opts.msi and not opts.grm and regime == REGIME_COMBINED:
        check = None
        if psi.shape == PHI_INDICATOR:
            check = phi_indicator_bounds(system, psi, weights, regime=REGIME_COMBINED)
        elif psi.shape in (SUPER_MODULAR, SUB_MODULAR):
            check = supermodular_bounds(system, psi, weights, regime=REGIME_COMBINED)
        if check is not None:
            diagnostics["analytic_check"] = {
                "lower_discrepancy": abs(check.lower - values["min"]),
                "upper_discrepancy": abs(check.upper - values["max"]),
            }

    lower, upper = values["min"], values["max"]
    if lower > upper:
        lower, upper = upper, lower
    return BoundsInterval(
        lower=lower,
        upper=upper,
        regime=REGIME_COMBINED_LP if regime == REGIME_COMBINED else f"{regime}-lp",
        per_cell={},
        diagnostics=diagnostics,
    )
