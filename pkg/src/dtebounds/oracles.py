"""Reference populations and independent oracles for cross-checking the engines.

Everything here is deliberately dumb-but-exact: closed-form populations with
known truth, exhaustive enumeration over permutation couplings, brute-force
rectangle scans for indicator events, and an external LP solver.  None of it
shares code paths with the production engines it checks.

Pseudo-randomness uses numpy's default PCG64 bit generator seeded explicitly,
so every fixture and sampled dataset is identical across platforms and runs.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .data import EXP, OBS, Dataset, ObservationRecord, OutcomeGrid, StepCdf
from .errors import SolverError, ValidationError
from .identify import IdentifiedCdfSystem, SelectionProbabilities
from .lp import LpProblem

ARM_TREAT = 0
ARM_CONTROL = 1
ARM_CHOICE = 2


@dataclass(frozen=True)
class BlockUniformPopulation:
    """Two-type population with opposite uniform blocks on [-1, 1]^2.

    Both potential outcomes are marginally uniform on [-1, 1].  Conditional on
    choosing treatment (s=1), mass ``a`` sits uniformly on the block with
    positive effects (y1 in (0,1], y0 in [-1,0]) and mass ``b`` on the mirror
    block with negative effects; the s=0 type swaps the two blocks.  Both
    selection types are equally likely, so the unconditional density puts mass
    1/2 on each off-diagonal block and the share of positive effects is
    exactly 1/2 regardless of (a, b).
    """

    a: float
    b: float
    p_s1: float = 0.5

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or abs(self.a + self.b - 1.0) > 1e-12:
            raise ValidationError("block weights need a, b >= 0 and a + b = 1")

    def cdf(self, d: int, s: int, y) -> np.ndarray:
        """Exact conditional CDF F_{Y_d | S=s} on [-1, 1]."""
        y = np.clip(np.asarray(y, dtype=float), -1.0, 1.0)
        hi = self.a if d == s else self.b  # mass of the positive half for this curve
        lo = 1.0 - hi
        return lo * (1.0 + np.minimum(y, 0.0)) + hi * np.maximum(y, 0.0)

    def marginal_cdf(self, y) -> np.ndarray:
        y = np.clip(np.asarray(y, dtype=float), -1.0, 1.0)
        return (y + 1.0) / 2.0

    def exact_positive_effect_interval(self, combined: bool) -> tuple[float, float]:
        """Closed-form sharp interval for the share of positive effects."""
        if not combined:
            return (0.0, 1.0)
        gap = abs(self.a - self.b)
        return (0.5 * gap, 1.0 - 0.5 * gap)


def block_uniform_population(a: float, b: float) -> BlockUniformPopulation:
    return BlockUniformPopulation(a=a, b=b)


@dataclass(frozen=True)
class SyntheticPopulation:
    """A fully known discrete population: joint pmf over (y1, y0, s, x).

    ``pmf`` has shape (n, n, 2, n_cells) on one shared outcome grid and sums
    to one.  Everything the pipeline identifies from data can be read off
    exactly, which makes the object a truth oracle.
    """

    grid: OutcomeGrid
    cells: tuple[str, ...]
    pmf: np.ndarray

    def __post_init__(self):
        n = len(self.grid)
        if self.pmf.shape != (n, n, 2, len(self.cells)):
            raise ValidationError("pmf shape does not match (grid, grid, 2, cells)")
        if abs(float(self.pmf.sum()) - 1.0) > 1e-12 or np.any(self.pmf < 0):
            raise ValidationError("pmf must be nonnegative and sum to one")

    def mass_sx(self) -> np.ndarray:
        return self.pmf.sum(axis=(0, 1))

    def true_theta(
        self, psi_values: np.ndarray, pop_weights: Mapping[tuple[int, str], float] | None = None
    ) -> float:
        """E[psi(Y1, Y0)] under the true joint (optionally population-weighted)."""
        psi_values = np.asarray(psi_values, dtype=float)
        if pop_weights is None:
            return float(np.einsum("ij,ijsx->", psi_values, self.pmf))
        mass = self.mass_sx()
        total = 0.0
        for xi, x in enumerate(self.cells):
            for s in (0, 1):
                if mass[s, xi] <= 0:
                    continue
                lam = pop_weights.get((s, x), 0.0) / mass[s, xi]
                total += lam * float(np.sum(psi_values * self.pmf[:, :, s, xi]))
        return total

    def to_identified_system(self) -> IdentifiedCdfSystem:
        """Exact population analogue of identifying from an infinite sample."""
        n = len(self.grid)
        mass = self.mass_sx()
        cell_probs = {x: float(mass[:, xi].sum()) for xi, x in enumerate(self.cells)}
        p1: dict[str, float] = {}
        conditional: dict[tuple[int, int, str], StepCdf] = {}
        marginal: dict[tuple[int, str], StepCdf] = {}
        for xi, x in enumerate(self.cells):
            px = cell_probs[x]
            if px <= 0:
                raise ValidationError(f"cell {x!r} carries no mass")
            p1[x] = float(mass[1, xi] / px)
            marg = {1: np.zeros(n), 0: np.zeros(n)}
            for s in (0, 1):
                joint = self.pmf[:, :, s, xi]
                m_sx = float(mass[s, xi])
                p_y1 = joint.sum(axis=1)
                p_y0 = joint.sum(axis=0)
                marg[1] += p_y1
                marg[0] += p_y0
                if m_sx <= 0:
                    continue
                for d, p in ((1, p_y1), (0, p_y0)):
                    vals = np.cumsum(p / m_sx)
                    vals[-1] = 1.0
                    conditional[(d, s, x)] = StepCdf(self.grid, vals)
            for d in (0, 1):
                vals = np.cumsum(marg[d] / px)
                vals[-1] = 1.0
                marginal[(d, x)] = StepCdf(self.grid, vals)
                for s in (0, 1):
                    # a zero-mass stratum: carry the cell marginal as a placeholder
                    conditional.setdefault((d, s, x), marginal[(d, x)])
        return IdentifiedCdfSystem(
            grid=self.grid,
            cells=self.cells,
            cell_probs=cell_probs,
            selection=SelectionProbabilities(p1_given_x=p1),
            conditional=conditional,
            marginal=marginal,
            arm_cell_probs={EXP: dict(cell_probs), OBS: dict(cell_probs)},
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "grid": self.grid.points.tolist(),
                "cells": list(self.cells),
                "pmf": self.pmf.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SyntheticPopulation":
        obj = json.loads(text)
        return cls(
            grid=OutcomeGrid(np.array(obj["grid"], dtype=float)),
            cells=tuple(obj["cells"]),
            pmf=np.array(obj["pmf"], dtype=float),
        )


def discretize_population(pop: BlockUniformPopulation, k: int) -> SyntheticPopulation:
    """Midpoint discretization of the block population on a k x k grid.

    Cells are assigned to blocks by midpoint sign, so even k preserves the
    block masses exactly.
    """
    if k < 2:
        raise ValidationError("grid size k must be at least 2")
    h = 2.0 / k
    grid = OutcomeGrid(-1.0 + h * (np.arange(k) + 0.5))
    pos = grid.points > 0
    n_pos = int(np.count_nonzero(pos))
    n_neg = k - n_pos
    pmf = np.zeros((k, k, 2, 1))
    for s in (0, 1):
        p_s = pop.p_s1 if s == 1 else 1.0 - pop.p_s1
        w_pos_block = pop.a if s == 1 else pop.b  # block with y1 > 0 >= y0
        w_neg_block = 1.0 - w_pos_block
        block_pos = np.outer(pos, ~pos).astype(float) / (n_pos * n_neg)
        block_neg = np.outer(~pos, pos).astype(float) / (n_neg * n_pos)
        pmf[:, :, s, 0] = p_s * (w_pos_block * block_pos + w_neg_block * block_neg)
    pmf /= pmf.sum()
    return SyntheticPopulation(grid=grid, cells=("ALL",), pmf=pmf)


def independent_selection_population(
    seed: int = 0, k: int = 8, n_cells: int = 1, p_s1: float = 0.5
) -> SyntheticPopulation:
    """A population where the selection type is independent of both outcomes."""
    rng = np.random.default_rng(seed)
    grid = OutcomeGrid(np.unique(rng.uniform(-1, 1, size=k)))
    n = len(grid)
    cells = tuple(f"c{i}" for i in range(n_cells))
    pmf = np.zeros((n, n, 2, n_cells))
    cell_w = rng.exponential(size=n_cells)
    cell_w /= cell_w.sum()
    for xi in range(n_cells):
        joint = rng.exponential(size=(n, n))
        joint /= joint.sum()
        pmf[:, :, 1, xi] = joint * p_s1 * cell_w[xi]
        pmf[:, :, 0, xi] = joint * (1 - p_s1) * cell_w[xi]
    pmf /= pmf.sum()
    return SyntheticPopulation(grid=grid, cells=cells, pmf=pmf)


def random_population(seed: int, max_grid: int = 8, max_cells: int = 3) -> SyntheticPopulation:
    """Seeded random discrete population for equivalence sweeps.

    Rounded support points make exact across-margin ties common, which is the
    regime where event-boundary handling actually matters.
    """
    rng = np.random.default_rng(seed)
    n1 = int(rng.integers(2, max_grid + 1))
    n0 = int(rng.integers(2, max_grid + 1))
    n_cells = int(rng.integers(1, max_cells + 1))
    pts = np.unique(np.round(rng.uniform(-2, 2, size=n1 + n0), 2))
    while pts.size < 2:
        pts = np.unique(np.round(rng.uniform(-2, 2, size=n1 + n0), 2))
    grid = OutcomeGrid(pts)
    n = len(grid)
    cells = tuple(f"c{i}" for i in range(n_cells))
    pmf = np.zeros((n, n, 2, n_cells))
    weights = rng.exponential(size=2 * n_cells)
    weights /= weights.sum()
    wi = 0
    for xi in range(n_cells):
        for s in (0, 1):
            sup1 = rng.random(n) < 0.8
            sup0 = rng.random(n) < 0.8
            if not sup1.any():
                sup1[int(rng.integers(0, n))] = True
            if not sup0.any():
                sup0[int(rng.integers(0, n))] = True
            joint = rng.exponential(size=(n, n)) * np.outer(sup1, sup0)
            joint /= joint.sum()
            pmf[:, :, s, xi] = joint * weights[wi]
            wi += 1
    pmf /= pmf.sum()
    return SyntheticPopulation(grid=grid, cells=cells, pmf=pmf)


def sample_drpt(
    pop: SyntheticPopulation,
    n: int,
    arm_probs: Sequence[float] = (0.25, 0.25, 0.5),
    seed: int = 0,
    with_latent: bool = False,
):
    """Draw a three-arm randomized-preference sample from a known population.

    Each unit draws (y1, y0, s, x) from the population, then an arm: treated
    (d=1, exp), control (d=0, exp), or free choice (obs, where d=s).  The
    observed outcome is the potential outcome selected by d.  With
    ``with_latent`` the full latent table (y1, y0, s, arm) is returned
    alongside for generator-level checks.
    """
    arm_probs = np.asarray(arm_probs, dtype=float)
    if arm_probs.size != 3 or abs(arm_probs.sum() - 1.0) > 1e-12 or np.any(arm_probs < 0):
        raise ValidationError("arm probabilities must be three nonnegative shares summing to 1")
    if n < 1:
        raise ValidationError("sample size must be positive")
    rng = np.random.default_rng(seed)
    flat = pop.pmf.reshape(-1)
    draws = rng.choice(flat.size, size=n, p=flat)
    i1, i0, s, xi = np.unravel_index(draws, pop.pmf.shape)
    arms = rng.choice(3, size=n, p=arm_probs)
    d = np.where(arms == ARM_TREAT, 1, np.where(arms == ARM_CONTROL, 0, s))
    y = np.where(d == 1, pop.grid.points[i1], pop.grid.points[i0])
    records = [
        ObservationRecord(
            y=float(y[t]),
            d=int(d[t]),
            g=OBS if arms[t] == ARM_CHOICE else EXP,
            x=pop.cells[int(xi[t])],
        )
        for t in range(n)
    ]
    ds = Dataset.from_records(records)
    if with_latent:
        latent = {
            "y1": pop.grid.points[i1],
            "y0": pop.grid.points[i0],
            "s": np.asarray(s),
            "d": np.asarray(d),
            "arm": arms,
        }
        return ds, latent
    return ds


def population_dataset(
    pop: SyntheticPopulation, arm_probs: Sequence[float] = (0.25, 0.25, 0.5)
) -> Dataset:
    """A weighted dataset whose empirical distributions equal the population exactly.

    One record per (outcome, stratum) with the exact population mass as its
    sampling weight; identification from this dataset reproduces the
    population objects to machine precision.
    """
    a_treat, a_control, a_choice = (float(p) for p in arm_probs)
    grid = pop.grid.points
    records = []
    marg1 = pop.pmf.sum(axis=1)  # (y1, s, x)
    marg0 = pop.pmf.sum(axis=0)  # (y0, s, x)
    for xi, x in enumerate(pop.cells):
        for yi in range(len(grid)):
            w1 = float(marg1[yi, :, xi].sum())
            w0 = float(marg0[yi, :, xi].sum())
            if w1 > 0:
                records.append(ObservationRecord(y=float(grid[yi]), d=1, g=EXP, x=x, w=a_treat * w1))
            if w0 > 0:
                records.append(ObservationRecord(y=float(grid[yi]), d=0, g=EXP, x=x, w=a_control * w0))
            for s, marg in ((1, marg1), (0, marg0)):
                w = float(marg[yi, s, xi])
                if w > 0:
                    records.append(
                        ObservationRecord(y=float(grid[yi]), d=s, g=OBS, x=x, w=a_choice * w)
                    )
    return Dataset.from_records(records)


def permutation_oracle(
    psi_values: np.ndarray, support1: Sequence[float], support0: Sequence[float]
) -> tuple[float, float]:
    """Exact coupling extrema for equal-weight margins by full enumeration.

    With uniform weights the extreme points of the coupling polytope are the
    permutation matrices, so the extrema over all n! pairings are exact.
    Guarded at n <= 6 to keep the factorial enumeration honest.
    """
    n = len(support1)
    if n != len(support0):
        raise ValidationError("both margins must have the same number of support points")
    if n > 6:
        raise ValidationError("permutation enumeration is capped at n = 6")
    psi_values = np.asarray(psi_values, dtype=float)
    best_lo, best_hi = np.inf, -np.inf
    for perm in itertools.permutations(range(n)):
        total = sum(psi_values[i, perm[i]] for i in range(n)) / n
        best_lo = min(best_lo, total)
        best_hi = max(best_hi, total)
    return float(best_lo), float(best_hi)


def _rectangle_floor(mask: np.ndarray, f1: StepCdf, f0: StepCdf) -> float:
    """Largest guaranteed event probability from any contained corner rectangle.

    For each grid pair and each of the four corner rectangles fully inside the
    region, the two-margin floor P(both half-events) - 1 is a valid lower
    bound on the event probability under every coupling; for monotone regions
    the best one is sharp.
    """
    le1, le0 = f1.values, f0.values  # P(Y <= point)
    ge1 = 1.0 - np.concatenate(([0.0], f1.values[:-1]))  # P(Y >= point)
    ge0 = 1.0 - np.concatenate(([0.0], f0.values[:-1]))
    best = 0.0
    m, n = mask.shape
    for i in range(m):
        for j in range(n):
            if not mask[i, j]:
                continue
            if mask[: i + 1, : j + 1].all():
                best = max(best, le1[i] + le0[j] - 1.0)
            if mask[: i + 1, j:].all():
                best = max(best, le1[i] + ge0[j] - 1.0)
            if mask[i:, : j + 1].all():
                best = max(best, ge1[i] + le0[j] - 1.0)
            if mask[i:, j:].all():
                best = max(best, ge1[i] + ge0[j] - 1.0)
    return best


def makarov_scan_oracle(
    f1: StepCdf, f0: StepCdf, delta: float | None = None, mask: np.ndarray | None = None
) -> tuple[float, float]:
    """Sharp indicator-event bounds by brute double loops over grid pairs.

    The lower bound is the best contained-rectangle floor of the region; the
    upper bound complements the same scan on the complementary region.  No
    staircase shortcut, no axis flips.
    """
    if mask is None:
        if delta is None:
            raise ValidationError("provide either delta or an explicit region mask")
        mask = np.subtract.outer(f1.grid.points, f0.grid.points) <= delta
    lower = _rectangle_floor(mask, f1, f0)
    upper = 1.0 - _rectangle_floor(~mask, f1, f0)
    return lower, max(lower, upper)


def reference_lp_value(problem: LpProblem) -> float:
    """Solve an LpProblem with scipy's HiGHS solver (independent of the embedded simplex)."""
    c = problem.objective if problem.direction == "min" else -problem.objective
    a_ub = -problem.ge if problem.ge_rhs.size else None
    b_ub = -problem.ge_rhs if problem.ge_rhs.size else None
    res = optimize.linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=problem.eq if problem.eq_rhs.size else None,
        b_eq=problem.eq_rhs if problem.eq_rhs.size else None,
        bounds=list(zip(problem.lb, problem.ub)),
        method="highs",
    )
    if not res.success:
        raise SolverError(f"reference solver failed: {res.message}")
    value = float(res.fun)
    return -value if problem.direction == "max" else value
