"""Ingestion and validation of combined experimental/self-selection samples.

A record is (y, d, g, x, w): outcome, binary treatment, sample indicator
("exp" for the randomized arm, "obs" for the self-selection arm), a finite
covariate-cell label, and a nonnegative sampling weight.  Everything
downstream consumes weighted empirical step CDFs on finite outcome grids.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError

EXP = "exp"
OBS = "obs"

_MARGINAL_TOL = 1e-12


@dataclass(frozen=True)
class ObservationRecord:
    """One observed row of the combined sample."""

    y: float
    d: int
    g: str
    x: str = "ALL"
    w: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise DataError(f"outcome must be finite, got {self.y!r}")
        if self.d not in (0, 1):
            raise DataError(f"treatment must be 0 or 1, got {self.d!r}")
        if self.g not in (EXP, OBS):
            raise DataError(f"sample indicator must be {EXP!r} or {OBS!r}, got {self.g!r}")
        if not (np.isfinite(self.w) and self.w >= 0):
            raise DataError(f"weight must be nonnegative and finite, got {self.w!r}")


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar view of the combined sample.

    ``covariate_cells`` is the sorted set of observed cell labels.  When an
    external covariate marginal is supplied it must cover exactly those cells
    and sum to one; otherwise pooled empirical cell frequencies stand in.
    """

    y: np.ndarray
    d: np.ndarray
    g: np.ndarray  # 0 = exp, 1 = obs
    x: np.ndarray
    w: np.ndarray
    covariate_cells: tuple[str, ...]
    x_marginal: Mapping[str, float] | None = None

    def __post_init__(self):
        for arr in (self.y, self.d, self.g, self.w):
            arr.setflags(write=False)
        seen = set(np.unique(self.x))
        if not seen <= set(self.covariate_cells):
            raise DataError("records reference covariate cells outside covariate_cells")
        if self.x_marginal is not None:
            if set(self.x_marginal) != set(self.covariate_cells):
                raise DataError("x_marginal must cover exactly the observed covariate cells")
            total = sum(self.x_marginal.values())
            if abs(total - 1.0) > _MARGINAL_TOL:
                raise DataError(f"x_marginal must sum to 1 within {_MARGINAL_TOL}, got {total!r}")
            if any(p < 0 for p in self.x_marginal.values()):
                raise DataError("x_marginal entries must be nonnegative")

    @classmethod
    def from_records(
        cls,
        records: Iterable[ObservationRecord],
        x_marginal: Mapping[str, float] | None = None,
    ) -> "Dataset":
        records = list(records)
        if not records:
            raise DataError("dataset is empty")
        y = np.array([r.y for r in records], dtype=float)
        d = np.array([r.d for r in records], dtype=np.int8)
        g = np.array([0 if r.g == EXP else 1 for r in records], dtype=np.int8)
        x = np.array([r.x for r in records], dtype=object)
        w = np.array([r.w for r in records], dtype=float)
        cells = tuple(sorted({r.x for r in records}))
        return cls(y=y, d=d, g=g, x=x, w=w, covariate_cells=cells, x_marginal=x_marginal)

    def __len__(self) -> int:
        return len(self.y)

    def records(self) -> Iterator[ObservationRecord]:
        for i in range(len(self.y)):
            yield ObservationRecord(
                y=float(self.y[i]),
                d=int(self.d[i]),
                g=EXP if self.g[i] == 0 else OBS,
                x=str(self.x[i]),
                w=float(self.w[i]),
            )

    def mask(self, d: int | None = None, g: str | None = None, x: str | None = None) -> np.ndarray:
        m = np.ones(len(self.y), dtype=bool)
        if d is not None:
            m &= self.d == d
        if g is not None:
            m &= self.g == (0 if g == EXP else 1)
        if x is not None:
            m &= np.array([xi == x for xi in self.x], dtype=bool)
        return m

    def cell_probs(self) -> dict[str, float]:
        """P(X = x): the external marginal when supplied, else pooled weighted frequencies."""
        if self.x_marginal is not None:
            return {c: float(self.x_marginal[c]) for c in self.covariate_cells}
        total = float(np.sum(self.w))
        if total <= 0:
            raise DataError("total sampling weight is zero")
        return {
            c: float(np.sum(self.w[self.mask(x=c)])) / total for c in self.covariate_cells
        }

    def cell_probs_in_arm(self, g: str) -> dict[str, float]:
        """P(X = x | G = g) from the weighted records of one arm."""
        arm = self.mask(g=g)
        total = float(np.sum(self.w[arm]))
        if total <= 0:
            raise DataError(f"no weight in arm {g!r}")
        out = {}
        for c in self.covariate_cells:
            out[c] = float(np.sum(self.w[arm & self.mask(x=c)])) / total
        return out


@dataclass(frozen=True)
class OutcomeGrid:
    """Strictly increasing finite support carrier for outcome distributions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise DataError("grid must be a nonempty 1-d array")
        if not np.all(np.diff(pts) > 0):
            raise DataError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class StepCdf:
    """Right-continuous step CDF on an outcome grid.

    ``values[i]`` is P(Y <= points[i]).  Values are nondecreasing, lie in
    [0, 1], and terminate at 1.
    """

    grid: OutcomeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise DataError("CDF values must match the grid length")
        if np.any(np.diff(v) < -1e-12):
            raise DataError("CDF values must be nondecreasing")
        if v[0] < -1e-12 or np.any(v > 1 + 1e-12):
            raise DataError("CDF values must lie in [0, 1]")
        if abs(v[-1] - 1.0) > 1e-12:
            raise DataError(f"CDF must terminate at 1 within 1e-12, got {v[-1]!r}")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @classmethod
    def from_weighted(cls, y: np.ndarray, w: np.ndarray, grid: OutcomeGrid | None = None) -> "StepCdf":
        """Weighted empirical CDF of ``y``, on ``grid`` or the distinct observed values."""
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        if y.size == 0 or np.sum(w) <= 0:
            raise DataError("cannot build an empirical CDF from zero total weight")
        if grid is None:
            pts, inv = np.unique(y, return_inverse=True)
            mass = np.zeros(pts.size)
            np.add.at(mass, inv, w)
            cum = np.cumsum(mass)
            return cls(OutcomeGrid(pts), cum / cum[-1])
        order = np.argsort(y, kind="stable")
        ys, ws = y[order], w[order]
        cum = np.cumsum(ws) / np.sum(ws)
        idx = np.searchsorted(ys, grid.points, side="right") - 1
        vals = np.where(idx >= 0, cum[np.clip(idx, 0, None)], 0.0)
        if abs(vals[-1] - 1.0) > 1e-12:
            raise DataError("grid does not cover the observed outcome range")
        vals = vals.copy()
        vals[-1] = 1.0
        return cls(grid, vals)

    def at(self, t: float | np.ndarray) -> float | np.ndarray:
        """P(Y <= t), right-continuous step lookup."""
        idx = np.searchsorted(self.grid.points, t, side="right") - 1
        vals = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)
        return float(vals) if np.isscalar(t) else vals

    def at_left(self, t: float | np.ndarray) -> float | np.ndarray:
        """P(Y < t): the left limit of the step function at t."""
        idx = np.searchsorted(self.grid.points, t, side="left") - 1
        vals = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)
        return float(vals) if np.isscalar(t) else vals

    def pmf(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)

    def evaluate_on(self, grid: OutcomeGrid) -> "StepCdf":
        """Re-express the same distribution on a covering grid."""
        vals = np.asarray(self.at(grid.points), dtype=float)
        if abs(vals[-1] - 1.0) > 1e-12:
            raise DataError("target grid does not cover the support")
        vals = vals.copy()
        vals[-1] = 1.0
        return StepCdf(grid, vals)


@dataclass(frozen=True)
class OverlapReport:
    """Per-cell record counts for each (treatment, sample) pair."""

    counts: Mapping[str, Mapping[tuple[int, str], int]]
    passed: bool
    failing: tuple[tuple[str, int, str], ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failing": [list(f) for f in self.failing],
            "counts": {
                cell: {f"d={d},g={g}": n for (d, g), n in sorted(pairs.items())}
                for cell, pairs in self.counts.items()
            },
        }


def load_csv(path, schema: Mapping[str, str] | None = None) -> Dataset:
    """Read a combined sample from CSV.

    Required columns: ``y`` (decimal), ``d`` (0/1), ``g`` (exp/obs,
    case-insensitive).  Optional: ``x`` (cell label; absent means a single
    cell "ALL") and ``w`` (nonnegative decimal weight, default 1).
    ``schema`` maps these canonical names to the file's column names.
    """
    schema = dict(schema or {})
    col = {k: schema.get(k, k) for k in ("y", "d", "g", "x", "w")}
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        for name in ("y", "d", "g"):
            if col[name] not in reader.fieldnames:
                raise DataError(f"{path}: missing required column {col[name]!r}")
        has_x = col["x"] in reader.fieldnames
        has_w = col["w"] in reader.fieldnames
        for i, row in enumerate(reader, start=1):
            try:
                y = float(row[col["y"]])
                d_raw = float(row[col["d"]])
                if d_raw not in (0.0, 1.0):
                    raise DataError(f"d must be 0 or 1, got {row[col['d']]!r}")
                g_raw = row[col["g"]].strip().lower()
                if g_raw not in (EXP, OBS):
                    raise DataError(f"g must be exp or obs, got {row[col['g']]!r}")
                x = row[col["x"]].strip() if has_x else "ALL"
                if x == "":
                    raise DataError("empty covariate cell label")
                w = float(row[col["w"]]) if has_w else 1.0
                records.append(ObservationRecord(y=y, d=int(d_raw), g=g_raw, x=x, w=w))
            except DataError as exc:
                raise DataError(f"{path}: row {i}: {exc}") from None
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: row {i}: malformed row ({exc})") from None
    if not records:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_records(records)


def load_x_marginal_csv(path) -> dict[str, float]:
    """Read an external covariate marginal: CSV with columns ``x`` and ``p``."""
    out: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "p"} <= set(reader.fieldnames):
            raise DataError(f"{path}: marginal file needs columns 'x' and 'p'")
        for i, row in enumerate(reader, start=1):
            try:
                out[row["x"].strip()] = float(row["p"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: row {i}: malformed row ({exc})") from None
    if not out:
        raise DataError(f"{path}: no data rows")
    return out


def write_csv(ds: Dataset, path) -> None:
    """Serialize a dataset back to the canonical CSV layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "d", "g", "x", "w"])
        for r in ds.records():
            writer.writerow([repr(r.y), r.d, r.g, r.x, repr(r.w)])


def validate_overlap(ds: Dataset) -> OverlapReport:
    """Check that every cell has records for all four (d, g) combinations."""
    counts: dict[str, dict[tuple[int, str], int]] = {}
    failing: list[tuple[str, int, str]] = []
    for cell in ds.covariate_cells:
        pairs = {}
        for d in (0, 1):
            for g in (EXP, OBS):
                n = int(np.count_nonzero(ds.mask(d=d, g=g, x=cell)))
                pairs[(d, g)] = n
                if n == 0:
                    failing.append((cell, d, g))
        counts[cell] = pairs
    return OverlapReport(counts=counts, passed=not failing, failing=tuple(failing))


def empirical_step_cdf(ds: Dataset, condition: Callable[[int, str, str], bool]) -> StepCdf:
    """Weighted empirical CDF of y among records satisfying ``condition(d, g, x)``."""
    keep = np.array(
        [condition(int(d), EXP if g == 0 else OBS, str(x)) for d, g, x in zip(ds.d, ds.g, ds.x)],
        dtype=bool,
    )
    if not np.any(keep) or np.sum(ds.w[keep]) <= 0:
        raise DataError(f"no records (or zero weight) satisfy condition {condition!r}")
    return StepCdf.from_weighted(ds.y[keep], ds.w[keep])


def snap_to_grid(y: np.ndarray, grid: OutcomeGrid) -> np.ndarray:
    """Map outcomes to their nearest grid representative (ties go left).

    The identity for union-of-observed grids; for binned policies this is the
    discretization step that puts every observation on its bin's
    representative point.
    """
    pts = grid.points
    y = np.asarray(y, dtype=float)
    idx = np.clip(np.searchsorted(pts, y, side="left"), 0, pts.size - 1)
    left = np.clip(idx - 1, 0, pts.size - 1)
    use_left = np.abs(y - pts[left]) <= np.abs(pts[idx] - y)
    return pts[np.where(use_left, left, idx)]


def build_grid(ds: Dataset, policy: str = "union", k: int | None = None) -> OutcomeGrid:
    """Build an outcome grid from a dataset.

    Policies: ``union`` (distinct observed values, the default),
    ``equal-width`` (k bin midpoints over the observed range) and
    ``quantile`` (k weighted-quantile representatives at levels (j+1/2)/k).
    """
    if len(ds) == 0:
        raise DataError("dataset is empty")
    if policy == "union":
        return OutcomeGrid(np.unique(ds.y))
    if k is None or k < 2:
        raise DataError(f"policy {policy!r} needs k >= 2")
    lo, hi = float(np.min(ds.y)), float(np.max(ds.y))
    if policy == "equal-width":
        if hi <= lo:
            raise DataError("degenerate outcome range for equal-width binning")
        h = (hi - lo) / k
        return OutcomeGrid(lo + h * (np.arange(k) + 0.5))
    if policy == "quantile":
        order = np.argsort(ds.y, kind="stable")
        ys, ws = ds.y[order], ds.w[order]
        cum = np.cumsum(ws) / np.sum(ws)
        levels = (np.arange(k) + 0.5) / k
        idx = np.searchsorted(cum, levels, side="left")
        pts = np.unique(ys[np.clip(idx, 0, len(ys) - 1)])
        if pts.size < 2:
            raise DataError("quantile grid collapsed to fewer than 2 points")
        return OutcomeGrid(pts)
    raise DataError(f"unknown grid policy {policy!r}")
