import numpy as np
import pytest

from dtebounds import (
    ConstraintOptions,
    InfeasibleModelError,
    LpProblem,
    NuisanceSet,
    Population,
    PsiSpec,
    PsiTable,
    SyntheticPopulation,
    ValidationError,
    build_lp,
    discretize_population,
    block_uniform_population,
    materialize_psi,
    phi_indicator_bounds,
    population_weight,
    reference_lp_value,
    sharp_bounds_lp,
    solve_lp,
    supermodular_bounds,
)
from dtebounds.data import OutcomeGrid
from dtebounds.identify import margins_pmf
from dtebounds.oracles import random_population

NO_NUIS = NuisanceSet()


def generic_lp(objective, eq=None, eq_rhs=None, ge=None, ge_rhs=None, direction="max", ub=None):
    objective = np.asarray(objective, float)
    n = objective.size
    return LpProblem(
        objective=objective,
        eq=np.asarray(eq, float) if eq is not None else np.zeros((0, n)),
        eq_rhs=np.asarray(eq_rhs, float) if eq_rhs is not None else np.zeros(0),
        ge=np.asarray(ge, float) if ge is not None else np.zeros((0, n)),
        ge_rhs=np.asarray(ge_rhs, float) if ge_rhs is not None else np.zeros(0),
        lb=np.zeros(n),
        ub=np.asarray(ub, float) if ub is not None else np.ones(n),
        direction=direction,
    )


class TestSolver:
    def test_trivial_normalized_max(self):
        rep = solve_lp(generic_lp([1.0, 1.0], eq=[[1.0, 1.0]], eq_rhs=[1.0]))
        assert rep.status == "optimal"
        assert rep.value == pytest.approx(1.0)
        assert rep.residuals <= 1e-8 and rep.duality_gap <= 1e-7

    def test_box_bounds_without_normalization(self):
        rep = solve_lp(generic_lp([2.0, 3.0], ge=[[1.0, 0.0]], ge_rhs=[0.25], direction="max"))
        assert rep.status == "optimal"
        assert rep.value == pytest.approx(5.0)  # both variables at their caps

    def test_infeasible_detection(self):
        rep = solve_lp(
            generic_lp([1.0], eq=[[1.0]], eq_rhs=[0.5], ge=[[1.0]], ge_rhs=[0.9])
        )
        assert rep.status == "infeasible"

    def test_random_instances_match_reference(self):
        rng = np.random.default_rng(123)
        for _ in range(30):
            n = int(rng.integers(3, 8))
            m = int(rng.integers(1, 4))
            eq = rng.normal(size=(m, n))
            x_feas = rng.uniform(0.05, 0.95, size=n)
            eq_rhs = eq @ x_feas  # guarantees feasibility
            objective = rng.normal(size=n)
            for direction in ("min", "max"):
                prob = generic_lp(objective, eq=eq, eq_rhs=eq_rhs, direction=direction)
                rep = solve_lp(prob)
                assert rep.status == "optimal"
                assert rep.value == pytest.approx(reference_lp_value(prob), abs=1e-8)

    def test_permuted_variable_order_same_value(self):
        pop = random_population(seed=21, max_grid=5, max_cells=2)
        margins = margins_pmf(pop.to_identified_system())
        table = materialize_psi(
            PsiSpec(family="te-cdf", delta=0.1), NO_NUIS, pop.grid.points, pop.grid.points
        )
        prob = build_lp(margins, table, direction="max")
        base = solve_lp(prob).value
        rng = np.random.default_rng(0)
        for _ in range(3):
            order = rng.permutation(prob.n_vars)
            assert solve_lp(prob.permuted(order)).value == pytest.approx(base, abs=1e-9)

    def test_dump_layout(self):
        prob = generic_lp([1.0, -2.0], eq=[[1.0, 1.0]], eq_rhs=[1.0], ge=[[0.0, 1.0]], ge_rhs=[0.1])
        text = prob.dump()
        lines = text.splitlines()
        assert lines[0] == "dtebounds-lp v1"
        assert lines[1] == "direction max"
        assert lines[2] == "vars 2"
        assert "eq 1" in lines and "ge 1" in lines
        assert text.endswith("\n")


class TestBuilder:
    def _single_cell_population(self):
        # distinct two-point supports for each margin -> union grid of 4 points
        grid = OutcomeGrid(np.array([0.0, 1.0, 2.0, 3.0]))
        pmf = np.zeros((4, 4, 2, 1))
        pmf[0, 1, 1, 0] = 0.2  # (y1=0, y0=1)
        pmf[0, 3, 1, 0] = 0.3
        pmf[2, 1, 1, 0] = 0.4
        pmf[2, 3, 1, 0] = 0.1
        return SyntheticPopulation(grid=grid, cells=("ALL",), pmf=pmf)

    def test_row_and_variable_count_single_cell(self):
        pop = self._single_cell_population()
        margins = margins_pmf(pop.to_identified_system())
        table = materialize_psi(
            PsiSpec(family="te-cdf", delta=0.0), NO_NUIS, pop.grid.points, pop.grid.points
        )
        prob = build_lp(margins, table)
        # variables only where both margins carry mass: 2 x 2
        assert prob.n_vars == 4
        # margin rows over the full union grid for each d, plus one normalization
        assert prob.eq_rhs.size == 1 + 4 + 4
        assert np.all(prob.eq[0] == 1.0)

    def test_msi_row_count_two_point_grid(self):
        grid = OutcomeGrid(np.array([0.0, 1.0]))
        pmf = np.zeros((2, 2, 2, 1))
        pmf[:, :, 1, 0] = [[0.1, 0.15], [0.2, 0.05]]
        pmf[:, :, 0, 0] = [[0.05, 0.2], [0.15, 0.1]]
        pop = SyntheticPopulation(grid=grid, cells=("ALL",), pmf=pmf)
        margins = margins_pmf(pop.to_identified_system())
        table = materialize_psi(PsiSpec(family="te-cdf", delta=0.0), NO_NUIS, grid.points, grid.points)
        prob = build_lp(margins, table, opts=ConstraintOptions(msi=True))
        # per selection stratum and per (d, d') ordering: one non-vacuous
        # cumulative row after pruning the top threshold
        assert prob.ge_rhs.size == 4

    def test_margin_consistency_precondition(self):
        pop = self._single_cell_population()
        margins = margins_pmf(pop.to_identified_system())
        margins.pmf[0][:, 1, 0] *= 0.8  # break the implied (s, x) marginal
        table = materialize_psi(
            PsiSpec(family="te-cdf", delta=0.0), NO_NUIS, pop.grid.points, pop.grid.points
        )
        with pytest.raises(ValidationError, match="disagree"):
            build_lp(margins, table)

    def test_variable_cap(self):
        pop = random_population(seed=2, max_grid=8, max_cells=2)
        margins = margins_pmf(pop.to_identified_system())
        table = materialize_psi(
            PsiSpec(family="te-cdf", delta=0.0), NO_NUIS, pop.grid.points, pop.grid.points
        )
        with pytest.raises(ValidationError, match="coarser grid"):
            build_lp(margins, table, var_cap=3)


def _setup(pop):
    system = pop.to_identified_system()
    weights = population_weight(Population(), system)
    return system, weights


class TestSharpBounds:
    def test_degenerate_control_pins_both_directions(self):
        grid = OutcomeGrid(np.array([-1.0, 0.0, 1.0]))
        pmf = np.zeros((3, 3, 2, 1))
        pmf[:, 1, 1, 0] = [0.2, 0.2, 0.1]
        pmf[:, 1, 0, 0] = [0.1, 0.2, 0.2]
        pop = SyntheticPopulation(grid=grid, cells=("ALL",), pmf=pmf)
        system, weights = _setup(pop)
        table = PsiTable(
            grid1=grid.points, grid0=grid.points, values=np.outer(grid.points, grid.points),
            shape="super-modular",
        )
        iv = sharp_bounds_lp(system, table, weights)
        truth = pop.true_theta(table.values)
        assert iv.lower == pytest.approx(truth, abs=1e-9)
        assert iv.upper == pytest.approx(truth, abs=1e-9)

    def test_matches_analytic_for_indicator_and_supermodular(self):
        for seed in range(8):
            pop = random_population(seed=900 + seed, max_grid=6, max_cells=2)
            system, weights = _setup(pop)
            pts = system.grid.points
            indicator = materialize_psi(PsiSpec(family="te-cdf", delta=0.15), NO_NUIS, pts, pts)
            analytic = phi_indicator_bounds(system, indicator, weights)
            lp = sharp_bounds_lp(system, indicator, weights)
            assert lp.lower == pytest.approx(analytic.lower, abs=1e-6)
            assert lp.upper == pytest.approx(analytic.upper, abs=1e-6)
            assert lp.diagnostics["analytic_check"]["lower_discrepancy"] < 1e-6
            product = PsiTable(grid1=pts, grid0=pts, values=np.outer(pts, pts), shape="super-modular")
            analytic2 = supermodular_bounds(system, product, weights)
            lp2 = sharp_bounds_lp(system, product, weights)
            assert lp2.lower == pytest.approx(analytic2.lower, abs=1e-6)
            assert lp2.upper == pytest.approx(analytic2.upper, abs=1e-6)

    def test_option_monotonicity_block_population(self, mixed_disc_8):
        system, weights = _setup(mixed_disc_8)
        pts = system.grid.points
        table = materialize_psi(PsiSpec(family="fraction-benefit"), NO_NUIS, pts, pts)
        base = sharp_bounds_lp(system, table, weights)
        msi = sharp_bounds_lp(system, table, weights, opts=ConstraintOptions(msi=True))
        grm = sharp_bounds_lp(system, table, weights, opts=ConstraintOptions(grm=True))
        both = sharp_bounds_lp(system, table, weights, opts=ConstraintOptions(msi=True, grm=True))
        for tighter, wider in ((msi, base), (grm, base), (both, msi), (both, grm)):
            assert wider.lower <= tighter.lower + 1e-8
            assert tighter.upper <= wider.upper + 1e-8
        # frozen regression values for the k=8 discretized block population
        assert base.lower == pytest.approx(0.3, abs=1e-9)
        assert base.upper == pytest.approx(0.65, abs=1e-9)
        assert msi.lower == pytest.approx(0.35275689223057655, abs=1e-7)
        assert msi.upper == pytest.approx(0.5397058823529408, abs=1e-7)

    def test_truth_containment_under_satisfied_assumptions(self):
        # independent within-cell couplings satisfy both restrictions
        from dtebounds import independent_selection_population

        pop = independent_selection_population(seed=12, k=5)
        system, weights = _setup(pop)
        pts = system.grid.points
        table = materialize_psi(PsiSpec(family="te-cdf", delta=0.0), NO_NUIS, pts, pts)
        truth = pop.true_theta(table.values)
        for opts in (
            ConstraintOptions(),
            ConstraintOptions(msi=True),
            ConstraintOptions(grm=True),
            ConstraintOptions(msi=True, grm=True),
        ):
            iv = sharp_bounds_lp(system, table, weights, opts=opts)
            assert iv.lower - 1e-8 <= truth <= iv.upper + 1e-8

    def test_anti_roy_population_infeasible_under_grm(self):
        pop = discretize_population(block_uniform_population(0.0, 1.0), k=6)
        system, weights = _setup(pop)
        pts = system.grid.points
        table = materialize_psi(PsiSpec(family="fraction-benefit"), NO_NUIS, pts, pts)
        with pytest.raises(InfeasibleModelError, match="assumption set"):
            sharp_bounds_lp(system, table, weights, opts=ConstraintOptions(grm=True))

    def test_msi_requires_combined_regime(self, mixed_disc_8):
        system, weights = _setup(mixed_disc_8)
        pts = system.grid.points
        table = materialize_psi(PsiSpec(family="fraction-benefit"), NO_NUIS, pts, pts)
        with pytest.raises(ValidationError, match="combined"):
            sharp_bounds_lp(
                system, table, weights, opts=ConstraintOptions(msi=True), regime="experimental"
            )

    def test_experimental_regime_lp_matches_analytic(self, mixed_disc_8):
        system, weights = _setup(mixed_disc_8)
        pts = system.grid.points
        table = materialize_psi(PsiSpec(family="fraction-benefit"), NO_NUIS, pts, pts)
        lp = sharp_bounds_lp(system, table, weights, regime="experimental")
        analytic = phi_indicator_bounds(system, table, weights, regime="experimental")
        assert lp.lower == pytest.approx(analytic.lower, abs=1e-6)
        assert lp.upper == pytest.approx(analytic.upper, abs=1e-6)
