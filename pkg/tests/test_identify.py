import numpy as np
import pytest

from dtebounds import (
    Dataset,
    ObservationRecord,
    OutcomeGrid,
    OverlapError,
    cdf_given_selection,
    discretize_population,
    identify_system,
    margins_pmf,
    population_dataset,
    selection_prob,
)
from dtebounds.data import EXP, OBS, StepCdf, empirical_step_cdf


def test_selection_prob_survey_counts(survey_counts_dataset):
    # 90 of 236 choosing treatment in the free-choice arm
    assert selection_prob(survey_counts_dataset, "ALL") == pytest.approx(90 / 236)


def test_selection_prob_weighted_and_degenerate():
    ds = Dataset.from_records(
        [
            ObservationRecord(y=1.0, d=1, g=OBS, w=2.0),
            ObservationRecord(y=2.0, d=0, g=OBS, w=1.0),
        ]
    )
    assert selection_prob(ds, "ALL") == pytest.approx(2 / 3)
    zero = Dataset.from_records([ObservationRecord(y=1.0, d=0, g=OBS)])
    assert selection_prob(zero, "ALL") == 0.0
    no_obs = Dataset.from_records([ObservationRecord(y=1.0, d=0, g=EXP)])
    with pytest.raises(OverlapError):
        selection_prob(no_obs, "ALL")


def _binary_mixture_dataset():
    # P(D=1|obs) = 0.5; P(Y=1|D=1,exp) = 0.6; P(Y=1|D=1,obs) = 0.8
    return Dataset.from_records(
        [
            ObservationRecord(y=1.0, d=1, g=EXP, w=0.6),
            ObservationRecord(y=0.0, d=1, g=EXP, w=0.4),
            ObservationRecord(y=0.0, d=0, g=EXP, w=1.0),
            ObservationRecord(y=1.0, d=1, g=OBS, w=0.8),
            ObservationRecord(y=0.0, d=1, g=OBS, w=0.2),
            ObservationRecord(y=0.0, d=0, g=OBS, w=1.0),
        ]
    )


def test_counterfactual_mixture_arithmetic():
    ds = _binary_mixture_dataset()
    grid = OutcomeGrid(np.array([0.0, 1.0]))
    cdf = cdf_given_selection(ds, d=1, s=0, x="ALL", grid=grid)
    # F_{Y1|S=0}(0) = (0.4 - 0.5 * 0.2) / 0.5 = 0.6, so P(Y1=1|S=0) = 0.4
    assert cdf.values[0] == pytest.approx(0.6)
    assert cdf.values[1] == 1.0


def test_factual_branch_equals_stratum_ecdf():
    ds = _binary_mixture_dataset()
    grid = OutcomeGrid(np.array([0.0, 1.0]))
    for s in (0, 1):
        direct = empirical_step_cdf(ds, lambda d, g, x, s=s: d == s and g == OBS).evaluate_on(grid)
        via = cdf_given_selection(ds, d=s, s=s, x="ALL", grid=grid)
        assert np.allclose(direct.values, via.values)


def test_exact_population_dataset_has_zero_repairs(mixed_disc_8):
    ds = population_dataset(mixed_disc_8)
    system = identify_system(ds)
    assert system.repair_log == ()
    assert system.max_mixture_residual() < 1e-9
    # identified curves equal the population's exactly
    pop_system = mixed_disc_8.to_identified_system()
    for key, cdf in pop_system.conditional.items():
        assert np.max(np.abs(system.conditional[key].values - cdf.values)) < 1e-12


def test_mixture_round_trip_identity(mixed_disc_8):
    ds = population_dataset(mixed_disc_8)
    system = identify_system(ds)
    for x in system.cells:
        p1 = system.selection.p1_given_x[x]
        for d in (0, 1):
            mix = p1 * system.conditional[(d, 1, x)].values + (1 - p1) * system.conditional[(d, 0, x)].values
            assert np.max(np.abs(mix - system.marginal[(d, x)].values)) < 1e-12


def test_adversarial_repair_by_enumeration(repair_dataset):
    system = identify_system(repair_dataset)
    assert len(system.repair_log) >= 1
    event = next(e for e in system.repair_log if (e.d, e.s) == (1, 0))
    assert event.sup_change == pytest.approx(2.0)
    cdf = system.conditional[(1, 0, "ALL")]
    assert np.all(np.diff(cdf.values) >= 0) and cdf.values[-1] == 1.0
    # hand enumeration: grid (0,1,5,9); raw inversion = (F_exp1 - (2/3) F_obs1) / (1/3)
    raw = np.array([0.0, -2.0, 1.0, 1.0])
    assert np.allclose(cdf.values, np.sort(np.clip(raw, 0, 1)))


def test_identify_requires_overlap():
    ds = Dataset.from_records(
        [
            ObservationRecord(y=1.0, d=1, g=EXP),
            ObservationRecord(y=2.0, d=0, g=EXP),
            ObservationRecord(y=1.0, d=1, g=OBS),
        ]
    )
    with pytest.raises(OverlapError):
        identify_system(ds)


def test_identified_cdf_close_to_population_at_100k(mixed_disc_200, mixed_sample_100k, mixed_pop):
    system = identify_system(mixed_sample_100k)
    # spot value P(Y1 <= 0 | S=1) ~ b = 0.2
    at_zero = system.conditional[(1, 1, "ALL")].at(0.0)
    assert at_zero == pytest.approx(0.2, abs=0.01)
    # sup-distance of every curve to the population analogue
    pop_system = mixed_disc_200.to_identified_system()
    worst = 0.0
    for key, cdf in pop_system.conditional.items():
        est = system.conditional[key]
        pts = est.grid.points
        worst = max(worst, float(np.max(np.abs(np.asarray(est.at(pts)) - np.asarray(cdf.at(pts))))))
    for key, cdf in pop_system.marginal.items():
        est = system.marginal[key]
        pts = est.grid.points
        worst = max(worst, float(np.max(np.abs(np.asarray(est.at(pts)) - np.asarray(cdf.at(pts))))))
    assert worst < 0.02


def test_counterfactual_matches_factual_under_independent_selection():
    from dtebounds import independent_selection_population, sample_drpt

    pop = independent_selection_population(seed=4, k=12)
    ds = sample_drpt(pop, n=100_000, seed=5)
    system = identify_system(ds)
    for d in (0, 1):
        a = system.conditional[(d, 0, "c0")].values
        b = system.conditional[(d, 1, "c0")].values
        assert float(np.max(np.abs(a - b))) < 0.03


def test_margins_pmf_block_mass_and_inverse(mixed_disc_8):
    system = mixed_disc_8.to_identified_system()
    margins = margins_pmf(system)
    for d in (0, 1):
        assert abs(margins.pmf[d].sum() - 1.0) < 1e-9
    # mass of (y1 in (0,1], s=1) = 0.5 * a = 0.4
    pos = margins.grid.points > 0
    assert margins.pmf[1][pos, 1, 0].sum() == pytest.approx(0.4, abs=1e-12)
    # re-accumulating the pmf reproduces the conditional CDFs
    for xi, x in enumerate(system.cells):
        for s in (0, 1):
            m = system.mass(s, x)
            for d in (0, 1):
                acc = np.cumsum(margins.pmf[d][:, s, xi]) / m
                assert np.max(np.abs(acc - system.conditional[(d, s, x)].values)) < 1e-12


def test_single_cell_two_point_pmf_sums_to_one():
    ds = _binary_mixture_dataset()
    system = identify_system(ds)
    margins = margins_pmf(system)
    assert margins.pmf[1].shape == (2, 2, 1)
    for d in (0, 1):
        assert abs(margins.pmf[d].sum() - 1.0) < 1e-12
