import numpy as np
import pytest

from dtebounds import (
    Dataset,
    ObservationRecord,
    block_uniform_population,
    discretize_population,
    sample_drpt,
)


@pytest.fixture(scope="session")
def mixed_pop():
    """Two-type block population with (a, b) = (0.8, 0.2)."""
    return block_uniform_population(0.8, 0.2)


@pytest.fixture(scope="session")
def roy_pop():
    return block_uniform_population(1.0, 0.0)


@pytest.fixture(scope="session")
def mixed_disc_200(mixed_pop):
    return discretize_population(mixed_pop, k=200)


@pytest.fixture(scope="session")
def roy_disc_200(roy_pop):
    return discretize_population(roy_pop, k=200)


@pytest.fixture(scope="session")
def mixed_disc_8(mixed_pop):
    return discretize_population(mixed_pop, k=8)


@pytest.fixture(scope="session")
def mixed_sample_100k(mixed_disc_200):
    return sample_drpt(mixed_disc_200, n=100_000, arm_probs=(0.25, 0.25, 0.5), seed=11)


@pytest.fixture(scope="session")
def roy_sample_100k(roy_disc_200):
    return sample_drpt(roy_disc_200, n=100_000, arm_probs=(0.25, 0.25, 0.5), seed=13)


def make_survey_counts_dataset() -> Dataset:
    """A three-arm sample with arm sizes (118, 129, 236) and 90 of 236 opting in."""
    records = []
    for i in range(118):
        records.append(ObservationRecord(y=float(i % 7), d=1, g="exp", x="ALL"))
    for i in range(129):
        records.append(ObservationRecord(y=float(i % 5), d=0, g="exp", x="ALL"))
    for i in range(90):
        records.append(ObservationRecord(y=float(i % 6), d=1, g="obs", x="ALL"))
    for i in range(146):
        records.append(ObservationRecord(y=float(i % 4), d=0, g="obs", x="ALL"))
    return Dataset.from_records(records)


@pytest.fixture()
def survey_counts_dataset():
    return make_survey_counts_dataset()


def make_repair_dataset() -> Dataset:
    """Six records whose counterfactual inversion dips below zero.

    obs arm: d=1 at y=1 (twice), d=0 at y=9, so P(S=1) = 2/3.  exp arm has
    its d=1 mass at y=5.  The inverted curve for (d=1, s=0) at y=1 is
    (0 - (2/3) * 1) / (1/3) = -2, which the repair must clip.
    """
    return Dataset.from_records(
        [
            ObservationRecord(y=5.0, d=1, g="exp"),
            ObservationRecord(y=0.0, d=0, g="exp"),
            ObservationRecord(y=0.0, d=0, g="exp"),
            ObservationRecord(y=1.0, d=1, g="obs"),
            ObservationRecord(y=1.0, d=1, g="obs"),
            ObservationRecord(y=9.0, d=0, g="obs"),
        ]
    )


@pytest.fixture()
def repair_dataset():
    return make_repair_dataset()
