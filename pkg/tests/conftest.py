import numpy as np
import pytest

import intervalhawkes as ih


@pytest.fixture(scope="session")
def verification_exp_model():
    """Bivariate exponential model used by the SMC verification study:
    nu = (1, 1), eta diag 0.6 / off-diag 0.4, all betas 0.5."""
    return ih.exponential_model([1.0, 1.0], [[0.6, 0.4], [0.4, 0.6]],
                                [[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture(scope="session")
def verification_gamma_model():
    """Bivariate gamma-kernel model used by the SMC verification study."""
    return ih.gamma_model([1.0, 1.0], [[0.6, 0.4], [0.4, 0.6]],
                          [[2.0, 3.0], [3.0, 2.0]], [[1.0, 2.0], [2.0, 1.0]])


@pytest.fixture(scope="session")
def recovery_model():
    """Bivariate exponential model of the parameter-recovery study, with the
    row-tied offspring time scales: nu=(0.8,1.0), eta=[[.6,.3],[.25,.5]],
    beta rows (0.5, 0.75)."""
    return ih.exponential_model([0.8, 1.0], [[0.6, 0.3], [0.25, 0.5]],
                                [[0.5, 0.5], [0.75, 0.75]], tie_rows=True)


@pytest.fixture(scope="session")
def poisson_counts():
    """Pure-Poisson interval counts (M=1, eta=0) with unequal windows."""
    spec, theta = ih.exponential_model([2.0], [[0.0]], [[1.0]])
    rng = np.random.default_rng(7)
    boundaries = np.array([0.0, 1.0, 2.5, 4.0, 6.0, 7.0, 9.5, 12.0])
    counts = ih.IntervalCounts(
        boundaries=boundaries,
        counts=rng.poisson(2.0 * np.diff(boundaries))[:, None],
    )
    return spec, theta, counts
