import numpy as np
import pytest

from weakid import Dataset, McDesign, ParamTheta, RngStream, generate
from weakid.data import load_lfp


@pytest.fixture(scope="session")
def lfp():
    data, roles = load_lfp()
    return data


@pytest.fixture(scope="session")
def strong_mc_data():
    """Strongly identified simulated cell (lam = 0.1)."""
    design = McDesign(n=2000, rho=0.5, lam=0.1, seed=314159)
    return generate(design, RngStream(seed=design.seed, stream=0)), design


@pytest.fixture(scope="session")
def weak_mc_data():
    design = McDesign(n=1000, rho=0.95, lam=0.5, seed=2718)
    return generate(design, RngStream(seed=design.seed, stream=0)), design


def random_theta(rng, k_x=1, k_z=1, scale=0.5):
    return ParamTheta(
        rho_tilde=float(rng.normal(0, scale)),
        alpha=float(rng.normal(0, scale)),
        beta=rng.normal(0, scale, k_x),
        pi=rng.normal(0, scale, k_x),
        xi=rng.normal(0, scale, k_z),
    )


def random_dataset(rng, n=300, k_x=2, k_z=2):
    X = np.column_stack([np.ones(n), rng.normal(0, 1, (n, k_x - 1))])
    Z = rng.normal(0, 1, (n, k_z))
    y2 = X @ rng.normal(0, 0.5, k_x) + Z @ rng.normal(0.3, 0.2, k_z) + rng.normal(0, 1, n)
    y1 = (0.3 * y2 + X @ rng.normal(0, 0.3, k_x) + rng.normal(0, 1, n) > 0).astype(float)
    return Dataset(y1=y1, y2=y2, X=X, Z=Z)
