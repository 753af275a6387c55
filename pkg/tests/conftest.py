import numpy as np
import pytest

from gdn import GdnParams


def random_valid_params(dim: int, seed: int, mild: bool = True) -> GdnParams:
    """Random parameters satisfying every constraint, strictly interior.

    mild=True keeps gamma diagonally dominant so the normalization Jacobian
    stays positive definite on moderate data (safe for inversion tests).
    """
    rng = np.random.default_rng(seed)
    h = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
    alpha = rng.uniform(1.2, 2.2, (dim, dim))
    beta = rng.uniform(0.5, 1.5, dim)
    off_scale = 0.02 if mild else 0.3
    gamma = off_scale / dim * rng.uniform(0.2, 1.0, (dim, dim))
    gamma[np.arange(dim), np.arange(dim)] = rng.uniform(0.2, 0.5, dim)
    eps = rng.uniform(0.1, 0.9, dim) / np.diag(alpha)
    return GdnParams(h=h, alpha=alpha, beta=beta, gamma=gamma, epsilon=eps)


def identity_params(dim: int, epsilon: float = 0.5) -> GdnParams:
    """gamma = 0, beta = 1, H = I: the transform is exactly the identity."""
    return GdnParams(
        h=np.eye(dim),
        alpha=np.full((dim, dim), 2.0),
        beta=np.ones(dim),
        gamma=np.zeros((dim, dim)),
        epsilon=np.full(dim, epsilon),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
