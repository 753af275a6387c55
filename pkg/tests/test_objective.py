import numpy as np
import pytest

import gdn
from gdn import TyingConfig, loss, grad_params, loss_and_grad
from gdn.objective import fd_grad_params
from gdn.evaluate import delta_j

from conftest import identity_params, random_valid_params


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


class TestLoss:
    def test_identity_configuration(self, rng):
        p = identity_params(3)
        x = rng.standard_normal((100, 3))
        terms = loss(p, x)
        assert np.all(terms.logdet == 0.0)
        assert terms.loss == pytest.approx(np.mean(0.5 * np.sum(x * x, axis=1)))

    def test_standard_normal_expectation(self, rng):
        """E[0.5 ||x||^2] = N/2 for standard normal input; Monte Carlo check
        within 3 standard errors (Var(0.5 ||x||^2) = N/2 per sample)."""
        n, m = 4, 100_000
        x = rng.standard_normal((m, n))
        terms = loss(identity_params(n), x)
        se = np.sqrt(n / 2.0 / m)
        assert abs(terms.loss - n / 2.0) < 3 * se

    def test_loss_delta_j_rearrangement(self, rng):
        """delta_j == mean(0.5||x||^2) - loss, exactly (same sums regrouped)."""
        p = random_valid_params(4, seed=6)
        x = rng.standard_normal((256, 4))
        terms = loss(p, x)
        quad_x = float(np.mean(0.5 * np.sum(x * x, axis=1)))
        dj = delta_j(p, x)
        assert dj == pytest.approx(quad_x - terms.loss, rel=0, abs=1e-10)

    def test_sample_order_invariance(self, rng):
        p = random_valid_params(3, seed=1)
        x = rng.standard_normal((128, 3))
        l1 = loss(p, x).loss
        l2 = loss(p, x[::-1]).loss
        assert l1 == pytest.approx(l2, rel=1e-12)

    def test_batch_partition_invariance(self, rng):
        p = random_valid_params(3, seed=2)
        x = rng.standard_normal((128, 3))
        full = loss(p, x).loss
        halves = 0.5 * (loss(p, x[:64]).loss + loss(p, x[64:]).loss)
        assert full == pytest.approx(halves, rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("seed", range(6))
    def test_all_blocks_match_fd(self, seed):
        rng = np.random.default_rng(1000 + seed)
        p = random_valid_params(4, seed=seed, mild=False)
        x = rng.standard_normal((64, 4))
        ga = grad_params(p, x)
        gf = fd_grad_params(p, x)
        for block in ga:
            assert max_rel_err(ga[block], gf[block]) < 1e-4, block

    def test_gamma_boundary_one_sided(self, rng):
        """gamma = 0 off-diagonal with alpha_ij = 1: finite gradient,
        matching the automatic one-sided difference at the bound."""
        p = random_valid_params(3, seed=3)
        gamma = np.array(p.gamma)
        gamma[0, 1] = 0.0
        alpha = np.array(p.alpha)
        alpha[0, 1] = 1.0
        p = p.with_(gamma=gamma, alpha=alpha)
        x = rng.standard_normal((64, 3))
        ga = grad_params(p, x)
        gf = fd_grad_params(p, x)
        assert np.isfinite(ga["gamma"][0, 1])
        assert max_rel_err(ga["gamma"], gf["gamma"]) < 1e-3

    def test_epsilon_at_zero_boundary(self, rng):
        p = random_valid_params(3, seed=4)
        eps = np.array(p.epsilon)
        eps[1] = 0.0
        p = p.with_(epsilon=eps)
        x = rng.standard_normal((64, 3))
        ga = grad_params(p, x)
        gf = fd_grad_params(p, x)
        assert max_rel_err(ga["epsilon"], gf["epsilon"], floor=1e-5) < 1e-3

    def test_radial_tying_reduction_equalizes(self, rng):
        p = gdn.project_constraints(random_valid_params(4, seed=5),
                                    TyingConfig("radial"))
        x = rng.standard_normal((64, 4))
        g = grad_params(p, x, TyingConfig("radial"))
        assert np.unique(g["gamma"]).size == 1
        assert np.unique(g["beta"]).size == 1
        assert np.all(g["alpha"] == 0.0)  # fixed entries carry no gradient

    def test_tying_reduction_is_group_sum(self, rng):
        p = gdn.project_constraints(random_valid_params(4, seed=5),
                                    TyingConfig("radial"))
        x = rng.standard_normal((64, 4))
        raw = grad_params(p, x)
        red = grad_params(p, x, TyingConfig("radial"))
        assert red["beta"][0] == pytest.approx(raw["beta"].sum(), rel=1e-12)
        assert red["gamma"][0, 0] == pytest.approx(raw["gamma"].sum(), rel=1e-12)

    def test_loss_and_grad_consistent_with_loss(self, rng):
        p = random_valid_params(3, seed=9)
        x = rng.standard_normal((32, 3))
        terms, _ = loss_and_grad(p, x)
        assert terms.loss == pytest.approx(loss(p, x).loss, rel=1e-14)
