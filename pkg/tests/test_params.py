import numpy as np
import pytest

import gdn
from gdn import GdnParams, TyingConfig, init_params, project_constraints
from gdn.errors import InvalidPartition, InvariantViolation
from gdn.params import BETA_FLOOR, build_plan

from conftest import identity_params, random_valid_params


class TestInit:
    def test_full_init_contract(self):
        p = init_params(2, TyingConfig("full"), seed=0)
        assert np.array_equal(p.beta, np.ones(2))
        assert np.array_equal(p.alpha, np.ones((2, 2)))
        off = ~np.eye(2, dtype=bool)
        assert np.all(p.gamma[off] == 0.0)
        assert np.all(p.gamma[np.eye(2, dtype=bool)] > 0.0)
        assert np.all((p.epsilon >= 0.0) & (p.epsilon <= 1.0))
        p.validate()

    def test_radial_init_is_shared_scalars(self):
        p = init_params(4, TyingConfig("radial"), seed=1)
        assert np.all(p.alpha == 2.0)
        for arr in (p.beta, p.epsilon, p.gamma.reshape(-1)):
            assert np.all(arr == arr.reshape(-1)[0])

    def test_lp_radial_init(self):
        p = init_params(3, TyingConfig("lp_radial", p=1.5), seed=0)
        assert np.all(p.alpha == 1.5)

    def test_overlapping_partition_rejected(self):
        with pytest.raises(InvalidPartition):
            init_params(3, TyingConfig("subspaces", partition=((0, 1), (1, 2))), seed=0)

    def test_incomplete_partition_rejected(self):
        with pytest.raises(InvalidPartition):
            init_params(4, TyingConfig("subspaces", partition=((0, 1),)), seed=0)

    def test_init_positive_definite_at_random_points(self, rng):
        for tying in (TyingConfig("full"), TyingConfig("radial"),
                      TyingConfig("subspaces", partition=((0, 1), (2, 3)))):
            p = init_params(4, tying, seed=3)
            for z in rng.standard_normal((10, 4)) * 3.0:
                ok, _ = gdn.check_pd(p, z)
                assert ok

    def test_deterministic_given_seed(self):
        a = init_params(5, TyingConfig("full"), seed=9)
        b = init_params(5, TyingConfig("full"), seed=9)
        assert np.array_equal(a.h, b.h)


class TestProjection:
    def test_alpha_clamped_to_one(self):
        p = identity_params(2).with_(alpha=np.array([[0.5, 2.0], [2.0, 2.0]]))
        q = project_constraints(p, TyingConfig("full"))
        assert q.alpha[0, 0] == 1.0

    def test_epsilon_clamped_by_diag_alpha(self):
        p = identity_params(2).with_(
            alpha=np.full((2, 2), 2.0), epsilon=np.array([0.9, 0.3]))
        q = project_constraints(p, TyingConfig("full"))
        assert q.epsilon[0] == 0.5
        assert q.epsilon[1] == 0.3

    def test_beta_floor_and_gamma_nonneg(self):
        p = identity_params(2).with_(beta=np.array([-1.0, 2.0]),
                                     gamma=np.array([[-0.5, 0.0], [0.0, 0.2]]))
        q = project_constraints(p, TyingConfig("full"))
        assert q.beta[0] == BETA_FLOOR
        assert q.gamma[0, 0] == 0.0

    def test_noop_on_valid_params_bitwise(self):
        p = random_valid_params(5, seed=2)
        q = project_constraints(p, TyingConfig("full"))
        for name in ("h", "alpha", "beta", "gamma", "epsilon"):
            assert np.array_equal(getattr(p, name), getattr(q, name))

    def test_idempotent(self, rng):
        raw = GdnParams(
            h=np.eye(3),
            alpha=rng.uniform(0.0, 3.0, (3, 3)),
            beta=rng.uniform(-1.0, 2.0, 3),
            gamma=rng.uniform(-1.0, 1.0, (3, 3)),
            epsilon=rng.uniform(-0.5, 1.5, 3),
        )
        ty = TyingConfig("radial")
        once = project_constraints(raw, ty)
        twice = project_constraints(once, ty)
        for name in ("alpha", "beta", "gamma", "epsilon"):
            assert np.array_equal(getattr(once, name), getattr(twice, name))

    def test_radial_projection_ties_groups(self, rng):
        raw = identity_params(3).with_(
            alpha=rng.uniform(1.5, 2.5, (3, 3)),
            beta=rng.uniform(0.5, 2.0, 3),
            gamma=rng.uniform(0.0, 1.0, (3, 3)),
            epsilon=rng.uniform(0.0, 0.4, 3),
        )
        q = project_constraints(raw, TyingConfig("radial"))
        assert np.all(q.alpha == 2.0)
        assert np.unique(q.beta).size == 1
        assert np.unique(q.gamma).size == 1
        assert np.unique(q.epsilon).size == 1

    def test_column_tied_alpha(self, rng):
        raw = identity_params(3).with_(alpha=rng.uniform(1.0, 3.0, (3, 3)))
        q = project_constraints(raw, TyingConfig("column_tied_alpha"))
        for j in range(3):
            assert np.unique(q.alpha[:, j]).size == 1

    def test_subspace_projection_zeroes_cross_terms(self, rng):
        ty = TyingConfig("subspaces", partition=((0, 1), (2,)))
        raw = identity_params(3).with_(gamma=rng.uniform(0.1, 1.0, (3, 3)))
        q = project_constraints(raw, ty)
        assert q.gamma[0, 2] == 0.0 and q.gamma[2, 0] == 0.0
        assert q.gamma[0, 1] == q.gamma[1, 1] == q.gamma[0, 0]

    def test_classic_dn_fixes_exponents(self):
        raw = identity_params(2)
        q = project_constraints(raw, TyingConfig("classic_dn"))
        assert np.all(q.alpha == 1.0)
        assert np.all(q.gamma == 1.0)
        assert np.all(q.epsilon == 1.0)


class TestVariantBehavior:
    def test_radial_matches_closed_form(self, rng):
        """Tied radial transform equals (z/|z|) * r/(beta + gamma r^2)^eps."""
        p = project_constraints(
            random_valid_params(4, seed=5).with_(h=np.eye(4)),
            TyingConfig("radial"))
        z = rng.standard_normal((50, 4))
        res = gdn.forward(p, z)
        r = np.linalg.norm(z, axis=1, keepdims=True)
        beta, g, e = p.beta[0], p.gamma[0, 0], p.epsilon[0]
        expected = z / r * (r / (beta + g * r ** 2) ** e)
        assert np.max(np.abs(res.y - expected) / np.maximum(np.abs(expected), 1e-12)) < 1e-12

    def test_diagonal_gamma_is_separable(self, rng):
        """With diagonal gamma, y_i must not respond to z_j, j != i."""
        p = project_constraints(random_valid_params(3, seed=7).with_(h=np.eye(3)),
                                TyingConfig("diagonal_gamma"))
        z = rng.standard_normal(3)
        y0 = gdn.forward(p, z[None]).y[0]
        z2 = z.copy()
        z2[1] += 0.7
        y1 = gdn.forward(p, z2[None]).y[0]
        assert y1[0] == y0[0]
        assert y1[2] == y0[2]
        assert y1[1] != y0[1]


class TestTyingValidation:
    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            TyingConfig("banana")

    def test_lp_requires_p(self):
        with pytest.raises(ValueError):
            TyingConfig("lp_radial")

    def test_plan_groups_cover_expected_sizes(self):
        plan = build_plan(TyingConfig("radial"), 3)
        assert plan.gamma.groups[0].size == 9
        assert plan.alpha.fixed_idx.size == 9


class TestInvariantChecks:
    def test_validate_rejects_bad_beta(self):
        p = identity_params(2)
        bad = p.with_(beta=np.array([0.0, 1.0]))
        with pytest.raises(InvariantViolation):
            bad.validate()

    def test_validate_rejects_singular_h(self):
        p = identity_params(2).with_(h=np.zeros((2, 2)))
        with pytest.raises(InvariantViolation):
            p.validate()

    def test_arrays_are_immutable(self):
        p = identity_params(2)
        with pytest.raises(ValueError):
            p.beta[0] = 2.0
