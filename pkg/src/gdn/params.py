"""Parameter vector, constraints, and tying schemes for the GDN transform.

A model is y_i = z_i / (beta_i + sum_j gamma_ij |z_j|^alpha_ij)^epsilon_i
with z = H x.  The constraint box keeping the transform continuous and
monotone on the cardinal axes is

    alpha_ij >= 1,  beta_i > 0,  gamma_ij >= 0,  0 <= epsilon_i <= 1/alpha_ii.

Tying schemes restrict the free parameters to recover the classic special
cases (marginal, radial, Lp-radial, subspace, classic divisive
normalization) by fixing entries and/or sharing values across groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidPartition, InvariantViolation

# beta > 0 is an open constraint; an explicit floor makes it implementable.
BETA_FLOOR = 1e-6

VARIANTS = (
    "full",
    "column_tied_alpha",
    "diagonal_gamma",
    "radial",
    "lp_radial",
    "subspaces",
    "classic_dn",
)


@dataclass(frozen=True)
class TyingConfig:
    """Parameter-sharing scheme selecting a model variant.

    variant:
        "full"              all 2N + 3N^2 parameters free
        "column_tied_alpha" alpha constant along columns (alpha_ij = alpha_j)
        "diagonal_gamma"    off-diagonal gamma fixed at 0 (marginal model)
        "radial"            alpha fixed at 2; beta/gamma/epsilon single scalars
        "lp_radial"         alpha fixed at p; beta/gamma/epsilon single scalars
        "subspaces"         radial within disjoint index sets, 0 across them
        "classic_dn"        alpha, gamma, epsilon fixed at 1; beta free
    """

    variant: str = "full"
    p: float | None = None
    partition: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown tying variant {self.variant!r}")
        if self.variant == "lp_radial":
            if self.p is None or not self.p >= 1.0:
                raise ValueError("lp_radial requires an exponent p >= 1")
        if self.variant == "subspaces" and self.partition is None:
            raise InvalidPartition("subspaces tying requires a partition")
        if self.partition is not None:
            object.__setattr__(
                self,
                "partition",
                tuple(tuple(int(i) for i in s) for s in self.partition),
            )

    def validate_partition(self, dim: int) -> None:
        if self.partition is None:
            return
        seen: set[int] = set()
        for s in self.partition:
            if not s:
                raise InvalidPartition("empty subspace in partition")
            for i in s:
                if not 0 <= i < dim:
                    raise InvalidPartition(f"index {i} out of range for dim {dim}")
                if i in seen:
                    raise InvalidPartition(f"index {i} appears in two subspaces")
                seen.add(i)
        if len(seen) != dim:
            missing = sorted(set(range(dim)) - seen)
            raise InvalidPartition(f"partition does not cover indices {missing}")


def full() -> TyingConfig:
    return TyingConfig("full")


def column_tied_alpha() -> TyingConfig:
    return TyingConfig("column_tied_alpha")


def diagonal_gamma() -> TyingConfig:
    return TyingConfig("diagonal_gamma")


def radial() -> TyingConfig:
    return TyingConfig("radial")


def lp_radial(p: float) -> TyingConfig:
    return TyingConfig("lp_radial", p=p)


def subspaces(*sets) -> TyingConfig:
    return TyingConfig("subspaces", partition=tuple(tuple(s) for s in sets))


def classic_dn() -> TyingConfig:
    return TyingConfig("classic_dn")


@dataclass(frozen=True)
class GdnParams:
    """Immutable parameter bundle (arrays are set read-only on construction)."""

    h: np.ndarray        # (N, N) linear stage
    alpha: np.ndarray    # (N, N) exponents, >= 1
    beta: np.ndarray     # (N,)   additive constants, > 0
    gamma: np.ndarray    # (N, N) pool weights, >= 0
    epsilon: np.ndarray  # (N,)   denominator exponents, in [0, 1/alpha_ii]

    def __post_init__(self):
        for name in ("h", "alpha", "beta", "gamma", "epsilon"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.dim
        if self.h.shape != (n, n) or self.alpha.shape != (n, n) or self.gamma.shape != (n, n):
            raise InvariantViolation("parameter array shapes are inconsistent")
        if self.beta.shape != (n,) or self.epsilon.shape != (n,):
            raise InvariantViolation("parameter array shapes are inconsistent")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    def validate(self, det_tol: float = 1e-300) -> None:
        """Raise InvariantViolation unless every documented invariant holds."""
        for name in ("h", "alpha", "beta", "gamma", "epsilon"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvariantViolation(f"non-finite entries in {name}")
        if np.any(self.alpha < 1.0):
            raise InvariantViolation("alpha entries must be >= 1")
        if np.any(self.beta <= 0.0):
            raise InvariantViolation("beta entries must be > 0")
        if np.any(self.gamma < 0.0):
            raise InvariantViolation("gamma entries must be >= 0")
        diag_alpha = np.diag(self.alpha)
        if np.any(self.epsilon < 0.0) or np.any(self.epsilon > 1.0 / diag_alpha + 1e-12):
            raise InvariantViolation("epsilon entries must lie in [0, 1/alpha_ii]")
        sign, logdet = np.linalg.slogdet(self.h)
        if sign == 0 or not np.isfinite(logdet) or np.exp(logdet) <= det_tol:
            raise InvariantViolation("linear stage H is singular")

    def with_(self, **blocks) -> "GdnParams":
        """Copy with selected blocks replaced (fresh writable copies are taken)."""
        return replace(self, **{k: np.array(v, dtype=np.float64) for k, v in blocks.items()})


# ---------------------------------------------------------------------------
# Tying plans: fixed entries + shared groups, realized by projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockPlan:
    """Tying instructions for one parameter block (flat indexing)."""

    shape: tuple[int, ...]
    fixed_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    fixed_val: np.ndarray = field(default_factory=lambda: np.empty(0))
    groups: tuple[np.ndarray, ...] = ()


@dataclass(frozen=True)
class TyingPlan:
    alpha: BlockPlan
    beta: BlockPlan
    gamma: BlockPlan
    epsilon: BlockPlan


def _flat(idx_pairs, n):
    rows, cols = zip(*idx_pairs)
    return np.asarray(rows, dtype=np.intp) * n + np.asarray(cols, dtype=np.intp)


def build_plan(tying: TyingConfig, dim: int) -> TyingPlan:
    """Expand a tying config into fixed entries and shared groups at dim N."""
    tying.validate_partition(dim)
    n = dim
    sq = (n, n)
    vec = (n,)
    a = BlockPlan(sq)
    b = BlockPlan(vec)
    g = BlockPlan(sq)
    e = BlockPlan(vec)
    all_sq = np.arange(n * n, dtype=np.intp)
    all_vec = np.arange(n, dtype=np.intp)

    if tying.variant == "column_tied_alpha":
        cols = tuple(np.arange(n, dtype=np.intp) * n + j for j in range(n))
        a = BlockPlan(sq, groups=cols)
    elif tying.variant == "diagonal_gamma":
        off = all_sq[(all_sq // n) != (all_sq % n)]
        g = BlockPlan(sq, fixed_idx=off, fixed_val=np.zeros(off.size))
    elif tying.variant in ("radial", "lp_radial"):
        p = 2.0 if tying.variant == "radial" else float(tying.p)
        a = BlockPlan(sq, fixed_idx=all_sq, fixed_val=np.full(n * n, p))
        b = BlockPlan(vec, groups=(all_vec,))
        e = BlockPlan(vec, groups=(all_vec,))
        g = BlockPlan(sq, groups=(all_sq,))
    elif tying.variant == "subspaces":
        a = BlockPlan(sq, fixed_idx=all_sq, fixed_val=np.full(n * n, 2.0))
        bsets = []
        esets = []
        gsets = []
        member = np.full(n, -1, dtype=np.intp)
        for k, s in enumerate(tying.partition):
            member[list(s)] = k
            idx = np.asarray(s, dtype=np.intp)
            bsets.append(idx)
            esets.append(idx)
            gsets.append(_flat([(i, j) for i in s for j in s], n))
        cross = all_sq[member[all_sq // n] != member[all_sq % n]]
        b = BlockPlan(vec, groups=tuple(bsets))
        e = BlockPlan(vec, groups=tuple(esets))
        g = BlockPlan(sq, fixed_idx=cross, fixed_val=np.zeros(cross.size),
                      groups=tuple(gsets))
    elif tying.variant == "classic_dn":
        a = BlockPlan(sq, fixed_idx=all_sq, fixed_val=np.ones(n * n))
        g = BlockPlan(sq, fixed_idx=all_sq, fixed_val=np.ones(n * n))
        e = BlockPlan(vec, fixed_idx=all_vec, fixed_val=np.ones(n))

    return TyingPlan(alpha=a, beta=b, gamma=g, epsilon=e)


def _apply_block_plan(arr: np.ndarray, plan: BlockPlan) -> np.ndarray:
    out = arr.reshape(-1).copy()
    for grp in plan.groups:
        vals = out[grp]
        # all-equal groups stay bitwise unchanged (projection is a no-op)
        if not np.all(vals == vals[0]):
            out[grp] = vals.mean()
    if plan.fixed_idx.size:
        out[plan.fixed_idx] = plan.fixed_val
    return out.reshape(plan.shape)


def _reduce_block_grad(grad: np.ndarray, plan: BlockPlan) -> np.ndarray:
    out = grad.reshape(-1).copy()
    for grp in plan.groups:
        out[grp] = out[grp].sum()
    if plan.fixed_idx.size:
        out[plan.fixed_idx] = 0.0
    return out.reshape(plan.shape)


# ---------------------------------------------------------------------------
# Construction and projection
# ---------------------------------------------------------------------------

def init_params(
    dim: int,
    tying: TyingConfig | None = None,
    seed: int = 0,
    h_init: np.ndarray | None = None,
) -> GdnParams:
    """Deterministic near-identity initialization conforming to the tying scheme.

    gamma starts diagonal wherever the scheme allows, which keeps the
    normalization Jacobian diagonal with positive entries (positive definite
    everywhere).  For the radial-family schemes gamma is a small shared
    scalar; positive definiteness then follows from epsilon <= 1/(2 alpha).
    H is the identity plus a small seeded asymmetry, or a caller-supplied
    matrix (e.g. a whitening transform of the training data).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    tying = tying or TyingConfig("full")
    plan = build_plan(tying, dim)
    rng = np.random.default_rng(seed)

    alpha = np.ones((dim, dim))
    beta = np.ones(dim)
    gamma = 0.1 * np.eye(dim)
    if tying.variant in ("radial", "lp_radial", "subspaces"):
        gamma = np.full((dim, dim), 0.1)
    if tying.variant == "classic_dn":
        gamma = np.ones((dim, dim))

    alpha = _apply_block_plan(alpha, plan.alpha)
    beta = _apply_block_plan(beta, plan.beta)
    gamma = _apply_block_plan(gamma, plan.gamma)
    epsilon = 0.5 / np.diag(alpha)
    if tying.variant == "classic_dn":
        epsilon = np.ones(dim)
    epsilon = _apply_block_plan(epsilon, plan.epsilon)

    if h_init is not None:
        h = np.array(h_init, dtype=np.float64)
        if h.shape != (dim, dim):
            raise ValueError("h_init has the wrong shape")
    else:
        h = np.eye(dim) + 1e-2 / np.sqrt(dim) * rng.standard_normal((dim, dim))

    params = GdnParams(h=h, alpha=alpha, beta=beta, gamma=gamma, epsilon=epsilon)
    params.validate()
    return params


def project_constraints(params: GdnParams, tying: TyingConfig | None = None) -> GdnParams:
    """Project onto the constraint box, then re-impose the tying scheme.

    Componentwise clamps (alpha to [1, inf), beta to [BETA_FLOOR, inf),
    gamma to [0, inf), epsilon to [0, 1/alpha_ii] after alpha), followed by
    group-averaging of tied entries and re-assignment of fixed entries.
    Idempotent, and bitwise identity on already-conformant values.
    """
    tying = tying or TyingConfig("full")
    plan = build_plan(tying, params.dim)

    alpha = np.maximum(params.alpha, 1.0)
    beta = np.maximum(params.beta, BETA_FLOOR)
    gamma = np.maximum(params.gamma, 0.0)

    alpha = _apply_block_plan(alpha, plan.alpha)
    beta = _apply_block_plan(beta, plan.beta)
    gamma = _apply_block_plan(gamma, plan.gamma)

    epsilon = _apply_block_plan(params.epsilon, plan.epsilon)
    # tied groups share alpha_ii, so clamping after tying preserves the ties
    epsilon = np.clip(epsilon, 0.0, 1.0 / np.diag(alpha))

    return GdnParams(h=params.h, alpha=alpha, beta=beta, gamma=gamma, epsilon=epsilon)


def reduce_gradient(grads: dict, tying: TyingConfig, dim: int) -> dict:
    """Sum gradients within tied groups (broadcast back) and zero fixed entries."""
    plan = build_plan(tying, dim)
    return {
        "h": grads["h"],
        "alpha": _reduce_block_grad(grads["alpha"], plan.alpha),
        "beta": _reduce_block_grad(grads["beta"], plan.beta),
        "gamma": _reduce_block_grad(grads["gamma"], plan.gamma),
        "epsilon": _reduce_block_grad(grads["epsilon"], plan.epsilon),
    }
