"""Forward GDN transform, its Jacobian/log-determinant, and the inverse.

Conventions: data batches are (M, N) float64 arrays, one sample per row.
For a sample x, the transform is z = H x and

    y_i = z_i / D_i^epsilon_i,   D_i = beta_i + sum_j gamma_ij |z_j|^alpha_ij.

The Jacobian with respect to z is

    dy_i/dz_k = delta_ik D_i^(-eps_i)
                - alpha_ik gamma_ik eps_i z_i |z_k|^(alpha_ik - 1) sgn(z_k)
                  * D_i^(-(eps_i + 1)),

and d y / d x = (d y / d z) H, so the log|det| splits into a normalization
part and log|det H|.

At z_k = 0 the one-sided derivative conventions are: |z|^a has value 0 and
derivative 0 for a > 1; for a = 1 the derivative of |z| at 0 is taken as 0
(subgradient midpoint).  All quantities below stay finite under the
constraint alpha >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InversionError, NonFiniteError, NumericalError
from .params import GdnParams


@dataclass(frozen=True)
class TransformResult:
    z: np.ndarray       # (M, N) linear-stage output
    y: np.ndarray       # (M, N) normalized output
    logdet: np.ndarray  # (M,)   log|det dy/dx| per sample


class NormState:
    """Shared per-batch intermediates of the normalization stage.

    Everything is computed from z only; the linear stage enters separately.
    Shapes: vectors over samples/components are (M, N); the mixed arrays
    indexed [sample, i, j] are (M, N, N).
    """

    __slots__ = ("z", "az", "sgn", "w", "pow1", "b", "bb", "d", "lnd",
                 "p", "c", "e", "y", "jz", "logz")

    def __init__(self, params: GdnParams, z: np.ndarray):
        alpha = params.alpha
        gamma = params.gamma
        eps = params.epsilon
        z = np.asarray(z, dtype=np.float64)
        az = np.abs(z)
        sgn = np.sign(z)
        # w[s,i,j] = |z_j|^alpha_ij
        w = az[:, None, :] ** alpha[None, :, :]
        # pow1[s,i,j] = |z_j|^(alpha_ij - 1), defined as 0 at z_j = 0
        nz = az[:, None, :] != 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            pow1 = np.divide(w, az[:, None, :], out=np.zeros_like(w), where=nz)
        # b[s,i,j] = alpha_ij |z_j|^(alpha_ij-1) sgn(z_j) = dD_i/dz_j / gamma_ij
        b = alpha[None] * pow1 * sgn[:, None, :]
        bb = gamma[None] * b  # dD_i/dz_j
        d = params.beta[None, :] + np.einsum("ij,sij->si", gamma, w)
        lnd = np.log(d)
        p = np.exp(-eps[None, :] * lnd)          # D^(-eps)
        c = p / d                                # D^(-eps-1)
        e = c / d                                # D^(-eps-2)
        y = z * p
        jz = -(eps * z * c)[:, :, None] * bb
        m, n = z.shape
        jz[:, np.arange(n), np.arange(n)] += p
        logz = np.where(az > 0, np.log(np.where(az > 0, az, 1.0)), 0.0)
        self.z, self.az, self.sgn, self.w = z, az, sgn, w
        self.pow1, self.b, self.bb = pow1, b, bb
        self.d, self.lnd, self.p, self.c, self.e = d, lnd, p, c, e
        self.y, self.jz, self.logz = y, jz, logz


def make_state(params: GdnParams, x: np.ndarray) -> NormState:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = x @ params.h.T
    return NormState(params, z)


def _logdet_h(params: GdnParams) -> float:
    sign, val = np.linalg.slogdet(params.h)
    if sign == 0:
        raise NumericalError("linear stage H is singular")
    return float(val)


def forward(params: GdnParams, x: np.ndarray, check: bool = True) -> TransformResult:
    """Apply the transform to a batch; logdet is per-sample log|det dy/dx|."""
    with np.errstate(invalid="ignore", over="ignore"):
        state = make_state(params, x)
        _, logdet_norm = np.linalg.slogdet(state.jz)
    logdet = logdet_norm + _logdet_h(params)
    if check:
        bad = ~np.isfinite(state.y)
        if bad.any():
            s, comp = np.argwhere(bad)[0]
            raise NonFiniteError(
                f"non-finite output at sample {s}, component {comp}",
                sample=int(s), component=int(comp))
        badld = ~np.isfinite(logdet)
        if badld.any():
            s = int(np.argwhere(badld)[0][0])
            raise NonFiniteError(f"non-finite log-determinant at sample {s}", sample=s)
    return TransformResult(z=state.z, y=state.y, logdet=logdet)


def jacobian_wrt_z(params: GdnParams, z: np.ndarray) -> np.ndarray:
    """dy/dz for a single vector z, shape (N, N)."""
    state = NormState(params, np.atleast_2d(z))
    return state.jz[0]


def jacobian_wrt_input(params: GdnParams, x: np.ndarray) -> np.ndarray:
    """dy/dx = (dy/dz) H for a single input vector, shape (N, N)."""
    state = make_state(params, x)
    return state.jz[0] @ params.h


def check_pd(params: GdnParams, z: np.ndarray) -> tuple[bool, float]:
    """Positive definiteness of the symmetric part of dy/dz at a point z.

    Returns (is_pd, smallest eigenvalue of (J + J^T)/2).  This is the
    sufficient invertibility condition for the normalization stage.
    """
    jz = jacobian_wrt_z(params, z)
    eig = np.linalg.eigvalsh(0.5 * (jz + jz.T))
    lo = float(eig[0])
    return lo > 0.0, lo


def _normalize_only(params: GdnParams, z: np.ndarray) -> np.ndarray:
    state = NormState(params, z)
    return state.y


def _fixed_point_start(params: GdnParams, y: np.ndarray) -> np.ndarray:
    """Axis-asymptote start sgn(y) (gamma_ii^eps |y|)^(1/(1 - alpha_ii eps)).

    Falls back to z = y where the exponent is undefined (gamma_ii = 0 or
    alpha_ii eps_i = 1) or where the power overflows.
    """
    ga = np.diag(params.gamma)
    aa = np.diag(params.alpha)
    eps = params.epsilon
    denom = 1.0 - aa * eps
    usable = (ga > 0.0) & (np.abs(denom) > 1e-12)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        base = ga[None, :] ** eps[None, :] * np.abs(y)
        expo = np.where(usable, denom, 1.0)
        z0 = np.sign(y) * base ** (1.0 / expo[None, :])
    ok = usable[None, :] & np.isfinite(z0)
    return np.where(ok, z0, y)


def inverse(
    params: GdnParams,
    y: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-10,
    residual_tol: float = 1e-8,
    strict: bool = True,
):
    """Invert the transform by fixed-point iteration on the normalization.

    Iterates z <- (beta + sum_j gamma_ij |z_j|^alpha_ij)^eps * y until the
    sup-norm step falls below tol, then solves H x = z.  Samples whose
    fixed-point contraction is too slow to meet the residual tolerance get
    a short Newton polish on the residual (the Jacobian is closed-form and
    positive definite wherever the transform is invertible).  With
    strict=True a non-converged sample raises InversionError; otherwise
    the converged mask is returned alongside x.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    alpha, gamma, beta, eps = params.alpha, params.gamma, params.beta, params.epsilon
    z = _fixed_point_start(params, y)
    active = np.ones(y.shape[0], dtype=bool)
    for _ in range(max_iter):
        za = z[active]
        with np.errstate(over="ignore", invalid="ignore"):
            w = np.abs(za)[:, None, :] ** alpha[None]
            d = beta[None, :] + np.einsum("ij,sij->si", gamma, w)
            z_next = d ** eps[None, :] * y[active]
            step = np.max(np.abs(z_next - za), axis=1)
        z[active] = z_next
        still = step >= tol
        if not still.any():
            active[:] = False
            break
        idx = np.flatnonzero(active)
        active[idx[~still]] = False

    with np.errstate(invalid="ignore", over="ignore"):
        residual = np.max(np.abs(_normalize_only(params, z) - y), axis=1)

    for _ in range(20):
        bad = np.flatnonzero(~(np.isfinite(residual) & (residual <= residual_tol)))
        if bad.size == 0:
            break
        with np.errstate(invalid="ignore", over="ignore"):
            state = NormState(params, z[bad])
            try:
                step = np.linalg.solve(state.jz, (y[bad] - state.y)[:, :, None])[..., 0]
            except np.linalg.LinAlgError:
                break
            z_new = z[bad] + step
            res_new = np.max(np.abs(_normalize_only(params, z_new) - y[bad]), axis=1)
        better = np.isfinite(res_new) & (res_new < residual[bad])
        if not better.any():
            break
        upd = bad[better]
        z[upd] = z_new[better]
        residual[upd] = res_new[better]

    ok = np.isfinite(residual) & (residual <= residual_tol)
    if strict and not ok.all():
        bad = np.flatnonzero(~ok)
        finite = residual[bad][np.isfinite(residual[bad])]
        worst = f"{finite.max():.3e}" if finite.size else "non-finite"
        raise InversionError(
            f"fixed-point inversion failed for {bad.size} sample(s); "
            f"max residual {worst}",
            indices=bad, residuals=residual[bad])
    try:
        x = np.linalg.solve(params.h, z.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("linear stage H is singular") from exc
    if strict:
        return x
    return x, ok
