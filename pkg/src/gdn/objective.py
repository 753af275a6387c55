"""Training loss and its closed-form parameter gradients.

The loss is the optimizable part of the negentropy of the transformed
batch: mean over samples of

    0.5 ||y||^2 - log|det dy/dx|,

which equals the negative mean log-likelihood of the induced density up
to an additive constant.  Gradients are derived by hand (no autodiff) so
that the finite-difference oracle in this module is a genuinely
independent check.

Structure of the gradient for any parameter t:

    dLoss/dt = E[ sum_i y_i dy_i/dt - tr(J^-1 dJ/dt) ],   J = dy/dx.

For the normalization parameters (alpha, beta, gamma, epsilon) dJ/dt is
nonzero only in one row of dy/dz, so each trace collapses to an inner
product with one column of (dy/dz)^-1.  For H the trace involves the
derivative of dy/dz with respect to z (second partials of the transform);
the same machinery yields the gradient of the log-density with respect to
the input (the score), exposed as input_score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .params import GdnParams, TyingConfig, reduce_gradient
from .transform import _logdet_h, make_state

GRAD_BLOCKS = ("h", "alpha", "beta", "gamma", "epsilon")


@dataclass(frozen=True)
class LossTerms:
    quad: np.ndarray    # (M,) 0.5 ||y||^2 per sample
    logdet: np.ndarray  # (M,) log|det dy/dx| per sample
    loss: float         # mean(quad - logdet)


def loss(params: GdnParams, x: np.ndarray) -> LossTerms:
    state = make_state(params, x)
    _, logdet_norm = np.linalg.slogdet(state.jz)
    logdet = logdet_norm + _logdet_h(params)
    quad = 0.5 * np.einsum("si,si->s", state.y, state.y)
    if not np.all(np.isfinite(logdet)):
        raise NumericalError("non-finite log-determinant in loss")
    return LossTerms(quad=quad, logdet=logdet, loss=float(np.mean(quad - logdet)))


def _pow2_guarded(az: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """|z_j|^(alpha_ij - 2) with the z=0 conventions (0^0 = 1, negatives -> 0)."""
    with np.errstate(divide="ignore"):
        out = az[:, None, :] ** (alpha[None] - 2.0)
    return np.where(np.isfinite(out), out, 0.0)


class _GradState:
    """NormState extended with the Jacobian inverse and shared trace pieces."""

    def __init__(self, params: GdnParams, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.x = x
        self.state = make_state(params, x)
        st = self.state
        try:
            self.q = np.linalg.inv(st.jz)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Jacobian; trace term undefined") from exc
        self.qt = np.swapaxes(self.q, 1, 2)
        n = params.dim
        self.qdiag = self.q[:, np.arange(n), np.arange(n)]
        # s1[s,i] = sum_k dD_i/dz_k * (Jz^-1)[k,i]
        self.s1 = np.einsum("sik,ski->si", st.bb, self.q)


def _logdet_trace_vec(params: GdnParams, gs: "_GradState") -> np.ndarray:
    """Per-sample T with T_a = tr(Jz^-1 d(dy/dz)/dz_a); the z-gradient of
    log|det dy/dz|, built from the second partials of the transform."""
    st = gs.state
    eps = params.epsilon
    c2 = params.gamma[None] * params.alpha[None] * (params.alpha[None] - 1.0) \
        * _pow2_guarded(st.az, params.alpha)
    zc = st.z * st.c
    return (
        -np.einsum("sia,si->sa", st.bb, gs.qdiag * eps[None, :] * st.c)
        - eps[None, :] * st.c * gs.s1
        - np.einsum("sai,si,sia->sa", gs.q, eps[None, :] * zc, c2)
        + np.einsum("sia,si->sa", st.bb,
                    eps[None, :] * (eps + 1.0)[None, :] * st.z * st.e * gs.s1)
    )


def loss_and_grad(
    params: GdnParams,
    x: np.ndarray,
    tying: TyingConfig | None = None,
) -> tuple[LossTerms, dict]:
    """Loss plus d loss / d {H, alpha, beta, gamma, epsilon} for a batch.

    With a tying config the tied entries receive their summed group
    gradient (broadcast back to every member) and fixed entries are
    zeroed; without one the raw per-entry gradients are returned.
    """
    gs = _GradState(params, x)
    st = gs.state
    m = gs.x.shape[0]
    eps = params.epsilon
    gamma = params.gamma

    u = eps[None, :] * st.z * st.c                     # eps_i z_i D_i^(-eps-1)
    yu = st.y * u
    zc = st.z * st.c
    qc = gs.qdiag * st.c
    ze_s1 = (eps + 1.0)[None, :] * st.z * st.e * gs.s1

    # gamma/alpha share their row structure: with
    #   S_ij  = -(y u + eps (q C - (eps+1) z E S1))_i  broadcast against w_ij
    #   QZC   = (Jz^-1)^T_ij z_i C_i
    # the gamma gradient is mean(S w + eps QZC b) and the alpha gradient is
    # the same with w -> gamma w log|z_j| and b -> gamma db/dalpha.
    s_row = -yu + eps[None, :] * (qc - ze_s1)          # (M, N), equals d loss/d beta
    qzc = gs.qt * zc[:, :, None]                       # (M, N, N)
    glw = gamma[None] * st.logz[:, None, :]            # gamma_ij log|z_j|
    # d b_ij / d alpha_ij, zero at z_j = 0
    dbda = st.sgn[:, None, :] * st.pow1 * (1.0 + params.alpha[None] * st.logz[:, None, :])

    core = s_row[:, :, None] * st.w
    g_gamma = (core + eps[None, :, None] * (qzc * st.b)).mean(axis=0)
    g_alpha = (core * glw + eps[None, :, None] * (qzc * (gamma[None] * dbda))).mean(axis=0)
    g_beta = s_row.mean(axis=0)
    g_eps = (-st.y * st.y * st.lnd
             + gs.qdiag * st.p * st.lnd
             + zc * (1.0 - eps[None, :] * st.lnd) * gs.s1).mean(axis=0)

    # --- H: quadratic term (Jz^T y) x^T minus d(logdet)/dH = T x^T + H^-T ---
    t_vec = _logdet_trace_vec(params, gs)
    v = np.einsum("sik,si->sk", st.jz, st.y)           # Jz^T y per sample
    gh = np.einsum("sa,sb->ab", v - t_vec, gs.x) / m - np.linalg.inv(params.h).T

    grads = {"h": gh, "alpha": g_alpha, "beta": g_beta,
             "gamma": g_gamma, "epsilon": g_eps}
    if tying is not None:
        grads = reduce_gradient(grads, tying, params.dim)

    _, logdet_norm = np.linalg.slogdet(st.jz)
    logdet = logdet_norm + _logdet_h(params)
    quad = 0.5 * np.einsum("si,si->s", st.y, st.y)
    terms = LossTerms(quad=quad, logdet=logdet, loss=float(np.mean(quad - logdet)))
    return terms, grads


def grad_params(params: GdnParams, x: np.ndarray, tying: TyingConfig | None = None) -> dict:
    return loss_and_grad(params, x, tying)[1]


def input_score(params: GdnParams, x: np.ndarray) -> np.ndarray:
    """Gradient of the induced log-density with respect to the input.

    d log p / dx = -J^T y + d log|det J| / dx with J = dy/dx; both pieces
    reduce to the per-sample vector (T - Jz^T y) mapped through H^T.
    """
    gs = _GradState(params, x)
    st = gs.state
    t_vec = _logdet_trace_vec(params, gs)
    v = np.einsum("sik,si->sk", st.jz, st.y)
    return (t_vec - v) @ params.h


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def _loss_scalar(params: GdnParams, x: np.ndarray) -> float:
    return loss(params, x).loss


def _bounds(params: GdnParams, block: str, idx: tuple) -> tuple[float, float]:
    if block == "alpha":
        return 1.0, np.inf
    if block == "beta":
        return 0.0, np.inf
    if block == "gamma":
        return 0.0, np.inf
    if block == "epsilon":
        i = idx[0]
        return 0.0, 1.0 / params.alpha[i, i]
    return -np.inf, np.inf


def fd_grad_params(
    params: GdnParams,
    x: np.ndarray,
    step: float = 1e-6,
    blocks: tuple = GRAD_BLOCKS,
) -> dict:
    """Finite-difference gradient of the loss, entry by entry.

    Central differences in the interior; automatically one-sided where a
    perturbation would cross a constraint boundary.  Independent of the
    analytic path: only the loss value is evaluated.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = {}
    for block in blocks:
        base = np.array(getattr(params, block))
        grad = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        for val in it:
            idx = it.multi_index
            lo, hi = _bounds(params, block, idx)
            v = float(val)
            up = np.array(base)
            dn = np.array(base)
            if v - step < lo:          # forward difference at the lower bound
                up[idx] = v + step
                f1 = _loss_scalar(params.with_(**{block: up}), x)
                f0 = _loss_scalar(params, x)
                grad[idx] = (f1 - f0) / step
            elif v + step > hi:        # backward difference at the upper bound
                dn[idx] = v - step
                f0 = _loss_scalar(params, x)
                f1 = _loss_scalar(params.with_(**{block: dn}), x)
                grad[idx] = (f0 - f1) / step
            else:
                up[idx] = v + step
                dn[idx] = v - step
                f_up = _loss_scalar(params.with_(**{block: up}), x)
                f_dn = _loss_scalar(params.with_(**{block: dn}), x)
                grad[idx] = (f_up - f_dn) / (2.0 * step)
        out[block] = grad
    return out


def fd_input_score(params: GdnParams, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference score, the oracle for input_score and the denoiser."""
    from .density import log_density  # local import to avoid a cycle

    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    for j in range(x.shape[1]):
        up = x.copy()
        dn = x.copy()
        up[:, j] += step
        dn[:, j] -= step
        out[:, j] = (log_density(params, up) - log_density(params, dn)) / (2.0 * step)
    return out
