"""Gaussianization diagnostics: negentropy reduction, mutual information,
marginal/radial goodness-of-fit, and the pairwise MI-vs-distance curve.

delta_j reports how much LESS non-Gaussian the data are after the
transform (positive = improvement), estimated as

    mean( 0.5 ||x||^2 + log|det dy/dx| - 0.5 ||y||^2 ).

The MI estimator uses equiquantile (adaptive) binning with a
Miller-Madow bias correction; equiquantile bins make the estimate
invariant under strictly monotone per-coordinate transforms, which keeps
cross-model comparisons fair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gammainc, ndtr

from .params import GdnParams, TyingConfig
from .transform import forward

MI_BIN_CAP = 64


def delta_j(params: GdnParams, x: np.ndarray, per_pixel: bool = False) -> float:
    """Negentropy reduction of the batch under the transform, in nats."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    res = forward(params, x)
    quad_x = 0.5 * np.einsum("si,si->s", x, x)
    quad_y = 0.5 * np.einsum("si,si->s", res.y, res.y)
    val = float(np.mean(quad_x + res.logdet - quad_y))
    return val / params.dim if per_pixel else val


def _equiquantile_bins(v: np.ndarray, bins: int) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(v.size)
    return (ranks * bins) // v.size


def mutual_information(pairs: np.ndarray, bins: int | None = None) -> float:
    """Histogram MI of a batch of 2-vectors, in nats (Miller-Madow corrected).

    Marginal bins are equiquantile, so the estimate is invariant under
    strictly monotone transforms of either coordinate.
    """
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("expected a batch of 2-vectors")
    m = pairs.shape[0]
    if np.ptp(pairs[:, 0]) == 0.0 or np.ptp(pairs[:, 1]) == 0.0:
        raise ValueError("degenerate data: a coordinate has zero variance")
    if bins is None:
        bins = min(MI_BIN_CAP, int(np.floor(m ** (1.0 / 3.0))))
    bins = max(bins, 2)
    bx = _equiquantile_bins(pairs[:, 0], bins)
    by = _equiquantile_bins(pairs[:, 1], bins)
    joint = np.bincount(bx * bins + by, minlength=bins * bins).astype(np.float64)
    joint /= m
    px = joint.reshape(bins, bins).sum(axis=1)
    py = joint.reshape(bins, bins).sum(axis=0)

    def entropy(p):
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum()), nz.size

    hx, kx = entropy(px)
    hy, ky = entropy(py)
    hxy, kxy = entropy(joint)
    mi = hx + hy - hxy
    mi += ((kx - 1) + (ky - 1) - (kxy - 1)) / (2.0 * m)
    return mi


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Supremum distance between the empirical CDF and a reference CDF."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    n = s.size
    f = cdf(s)
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower))


def normal_cdf(x: np.ndarray) -> np.ndarray:
    return ndtr(x)


def chi_cdf(r: np.ndarray, dof: int) -> np.ndarray:
    """CDF of the norm of a dof-dimensional standard normal vector,
    via the regularized lower incomplete gamma function."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = gammainc(dof / 2.0, r[pos] ** 2 / 2.0)
    return out


@dataclass(frozen=True)
class EvalReport:
    delta_j: float
    delta_j_per_pixel: float
    mi: float                   # transformed pairwise MI (2-D runs), else nan
    marginal_stats: np.ndarray  # (N,) KS of each marginal of y vs N(0,1)
    radial_stat: float          # KS of ||y|| vs the chi law with N dof


def marginal_radial_report(params: GdnParams, x: np.ndarray) -> EvalReport:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    res = forward(params, x)
    n = params.dim
    marg = np.array([ks_statistic(res.y[:, i], normal_cdf) for i in range(n)])
    radial = ks_statistic(np.linalg.norm(res.y, axis=1), lambda r: chi_cdf(r, n))
    mi = mutual_information(res.y) if n == 2 else float("nan")
    dj = delta_j(params, x)
    return EvalReport(delta_j=dj, delta_j_per_pixel=dj / n, mi=mi,
                      marginal_stats=marg, radial_stat=radial)


def amari_index(w_est: np.ndarray, a_true: np.ndarray) -> float:
    """Permutation/scale-invariant distance between an estimated unmixing
    matrix and the inverse of the true mixing matrix; 0 = perfect recovery."""
    p = np.abs(np.asarray(w_est) @ np.asarray(a_true))
    n = p.shape[0]
    rows = (p.sum(axis=1) / p.max(axis=1) - 1.0).sum()
    cols = (p.sum(axis=0) / p.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * n * (n - 1)))


# ---------------------------------------------------------------------------
# Pairwise MI as a function of spatial separation
# ---------------------------------------------------------------------------

def oriented_kernel() -> np.ndarray:
    """Fixed 5x5 oriented derivative-of-Gaussian filter (vertical-edge
    selective); the stand-in front end for the MI-curve experiment."""
    r = np.arange(-2.0, 3.0)
    xx, yy = np.meshgrid(r, r)
    g = np.exp(-(xx ** 2 + yy ** 2) / 2.0)
    k = -xx * g
    return k / np.sqrt(np.sum(k ** 2))


def coefficient_pairs(images, distance: int, kernel: np.ndarray | None = None,
                      max_pairs: int = 200_000, seed: int = 0) -> np.ndarray:
    """Horizontal-offset pairs of oriented-filter responses, pooled over images."""
    kern = oriented_kernel() if kernel is None else kernel
    rng = np.random.default_rng(seed)
    chunks = []
    for img in images:
        resp = fftconvolve(np.asarray(img, dtype=np.float64), kern, mode="valid")
        if resp.shape[1] <= distance:
            continue
        a = resp[:, :-distance].reshape(-1)
        b = resp[:, distance:].reshape(-1)
        chunks.append(np.column_stack([a, b]))
    if not chunks:
        raise ValueError(f"no coefficient pairs at distance {distance}")
    pairs = np.concatenate(chunks, axis=0)
    if pairs.shape[0] > max_pairs:
        idx = rng.choice(pairs.shape[0], size=max_pairs, replace=False)
        pairs = pairs[idx]
    return pairs / pairs.std(axis=0, keepdims=True)


MI_CURVE_VARIANTS = ("raw", "ica-mg", "rg", "gdn")

_VARIANT_TYING = {
    "ica-mg": TyingConfig("diagonal_gamma"),
    "rg": TyingConfig("radial"),
    "gdn": TyingConfig("full"),
}


def pairwise_mi_curve(
    images,
    distances,
    fit_config=None,
    variants=MI_CURVE_VARIANTS,
    kernel: np.ndarray | None = None,
    max_pairs: int = 200_000,
    train_count: int = 20_000,
    seed: int = 0,
):
    """MI of filter-response pairs before/after fitting each 2-D variant.

    Returns a list of (distance, variant, mi) rows.  Each variant is
    fitted per distance on a subsample of the pairs and evaluated on the
    full pair set.
    """
    from .trainer import FitConfig, fit  # deferred: trainer imports evaluate

    rows = []
    for d in distances:
        pairs = coefficient_pairs(images, d, kernel=kernel,
                                  max_pairs=max_pairs, seed=seed)
        if "raw" in variants:
            rows.append((d, "raw", mutual_information(pairs)))
        train = pairs[:min(train_count, pairs.shape[0])]
        for name in variants:
            if name == "raw":
                continue
            cfg = fit_config or FitConfig(batch_size=1024, epochs=120,
                                          learning_rate=3e-3, seed=seed)
            cfg = cfg.with_tying(_VARIANT_TYING[name])
            model, _ = fit(train, cfg)
            res = forward(model, pairs)
            rows.append((d, name, mutual_information(res.y)))
    return rows
