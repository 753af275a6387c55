"""Patch extraction, preprocessing, synthetic generators, and file I/O.

Synthetic generators double as test oracles: each samples exactly from a
named family with known structure (known mutual information, known radial
law, known mixing matrix).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from .errors import FormatError

PATCHSET_MAGIC = b"GDNP"
PATCHSET_VERSION = 1


@dataclass(frozen=True)
class PatchSet:
    """A matrix of sample vectors plus provenance."""

    data: np.ndarray       # (M, N) float64
    source: str = ""
    preproc: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError("PatchSet data must be 2-D (samples x dims)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("PatchSet data must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# Patch extraction / reassembly
# ---------------------------------------------------------------------------

def extract_patches(
    image: np.ndarray,
    size: int,
    stride: int | None = None,
    seed: int | None = None,
    max_count: int | None = None,
    source: str = "",
    subtract_mean: bool = False,
) -> PatchSet:
    """Vectorized square patches, either on a stride grid or at seeded
    random offsets.  Pixel values are copied exactly unless subtract_mean
    removes each patch's own mean (note: that mode makes the patch
    ensemble rank-deficient along the flat direction)."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if h < size or w < size:
        raise ValueError("image smaller than patch size")
    if stride is not None:
        offs = [(r, c)
                for r in range(0, h - size + 1, stride)
                for c in range(0, w - size + 1, stride)]
        if max_count is not None:
            offs = offs[:max_count]
    else:
        if max_count is None:
            raise ValueError("random mode needs max_count")
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, h - size + 1, size=max_count)
        cols = rng.integers(0, w - size + 1, size=max_count)
        offs = list(zip(rows.tolist(), cols.tolist()))
    out = np.empty((len(offs), size * size))
    for k, (r, c) in enumerate(offs):
        out[k] = img[r:r + size, c:c + size].reshape(-1)
    preproc = ""
    if subtract_mean:
        out -= out.mean(axis=1, keepdims=True)
        preproc = "patch_mean_removed"
    return PatchSet(out, source=source, preproc=preproc)

def image_patch_grid(image: np.ndarray, size: int):
    """All stride-1 patches of an image plus their (row, col) offsets."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    grid = [(r, c) for r in range(h - size + 1) for c in range(w - size + 1)]
    out = np.empty((len(grid), size * size))
    for k, (r, c) in enumerate(grid):
        out[k] = img[r:r + size, c:c + size].reshape(-1)
    return out, grid


def assemble_patches(patches: np.ndarray, grid, shape, size: int) -> np.ndarray:
    """Overlap-average patches back into an image (uniform weighting)."""
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    for k, (r, c) in enumerate(grid):
        acc[r:r + size, c:c + size] += patches[k].reshape(size, size)
        cnt[r:r + size, c:c + size] += 1.0
    return acc / cnt


# ---------------------------------------------------------------------------
# Saturation filtering
# ---------------------------------------------------------------------------

def filter_saturated(images, top_bin_fraction: float = 0.001):
    """Drop images whose top intensity bin (the dtype ceiling, where pixels
    saturate) holds more than the given fraction of pixels; the boundary
    case is kept (strict inequality).

    Returns (kept_images, removed_count).
    """
    kept = []
    removed = 0
    for img in images:
        arr = np.asarray(img)
        if arr.dtype.kind not in "iu":
            raise ValueError("saturation filtering expects integer-valued intensities")
        top = np.iinfo(arr.dtype).max
        frac = np.count_nonzero(arr == top) / arr.size
        if frac > top_bin_fraction:
            removed += 1
        else:
            kept.append(img)
    return kept, removed


# ---------------------------------------------------------------------------
# Pointwise Gaussianizer (inverse generalized logistic)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseGaussianizer:
    """Strictly monotone map sending intensities to roughly N(0, 1).

    Parameterized as the inverse of a generalized logistic curve
    v = lo + (hi - lo) * sigmoid(rate * (u - loc))^asym, i.e.

        u(v) = loc + logit(q^(1/asym)) / rate,  q = (v - lo) / (hi - lo),

    with four fitted parameters (loc, rate, asym, and the range margin
    that sets lo/hi beyond the observed data range).
    """

    loc: float
    rate: float
    asym: float
    lo: float
    hi: float

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        q = (v - self.lo) / (self.hi - self.lo)
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            raise ValueError("input outside the valid range of the gaussianizer")
        # keep the logit argument representable strictly inside (0, 1)
        r = np.clip(q ** (1.0 / self.asym), 5e-324, np.nextafter(1.0, 0.0))
        return self.loc + (np.log(r) - np.log1p(-r)) / self.rate

    def invert(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        s = 1.0 / (1.0 + np.exp(-self.rate * (u - self.loc)))
        return self.lo + (self.hi - self.lo) * s ** self.asym


def fit_pointwise_gaussianizer(intensities: np.ndarray) -> PointwiseGaussianizer:
    """Fit by quantile matching: minimize the squared mismatch between the
    transformed empirical quantiles and standard-normal quantiles at 99
    equally spaced probabilities."""
    v = np.asarray(intensities, dtype=np.float64).reshape(-1)
    if v.size < 1000:
        raise ValueError("need at least 1000 samples to fit the gaussianizer")
    vmin, vmax = float(v.min()), float(v.max())
    span = vmax - vmin
    if span == 0.0:
        raise ValueError("constant input; gaussianizer is degenerate")
    probs = np.arange(1, 100) / 100.0
    vq = np.quantile(v, probs)
    target = ndtri(probs)

    def unpack(theta):
        loc, lrate, lasym, lmargin = theta
        # margin floor keeps the observed range strictly inside (lo, hi)
        margin = 1e-6 + np.exp(lmargin)
        lo = vmin - margin * span
        hi = vmax + margin * span
        return loc, np.exp(lrate), np.exp(lasym), lo, hi

    def cost(theta):
        loc, rate, asym, lo, hi = unpack(theta)
        q = (vq - lo) / (hi - lo)
        r = q ** (1.0 / asym)
        u = loc + (np.log(r) - np.log1p(-r)) / rate
        return float(np.sum((u - target) ** 2))

    # moment-matched start: unit asymmetry, rate from the interquartile span
    q25, q75 = (np.quantile(v, 0.25) - vmin + 0.05 * span) / (1.1 * span), \
               (np.quantile(v, 0.75) - vmin + 0.05 * span) / (1.1 * span)
    rate0 = (np.log(q75 / (1 - q75)) - np.log(q25 / (1 - q25))) / 1.349
    q50 = (np.quantile(v, 0.5) - vmin + 0.05 * span) / (1.1 * span)
    loc0 = -np.log(q50 / (1 - q50)) / rate0
    theta0 = np.array([loc0, np.log(max(rate0, 1e-3)), 0.0, np.log(0.05)])
    res = minimize(cost, theta0, method="Nelder-Mead",
                   options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-12})
    loc, rate, asym, lo, hi = unpack(res.x)
    g = PointwiseGaussianizer(loc=float(loc), rate=float(rate),
                              asym=float(asym), lo=float(lo), hi=float(hi))
    # exact mean removal on the fitting sample
    shift = float(np.mean(g.apply(v)))
    return PointwiseGaussianizer(loc=g.loc - shift, rate=g.rate, asym=g.asym,
                                 lo=g.lo, hi=g.hi)


# ---------------------------------------------------------------------------
# sRGB linearization
# ---------------------------------------------------------------------------

def srgb_to_linear(rgb8: np.ndarray) -> np.ndarray:
    """8-bit sRGB to linear luminance (sRGB transfer + Rec. 709 weights)."""
    rgb = np.asarray(rgb8, dtype=np.float64) / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    return lin[..., 0] * 0.2126 + lin[..., 1] * 0.7152 + lin[..., 2] * 0.0722


# ---------------------------------------------------------------------------
# Synthetic generators (oracles)
# ---------------------------------------------------------------------------

def parse_scale_dist(spec: str):
    """Parse 'constant:c', 'uniform:lo,hi', 'lognormal:sigma', 'exponential:s'."""
    kind, _, rest = spec.partition(":")
    args = [float(t) for t in rest.split(",")] if rest else []
    if kind == "constant" and len(args) == 1:
        return lambda rng, m: np.full(m, args[0])
    if kind == "uniform" and len(args) == 2:
        return lambda rng, m: rng.uniform(args[0], args[1], size=m)
    if kind == "lognormal" and len(args) == 1:
        return lambda rng, m: rng.lognormal(0.0, args[0], size=m)
    if kind == "exponential" and len(args) == 1:
        return lambda rng, m: rng.exponential(args[0], size=m)
    raise ValueError(f"unknown scale distribution {spec!r}")


def gen_gsm(dim: int, scale_dist, count: int, seed: int) -> PatchSet:
    """Gaussian scale mixture: x = s * g with g ~ N(0, I) and s > 0 scalar."""
    rng = np.random.default_rng(seed)
    draw = parse_scale_dist(scale_dist) if isinstance(scale_dist, str) else scale_dist
    s = draw(rng, count)
    g = rng.standard_normal((count, dim))
    return PatchSet(g * s[:, None], source=f"gsm(dim={dim})",
                    preproc=f"scale={scale_dist}")


def gen_ica_laplace(dim: int, mixing: np.ndarray | None, count: int, seed: int) -> PatchSet:
    """Linear mixture of independent unit-variance Laplacian sources."""
    rng = np.random.default_rng(seed)
    s = rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=(count, dim))
    a = np.eye(dim) if mixing is None else np.asarray(mixing, dtype=np.float64)
    return PatchSet(s @ a.T, source=f"ica_laplace(dim={dim})", preproc="")


def gen_lp_radial(dim: int, p: float, count: int, seed: int,
                  scale_dist: str = "uniform:0.5,2.0") -> PatchSet:
    """Lp-spherically symmetric samples: a generalized-normal vector with
    shape p (density prop. to exp(-||x||_p^p)) times an independent scale."""
    rng = np.random.default_rng(seed)
    g = rng.gamma(1.0 / p, 1.0, size=(count, dim)) ** (1.0 / p)
    signs = rng.integers(0, 2, size=(count, dim)) * 2 - 1
    w = g * signs
    s = parse_scale_dist(scale_dist)(rng, count)
    return PatchSet(w * s[:, None], source=f"lp_radial(dim={dim},p={p})",
                    preproc=f"scale={scale_dist}")


def zca_matrix(x: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Symmetric whitening transform of a sample batch."""
    x = np.asarray(x, dtype=np.float64)
    c = np.cov(x, rowvar=False)
    c = np.atleast_2d(c)
    evals, evecs = np.linalg.eigh(c)
    return evecs @ np.diag(1.0 / np.sqrt(evals + ridge)) @ evecs.T


# ---------------------------------------------------------------------------
# PatchSet file format: magic, version, M, N, tags, float64 row-major data
# ---------------------------------------------------------------------------

def save_patchset(ps: PatchSet) -> bytes:
    buf = io.BytesIO()
    src = ps.source.encode("utf-8")
    pre = ps.preproc.encode("utf-8")
    buf.write(PATCHSET_MAGIC)
    buf.write(struct.pack("<HQQII", PATCHSET_VERSION, ps.count, ps.dim,
                          len(src), len(pre)))
    buf.write(src)
    buf.write(pre)
    buf.write(ps.data.astype("<f8").tobytes())
    return buf.getvalue()


def load_patchset(blob: bytes) -> PatchSet:
    try:
        if blob[:4] != PATCHSET_MAGIC:
            raise FormatError("not a patch-set stream (bad magic)")
        ver, m, n, lsrc, lpre = struct.unpack_from("<HQQII", blob, 4)
        if ver != PATCHSET_VERSION:
            raise FormatError(f"unsupported patch-set version {ver}")
        off = 4 + struct.calcsize("<HQQII")
        src = blob[off:off + lsrc].decode("utf-8")
        off += lsrc
        pre = blob[off:off + lpre].decode("utf-8")
        off += lpre
        need = m * n * 8
        if len(blob) - off != need:
            raise FormatError("truncated or oversized patch-set stream")
        data = np.frombuffer(blob[off:off + need], dtype="<f8").reshape(m, n)
        return PatchSet(np.array(data), source=src, preproc=pre)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"malformed patch-set stream: {exc}") from exc


def write_patchset(path, ps: PatchSet) -> None:
    with open(path, "wb") as fh:
        fh.write(save_patchset(ps))


def read_patchset(path) -> PatchSet:
    with open(path, "rb") as fh:
        return load_patchset(fh.read())


# ---------------------------------------------------------------------------
# Portable graymap I/O (binary P5, 8- or 16-bit)
# ---------------------------------------------------------------------------

def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (array, maxval)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if blob[:2] != b"P5":
            raise FormatError("not a binary PGM (P5) file")
        fields = []
        pos = 2
        while len(fields) < 3:
            while pos < len(blob) and blob[pos:pos + 1].isspace():
                pos += 1
            if blob[pos:pos + 1] == b"#":
                while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                    pos += 1
                continue
            start = pos
            while pos < len(blob) and not blob[pos:pos + 1].isspace():
                pos += 1
            fields.append(int(blob[start:pos]))
        pos += 1  # single whitespace after maxval
        width, height, maxval = fields
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        raw = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        if raw.size != count:
            raise FormatError("truncated PGM pixel data")
        return raw.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8), maxval
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed PGM file: {exc}") from exc


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    img = np.asarray(image)
    if img.dtype.kind == "f":
        img = np.clip(np.rint(img * maxval), 0, maxval)
    img = img.astype(">u2" if maxval > 255 else "u1")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())
