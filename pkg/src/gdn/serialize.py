"""Model file formats.

Single model: self-describing binary -- magic, version, dim, tying tag,
preprocessing metadata (JSON), then the five parameter arrays as
row-major little-endian float64.  Raw float bytes round-trip exactly.

Cascade model: header plus length-prefixed concatenated stage blocks.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .cascade import CascadeModel, CascadeStage
from .errors import FormatError, InvariantViolation
from .params import GdnParams, TyingConfig, VARIANTS

MODEL_MAGIC = b"GDNM"
CASCADE_MAGIC = b"GDNC"
MODEL_VERSION = 1


def _pack_tying(tying: TyingConfig) -> bytes:
    code = VARIANTS.index(tying.variant)
    p = tying.p if tying.p is not None else float("nan")
    parts = [struct.pack("<Bd", code, p)]
    sets = tying.partition or ()
    parts.append(struct.pack("<I", len(sets)))
    for s in sets:
        parts.append(struct.pack("<I", len(s)))
        parts.append(struct.pack(f"<{len(s)}I", *s))
    return b"".join(parts)


def _unpack_tying(blob: bytes, off: int) -> tuple[TyingConfig, int]:
    code, p = struct.unpack_from("<Bd", blob, off)
    off += struct.calcsize("<Bd")
    if code >= len(VARIANTS):
        raise FormatError(f"unknown tying code {code}")
    (nsets,) = struct.unpack_from("<I", blob, off)
    off += 4
    sets = []
    for _ in range(nsets):
        (ln,) = struct.unpack_from("<I", blob, off)
        off += 4
        sets.append(tuple(struct.unpack_from(f"<{ln}I", blob, off)))
        off += 4 * ln
    tying = TyingConfig(
        VARIANTS[code],
        p=None if np.isnan(p) else float(p),
        partition=tuple(sets) if sets else None,
    )
    return tying, off


def save_model(params: GdnParams, tying: TyingConfig, preproc_meta: dict | None = None) -> bytes:
    params.validate()
    meta = json.dumps(preproc_meta or {}, sort_keys=True).encode("utf-8")
    tyb = _pack_tying(tying)
    head = MODEL_MAGIC + struct.pack("<HI", MODEL_VERSION, params.dim)
    body = struct.pack("<I", len(tyb)) + tyb + struct.pack("<I", len(meta)) + meta
    arrays = b"".join(
        np.ascontiguousarray(getattr(params, nm), dtype="<f8").tobytes()
        for nm in ("h", "alpha", "beta", "gamma", "epsilon"))
    return head + body + arrays


def load_model(blob: bytes) -> tuple[GdnParams, TyingConfig, dict]:
    try:
        if blob[:4] != MODEL_MAGIC:
            raise FormatError("not a model stream (bad magic)")
        ver, dim = struct.unpack_from("<HI", blob, 4)
        if ver != MODEL_VERSION:
            raise FormatError(f"unsupported model version {ver}")
        off = 4 + struct.calcsize("<HI")
        (tylen,) = struct.unpack_from("<I", blob, off)
        off += 4
        tying, tyend = _unpack_tying(blob, off)
        if tyend - off != tylen:
            raise FormatError("inconsistent tying block length")
        off = tyend
        (mlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        meta = json.loads(blob[off:off + mlen].decode("utf-8")) if mlen else {}
        off += mlen
        counts = {"h": dim * dim, "alpha": dim * dim, "beta": dim,
                  "gamma": dim * dim, "epsilon": dim}
        need = 8 * sum(counts.values())
        if len(blob) - off != need:
            raise FormatError("truncated or oversized model stream")
        arrays = {}
        for nm, cnt in counts.items():
            arr = np.frombuffer(blob, dtype="<f8", count=cnt, offset=off)
            off += 8 * cnt
            arrays[nm] = arr.reshape((dim, dim) if cnt == dim * dim else (dim,))
        params = GdnParams(**{k: np.array(v) for k, v in arrays.items()})
    except InvariantViolation:
        raise
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        raise FormatError(f"malformed model stream: {exc}") from exc
    params.validate()
    tying.validate_partition(params.dim)
    return params, tying, meta


def write_model(path, params: GdnParams, tying: TyingConfig,
                preproc_meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(params, tying, preproc_meta))


def read_model(path) -> tuple[GdnParams, TyingConfig, dict]:
    with open(path, "rb") as fh:
        return load_model(fh.read())


def save_cascade(model: CascadeModel, preproc_meta: dict | None = None) -> bytes:
    blocks = [save_model(st.params, st.tying) for st in model.stages]
    meta = json.dumps(preproc_meta or {}, sort_keys=True).encode("utf-8")
    out = [CASCADE_MAGIC, struct.pack("<HI", MODEL_VERSION, len(blocks)),
           struct.pack("<I", len(meta)), meta]
    for b in blocks:
        out.append(struct.pack("<Q", len(b)))
        out.append(b)
    return b"".join(out)


def load_cascade(blob: bytes) -> tuple[CascadeModel, dict]:
    try:
        if blob[:4] != CASCADE_MAGIC:
            raise FormatError("not a cascade stream (bad magic)")
        ver, nstages = struct.unpack_from("<HI", blob, 4)
        if ver != MODEL_VERSION:
            raise FormatError(f"unsupported cascade version {ver}")
        off = 4 + struct.calcsize("<HI")
        (mlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        meta = json.loads(blob[off:off + mlen].decode("utf-8")) if mlen else {}
        off += mlen
        stages = []
        for _ in range(nstages):
            (blen,) = struct.unpack_from("<Q", blob, off)
            off += 8
            params, tying, _ = load_model(blob[off:off + blen])
            off += blen
            stages.append(CascadeStage(params=params, tying=tying))
        if off != len(blob):
            raise FormatError("trailing bytes after cascade stages")
        return CascadeModel(stages=tuple(stages)), meta
    except (struct.error, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed cascade stream: {exc}") from exc
