import numpy as np
import pytest

import gdn
from gdn import TyingConfig, load_model, save_model
from gdn.cascade import CascadeModel, CascadeStage
from gdn.errors import FormatError, InvariantViolation
from gdn.serialize import load_cascade, save_cascade

from conftest import random_valid_params


class TestModelRoundTrip:
    def test_full_model_exact(self):
        p = random_valid_params(16, seed=0)
        ty = TyingConfig("full")
        meta = {"center": 0.4375, "note": "fitted on synthetic data"}
        q, ty2, meta2 = load_model(save_model(p, ty, meta))
        for name in ("h", "alpha", "beta", "gamma", "epsilon"):
            assert np.array_equal(getattr(p, name), getattr(q, name))
        assert ty2 == ty
        assert meta2 == meta

    def test_tying_variants_roundtrip(self):
        for ty in (TyingConfig("radial"),
                   TyingConfig("lp_radial", p=1.5),
                   TyingConfig("subspaces", partition=((0, 1), (2, 3))),
                   TyingConfig("classic_dn")):
            p = gdn.project_constraints(random_valid_params(4, seed=1), ty)
            q, ty2, _ = load_model(save_model(p, ty))
            assert ty2 == ty
            assert np.array_equal(q.gamma, p.gamma)

    def test_float_meta_full_precision(self):
        p = random_valid_params(2, seed=2)
        val = 0.1234567890123456789
        _, _, meta = load_model(save_model(p, TyingConfig("full"), {"m": val}))
        assert meta["m"] == val

    def test_truncated_stream_rejected(self):
        blob = save_model(random_valid_params(3, seed=3), TyingConfig("full"))
        with pytest.raises(FormatError):
            load_model(blob[:-8])

    def test_trailing_garbage_rejected(self):
        blob = save_model(random_valid_params(3, seed=3), TyingConfig("full"))
        with pytest.raises(FormatError):
            load_model(blob + b"xx")

    def test_bad_magic_rejected(self):
        with pytest.raises(FormatError):
            load_model(b"XXXX" + b"\x00" * 100)

    def test_invariant_violation_on_load(self):
        """A stream carrying beta = 0 must be rejected as invalid."""
        p = random_valid_params(2, seed=4)
        blob = bytearray(save_model(p, TyingConfig("full")))
        # beta array starts after header + tying + meta + h + alpha
        idx = blob.index(np.ascontiguousarray(p.beta, dtype="<f8").tobytes())
        blob[idx:idx + 8] = np.array([0.0]).tobytes()
        with pytest.raises(InvariantViolation):
            load_model(bytes(blob))

    def test_save_rejects_invalid_params(self):
        p = random_valid_params(2, seed=5).with_(beta=np.array([0.0, 1.0]))
        with pytest.raises(InvariantViolation):
            save_model(p, TyingConfig("full"))


class TestCascadeRoundTrip:
    def test_two_stage_roundtrip(self):
        stages = tuple(
            CascadeStage(params=random_valid_params(4, seed=s), tying=TyingConfig("full"))
            for s in (0, 1))
        model = CascadeModel(stages=stages)
        back, meta = load_cascade(save_cascade(model, {"k": 1}))
        assert meta == {"k": 1}
        assert len(back.stages) == 2
        for st, st2 in zip(model.stages, back.stages):
            assert np.array_equal(st.params.h, st2.params.h)

    def test_bad_cascade_rejected(self):
        with pytest.raises(FormatError):
            load_cascade(b"GDNX" + b"\x00" * 20)
