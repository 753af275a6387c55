import numpy as np
import pytest

import gdn
from gdn.cli import main
from gdn.data import PatchSet, read_patchset, write_patchset, write_pgm


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


class TestPipeline:
    def test_gen_fit_eval_pipeline(self, workdir, capsys):
        """gen -> fit -> eval on scale-mixture data recovers delta_j >= 0.3."""
        data = workdir / "train.pset"
        model = workdir / "model.gdn"
        report = workdir / "report.tsv"
        cfg = write_cfg(workdir / "fit.cfg", "\n".join([
            "batch_size 512", "epochs 40", "learning_rate 3e-3", "seed 0",
            "tying radial", "h_init zca", ""]))
        assert main(["gen", "--kind", "gsm", "--dim", "2", "--count", "30000",
                     "--seed", "3", "--scale", "lognormal:1.0",
                     "--out", str(data)]) == 0
        assert main(["fit", "--data", str(data), "--config", cfg,
                     "--out", str(model), "--report", str(report)]) == 0
        assert main(["eval", "--model", str(model), "--data", str(data)]) == 0
        out = capsys.readouterr().out
        dj = float([ln for ln in out.splitlines() if ln.startswith("delta_j\t")][0].split("\t")[2])
        assert dj >= 0.3
        # the report embeds the resolved config
        rep = report.read_text()
        assert "# tying radial" in rep
        assert "# seed 0" in rep

    def test_transform_invert_roundtrip(self, workdir):
        data = workdir / "x.pset"
        model = workdir / "model.gdn"
        y = workdir / "y.pset"
        back = workdir / "back.pset"
        rng = np.random.default_rng(0)
        write_patchset(data, PatchSet(rng.standard_normal((200, 3))))
        cfg = write_cfg(workdir / "fit.cfg",
                        "batch_size 64\nepochs 2\nlearning_rate 1e-3\nseed 1\ntying full\n")
        assert main(["fit", "--data", str(data), "--config", cfg,
                     "--out", str(model), "--report", str(workdir / "r.tsv")]) == 0
        assert main(["transform", "--model", str(model), "--data", str(data),
                     "--out", str(y)]) == 0
        assert main(["invert", "--model", str(model), "--data", str(y),
                     "--out", str(back)]) == 0
        x0 = read_patchset(data).data
        x1 = read_patchset(back).data
        assert np.max(np.abs(x0 - x1)) < 1e-6

    def test_sample_deterministic(self, workdir):
        data = workdir / "x.pset"
        model = workdir / "model.gdn"
        rng = np.random.default_rng(1)
        write_patchset(data, PatchSet(rng.standard_normal((200, 2))))
        cfg = write_cfg(workdir / "c.cfg", "batch_size 64\nepochs 2\n")
        main(["fit", "--data", str(data), "--config", cfg, "--out", str(model)])
        s1 = workdir / "s1.pset"
        s2 = workdir / "s2.pset"
        assert main(["sample", "--model", str(model), "--count", "100",
                     "--seed", "9", "--out", str(s1)]) == 0
        assert main(["sample", "--model", str(model), "--count", "100",
                     "--seed", "9", "--out", str(s2)]) == 0
        assert s1.read_bytes() == s2.read_bytes()

    def test_fit_deterministic_model_files(self, workdir):
        """Identical seed/config twice: byte-identical model files."""
        data = workdir / "x.pset"
        write_patchset(data, PatchSet(np.random.default_rng(2).standard_normal((500, 2))))
        cfg = write_cfg(workdir / "c.cfg",
                        "batch_size 128\nepochs 3\nlearning_rate 1e-3\nseed 11\ntying radial\n")
        m1 = workdir / "m1.gdn"
        m2 = workdir / "m2.gdn"
        assert main(["fit", "--data", str(data), "--config", cfg, "--out", str(m1)]) == 0
        assert main(["fit", "--data", str(data), "--config", cfg, "--out", str(m2)]) == 0
        assert m1.read_bytes() == m2.read_bytes()


class TestErrorPaths:
    def test_unknown_flag_exits_2(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--nonsense", "1"])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_usage_text_on_unknown_flag(self, workdir, capsys):
        with pytest.raises(SystemExit):
            main(["sample", "--bogus"])
        assert "usage" in capsys.readouterr().err

    def test_malformed_model_exits_3(self, workdir, capsys):
        bad = workdir / "bad.gdn"
        bad.write_bytes(b"garbage")
        data = workdir / "x.pset"
        write_patchset(data, PatchSet(np.zeros((10, 2)) + 1.0))
        code = main(["transform", "--model", str(bad), "--data", str(data),
                     "--out", str(workdir / "y.pset")])
        assert code == 3
        assert capsys.readouterr().err.startswith("ERROR format:")

    def test_missing_file_exits_3(self, workdir):
        code = main(["eval", "--model", str(workdir / "none.gdn"),
                     "--data", str(workdir / "none.pset")])
        assert code == 3

    def test_dim_mismatch_exits_3(self, workdir):
        data = workdir / "x.pset"
        write_patchset(data, PatchSet(np.random.default_rng(0).standard_normal((50, 2))))
        model = workdir / "m.gdn"
        cfg = write_cfg(workdir / "c.cfg", "batch_size 16\nepochs 1\n")
        main(["fit", "--data", str(data), "--config", cfg, "--out", str(model)])
        other = workdir / "x3.pset"
        write_patchset(other, PatchSet(np.random.default_rng(0).standard_normal((50, 3))))
        assert main(["transform", "--model", str(model), "--data", str(other),
                     "--out", str(workdir / "y.pset")]) == 3

    def test_numerical_failure_exits_4(self, workdir, capsys):
        """Inverting values far outside a bounded transform's range cannot
        converge and must exit 4."""
        data = workdir / "x.pset"
        write_patchset(data, PatchSet(np.random.default_rng(3).standard_normal((100, 2))))
        cfg = write_cfg(workdir / "c.cfg", "batch_size 32\nepochs 1\ntying classic_dn\n")
        model = workdir / "m.gdn"
        main(["fit", "--data", str(data), "--config", cfg, "--out", str(model)])
        far = workdir / "far.pset"
        write_patchset(far, PatchSet(np.full((5, 2), 50.0)))
        code = main(["invert", "--model", str(model), "--data", str(far),
                     "--out", str(workdir / "y.pset")])
        assert code == 4
        assert capsys.readouterr().err.startswith("ERROR numeric:")

    def test_bad_config_key_exits_2(self, workdir):
        data = workdir / "x.pset"
        write_patchset(data, PatchSet(np.zeros((10, 2)) + 1.0))
        cfg = write_cfg(workdir / "c.cfg", "banana 7\n")
        assert main(["fit", "--data", str(data), "--config", cfg,
                     "--out", str(workdir / "m.gdn")]) == 2

    def test_threads_flag_validated(self):
        with pytest.raises(SystemExit) as exc:
            main(["--threads", "0", "gen", "--kind", "gsm", "--dim", "2",
                  "--count", "10", "--out", "/tmp/x.pset"])
        assert exc.value.code == 2


class TestDenoiseCommand:
    def test_denoise_smoke(self, workdir, capsys):
        """Tiny end-to-end denoise run over PGM files with metric output."""
        rng = np.random.default_rng(5)
        # a smooth synthetic image
        t = np.linspace(0, 2 * np.pi, 48)
        clean = 0.5 + 0.3 * np.outer(np.sin(t), np.cos(t))
        sigma = 0.15
        noisy = clean + sigma * rng.standard_normal(clean.shape)
        clean_p = workdir / "clean.pgm"
        noisy_p = workdir / "noisy.pgm"
        write_pgm(clean_p, clean, maxval=255)
        write_pgm(noisy_p, np.clip(noisy, 0, 1), maxval=255)

        # fit a small model on noisy patches
        noisy_img, maxval = gdn.read_pgm(noisy_p)
        noisy_f = noisy_img.astype(np.float64) / maxval
        patches = gdn.extract_patches(noisy_f - noisy_f.mean(), 4, stride=1)
        train = workdir / "train.pset"
        write_patchset(train, patches)
        cfg = write_cfg(workdir / "c.cfg",
                        "batch_size 256\nepochs 8\nlearning_rate 2e-3\n"
                        "tying diagonal_gamma\nh_init zca\n")
        model = workdir / "m.gdn"
        assert main(["fit", "--data", str(train), "--config", cfg,
                     "--out", str(model), "--report", str(workdir / "r.tsv")]) == 0
        capsys.readouterr()
        out = workdir / "out.pgm"
        assert main(["denoise", "--model", str(model), "--image", str(noisy_p),
                     "--sigma", str(sigma), "--out", str(out),
                     "--reference", str(clean_p)]) == 0
        text = capsys.readouterr().out
        vals = dict(ln.split("\t") for ln in text.strip().splitlines())
        assert float(vals["psnr_denoised"]) > float(vals["psnr_noisy"])
