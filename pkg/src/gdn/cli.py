"""Command-line surface: fit, transform, invert, sample, denoise, eval,
micurve, gen.

Exit codes: 0 success, 2 usage errors, 3 data/model format errors,
4 numerical failures.  Failures print one machine-parsable line to stderr:
"ERROR <kind>: <message>".
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import data as gdata
from .density import DenoiseConfig, denoise_image, log_density, psnr, sample, ssim
from .errors import FormatError, GdnError, InvalidPartition, InvariantViolation, NumericalError
from .evaluate import delta_j, marginal_radial_report, pairwise_mi_curve
from .params import TyingConfig
from .serialize import read_model, write_model
from .trainer import FitConfig, fit
from .transform import forward, inverse

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4


class UsageError(GdnError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Config file: plain "key value" lines, '#' comments
# ---------------------------------------------------------------------------

FIT_KEYS = ("batch_size", "epochs", "learning_rate", "adam_beta1", "adam_beta2",
            "adam_eps", "seed", "tying", "p", "partition", "h_init")


def parse_tying(name: str, p: str | None = None, partition: str | None = None) -> TyingConfig:
    sets = None
    if partition:
        sets = tuple(tuple(int(i) for i in grp.split(",")) for grp in partition.split(";"))
    return TyingConfig(name, p=float(p) if p else None, partition=sets)


def read_fit_config(path) -> FitConfig:
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition(" ")
            key = key.strip()
            if key not in FIT_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            raw[key] = val.strip()
    tying = parse_tying(raw.pop("tying", "full"), raw.pop("p", None),
                        raw.pop("partition", None))
    kwargs = {}
    for key, cast in (("batch_size", int), ("epochs", int), ("seed", int),
                      ("learning_rate", float), ("adam_beta1", float),
                      ("adam_beta2", float), ("adam_eps", float), ("h_init", str)):
        if key in raw:
            kwargs[key] = cast(raw[key])
    return FitConfig(tying=tying, **kwargs)


def config_lines(cfg: FitConfig):
    yield f"batch_size {cfg.batch_size}"
    yield f"epochs {cfg.epochs}"
    yield f"learning_rate {cfg.learning_rate!r}"
    yield f"adam_beta1 {cfg.adam_beta1!r}"
    yield f"adam_beta2 {cfg.adam_beta2!r}"
    yield f"adam_eps {cfg.adam_eps!r}"
    yield f"seed {cfg.seed}"
    yield f"tying {cfg.tying.variant}"
    if cfg.tying.p is not None:
        yield f"p {cfg.tying.p!r}"
    if cfg.tying.partition is not None:
        yield "partition " + ";".join(",".join(str(i) for i in s)
                                      for s in cfg.tying.partition)
    yield f"h_init {cfg.h_init}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = read_fit_config(args.config) if args.config else FitConfig()
    ps = gdata.read_patchset(args.data)
    params, report = fit(ps, cfg)
    write_model(args.out, params, cfg.tying, {"source": ps.source, "preproc": ps.preproc})
    lines = ["# resolved config"]
    lines += [f"# {ln}" for ln in config_lines(cfg)]
    lines.append("epoch\tloss\tdelta_j\tmin_logdet\tclamped\tmin_sym_eig")
    for e in range(len(report.loss)):
        lines.append(f"{e}\t{report.loss[e]!r}\t{report.delta_j[e]!r}\t"
                     f"{report.min_logdet[e]!r}\t{report.clamped[e]}\t"
                     f"{report.min_sym_eig[e]!r}")
    lines.append(f"# rejected_steps {report.rejected_steps}")
    if report.aborted:
        lines.append(f"# aborted {report.aborted}")
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_transform(args) -> int:
    params, _, _ = read_model(args.model)
    ps = gdata.read_patchset(args.data)
    if ps.dim != params.dim:
        raise FormatError(f"data dim {ps.dim} does not match model dim {params.dim}")
    res = forward(params, ps.data)
    gdata.write_patchset(args.out, gdata.PatchSet(res.y, source=ps.source,
                                                  preproc=ps.preproc))
    if args.logdet:
        np.savetxt(args.logdet, res.logdet)
    return 0


def cmd_invert(args) -> int:
    params, _, _ = read_model(args.model)
    ps = gdata.read_patchset(args.data)
    if ps.dim != params.dim:
        raise FormatError(f"data dim {ps.dim} does not match model dim {params.dim}")
    x = inverse(params, ps.data)
    gdata.write_patchset(args.out, gdata.PatchSet(x, source=ps.source, preproc=ps.preproc))
    return 0


def cmd_sample(args) -> int:
    params, _, _ = read_model(args.model)
    s = sample(params, args.count, args.seed)
    gdata.write_patchset(args.out, gdata.PatchSet(s, source=f"sample(seed={args.seed})"))
    return 0


def cmd_denoise(args) -> int:
    params, _, meta = read_model(args.model)
    side = int(np.sqrt(params.dim))
    if side * side != params.dim:
        raise FormatError("model dimension is not a square patch size")
    img, maxval = gdata.read_pgm(args.image)
    noisy = img.astype(np.float64) / maxval
    offset = float(meta.get("center", noisy.mean()))
    out = denoise_image(params, noisy, DenoiseConfig(sigma=args.sigma),
                        patch_size=side, offset=offset)
    gdata.write_pgm(args.out, np.clip(out, 0.0, 1.0), maxval=maxval)
    if args.reference:
        ref, rmax = gdata.read_pgm(args.reference)
        ref = ref.astype(np.float64) / rmax
        sys.stdout.write(f"psnr_noisy\t{psnr(ref, noisy):.4f}\n")
        sys.stdout.write(f"psnr_denoised\t{psnr(ref, out):.4f}\n")
        sys.stdout.write(f"ssim_noisy\t{ssim(ref, noisy):.4f}\n")
        sys.stdout.write(f"ssim_denoised\t{ssim(ref, out):.4f}\n")
    return 0


def cmd_eval(args) -> int:
    params, _, _ = read_model(args.model)
    ps = gdata.read_patchset(args.data)
    if ps.dim != params.dim:
        raise FormatError(f"data dim {ps.dim} does not match model dim {params.dim}")
    rep = marginal_radial_report(params, ps.data)
    lines = [f"delta_j\t-\t{rep.delta_j!r}",
             f"delta_j_per_pixel\t-\t{rep.delta_j_per_pixel!r}"]
    if not np.isnan(rep.mi):
        lines.append(f"mi\t-\t{rep.mi!r}")
    for i, v in enumerate(rep.marginal_stats):
        lines.append(f"marginal_ks\t{i}\t{v!r}")
    lines.append(f"radial_ks\t-\t{rep.radial_stat!r}")
    mean_ll = float(np.mean(log_density(params, ps.data)))
    lines.append(f"mean_log_likelihood\t-\t{mean_ll!r}")
    lines.append(f"bits_per_pixel\t-\t{(-mean_ll / params.dim / np.log(2))!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_micurve(args) -> int:
    images = [gdata.read_pgm(p)[0].astype(np.float64) for p in args.images]
    distances = [int(d) for d in args.distances.split(",")]
    cfg = read_fit_config(args.config) if args.config else None
    rows = pairwise_mi_curve(images, distances, fit_config=cfg, seed=args.seed)
    text = "".join(f"{d}\t{name}\t{mi!r}\n" for d, name, mi in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args) -> int:
    if args.kind == "gsm":
        ps = gdata.gen_gsm(args.dim, args.scale, args.count, args.seed)
    elif args.kind == "ica_laplace":
        mixing = None
        if args.mixing == "random":
            rng = np.random.default_rng(args.seed + 1)
            mixing = rng.standard_normal((args.dim, args.dim)) + 2.0 * np.eye(args.dim)
        ps = gdata.gen_ica_laplace(args.dim, mixing, args.count, args.seed)
    elif args.kind == "lp_radial":
        ps = gdata.gen_lp_radial(args.dim, args.p, args.count, args.seed,
                                 scale_dist=args.scale)
    else:
        raise UsageError(f"unknown generator {args.kind!r}")
    gdata.write_patchset(args.out, ps)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gdn", description=__doc__)
    ap.add_argument("--threads", type=int, default=1,
                    help="worker cap (computation is sequential; kept at 1 "
                         "for bit-reproducibility)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model on a patch-set file")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="apply a model to a patch-set file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--logdet")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("invert", help="invert a model on a patch-set file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("sample", help="draw samples from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("denoise", help="denoise a PGM image with a noisy-data model")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reference")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="Gaussianization diagnostics for a model on data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("micurve", help="pairwise MI vs distance for PGM images")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--distances", required=True, help="comma-separated pixel offsets")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_micurve)

    p = sub.add_parser("gen", help="write a synthetic patch-set file")
    p.add_argument("--kind", required=True, choices=("gsm", "ica_laplace", "lp_radial"))
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", default="uniform:0.5,2.0")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--mixing", choices=("identity", "random"), default="identity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError,) as exc:
        sys.stderr.write(f"ERROR usage: {exc}\n")
        return EXIT_USAGE
    except (FormatError, InvariantViolation, InvalidPartition, FileNotFoundError) as exc:
        sys.stderr.write(f"ERROR format: {exc}\n")
        return EXIT_FORMAT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"ERROR numeric: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"ERROR usage: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
