"""Generalized divisive normalization: an invertible, differentiable
Gaussianizing transform fitted by negentropy minimization, with the
induced density model (evaluation, sampling, empirical-Bayes denoising).
"""

from .params import (
    BETA_FLOOR,
    GdnParams,
    TyingConfig,
    init_params,
    project_constraints,
)
from .transform import (
    TransformResult,
    check_pd,
    forward,
    inverse,
    jacobian_wrt_input,
    jacobian_wrt_z,
)
from .objective import LossTerms, fd_grad_params, grad_params, input_score, loss, loss_and_grad
from .trainer import FitConfig, FitReport, SpecialCaseResult, fit, fit_special_cases
from .evaluate import (
    EvalReport,
    amari_index,
    chi_cdf,
    delta_j,
    ks_statistic,
    marginal_radial_report,
    mutual_information,
    pairwise_mi_curve,
)
from .density import DenoiseConfig, denoise, denoise_image, log_density, psnr, sample, ssim
from .data import (
    PatchSet,
    PointwiseGaussianizer,
    extract_patches,
    filter_saturated,
    fit_pointwise_gaussianizer,
    gen_gsm,
    gen_ica_laplace,
    gen_lp_radial,
    read_patchset,
    read_pgm,
    srgb_to_linear,
    write_patchset,
    write_pgm,
    zca_matrix,
)
from .cascade import CascadeModel, CascadeStage, fit_cascade, forward_cascade, invert_cascade
from .serialize import load_cascade, load_model, read_model, save_cascade, save_model, write_model
from . import errors

__version__ = "0.1.0"
