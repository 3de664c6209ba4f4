"""tonefuse: photo enhancement by fitted piecewise tone curves and map fusion.

The pipeline: per-channel piecewise nonlinear curves produce N globally
adjusted versions of an input image, per-pixel confidence maps blend them
into the final result, and every parameter is fitted to a reference image
by direct gradient descent.  Fitted parameter sets round-trip through a
preset directory and can be steered interactively with scalar weights.
"""

from .curves import CurveTriple, PiecewiseCurve, basic_curve, iterated_curve, ramp_clamp
from .fusion import (
    CONSTRAINED,
    PLAIN,
    ConfidenceMaps,
    fuse,
    fuse_constrained,
    fuse_plain,
    interpolate,
    normalize_maps,
)
from .fit import (
    DivergedError,
    FitConfig,
    FitTrace,
    SolutionSet,
    fit_global_only,
    fit_pair,
    gradient_check,
    init_solution_set,
)
from .geometry import (
    SingularBasisError,
    deviation_sum,
    project_constrained,
    solve_basis_weights,
)
from .imageio import Image, load_png, resize, save_png
from .metrics import (
    QualityReport,
    l2_loss,
    psnr,
    quality_report,
    ssim,
    ssim_loss,
    total_pair_loss,
)
from .preset import apply_preset, load_preset, save_preset

__version__ = "0.1.0"

__all__ = [
    "CONSTRAINED",
    "PLAIN",
    "ConfidenceMaps",
    "CurveTriple",
    "DivergedError",
    "FitConfig",
    "FitTrace",
    "Image",
    "PiecewiseCurve",
    "QualityReport",
    "SingularBasisError",
    "SolutionSet",
    "apply_preset",
    "basic_curve",
    "deviation_sum",
    "fit_global_only",
    "fit_pair",
    "fuse",
    "fuse_constrained",
    "fuse_plain",
    "gradient_check",
    "init_solution_set",
    "interpolate",
    "iterated_curve",
    "l2_loss",
    "load_png",
    "load_preset",
    "normalize_maps",
    "project_constrained",
    "psnr",
    "quality_report",
    "ramp_clamp",
    "resize",
    "save_png",
    "save_preset",
    "solve_basis_weights",
    "ssim",
    "ssim_loss",
    "total_pair_loss",
]
