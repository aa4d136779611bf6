"""Phase retrieval from through-focus intensity measurements.

Solvers for the transport-of-intensity equation: direct FFT and DCT
inversions, an iterative DCT scheme for non-uniform illumination, and a
maximum-intensity iterative solver that costs two transforms per iteration
and converges on apertures, intensity gradients, and near-zeros alike.
"""
from .core import (
    ApertureMask,
    ComplexField,
    Grid2D,
    OpticalConfig,
    make_field,
    rmse,
)
from .operators import (
    FreqGrid,
    dct_divergence,
    dct_gradient,
    divergence,
    flux_divergence,
    gradient,
    inverse_laplacian_dct,
    inverse_laplacian_fft,
    laplacian_dct,
    laplacian_fft,
)
from .phantoms import (
    Phantom,
    astigmatism_phantom,
    defocus_phantom,
    gaussian_beam_phantom,
    inverse_gaussian_phantom,
)
from .propagation import FocalStack, angular_spectrum_propagate, axial_derivative, synthesize_stack
from .preprocess import ThresholdParams, fill_dark_region, threshold_aperture
from .io import (
    FieldFileError,
    RunConfig,
    export_png,
    read_config,
    read_field,
    read_report,
    write_config,
    write_field,
    write_report,
)
from .solvers import (
    SolverReport,
    UsTieParams,
    dct_tie_solve,
    fft_tie_solve,
    forward_derivative,
    iter_dct_solve,
    rmse_region,
    us_tie_solve,
)
from ._transforms import TransformCounter, count_transforms

__version__ = "0.1.0"

__all__ = [
    "ApertureMask",
    "ComplexField",
    "FieldFileError",
    "FocalStack",
    "FreqGrid",
    "Grid2D",
    "OpticalConfig",
    "Phantom",
    "RunConfig",
    "SolverReport",
    "ThresholdParams",
    "TransformCounter",
    "UsTieParams",
    "angular_spectrum_propagate",
    "astigmatism_phantom",
    "axial_derivative",
    "count_transforms",
    "dct_divergence",
    "dct_gradient",
    "dct_tie_solve",
    "defocus_phantom",
    "divergence",
    "export_png",
    "fft_tie_solve",
    "fill_dark_region",
    "flux_divergence",
    "forward_derivative",
    "gaussian_beam_phantom",
    "gradient",
    "inverse_gaussian_phantom",
    "inverse_laplacian_dct",
    "inverse_laplacian_fft",
    "iter_dct_solve",
    "laplacian_dct",
    "laplacian_fft",
    "make_field",
    "read_config",
    "read_field",
    "read_report",
    "rmse",
    "rmse_region",
    "synthesize_stack",
    "threshold_aperture",
    "us_tie_solve",
    "write_config",
    "write_field",
    "write_report",
]
