"""Reduced-rank matrix autoregression with a pseudo-structural decomposition
of contemporaneous co-movements into row, column, and joint components."""

from .backend import BACKEND_NAME
from .dataio import DatasetSpec, export_series, ingest
from .estimate import (
    ComovementReport,
    EstimationError,
    FitConfig,
    FitResult,
    comovement_report,
    confidence_intervals,
    fit,
    quasi_newton_maximize,
    render_equations,
)
from .likelihood import (
    LikelihoodData,
    LogLikValue,
    grad_loglik,
    loglik,
    loglik_params,
    observed_information,
    pack_params,
    unpack_params,
)
from .model import (
    Dims,
    PseudoStructParams,
    RRMarParams,
    build_omega,
    build_pi,
    coefficient_matrices,
    companion_matrix,
    pseudo_to_reduced,
    rrmar_to_pseudo,
    structural_residuals,
)
from .montecarlo import ExperimentSpec, default_experiment, kernel_density_export, run_experiment
from .select import SelectionGrid, information_criterion, phi, select_ranks
from .series import MatrixSeries
from .simulate import DgpSpec, draw_dgp, rescale_to_snr, simulate_series

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
