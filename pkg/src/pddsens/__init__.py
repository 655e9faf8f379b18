"""Sobol sensitivity analysis from sparse-regression PDD surrogates."""
from .measures import Distribution, Kind, PolynomialFamily, eval_poly, family_for, sample, sample_design
from .pdd import (
    BasisSet,
    BasisTerm,
    PddModel,
    TrainingSet,
    basis_size,
    design_matrix,
    enumerate_basis,
    eval_basis_term,
    predict,
)
from .regress import (
    DmorphConfig,
    FitDiagnostics,
    dmorph_initial,
    dmorph_original,
    dmorph_sparse,
    fit,
    lasso,
    lasso_cv,
    least_squares,
    null_projector,
    pseudoinverse,
)
from .gsa import SensitivityReport, error_metrics, mc_sobol_oracle, moments, sobol_indices
from .bench import (
    Benchmark,
    StudyConfig,
    ishigami,
    ishigami_benchmark,
    oakley_benchmark,
    oakley_ohagan,
    run_study,
)
from .io import ProblemConfig, load_model, read_training_csv, save_model

__version__ = "0.1.0"
