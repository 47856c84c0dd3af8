"""Structured column subset selection for Bayesian optimal experimental design."""
from .bench import (
    BudgetExceeded,
    DesignDistribution,
    MethodSpec,
    compare_methods,
    exhaustive_search,
    percentile_of,
    random_designs,
)
from .cssp import ColumnSelection, CsspMethod, cssp_deim, cssp_gks, cssp_greedy_matrix, greedy_mode_select
from .kernels import BACKEND
from .linalg import (
    NumericalError,
    TruncatedSvd,
    cpqr_pivots,
    gaussian_sketch,
    gks_certificate,
    psi,
    sym_sqrt,
    truncated_svd,
)
from .problems import (
    DesignProblem,
    HeatConfig,
    TomoConfig,
    build_a,
    heat_problem,
    lowrank_problem,
    posterior_eig,
    posterior_mean,
    posterior_precision,
    subsampled_eig,
    tomo_problem,
)
from .select import (
    SelectionReport,
    TemplateConfig,
    ind_select,
    iter_select,
    run_template,
    seq_select,
    sketch_first,
)
from .tensor import SelectionOperator, apply_selection, fold, matrix_to_tensor, mode_product, tensor_to_matrix, unfold

__version__ = "0.1.0"
