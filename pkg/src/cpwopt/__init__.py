"""CP tensor factorization of incomplete data via weighted least squares."""

from .baselines import EmAlsConfig, als_sweep, em_als_fit, impute
from .core import (
    KruskalModel,
    SparseSamples,
    center_ignore_missing,
    fold,
    hadamard,
    inner,
    khatri_rao,
    kr_excluding,
    ktensor_full,
    ktensor_values_at,
    mttkrp_dense,
    mttkrp_sparse,
    normalize_model,
    tensor_norm,
    unfold,
    weighted_norm,
)
from .datagen import (
    ProblemInstance,
    add_noise_dense,
    add_noise_sparse,
    gen_factors,
    gen_large_sparse,
    gen_missing_fibers,
    gen_missing_random,
    init_nvecs,
    init_random,
    make_instance,
)
from .evaluation import ScoreReport, fms, rho, tcs
from .objective import (
    DenseObjective,
    FitConfig,
    SparseObjective,
    fit_cpwopt,
    objective_grad_dense,
    objective_grad_sparse,
)
from .optimize import OptConfig, OptResult, ncg_minimize, strong_wolfe_search

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
