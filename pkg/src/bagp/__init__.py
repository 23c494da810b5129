"""Block-additive constrained Gaussian-process regression.

A finite-dimensional GP surrogate built from tensorized hat functions on
disjoint blocks of input variables, conditioned on data and on componentwise
monotonicity, with greedy selection of the block structure (MaxMod).
"""

from .basis import (BasisStructure, Subdivision, Subpartition, basis_eval_1d,
                    change_of_basis, gram_1d, hat_eval, inclusion_check,
                    knot_point, mass_1d, phi_eval, phi_matrix)
from .constraints import (ConstraintSystem, FittedModel,
                          build_monotone_constraints, block_predictors,
                          fit_map_model, map_estimate, predict)
from .exceptions import NumericalError, StructureError
from .kernels import KernelParams, PriorCov, block_kernel, matern52, prior_cov
from .maxmod import (Candidate, MaxModConfig, MaxModState, criterion,
                     enumerate_candidates, l2mod, run_maxmod, se)
from .metrics import Design, bending_energy, lhd, q2, toy_6d, toy_block_arctan
from .mle import MleProblem, fit_params, nll, nll_grad
from .posterior import Dataset, Posterior, condition, posterior_predict_mean
from .sampler import SampleBatch, posterior_mean_predict, sample_truncated

__version__ = "0.1.0"

__all__ = [
    "BasisStructure", "Subdivision", "Subpartition", "basis_eval_1d",
    "change_of_basis", "gram_1d", "hat_eval", "inclusion_check", "knot_point",
    "mass_1d", "phi_eval", "phi_matrix",
    "ConstraintSystem", "FittedModel", "build_monotone_constraints",
    "block_predictors", "fit_map_model", "map_estimate", "predict",
    "NumericalError", "StructureError",
    "KernelParams", "PriorCov", "block_kernel", "matern52", "prior_cov",
    "Candidate", "MaxModConfig", "MaxModState", "criterion",
    "enumerate_candidates", "l2mod", "run_maxmod", "se",
    "Design", "bending_energy", "lhd", "q2", "toy_6d", "toy_block_arctan",
    "MleProblem", "fit_params", "nll", "nll_grad",
    "Dataset", "Posterior", "condition", "posterior_predict_mean",
    "SampleBatch", "posterior_mean_predict", "sample_truncated",
    "__version__",
]
