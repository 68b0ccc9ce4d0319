from .kernels import (
    ARD,
    RBF,
    Dataset,
    KernelSpec,
    covariance_matrix,
    kernel_eval,
    kernel_matrix,
)
from .probit import (
    GaussianApprox,
    approximate,
    ep_approx,
    laplace_approx,
    log_ndtr,
    probit_log_likelihood,
    pseudo_marginal_estimate,
)
from .regression import (
    grad_log_marginal_regression,
    log_marginal_regression,
    value_and_grad_regression,
)

__all__ = [
    "ARD",
    "RBF",
    "Dataset",
    "GaussianApprox",
    "KernelSpec",
    "approximate",
    "covariance_matrix",
    "ep_approx",
    "grad_log_marginal_regression",
    "kernel_eval",
    "kernel_matrix",
    "laplace_approx",
    "log_marginal_regression",
    "log_ndtr",
    "probit_log_likelihood",
    "pseudo_marginal_estimate",
    "value_and_grad_regression",
]
