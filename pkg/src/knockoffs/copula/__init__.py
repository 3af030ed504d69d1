"""Copula-based knockoffs: candidate CDF H, validity checks, frailty sampling."""

from .conditions import SignCheck, NestedReport, check_generator_conditions, check_nested_condition
from .copulas import (
    Archimedean,
    Comonotone,
    Copula,
    Countermonotone,
    Gaussian,
    Independence,
    bivariate_normal_cdf,
    make_copula,
)
from .frailty import (
    frailty_laplace_check,
    kendall_tau_archimedean,
    sample_archimedean,
    sample_joint_direct,
    sample_knockoff_frailty,
    sample_x,
)
from .generators import ArchimedeanGenerator, CallableGenerator, Clayton, Gumbel, make_generator
from .model import (
    CopulaModelSpec,
    Marginal,
    VolumeReport,
    conditional_cdf_oracle,
    copula_level,
    evaluate_H,
    make_marginal,
    rectangle_volume_check,
)
