"""gfbm-lab: a numerical laboratory for generalized fractional Brownian motion.

The package simulates the process X driven by the kernel
((t-u)_+^alpha - (-u)_+^alpha)|u|^{-gamma/2}, its order-theta fractional
integral Y, computes their covariances by singular quadrature, estimates the
small-ball function of the running sup of |Y|, fits its scaling exponent,
classifies lower-class boundary functions by integral tests, and collects
empirical iterated-logarithm (liminf) statistics.
"""

from .covariance import CovMatrix, cov_matrix, cov_x, cov_y, kernel_g, lamperti_autocov
from .params import DerivedExponents, OutOfRangeError, ProcessParams, derive, validate
from .sampler import (
    FactorizedCov,
    PathBatch,
    factorize,
    frac_integral,
    sample_gaussian,
    sample_x_discretized,
    sup_statistic,
)
from .smallball import (
    ExponentFit,
    SmallBallEstimate,
    audit_psi_properties,
    estimate_phi,
    fit_exponent,
    wilson_interval,
)
from .specquad import (
    QuadResult,
    SingularIntegrand,
    beta_fn,
    gamma_fn,
    integrate_singular,
    integrate_tail,
)
from .lil import (
    ChungSeries,
    IntegralTestSpec,
    chung_statistic,
    eval_integral_test,
    maximal_inequality_probe,
)

__version__ = "0.1.0"
