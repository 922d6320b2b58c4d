"""Local times and high-frequency statistics of fractional Brownian motion.

The package simulates fBm paths exactly and estimates local time from
discrete observations.  A seeded Monte Carlo harness checks the limit
theorems, including the four scaling regimes of the centered quadratic
variation of |X|.
"""
from .errors import (
    AlgebraViolationError,
    ConfigurationError,
    FracltError,
    NumericalError,
    ResourceError,
    UnsupportedRegimeError,
)
from .fbm import (
    FbmPath,
    GeneratorKind,
    HurstParameter,
    Regime,
    asymptotic_variance_v2,
    classify_regime,
    fbm_covariance,
    increment_autocovariance,
    read_path_csv,
    rho_level_increment,
    simulate_fbm,
    write_path_csv,
)
from .functionals import (
    BivariateF,
    KernelG,
    QuadratureConfig,
    check_condition_A_gamma,
    get_functional,
    limit_constant,
)
from .quadvar import (
    centered_quadvar_abs,
    crossing_constant,
    crossing_decomposition_check,
    regime_limit,
    scaled_statistic,
)
from .statistics import (
    crossing_count,
    occupation_local_time_oracle,
    v_statistic_bivariate,
    v_statistic_univariate,
)

__version__ = "0.1.0"
