"""Statistical inference for model parameters estimated by averaged SGD.

One pass over the data produces the Polyak-Ruppert average together with
streaming estimates of its asymptotic covariance (plug-in and batch-means),
from which asymptotically exact confidence intervals and z-tests follow.
A separate pipeline handles sparse high-dimensional linear regression via
an epoch-based dual-averaging solver and one-step debiasing.
"""

from .batchmeans import BatchMeansAccumulator, BatchSchedule, make_schedule
from .estimates import CovarianceEstimate
from .inference import CiReport, confidence_interval, z_quantile, z_test
from .models import (
    DataPoint,
    DesignKind,
    DesignSpec,
    ModelKind,
    ModelSpec,
    OracleCovariance,
    grad,
    hessian,
    loss,
    make_covariance,
    oracle_ci_length,
    oracle_covariance,
    sample_point,
)
from .highdim import (
    PrecisionEstimate,
    RadarConfig,
    build_omega,
    debias,
    fit_debiased_lasso,
    highdim_ci,
    nodewise_fit,
    nodewise_fit_all,
    radar_lasso,
    radar_solve,
    tau_hat,
)
from .plugin import PluginAccumulator, threshold_eigen
from .sgd import (
    DivergenceError,
    EstimatorSink,
    SgdState,
    StepSchedule,
    TraceSink,
    run,
    sgd_step,
)

__all__ = [
    "BatchMeansAccumulator", "BatchSchedule", "make_schedule",
    "CovarianceEstimate", "CiReport", "confidence_interval", "z_quantile",
    "z_test", "DataPoint", "DesignKind", "DesignSpec", "ModelKind",
    "ModelSpec", "OracleCovariance", "grad", "hessian", "loss",
    "make_covariance", "oracle_ci_length", "oracle_covariance", "sample_point",
    "PluginAccumulator", "threshold_eigen", "DivergenceError", "EstimatorSink",
    "SgdState", "StepSchedule", "TraceSink", "sgd_step", "run",
    "PrecisionEstimate", "RadarConfig", "build_omega", "debias",
    "fit_debiased_lasso", "highdim_ci", "nodewise_fit", "nodewise_fit_all",
    "radar_lasso", "radar_solve", "tau_hat",
]

__version__ = "0.1.0"
