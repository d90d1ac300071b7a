"""Quantifying the error of retrospective sub-sampling experiments in
parallel-imaging k-space data.

The package treats multi-coil k-space samples as inner products with
encoding functions in a reproducing-kernel space. Interpolation weights
between sample sets follow from regularized kernel systems; the composite
operator of a two-stage (prospective -> retrospective -> target)
experiment, minus direct interpolation, gives the exact pointwise
experiment error; and its quadratic form against the prospective kernel
matrix gives a data-independent error bound (the power function).
"""

__version__ = "0.1.0"

from .crime import (
    CrimeOperator,
    PowerMap,
    VerificationReport,
    delta_w,
    experiment_error,
    power_map,
    verify_bound,
)
from .kernel import (
    CoilProductTable,
    FactorizationError,
    KernelMatrix,
    WeightSet,
    auto_lambda,
    build_tables,
    default_lambda,
    kernel_matrix,
    weights,
)
from .phantom import (
    AcquiredData,
    CoilModel,
    Ellipse,
    GroundTruth,
    acquire,
    default_ellipses,
    make_coils,
    make_phantom_analytic,
    make_phantom_discrete,
    uniform_coils,
)
from .recon import (
    ErrorMaps,
    ReconResult,
    error_maps,
    lsq_reconstruct,
    rkhs_reconstruct,
)
from .sampling import (
    GridSpec,
    PatternFormatError,
    SamplePoint,
    SamplingPattern,
    caipirinha_pattern,
    full_grid,
    parse_grid_spec,
    parse_pattern_spec,
    random_pattern,
    read_pattern,
    uniform_pattern,
    write_pattern,
)

__all__ = [
    "__version__",
    "AcquiredData",
    "CoilModel",
    "CoilProductTable",
    "CrimeOperator",
    "Ellipse",
    "ErrorMaps",
    "FactorizationError",
    "GridSpec",
    "GroundTruth",
    "KernelMatrix",
    "PatternFormatError",
    "PowerMap",
    "ReconResult",
    "SamplePoint",
    "SamplingPattern",
    "VerificationReport",
    "WeightSet",
    "acquire",
    "auto_lambda",
    "build_tables",
    "caipirinha_pattern",
    "default_ellipses",
    "default_lambda",
    "delta_w",
    "error_maps",
    "experiment_error",
    "full_grid",
    "kernel_matrix",
    "lsq_reconstruct",
    "make_coils",
    "make_phantom_analytic",
    "make_phantom_discrete",
    "parse_grid_spec",
    "parse_pattern_spec",
    "power_map",
    "random_pattern",
    "read_pattern",
    "rkhs_reconstruct",
    "uniform_coils",
    "uniform_pattern",
    "verify_bound",
    "weights",
    "write_pattern",
]
