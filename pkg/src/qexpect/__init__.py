"""Time-dependent quantum expectation values for sparse spin systems.

Builds spin-system Liouvillians in sparse form and computes observable
traces over time with interchangeable engines: direct scalar-series
evaluation (precompute once, evaluate anywhere), Chebyshev step
propagation, adaptive Krylov stepping, zero-track model reduction, and a
dense eigendecomposition reference.
"""

__version__ = "0.1.0"

from .chebyshev import (
    ChebCoefficients,
    bessel_sequence,
    cheb_step_propagate,
    clenshaw_apply,
    coefficients,
    error_bound,
    scalar_coefficients,
    stop_order,
)
from .dec import DECSeries, dec_evaluate, dec_evaluate_grid, dec_precompute, load_series, save_series
from .errors import ConfigError, NumericalError, ResourceError
from .krylov import KrylovStepResult, krylov_propagate, krylov_step
from .oracle import ModeDecomposition, dense_eig, mode_amplitudes, oracle_expect
from .sparse import SparseMatrix, kron, linear_combine, matvec_counter, spmv, trace_form, unvec, vec
from .spectral import LanczosFactorization, ScalingParams, extreme_eigs, lanczos, rescale, tridiag_expv
from .spinsys import (
    SpinOperatorSet,
    SpinSystemSpec,
    build_hamiltonian,
    build_liouvillian,
    embed,
    initial_state,
    observable_by_name,
    observable_ip,
    observable_iz,
    spin_half,
)
from .trace import ExpectationTrace, normalize_observables
from .zte import (
    ZTEReduction,
    counterexample_f,
    reduction_report,
    resonant_triplet,
    zte_detect,
    zte_propagate,
    zte_window,
)
