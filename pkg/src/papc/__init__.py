"""Matrix-free primal-dual solver for structured saddle-point problems.

The package implements a predictor-corrector splitting for problems of the
form ``min_x f(x) + sum_i g_i(A_i^T x)`` via their saddle representation,
with certified global linear rates when the smooth part admits a quadratic
lower support and the coupling operators are injective.  It ships two
applications built on that machinery: total-variation signal denoising and
multiresolution-constrained denoising/deconvolution.
"""

from .errors import (
    DimensionError,
    DivergenceError,
    FormatError,
    MetricError,
    ParameterError,
    ParseError,
    TuningError,
)
from .io import (
    gaussian_noise,
    gaussian_psf,
    read_image,
    read_signal_csv,
    read_trace_csv,
    synth_image,
    synth_signal,
    write_image,
    write_psf_csv,
    write_signal_csv,
    write_trace_csv,
)
from .functions import (
    PqsCertificate,
    SmoothObjective,
    dirichlet_energy,
    huber_grad,
    huber_value,
    modified_huber_value,
    pqs_certificate,
    pqs_extension_constant,
    quadratic_fidelity,
    smoothed_tv_objective,
)
from .linops import (
    LinearOperator,
    SpectralBounds,
    convolution_operator,
    convolve_psf,
    convolve_psf_adjoint,
    div1d_dirichlet,
    div2d_neumann,
    estimate_spectral_bounds,
    grad1d_dirichlet,
    grad1d_gram_extreme_eigs,
    grad1d_operator,
    grad2d_gram_extreme_eigs,
    grad2d_neumann,
    grad2d_operator,
    identity_operator,
    laplacian_min_eig_1d,
    operator_norm_sq,
    read_psf_csv,
    smallest_gram_eig,
    transpose_operator,
)
from .problems import (
    SmreRunResult,
    SmreSpec,
    TvDenoiseSpec,
    WindowSystem,
    build_smre,
    build_smre_1d,
    build_smre_2d,
    build_tv_denoise,
    constraint_violation,
    enumerate_windows,
    enumerate_windows_2d,
    q_schedule,
    solve_smre_compact,
)
from .prox import (
    ProxableBlock,
    Slab,
    project_linf_ball,
    project_slab,
    prox_conjugate_via_moreau,
    prox_separable_product,
    smre_dual_prox,
)
from .solver import (
    ConvergenceReport,
    DualBlock,
    HMetric,
    IterateState,
    SaddleProblem,
    SolverConfig,
    TraceRecord,
    aposteriori_bound,
    delta_bound,
    default_sigma,
    endpoint_rate,
    estimate_rate,
    h_metric,
    h_norm,
    iteration_budget,
    make_config,
    papc_step,
    solve,
    tune_parameters,
    validate_params,
    zero_state,
)

__version__ = "0.1.0"
