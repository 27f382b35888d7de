"""Energy-constrained divergence bounds for bosonic channels.

Builds truncated Choi matrices of dephasing and loss-dephasing channels and
computes upper and lower bounds on asymmetric discrimination exponents
through four channel divergences: measured relative entropy, relative
entropy (two-sided SDP approximations), Belavkin-Staszewski and geometric
Renyi.
"""

from .hilbert import (
    BipartiteIndex,
    EnergyBudget,
    HermitianMatrix,
    number_operator,
    partial_trace_B,
    partial_trace_R,
    purify_diagonal,
    tensor,
)
from .channels import (
    ChannelModel,
    ChoiMatrix,
    apply_dephasing,
    classical_kl_wrapped_normal,
    dephasing_choi,
    loss_choi,
    loss_dephasing_choi,
    wrapped_normal_pdf,
)
from .matfunc import (
    QuadratureRule,
    SupportInfo,
    gauss_legendre,
    matrix_power,
    operator_relative_entropy,
    rational_log_approx,
    weighted_geometric_mean,
)
from .conic import (
    ConicProgram,
    CvxpyBackend,
    Solution,
    Var,
    const,
    dump_sdpa,
    sdpa_dump_scope,
    solve,
    trace_inner,
)
from .divergences import (
    METHODS,
    DivergenceResult,
    GrdSchedule,
    dmax_channel,
    ec_bs_channel,
    ec_channel_re_lower,
    ec_channel_re_upper,
    ec_grd_channel,
    ec_measured_re_channel,
    evaluate_method,
    grd_sdp_dual_lower,
    grd_sdp_unconstrained,
    state_bs,
    state_grd,
    state_measured_re,
    state_umegaki,
)
from .truncation import (
    TruncationCertificate,
    TruncationSweep,
    bs_truncation_bound,
    truncation_sweep,
)
from .oracle import (
    RandomInstance,
    choi_contraction_apply,
    grid_probe_maximize,
    measurement_bruteforce_mre,
)
from .cli import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "BipartiteIndex",
    "ChannelModel",
    "ChoiMatrix",
    "ConicProgram",
    "CvxpyBackend",
    "DivergenceResult",
    "EnergyBudget",
    "GrdSchedule",
    "HermitianMatrix",
    "METHODS",
    "QuadratureRule",
    "RandomInstance",
    "RunConfig",
    "Solution",
    "SupportInfo",
    "TruncationCertificate",
    "TruncationSweep",
    "Var",
    "apply_dephasing",
    "bs_truncation_bound",
    "choi_contraction_apply",
    "classical_kl_wrapped_normal",
    "const",
    "dephasing_choi",
    "dmax_channel",
    "dump_sdpa",
    "ec_bs_channel",
    "ec_channel_re_lower",
    "ec_channel_re_upper",
    "ec_grd_channel",
    "ec_measured_re_channel",
    "evaluate_method",
    "gauss_legendre",
    "grd_sdp_dual_lower",
    "grd_sdp_unconstrained",
    "grid_probe_maximize",
    "loss_choi",
    "loss_dephasing_choi",
    "matrix_power",
    "measurement_bruteforce_mre",
    "number_operator",
    "operator_relative_entropy",
    "parse_config",
    "partial_trace_B",
    "partial_trace_R",
    "purify_diagonal",
    "rational_log_approx",
    "sdpa_dump_scope",
    "solve",
    "state_bs",
    "state_grd",
    "state_measured_re",
    "state_umegaki",
    "tensor",
    "trace_inner",
    "truncation_sweep",
    "weighted_geometric_mean",
    "wrapped_normal_pdf",
]
