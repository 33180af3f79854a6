"""Rare-event probability estimation with LDT-informed adaptive importance sampling."""
from .algorithm import LaisConfig, LaisReport, assemble_full_sample, run_lais
from .diagnostics import RunEnsemble, bias_test, cv_of_ensemble, rrmse_of_ensemble
from .estimators import (
    GaussianProposal,
    MisHistory,
    ce_update,
    dmmis_update_weights,
    gaussian_is_weight,
    lsis_estimate,
    mc_estimate,
    mis_estimate,
    smis_weight,
)
from .ldt import LdtSolution, Subspace, build_h_ldt_matvec, build_subspace, second_order_prob, solve_ldt
from .numerics import RngStream, cholesky, fd_hessian_vector, orthonormalize, sample_std_normal, sym_eig_topk
from .problems import (
    DiffusionMap,
    EventMap,
    FunctionMap,
    KlField,
    QuadraticMap,
    build_kl_field,
    diffusion_eval,
    diffusion_grad,
    quadratic_eval,
    quadratic_grad,
    quadratic_oracle_pf,
)

__version__ = "0.1.0"
