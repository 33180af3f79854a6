"""LDT-based adaptive importance sampling driver."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFailureSamples
from .estimators import (
    GaussianProposal,
    MisHistory,
    ce_update,
    dmmis_update_weights,
    mis_estimate,
    smis_weight,
)
from .ldt import build_subspace, solve_ldt
from .numerics import RngStream, sample_std_normal

log = logging.getLogger(__name__)

SCHEMES = ("standard", "deterministic-mixture")

# substream ids of a run seed
STREAM_SUBSPACE = 0
STREAM_COMPLEMENT = 1
STREAM_EIGEN = 2


@dataclass
class LaisConfig:
    n_ce: int
    j_max: int
    epsilon: float
    r_max: int = 20
    weight_scheme: str = "deterministic-mixture"
    seed: int = 0
    eig_tol: float = 1e-8

    def __post_init__(self):
        if self.n_ce < 1 or self.j_max < 1:
            raise ValueError("n_ce and j_max must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.weight_scheme not in SCHEMES:
            raise ValueError(f"weight_scheme must be one of {SCHEMES}")


@dataclass
class LevelSummary:
    level: int
    n_failing: int
    p_hat: float
    n_cumulative: int
    proposal: GaussianProposal


@dataclass
class LaisReport:
    p_hat: float
    per_level: list
    n_f: int
    n_grad: int
    ldt: object
    subspace: object
    history: MisHistory = field(repr=False, default=None)

    @property
    def cv_hat(self):
        """Pooled-IS CV of the final estimate; a within-run diagnostic only."""
        return mis_estimate(self.history).cv_hat


def assemble_full_sample(theta_prior, basis, theta_r):
    """Replace the subspace component of prior draws by ``basis @ theta_r``.

    Works row-wise when given 2-D arrays.
    """
    Phi = basis.basis if hasattr(basis, "basis") else basis
    theta_prior = np.asarray(theta_prior, dtype=np.float64)
    theta_r = np.asarray(theta_r, dtype=np.float64)
    if theta_prior.ndim == 1:
        return theta_prior - Phi @ (Phi.T @ theta_prior) + Phi @ theta_r
    return theta_prior - (theta_prior @ Phi) @ Phi.T + theta_r @ Phi.T


def run_lais(event_map, z, config, ldt=None, subspace=None):
    """Estimate ``P(F(theta) >= z)`` with N = j_max * n_ce evaluations of F.

    ``ldt`` and ``subspace`` may be passed in to reuse an earlier optimizer
    run; their recorded costs still enter the report's cost tally.
    """
    if ldt is None:
        ldt = solve_ldt(event_map, z)
    if subspace is None:
        subspace = build_subspace(
            event_map, ldt, config.epsilon, config.r_max, tol=config.eig_tol,
            rng=RngStream(config.seed, STREAM_EIGEN),
        )
    Phi = subspace.basis
    r = Phi.shape[1]
    sub_rng = RngStream(config.seed, STREAM_SUBSPACE)
    comp_rng = RngStream(config.seed, STREAM_COMPLEMENT)

    proposal = GaussianProposal.from_moments(Phi.T @ ldt.theta_star, np.eye(r))
    history = MisHistory(config.n_ce, r)
    per_level = []
    dm = config.weight_scheme == "deterministic-mixture"
    sampled = 0
    for J in range(1, config.j_max + 1):
        theta_r = proposal.sample(sub_rng, config.n_ce)
        if dm and J > 1:
            dmmis_update_weights(history, proposal, theta_r)
        else:
            history.append_level(proposal, theta_r, smis_weight(theta_r, proposal))
        thetas = assemble_full_sample(sample_std_normal(comp_rng, event_map.n, config.n_ce), Phi, theta_r)
        d = event_map.indicator(thetas, z)
        sampled += config.n_ce
        history.set_indicator(J, d)
        est = mis_estimate(history)
        per_level.append(LevelSummary(J, int(np.count_nonzero(d)), est.p_hat, history.total, proposal))
        log.debug("level %d: %d failing, p_hat=%.6g", J, per_level[-1].n_failing, est.p_hat)
        if J >= config.j_max:
            break
        try:
            proposal = ce_update(history.theta_r, history.indicator, history.log_weight)
        except NoFailureSamples:
            log.warning("level %d: no failing samples, keeping the previous proposal", J)

    # optimizer and eigensolver costs count even when computed by an earlier call
    n_f = sampled + ldt.n_f_used
    n_grad = ldt.n_grad_used + subspace.n_grad_used
    return LaisReport(per_level[-1].p_hat, per_level, n_f, n_grad, ldt, subspace, history)
