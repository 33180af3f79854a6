"""Importance-sampling weights, MIS bookkeeping and the cross-entropy update.

Weights are carried as logarithms; they are exponentiated only when an
estimate or a moment is formed.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NoFailureSamples
from .numerics import cholesky_jittered, sample_std_normal

log = logging.getLogger(__name__)


@dataclass
class GaussianProposal:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    log_det: float
    jitter: float = 0.0

    @classmethod
    def from_moments(cls, mean, cov):
        """Build a proposal, jittering the covariance once if it is not SPD."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64)).copy()
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        cov = 0.5 * (cov + cov.T)
        L, jitter = cholesky_jittered(cov)
        if jitter:
            cov = cov + jitter * np.eye(cov.shape[0])
        return cls(mean, cov, L, float(2.0 * np.sum(np.log(np.diag(L)))), jitter)

    @classmethod
    def standard(cls, dim, mean=None):
        mean = np.zeros(dim) if mean is None else mean
        return cls.from_moments(mean, np.eye(dim))

    @property
    def dim(self):
        return self.mean.size

    def sample(self, rng, size):
        xi = sample_std_normal(rng, self.dim, size)
        return self.mean + xi @ self.chol.T

    def mahalanobis_sq(self, thetas):
        diff = np.atleast_2d(thetas) - self.mean
        y = np.linalg.solve(self.chol, diff.T) if self.dim > 1 else diff.T / self.chol[0, 0]
        return np.sum(y * y, axis=0)


def log_gis_weight(thetas, proposal):
    """Log of prior/proposal density ratio for standard-normal prior, per row."""
    thetas = np.atleast_2d(thetas)
    if thetas.shape[1] != proposal.dim:
        raise ValueError(f"dimension mismatch: {thetas.shape[1]} vs {proposal.dim}")
    return 0.5 * proposal.log_det - 0.5 * np.sum(thetas * thetas, axis=1) + 0.5 * proposal.mahalanobis_sq(thetas)


def gaussian_is_weight(theta, proposal):
    """IS weight ``sqrt(det S) exp(-|t|^2/2 + |t-m|^2_{S^-1}/2)`` of a single point."""
    return float(np.exp(log_gis_weight(theta, proposal)[0]))


@dataclass
class Estimate:
    p_hat: float
    cv_hat: float
    n: int

    @property
    def cv_defined(self):
        return self.p_hat > 0


def _estimate_from_terms(terms):
    """Mean and CV of i.i.d. estimator terms ``d_i w_i``."""
    n = terms.size
    p = float(np.sum(terms) / n)
    if p > 0:
        var = float(np.sum((terms - p) ** 2) / n)
        return Estimate(p, float(np.sqrt(var / n) / p), n)
    return Estimate(p, float("nan"), n)


def mc_estimate(event_map, z, N, rng, chunk=100_000):
    """Crude Monte Carlo under the standard-normal prior."""
    if N < 1:
        raise ValueError("N must be >= 1")
    hits = 0
    for s in range(0, N, chunk):
        m = min(chunk, N - s)
        hits += int(np.count_nonzero(event_map.indicator(sample_std_normal(rng, event_map.n, m), z)))
    p = hits / N
    cv = float(np.sqrt((p - p * p) / N) / p) if p > 0 else float("nan")
    return Estimate(p, cv, N)


def lsis_estimate(event_map, z, theta_star, N, rng, chunk=20_000):
    """Importance sampling from the prior shifted to ``theta_star``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    theta_star = np.asarray(theta_star, dtype=np.float64)
    terms = np.zeros(N)
    for s in range(0, N, chunk):
        m = min(chunk, N - s)
        thetas = theta_star + sample_std_normal(rng, event_map.n, m)
        d = event_map.indicator(thetas, z)
        # log w = -theta*.theta + |theta*|^2 / 2 for the unit-covariance shift
        lw = 0.5 * theta_star @ theta_star - thetas[d] @ theta_star
        terms[s:s + m][d] = np.exp(lw)
    return _estimate_from_terms(terms)


@dataclass
class MisHistory:
    """All samples drawn so far, level by level.

    ``log_weight`` holds the current MIS weight of every record; under the
    deterministic-mixture scheme earlier entries are revised in place.
    """

    n_per_level: int
    dim: int
    proposals: list = field(default_factory=list)
    theta_r: np.ndarray = None
    indicator: np.ndarray = None
    log_weight: np.ndarray = None
    level: np.ndarray = None

    def __post_init__(self):
        if self.theta_r is None:
            self.theta_r = np.zeros((0, self.dim))
            self.indicator = np.zeros(0, dtype=bool)
            self.log_weight = np.zeros(0)
            self.level = np.zeros(0, dtype=np.int64)

    @property
    def n_levels(self):
        return len(self.proposals)

    @property
    def total(self):
        return self.theta_r.shape[0]

    @property
    def weight(self):
        return np.exp(self.log_weight)

    def append_level(self, proposal, theta_r, log_weight, indicator=None):
        theta_r = np.atleast_2d(theta_r)
        if theta_r.shape != (self.n_per_level, self.dim):
            raise ValueError(f"level must hold {self.n_per_level} samples of dimension {self.dim}")
        self.proposals.append(proposal)
        j = len(self.proposals)
        self.theta_r = np.vstack([self.theta_r, theta_r])
        self.log_weight = np.concatenate([self.log_weight, log_weight])
        if indicator is None:
            indicator = np.zeros(theta_r.shape[0], dtype=bool)
        self.indicator = np.concatenate([self.indicator, np.asarray(indicator, dtype=bool)])
        self.level = np.concatenate([self.level, np.full(theta_r.shape[0], j, dtype=np.int64)])

    def set_indicator(self, level, d):
        self.indicator[self.level == level] = d


def smis_weight(theta_r, proposal):
    """Standard MIS log-weight: the IS weight of a record's own proposal."""
    return log_gis_weight(theta_r, proposal)


def dmmis_update_weights(history, new_proposal, new_theta_r):
    """Add a level under deterministic-mixture weights.

    Existing records are updated harmonically with the new proposal and the
    new records receive the full mixture weight over all proposals, i.e. the
    result equals ``N / sum_j N_j / w_j(theta)`` for every record.
    """
    if history.n_levels == 0:
        raise ValueError("history is empty; use standard weights for the first level")
    N = history.total
    nce = history.n_per_level
    tot = N + nce
    # 1/w_new = (N/w_old + N_CE/w_gis) / (N + N_CE), in logs
    lw_old = history.log_weight
    lg = log_gis_weight(history.theta_r, new_proposal)
    inv = np.logaddexp(np.log(N / tot) - lw_old, np.log(nce / tot) - lg)
    history.log_weight = -inv
    props = history.proposals + [new_proposal]
    lgs = np.stack([log_gis_weight(new_theta_r, p) for p in props])
    lw_new = np.log(tot) - logsumexp(np.log(nce) - lgs, axis=0)
    history.append_level(new_proposal, new_theta_r, lw_new)
    return history


def ce_update(theta_r, indicator, log_weight):
    """Weighted failure-sample mean and (1/sum w normalized) covariance.

    Returns a GaussianProposal; raises NoFailureSamples when no record fails.
    """
    d = np.asarray(indicator, dtype=bool)
    if not np.any(d):
        raise NoFailureSamples("no failing samples to update the proposal")
    x = np.atleast_2d(theta_r)[d]
    lw = np.asarray(log_weight)[d]
    w = np.exp(lw - lw.max())
    w /= w.sum()
    mean = w @ x
    diff = x - mean
    cov = (diff * w[:, None]).T @ diff
    return GaussianProposal.from_moments(mean, cov)


def mis_estimate(history):
    """Pooled estimate ``sum d w / N``; its CV is the pooled-IS diagnostic only."""
    if history.total == 0:
        raise ValueError("history is empty")
    terms = np.where(history.indicator, np.exp(history.log_weight), 0.0)
    return _estimate_from_terms(terms)
