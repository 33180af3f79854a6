"""Statistics over ensembles of independent estimates."""
from dataclasses import dataclass

import numpy as np

from .errors import LaisError


class ZeroMean(LaisError):
    pass


@dataclass
class RunEnsemble:
    estimates: np.ndarray
    n_per_run: int = 0
    method: str = ""

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=np.float64)


@dataclass
class BiasTest:
    z_score: float
    passed: bool


def _values(ens):
    return ens.estimates if isinstance(ens, RunEnsemble) else np.asarray(ens, dtype=np.float64)


def cv_of_ensemble(ens):
    """Sample standard deviation (divisor K-1) over the sample mean."""
    x = _values(ens)
    if x.size < 2:
        raise ValueError("need at least two estimates")
    mean = x.mean()
    if mean == 0:
        raise ZeroMean("ensemble mean is zero")
    return float(x.std(ddof=1) / mean)


def rrmse_of_ensemble(ens, p_ref):
    if not p_ref > 0:
        raise ValueError("reference probability must be positive")
    x = _values(ens)
    return float(np.sqrt(np.mean((x - p_ref) ** 2)) / p_ref)


def bias_test(ens, p_ref, threshold=4.0):
    """z-score of the ensemble mean against ``p_ref``; passes when ``|z| <= threshold``.

    An ensemble with zero spread passes only if its mean equals ``p_ref``.
    """
    x = _values(ens)
    if x.size < 30:
        raise ValueError("bias test needs at least 30 runs")
    diff = x.mean() - p_ref
    se = x.std(ddof=1) / np.sqrt(x.size)
    if se == 0:
        z = 0.0 if diff == 0 else float(np.copysign(np.inf, diff))
    else:
        z = float(diff / se)
    return BiasTest(z, abs(z) <= threshold)
