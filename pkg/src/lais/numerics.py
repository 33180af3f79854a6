"""Seeded sampling and the small linear-algebra toolbox used everywhere else."""
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, RankDeficient

EPS = np.finfo(np.float64).eps


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Uses numpy's Philox generator with the 128-bit key built from the two
    64-bit integers, so distinct stream ids give independent sequences and
    the same pair always reproduces the same draws.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        key = int(self.seed) | (int(self.stream_id) << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self):
        return self._gen

    def substream(self, stream_id):
        """Fresh stream with the same seed and another id."""
        return RngStream(self.seed, stream_id)


def sample_std_normal(rng, n, size=None):
    """Draw standard-normal vectors of length ``n``.

    With ``size`` given the result has shape ``(size, n)``, rows being
    independent draws in stream order.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    shape = (n,) if size is None else (int(size), n)
    return rng.generator.standard_normal(shape)


def cholesky(A):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NotPositiveDefinite instead of numpy's LinAlgError so callers can
    decide whether to jitter.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def cholesky_jittered(A):
    """Cholesky with a single diagonal-jitter retry.

    Returns ``(L, jitter)`` where ``jitter`` is the diagonal shift used
    (0.0 when the plain factorization succeeded). The shift is relative to
    the mean diagonal, floored at 1 so an all-zero matrix still factors.
    """
    A = np.asarray(A, dtype=np.float64)
    A = 0.5 * (A + A.T)
    try:
        return cholesky(A), 0.0
    except NotPositiveDefinite:
        dim = A.shape[0]
        scale = np.trace(A) / dim
        if not scale >= 0.0:
            raise
        jitter = 1e-10 * max(scale, 1.0)
        return cholesky(A + jitter * np.eye(dim)), jitter


def orthonormalize(columns, tol=1e-10):
    """Modified Gram-Schmidt with one reorthogonalization pass.

    A column whose norm after projection falls below ``tol`` (relative to
    its original norm) raises RankDeficient.
    """
    X = np.array(columns, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    n, m = X.shape
    Q = np.empty((n, m))
    for j in range(m):
        v = X[:, j]
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            raise RankDeficient(f"column {j} is zero")
        for _ in range(2):
            for i in range(j):
                v = v - (Q[:, i] @ v) * Q[:, i]
        nv = np.linalg.norm(v)
        if nv < tol * max(norm0, 1.0) or nv < tol:
            raise RankDeficient(f"column {j} is (numerically) in the span of the previous ones")
        Q[:, j] = v / nv
    return Q


def fd_step(theta):
    return np.sqrt(EPS) * (1.0 + np.linalg.norm(theta))


def fd_hessian_vector(event_map, theta, v, h=None):
    """Central difference of gradients along ``v``: approximately H(theta) v."""
    theta = np.asarray(theta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if h is None:
        h = fd_step(theta)
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    gp = event_map.gradient(theta + h * v)
    gm = event_map.gradient(theta - h * v)
    return (gp - gm) / (2.0 * h)


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    n_matvec: int


def sym_eig_topk(matvec, n, k, tol=1e-8, rng=None, v0=None, maxiter=None):
    """Largest-magnitude eigenpairs of a symmetric operator via Lanczos.

    Full reorthogonalization is used (two classical Gram-Schmidt sweeps per
    step) and the projected matrix is formed from the stored products
    ``A q_j``, so invariant-subspace breakdowns are handled by restarting
    with a fresh random direction orthogonal to the current basis.

    Returns eigenvalues sorted by decreasing magnitude, orthonormal
    eigenvectors as columns, the residual norms, and the number of operator
    applications.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if maxiter is None:
        maxiter = 10 * k + 50
    maxiter = min(maxiter, n)
    gen = (rng if rng is not None else RngStream(0, 0)).generator

    def fresh(Q, m):
        for _ in range(5):
            r = gen.standard_normal(n)
            for _ in range(2):
                r -= Q[:, :m] @ (Q[:, :m].T @ r)
            nr = np.linalg.norm(r)
            if nr > 1e-8:
                return r / nr
        return None

    Q = np.zeros((n, maxiter))
    W = np.zeros((n, maxiter))
    if v0 is None:
        q = fresh(Q, 0)
    else:
        q = np.asarray(v0, dtype=np.float64)
        q = q / np.linalg.norm(q)
    m = 0
    nmv = 0
    best = None
    while True:
        Q[:, m] = q
        W[:, m] = matvec(q)
        nmv += 1
        m += 1
        T = Q[:, :m].T @ W[:, :m]
        T = 0.5 * (T + T.T)
        theta, S = np.linalg.eigh(T)
        order = np.argsort(-np.abs(theta), kind="stable")
        theta, S = theta[order], S[:, order]
        scale = max(abs(theta[0]), 1.0)
        if m >= k:
            Y = Q[:, :m] @ S[:, :k]
            R = W[:, :m] @ S[:, :k] - Y * theta[:k]
            res = np.linalg.norm(R, axis=0)
            best = (theta[:k], Y, res)
            if np.all(res <= tol * scale) or m == n:
                break
        if m >= maxiter:
            raise NoConvergence(
                f"Lanczos did not converge in {maxiter} steps",
                residuals=None if best is None else best[2],
            )
        # next Krylov direction, fully reorthogonalized
        r = W[:, m - 1].copy()
        for _ in range(2):
            r -= Q[:, :m] @ (Q[:, :m].T @ r)
        beta = np.linalg.norm(r)
        if beta <= 1e-10 * scale:
            q = fresh(Q, m)
            if q is None:
                raise NoConvergence("could not extend the Krylov basis", residuals=None)
        else:
            q = r / beta
    values, vectors, res = best
    return EigResult(values.copy(), vectors, res, nmv)
