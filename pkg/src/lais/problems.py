"""Event maps: the abstract parameter-to-event interface and two benchmarks.

The quadratic limit state has closed-form derivatives and a quadrature
reference probability. The diffusion map solves a 1D log-normal diffusion
problem with linear finite elements and returns the state at the right end.
"""
import os
import threading
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from . import _kernels
from .errors import SolverFailure

KL_CACHE_VERSION = "lais-kl-cache v1"

# LSIS with 10**6 samples, RngStream(20240101, 0), default field and optimizer.
# Recomputed by the acceptance suite.
DIFFUSION_REFERENCE_SEED = 20240101
DIFFUSION_REFERENCE_PF = 1.6317284808373605e-04
DIFFUSION_REFERENCE_SE = 3.358965113874021e-07


class EventMap:
    """Parameter-to-event map ``F`` with gradient and evaluation tallies.

    Subclasses implement ``_evaluate_batch`` (rows of ``thetas``) and
    ``_gradient``. Tallies are updated under a lock so that concurrent
    callers never lose counts.
    """

    def __init__(self, n, z=None):
        self.n = int(n)
        self.z = z
        self._lock = threading.Lock()
        self.eval_count = 0
        self.grad_count = 0

    def _tally(self, evals=0, grads=0):
        with self._lock:
            self.eval_count += evals
            self.grad_count += grads

    def reset_counters(self):
        with self._lock:
            self.eval_count = 0
            self.grad_count = 0

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        self._check(theta)
        out = float(self._evaluate_batch(theta[None, :])[0])
        self._tally(evals=1)
        return out

    def evaluate_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        if thetas.shape[1] != self.n:
            raise ValueError(f"expected rows of length {self.n}, got {thetas.shape[1]}")
        out = np.asarray(self._evaluate_batch(thetas), dtype=np.float64)
        self._tally(evals=thetas.shape[0])
        return out

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        self._check(theta)
        g = np.asarray(self._gradient(theta), dtype=np.float64)
        self._tally(grads=1)
        return g

    def indicator(self, thetas, z):
        """Failure indicator ``F(theta) >= z`` for each row."""
        return self.evaluate_batch(thetas) >= z

    def _check(self, theta):
        if theta.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {theta.shape}")

    def _evaluate_batch(self, thetas):
        raise NotImplementedError

    def _gradient(self, theta):
        raise NotImplementedError


class FunctionMap(EventMap):
    """Wrap plain callables ``f(theta)`` and ``grad(theta)`` as an EventMap."""

    def __init__(self, n, f, grad, z=None, batch=None):
        super().__init__(n, z)
        self._f = f
        self._grad = grad
        self._batch = batch

    def _evaluate_batch(self, thetas):
        if self._batch is not None:
            return self._batch(thetas)
        return np.array([self._f(t) for t in thetas])

    def _gradient(self, theta):
        return self._grad(theta)


def linear_map(a, z=None):
    """``F(theta) = a . theta``, vectorized."""
    a = np.asarray(a, dtype=np.float64)
    return FunctionMap(a.size, lambda t: float(a @ t), lambda t: a.copy(), z=z, batch=lambda T: T @ a)


# ---------------------------------------------------------------- quadratic


def quadratic_eval(theta, kappa):
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.shape[-1]
    if n < 2:
        raise ValueError("quadratic limit state needs n >= 2")
    d = theta[..., 0] - theta[..., 1]
    return theta.sum(axis=-1) / np.sqrt(n) - 0.25 * kappa * d * d


def quadratic_grad(theta, kappa):
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.size
    if n < 2:
        raise ValueError("quadratic limit state needs n >= 2")
    g = np.full(n, 1.0 / np.sqrt(n))
    g[0] += 0.5 * kappa * (theta[1] - theta[0])
    g[1] += 0.5 * kappa * (theta[0] - theta[1])
    return g


class QuadraticMap(EventMap):
    """Linear in all components plus a concave/convex term in the first two."""

    def __init__(self, n, kappa=5.0, z=None):
        if n < 2:
            raise ValueError("quadratic limit state needs n >= 2")
        super().__init__(n, z)
        self.kappa = float(kappa)

    def _evaluate_batch(self, thetas):
        return quadratic_eval(thetas, self.kappa)

    def _gradient(self, theta):
        return quadratic_grad(theta, self.kappa)


def quadratic_oracle_pf(z, kappa, quad_nodes=200):
    """Failure probability of the quadratic limit state by Gauss-Hermite.

    Rotating the first two coordinates gives ``F = G - (kappa/2) v**2`` with
    ``G, v`` independent standard normals, so ``p = E_v[sf(z + kappa v^2/2)]``
    independently of the dimension. Nodes where the survival argument
    exceeds 40 contribute below double-precision underflow and are dropped.
    """
    if quad_nodes < 64:
        raise ValueError("use at least 64 quadrature nodes")
    x, w = special.roots_hermitenorm(quad_nodes)
    w = w / np.sqrt(2.0 * np.pi)
    arg = z + 0.5 * kappa * x * x
    keep = arg <= 40.0
    return float(np.sum(w[keep] * special.ndtr(-arg[keep])))


# ---------------------------------------------------------------- KL field


@dataclass
class KlField:
    """Truncated KL expansion of a stationary Gaussian field on [0, 1].

    ``eigenfunctions`` holds the modes at the element midpoints, normalized
    so that ``sum(h * e_m**2) = 1``.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mean: float
    variance: float
    corr_length: float
    elements: int
    mean_a: float
    var_a: float

    @property
    def modes(self):
        return self.eigenvalues.size

    @property
    def h(self):
        return 1.0 / self.elements

    @property
    def grid(self):
        return (np.arange(self.elements) + 0.5) * self.h

    def log_coefficient(self, thetas):
        """``Z`` at the midpoints for each row of ``thetas``; shape (B, elements)."""
        return self.mean + (np.atleast_2d(thetas) * np.sqrt(self.eigenvalues)) @ self.eigenfunctions.T

    def key(self):
        return (self.elements, self.corr_length, self.var_a, self.modes)


def lognormal_moments(mean_a, var_a):
    """Mean and variance of ``Z = log a`` given the moments of ``a``."""
    var_z = np.log((var_a + mean_a**2) / mean_a**2)
    return np.log(mean_a) - 0.5 * var_z, var_z


def build_kl_field(elements=512, corr_length=0.01, mean_a=1.0, var_a=0.01, modes=150):
    """Nystrom discretization of the exponential covariance kernel.

    One Gauss-Legendre point per element, i.e. the midpoint with weight h.
    """
    if modes > elements:
        raise ValueError("cannot keep more modes than quadrature points")
    mean_z, var_z = lognormal_moments(mean_a, var_a)
    h = 1.0 / elements
    x = (np.arange(elements) + 0.5) * h
    C = var_z * np.exp(-np.abs(x[:, None] - x[None, :]) / corr_length)
    vals, vecs = linalg.eigh(h * C, subset_by_index=[elements - modes, elements - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    # fix the sign convention so cached and fresh fields agree
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(modes)])
    vecs = vecs * signs
    return KlField(
        eigenvalues=np.clip(vals, 0.0, None),
        eigenfunctions=vecs / np.sqrt(h),
        mean=float(mean_z),
        variance=float(var_z),
        corr_length=float(corr_length),
        elements=int(elements),
        mean_a=float(mean_a),
        var_a=float(var_a),
    )


def save_kl_field(field, path):
    """Text cache: one header line, then per mode the eigenvalue followed by grid values."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"# {KL_CACHE_VERSION} elements={field.elements} corr_length={field.corr_length!r} "
            f"mean_a={field.mean_a!r} var_a={field.var_a!r} modes={field.modes}\n"
        )
        for lam, e in zip(field.eigenvalues, field.eigenfunctions.T):
            fh.write(" ".join(f"{v:.17g}" for v in (lam, *e)) + "\n")


def load_kl_field(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:3] != ["#", *KL_CACHE_VERSION.split()]:
            raise ValueError(f"{path}: not a {KL_CACHE_VERSION} file")
        params = dict(item.split("=", 1) for item in header[3:])
        rows = np.loadtxt(fh, ndmin=2)
    elements = int(params["elements"])
    mean_a = float(params["mean_a"])
    var_a = float(params["var_a"])
    if rows.shape != (int(params["modes"]), elements + 1):
        raise ValueError(f"{path}: table shape {rows.shape} does not match header")
    mean_z, var_z = lognormal_moments(mean_a, var_a)
    return KlField(
        eigenvalues=rows[:, 0].copy(),
        eigenfunctions=rows[:, 1:].T.copy(),
        mean=float(mean_z),
        variance=float(var_z),
        corr_length=float(params["corr_length"]),
        elements=elements,
        mean_a=mean_a,
        var_a=var_a,
    )


def kl_field_cached(path=None, elements=512, corr_length=0.01, mean_a=1.0, var_a=0.01, modes=150):
    """Load ``path`` when its parameters match the request, otherwise build and write it."""
    if path is not None and os.path.exists(path):
        field = load_kl_field(path)
        if field.key() == (elements, corr_length, var_a, modes) and field.mean_a == mean_a:
            return field
    field = build_kl_field(elements, corr_length, mean_a, var_a, modes)
    if path is not None:
        save_kl_field(field, path)
    return field


# ---------------------------------------------------------------- FEM


def fem_stiffness(coef, h):
    """Tridiagonal stiffness for ``-(a v')' = f``, ``v(0)=0``, natural BC at 1.

    ``coef`` has shape (B, ne), element-wise constant coefficient. Unknowns
    are the ne nodal values right of x=0.
    """
    k = coef / h
    diag = np.empty_like(k)
    diag[:, :-1] = k[:, :-1] + k[:, 1:]
    diag[:, -1] = k[:, -1]
    off = -k[:, 1:]
    return diag, off


def fem_load(ne, h):
    f = np.full(ne, h)
    f[-1] = 0.5 * h
    return f


def fem_solve(coef, h, use_numba=None):
    """Nodal solution (B, ne) for unit source and element coefficients ``coef``."""
    coef = np.atleast_2d(coef)
    if np.any(~(coef > 0)):
        raise SolverFailure("diffusion coefficient must be positive")
    diag, off = fem_stiffness(coef, h)
    rhs = np.broadcast_to(fem_load(coef.shape[1], h)[None, :, None], (coef.shape[0], coef.shape[1], 1))
    return _kernels.thomas_solve(diag, off, rhs, use_numba=use_numba)[:, :, 0]


class DiffusionMap(EventMap):
    """``F(theta) = v(1)`` for the log-normal diffusion problem.

    ``solve_count`` tallies tridiagonal solves (one per right-hand side).
    The gradient reuses the primal solution when ``evaluate`` was just
    called at the same point, so it then costs a single adjoint solve.
    """

    def __init__(self, field, z=None, chunk=4096):
        super().__init__(field.modes, z)
        self.field = field
        self.chunk = int(chunk)
        self.solve_count = 0
        self._last = None

    def _evaluate_batch(self, thetas):
        out = np.empty(thetas.shape[0])
        h = self.field.h
        for s in range(0, thetas.shape[0], self.chunk):
            a = np.exp(self.field.log_coefficient(thetas[s:s + self.chunk]))
            v = fem_solve(a, h)
            out[s:s + self.chunk] = v[:, -1]
            if thetas.shape[0] == 1:
                self._last = (thetas[0].copy(), a[0], v[0])
        with self._lock:
            self.solve_count += thetas.shape[0]
        return out

    def _gradient(self, theta):
        fld = self.field
        h = fld.h
        ne = fld.elements
        if self._last is not None and np.array_equal(self._last[0], theta):
            _, a, v = self._last
            diag, off = fem_stiffness(a[None, :], h)
            rhs = np.zeros((1, ne, 1))
            rhs[0, -1, 0] = 1.0
            w = _kernels.thomas_solve(diag, off, rhs)[0, :, 0]
            nsolve = 1
        else:
            a = np.exp(fld.log_coefficient(theta))[0]
            diag, off = fem_stiffness(a[None, :], h)
            rhs = np.zeros((1, ne, 2))
            rhs[0, :, 0] = fem_load(ne, h)
            rhs[0, -1, 1] = 1.0
            sol = _kernels.thomas_solve(diag, off, rhs)[0]
            v, w = sol[:, 0], sol[:, 1]
            nsolve = 2
        with self._lock:
            self.solve_count += nsolve
        dv = np.diff(v, prepend=0.0) / h
        dw = np.diff(w, prepend=0.0) / h
        # dF/dtheta_m = -sum_e h * a_e * sqrt(lam_m) e_m(x_e) * v'_e * w'_e
        return -np.sqrt(fld.eigenvalues) * (fld.eigenfunctions.T @ (h * a * dv * dw))


def diffusion_eval(theta, field):
    return DiffusionMap(field).evaluate(theta)


def diffusion_grad(theta, field):
    return DiffusionMap(field).gradient(theta)
