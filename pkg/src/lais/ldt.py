"""Large-deviation optimizer, projected-Hessian subspace and SORM-type estimate."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import CurvatureViolation, LineSearchFailure, NoConvergence, NotRare
from .numerics import RngStream, fd_hessian_vector, fd_step, orthonormalize, sym_eig_topk

log = logging.getLogger(__name__)

ARTIFACT_VERSION = "lais-ldt-artifact v1"


@dataclass
class LdtSolution:
    theta_star: np.ndarray
    I_star: float
    lam: float
    n_hat: np.ndarray
    constraint_residual: float
    z: float
    n_f_used: int = 0
    n_grad_used: int = 0
    iterations: int = 0

    @property
    def stationarity(self):
        """``|theta - (|theta|/|grad F|) grad F|`` with ``grad F = |grad F| n_hat``."""
        t = self.theta_star
        return float(np.linalg.norm(t - np.linalg.norm(t) * self.n_hat))


@dataclass
class Subspace:
    basis: np.ndarray
    h_eigs: np.ndarray
    epsilon: float
    all_eigs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_grad_used: int = 0

    @property
    def r(self):
        return self.basis.shape[1]


def solve_ldt(event_map, z=None, x0=None, max_iter=50, tol_constraint=1e-8,
              tol_stationarity=1e-6, inner_maxiter=500):
    """Minimize ``|theta|^2 / 2`` subject to ``F(theta) = z``.

    Augmented Lagrangian outer loop with an L-BFGS (memory 10) inner solver.
    The default start is the linearization-at-the-origin point used by FORM.
    Raises NotRare when ``F(0) >= z``.
    """
    z = event_map.z if z is None else z
    if z is None:
        raise ValueError("threshold z is required")
    f_start, g_start = event_map.eval_count, event_map.grad_count
    n = event_map.n
    zero = np.zeros(n)
    f0 = event_map.evaluate(zero)
    if f0 >= z:
        raise NotRare(f"F(0) = {f0:g} >= z = {z:g}; the event is not rare")

    cache = {}

    def fg(theta):
        key = theta.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = (event_map.evaluate(theta), event_map.gradient(theta))
        return cache[key]

    if x0 is None:
        g0 = event_map.gradient(zero)
        gg = g0 @ g0
        if gg == 0.0:
            raise LineSearchFailure("zero gradient at the origin; provide x0")
        theta = (z - f0) * g0 / gg
    else:
        theta = np.array(x0, dtype=np.float64)

    f, g = fg(theta)
    gg = g @ g
    if gg == 0.0:
        raise LineSearchFailure("zero gradient at the starting point")
    mu = (theta @ g) / gg
    rho = 10.0 / gg
    ctol = tol_constraint * max(1.0, abs(z))

    for it in range(max_iter + 1):
        c = f - z
        gnorm = np.linalg.norm(g)
        tnorm = np.linalg.norm(theta)
        stat = np.linalg.norm(theta - (tnorm / gnorm) * g)
        if abs(c) <= ctol and stat <= tol_stationarity * tnorm and theta @ g > 0:
            break
        if it == max_iter:
            raise NoConvergence(
                f"LDT optimizer: constraint residual {abs(c):.3e}, stationarity {stat:.3e} after {it} iterations",
                residuals=np.array([abs(c), stat]),
            )

        def lagrangian(t, mu=mu, rho=rho):
            ft, gt = fg(t)
            ct = ft - z
            return 0.5 * t @ t - mu * ct + 0.5 * rho * ct * ct, t - (mu - rho * ct) * gt

        res = optimize.minimize(
            lagrangian, theta, jac=True, method="L-BFGS-B",
            options=dict(maxcor=10, maxiter=inner_maxiter, ftol=1e-16,
                         gtol=1e-3 * tol_stationarity * max(tnorm, 1.0) / np.sqrt(n)),
        )
        if not np.all(np.isfinite(res.x)):
            raise LineSearchFailure(f"inner solve diverged: {res.message}")
        theta = res.x
        f, g = fg(theta)
        c_new = f - z
        mu = mu - rho * c_new
        if abs(c_new) > 0.25 * abs(c):
            rho *= 10.0

    gnorm = np.linalg.norm(g)
    tnorm = np.linalg.norm(theta)
    sol = LdtSolution(
        theta_star=theta,
        I_star=0.5 * tnorm**2,
        lam=tnorm / gnorm,
        n_hat=g / gnorm,
        constraint_residual=abs(f - z),
        z=float(z),
        n_f_used=event_map.eval_count - f_start,
        n_grad_used=event_map.grad_count - g_start,
        iterations=it,
    )
    log.debug("LDT solve: I*=%g lambda=%g in %d outer iterations", sol.I_star, sol.lam, it)
    return sol


def build_h_ldt_matvec(event_map, sol, h=None):
    """Operator ``v -> P H P v`` with ``P = I - n n^T`` and H by gradient differences."""
    nh = sol.n_hat
    theta = sol.theta_star
    step = fd_step(theta) if h is None else h

    def matvec(v):
        pv = v - (nh @ v) * nh
        norm = np.linalg.norm(pv)
        if norm == 0.0:
            return np.zeros_like(pv)
        hv = norm * fd_hessian_vector(event_map, theta, pv / norm, step)
        return hv - (nh @ hv) * nh

    return matvec


def select_rank(scaled_eigs, epsilon, r_max):
    """Smallest r (counting the normal direction) leaving only ``lam*|eig| <= epsilon`` out."""
    keep = 0
    for s in scaled_eigs:
        if s > epsilon:
            keep += 1
        else:
            break
    return min(1 + keep, r_max)


def build_subspace(event_map, sol, epsilon, r_max=20, tol=1e-8, rng=None):
    """Basis ``[n_hat, dominant eigenvectors of H_LDT]`` chosen by threshold ``epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    n = event_map.n
    g_start = event_map.grad_count
    k = min(r_max + 5, n)
    rng = RngStream(0, 2) if rng is None else rng
    v0 = rng.generator.standard_normal(n)
    v0 -= (sol.n_hat @ v0) * sol.n_hat
    eig = sym_eig_topk(build_h_ldt_matvec(event_map, sol), n, k, tol=tol, rng=rng, v0=v0)
    r = select_rank(sol.lam * np.abs(eig.values), epsilon, r_max)
    basis = orthonormalize(np.column_stack([sol.n_hat, eig.vectors[:, :r - 1]]))
    basis[:, 0] = sol.n_hat
    return Subspace(
        basis=basis,
        h_eigs=eig.values[:r - 1].copy(),
        epsilon=float(epsilon),
        all_eigs=eig.values.copy(),
        residuals=eig.residuals,
        n_grad_used=event_map.grad_count - g_start,
    )


def second_order_prob(sol, eigs):
    """Second-order asymptotic failure probability from curvature at the optimizer.

    Eigenvalues not passed in are treated as zero.
    """
    factors = 1.0 - sol.lam * np.asarray(eigs, dtype=np.float64)
    if np.any(factors <= 0.0):
        raise CurvatureViolation(
            f"1 - lambda*lambda_i = {factors.min():g} <= 0; the optimizer is not a strict local minimum"
        )
    return float(
        (2.0 * np.pi) ** -0.5 / np.sqrt(2.0 * sol.I_star)
        * np.exp(-0.5 * np.sum(np.log(factors)) - sol.I_star)
    )


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in np.atleast_1d(values))


def save_artifact(path, sol, sub=None):
    lines = [
        f"# {ARTIFACT_VERSION}",
        f"z {sol.z:.17g}",
        f"n {sol.theta_star.size}",
        f"I_star {sol.I_star:.17g}",
        f"lambda {sol.lam:.17g}",
        f"constraint_residual {sol.constraint_residual:.17g}",
        f"n_f_used {sol.n_f_used}",
        f"n_grad_used {sol.n_grad_used}",
        f"iterations {sol.iterations}",
        f"theta_star {_fmt(sol.theta_star)}",
        f"n_hat {_fmt(sol.n_hat)}",
    ]
    if sub is not None:
        lines += [
            f"r {sub.r}",
            f"epsilon {sub.epsilon:.17g}",
            f"subspace_n_grad_used {sub.n_grad_used}",
            f"h_eigs {_fmt(sub.h_eigs)}",
            f"all_eigs {_fmt(sub.all_eigs)}",
            f"residuals {_fmt(sub.residuals)}",
        ]
        lines += [f"basis {_fmt(col)}" for col in sub.basis.T]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_artifact(path):
    """Read ``(LdtSolution, Subspace or None)`` written by ``save_artifact``."""
    fields = {}
    basis = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"# {ARTIFACT_VERSION}":
            raise ValueError(f"{path}: not a {ARTIFACT_VERSION} file")
        for line in fh:
            key, _, rest = line.strip().partition(" ")
            if not key:
                continue
            if key == "basis":
                basis.append(np.array(rest.split(), dtype=np.float64))
            else:
                fields[key] = rest

    def arr(key):
        return np.array(fields[key].split(), dtype=np.float64) if fields.get(key) else np.zeros(0)

    sol = LdtSolution(
        theta_star=arr("theta_star"),
        I_star=float(fields["I_star"]),
        lam=float(fields["lambda"]),
        n_hat=arr("n_hat"),
        constraint_residual=float(fields["constraint_residual"]),
        z=float(fields["z"]),
        n_f_used=int(fields["n_f_used"]),
        n_grad_used=int(fields["n_grad_used"]),
        iterations=int(fields["iterations"]),
    )
    sub = None
    if "r" in fields:
        sub = Subspace(
            basis=np.column_stack(basis),
            h_eigs=arr("h_eigs"),
            epsilon=float(fields["epsilon"]),
            all_eigs=arr("all_eigs"),
            residuals=arr("residuals"),
            n_grad_used=int(fields["subspace_n_grad_used"]),
        )
    return sol, sub
