import numpy as np
import pytest

from lais.ldt import solve_ldt
from lais.problems import DiffusionMap, build_kl_field


@pytest.fixture(scope="session")
def kl_field():
    return build_kl_field()


@pytest.fixture
def diffusion(kl_field):
    return DiffusionMap(kl_field, z=0.535)


@pytest.fixture(scope="session")
def diffusion_ldt(kl_field):
    return solve_ldt(DiffusionMap(kl_field), 0.535)


def jacobi_eigh(A, sweeps=100, tol=1e-15):
    """Cyclic Jacobi rotations; dense reference eigensolver for tests."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol * np.linalg.norm(A):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A).copy(), V
