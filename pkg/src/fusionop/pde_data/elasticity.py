"""Plane-stress linear elasticity in displacement form on the clamped unit square.

With ``C = E / (1 - nu^2)`` the Navier equations read::

    C [u_xx + (1-nu)/2 u_yy + (1+nu)/2 v_xy] + f_x = 0
    C [(1-nu)/2 v_xx + v_yy + (1+nu)/2 u_xy] + f_y = 0

discretised with second-order central differences on the interior nodes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .darcy import RESIDUAL_RTOL, SolverError
from .grid import Grid, GridFunction


def elasticity_matrix(n: int, E: float, poisson: float) -> sp.csc_matrix:
    """Operator ``-div sigma(u, v)`` on the ``2 (n-2)^2`` interior unknowns, u block first."""
    m = n - 2
    h = 1.0 / (n - 1)
    I = sp.identity(m, format="csr")
    T2 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m)) / h**2
    D1 = sp.diags([-1.0, 1.0], [-1, 1], shape=(m, m)) / (2.0 * h)
    dxx = sp.kron(T2, I)  # x is the slow (row) index
    dyy = sp.kron(I, T2)
    dxy = sp.kron(D1, D1)
    C = E / (1.0 - poisson**2)
    shear = (1.0 - poisson) / 2.0
    mixed = (1.0 + poisson) / 2.0
    A = sp.bmat([[dxx + shear * dyy, mixed * dxy],
                 [mixed * dxy, shear * dxx + dyy]])
    return (-C * A).tocsc()


@lru_cache(maxsize=8)
def _factorized(n: int, E: float, poisson: float):
    A = elasticity_matrix(n, E, poisson)
    return A, spla.splu(A)


def solve_elasticity(fx: GridFunction, fy: GridFunction, E: float = 1.0, poisson: float = 0.3):
    """Displacements ``(u, v)`` for body force ``(fx, fy)``; zero on the boundary."""
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 < poisson < 0.5:
        raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {poisson}")
    grid = fx.grid
    if fy.grid != grid or grid.ndim != 2 or grid.periodic or grid.shape[0] != grid.shape[1]:
        raise ValueError("body force components must share one square non-periodic 2-D grid")
    n = grid.shape[0]
    A, lu = _factorized(n, float(E), float(poisson))
    rhs = np.concatenate([fx.values[1:-1, 1:-1].ravel(), fy.values[1:-1, 1:-1].ravel()])
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverError("singular elasticity system")
    res = np.linalg.norm(A @ sol - rhs)
    if res > RESIDUAL_RTOL * np.linalg.norm(rhs):
        raise SolverError(f"elasticity residual {res:.3e} above tolerance")
    m2 = (n - 2) ** 2
    u = np.zeros((n, n))
    v = np.zeros((n, n))
    u[1:-1, 1:-1] = sol[:m2].reshape(n - 2, n - 2)
    v[1:-1, 1:-1] = sol[m2:].reshape(n - 2, n - 2)
    return GridFunction(u, grid), GridFunction(v, grid)
