"""Darcy flow ``-div(a grad u) = f`` on the unit square, u = 0 on the boundary."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridFunction

RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def darcy_matrix(a: np.ndarray, h: float) -> sp.csr_matrix:
    """Five-point vertex-centred finite-volume operator on interior nodes.

    Face permeabilities are harmonic means of the two adjacent nodal values.
    """
    n = a.shape[0]
    m = n - 2
    idx = np.arange(m * m).reshape(m, m)
    ae = _harmonic(a[1:-1, 1:-1], a[2:, 1:-1])   # face towards i+1
    aw = _harmonic(a[1:-1, 1:-1], a[:-2, 1:-1])
    an = _harmonic(a[1:-1, 1:-1], a[1:-1, 2:])   # face towards j+1
    as_ = _harmonic(a[1:-1, 1:-1], a[1:-1, :-2])
    inv_h2 = 1.0 / h**2
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [((ae + aw + an + as_) * inv_h2).ravel()]
    for coef, di, dj in ((ae, 1, 0), (aw, -1, 0), (an, 0, 1), (as_, 0, -1)):
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        ti, tj = ii + di, jj + dj
        inside = (ti >= 0) & (ti < m) & (tj >= 0) & (tj < m)
        rows.append(idx[ii[inside], jj[inside]])
        cols.append(idx[ti[inside], tj[inside]])
        vals.append(-coef[inside] * inv_h2)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m))


def solve_darcy(a: GridFunction, f: GridFunction) -> GridFunction:
    """Pressure ``u`` on the full node grid (boundary values are zero)."""
    av, fv = a.values, f.values
    if a.grid != f.grid or a.grid.ndim != 2 or a.grid.periodic:
        raise ValueError("permeability and forcing must share one non-periodic 2-D grid")
    if av.shape[0] != av.shape[1]:
        raise ValueError("Darcy solver expects a square grid")
    if np.any(av <= 0):
        raise ValueError("permeability must be strictly positive")
    h = a.grid.spacing()
    A = darcy_matrix(av, h)
    rhs = fv[1:-1, 1:-1].ravel()
    u_int = spla.spsolve(A.tocsc(), rhs)
    res = np.linalg.norm(A @ u_int - rhs)
    if res > RESIDUAL_RTOL * np.linalg.norm(rhs):
        raise SolverError(f"Darcy residual {res:.3e} above tolerance")
    u = np.zeros_like(av)
    u[1:-1, 1:-1] = u_int.reshape(av.shape[0] - 2, -1)
    return GridFunction(u, a.grid)
