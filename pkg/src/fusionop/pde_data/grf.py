"""Gaussian random field samplers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import Grid, GridFunction

JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(int(seed))


@lru_cache(maxsize=16)
def _cosine_basis(n: int) -> np.ndarray:
    """L2-normalised Neumann eigenfunctions ``c_k cos(pi k x)`` at the nodes, shape (n, n)."""
    x = np.linspace(0.0, 1.0, n)
    k = np.arange(n)
    C = np.cos(np.pi * np.outer(x, k))
    C[:, 1:] *= np.sqrt(2.0)
    return C


@lru_cache(maxsize=16)
def _matern_sqrt_eigs(n: int, alpha: float, tau: float) -> np.ndarray:
    k = np.arange(n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return (np.pi**2 * k2 + tau**2) ** (-alpha / 2.0)


def sample_grf_matern(resolution: int, alpha: float, tau: float, seed) -> GridFunction:
    """Zero-mean field with covariance ``(-Laplacian + tau^2)^(-alpha)`` on the unit square.

    Karhunen-Loeve sum over Neumann cosine modes ``k in [0, n-1]^2`` with
    standard normal weights; Neumann eigenvalues are ``pi^2 |k|^2``.
    """
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1 in two dimensions (got {alpha}); the field variance diverges")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = int(resolution)
    grid = Grid((n, n))
    xi = _rng(seed).standard_normal((n, n))
    C = _cosine_basis(n)
    coef = _matern_sqrt_eigs(n, float(alpha), float(tau)) * xi
    return GridFunction(C @ coef @ C.T, grid)


def sqexp_kernel(points: np.ndarray, length: float, periodic: bool = False) -> np.ndarray:
    """Dense ``exp(-|x - x'|^2 / 2 l^2)``; periodic grids sum a few images so it stays PSD."""
    diff = points[:, None, :] - points[None, :, :]
    if not periodic:
        return np.exp(-np.sum(diff**2, axis=-1) / (2.0 * length**2))
    K = np.zeros(diff.shape[:2])
    shifts = range(-2, 3)
    # 1-D torus only
    for s in shifts:
        K += np.exp(-((diff[..., 0] + s) ** 2) / (2.0 * length**2))
    return K


@lru_cache(maxsize=8)
def _sqexp_factor(shape: tuple, length: float, periodic: bool) -> np.ndarray:
    grid = Grid(shape, periodic)
    K = sqexp_kernel(grid.coords(), length, periodic)
    eye = np.eye(K.shape[0])
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(f"squared-exponential covariance (l={length}) not factorizable with jitter <= 1e-6")


def sample_grf_sqexp(resolution, length: float, seed, periodic: bool = False, ndim: int = 2,
                     n_fields: int = 1):
    """Unit-variance field with squared-exponential covariance of correlation length ``length``.

    Returns a :class:`GridFunction`, or a list of them when ``n_fields > 1``
    (independent draws from the same generator, e.g. the two body-force
    components).
    """
    if not length > 0:
        raise ValueError(f"correlation length must be positive, got {length}")
    shape = (int(resolution),) * ndim
    if periodic and ndim != 1:
        raise ValueError("periodic squared-exponential fields are 1-D only")
    L = _sqexp_factor(shape, float(length), bool(periodic))
    rng = _rng(seed)
    grid = Grid(shape, periodic)
    fields = [GridFunction((L @ rng.standard_normal(L.shape[0])).reshape(shape), grid) for _ in range(n_fields)]
    return fields[0] if n_fields == 1 else fields
