"""Proper orthogonal decomposition of snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Modes with sigma_j < RANK_RTOL * sigma_1 are kept but counted as beyond numerical rank.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PODBasis:
    mean_mode: np.ndarray  # (p,)
    modes: np.ndarray  # (p, r)
    singular_values: np.ndarray  # (r,), descending

    @property
    def p(self) -> int:
        return self.mean_mode.shape[0]

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    @property
    def numerical_rank(self) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s >= RANK_RTOL * s[0]))

    @property
    def rank_deficient(self) -> bool:
        """True when some retained modes carry no snapshot energy."""
        return self.numerical_rank < self.r


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    if modes.shape[1] == 0:
        return modes
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


def compute_pod(snapshots, r: int) -> PODBasis:
    """Mean-centred POD keeping the leading ``r`` left singular vectors.

    Each mode is flipped so that its largest-magnitude entry is positive.
    """
    Y = np.asarray(snapshots, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("snapshots must be a (p, N) matrix")
    p, N = Y.shape
    if not 0 <= r <= min(p, N):
        raise ValueError(f"r={r} out of range [0, {min(p, N)}] for snapshots of shape {Y.shape}")
    mean = Y.mean(axis=1)
    U, s, _ = np.linalg.svd(Y - mean[:, None], full_matrices=False)
    modes = np.ascontiguousarray(_fix_signs(U[:, :r]))
    return PODBasis(mean, modes, s[:r].copy())


def lift(basis: PODBasis, Q) -> PODBasis:
    """Map a basis computed in the coordinates of an orthonormal ``Q`` back to ambient space.

    If ``Y = Q Z`` with ``Q^T Q = I``, then ``lift(compute_pod(Z, r), Q)``
    equals ``compute_pod(Y, r)`` up to rounding, at a fraction of the cost.
    """
    Q = np.asarray(Q, dtype=np.float64)
    return PODBasis(Q @ basis.mean_mode, np.ascontiguousarray(_fix_signs(Q @ basis.modes)),
                    basis.singular_values.copy())


def project(basis: PODBasis, f) -> np.ndarray:
    """POD coefficients ``modes^T (f - mean)``; accepts ``(p,)`` or ``(B, p)`` inputs."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != basis.p:
        raise ValueError(f"expected length {basis.p}, got {f.shape[-1]}")
    return (f - basis.mean_mode) @ basis.modes


def reconstruct(basis: PODBasis, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-1] != basis.r:
        raise ValueError(f"expected {basis.r} coefficients, got {c.shape[-1]}")
    return basis.mean_mode + c @ basis.modes.T


def total_energy(snapshots) -> float:
    """Squared Frobenius norm of the mean-centred snapshot matrix."""
    Y = np.asarray(snapshots, dtype=np.float64)
    return float(np.sum((Y - Y.mean(axis=1, keepdims=True)) ** 2))


def energy_fraction(basis: PODBasis, total_energy: float) -> float:
    if not total_energy > 0:
        raise ValueError(f"total energy must be positive, got {total_energy}")
    return float(min(1.0, np.sum(basis.singular_values**2) / total_energy))
