"""Finite-dimensional frames and fusion frames.

Frames are stored as an ``(n, d)`` array whose rows are the frame vectors.
Operators are assembled densely and inverted with a Cholesky solve, which is
fine for the ambient dimensions used here (a few thousand at most).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as la

# A < NONFRAME_RTOL * B is treated as "not a frame".
NONFRAME_RTOL = 1e-12
# Subspace bases drifting further than this from orthonormal are re-orthonormalized.
ORTHO_TOL = 1e-8


class NotAFrameError(ValueError):
    """Raised when an operator that needs an invertible frame operator gets a singular one."""


class FrameBounds(NamedTuple):
    lower: float
    upper: float

    @property
    def is_frame(self) -> bool:
        return self.lower > 0.0

    @property
    def is_tight(self) -> bool:
        return self.is_frame and np.isclose(self.lower, self.upper, rtol=1e-12, atol=0.0)


@dataclass(frozen=True)
class FrameSpec:
    vectors: np.ndarray  # (n, d), row i is f_i

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if v.ndim != 2:
            raise ValueError("frame vectors must form a 2-D array (n, d)")
        if not np.all(np.isfinite(v)):
            raise ValueError("frame vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis (``d x k``) of a subspace W."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[1]:
            gram_err = np.max(np.abs(b.T @ b - np.eye(b.shape[1])))
            if gram_err > ORTHO_TOL:
                b = _orthonormal_columns(b)
        object.__setattr__(self, "basis", b)

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True)
class FusionFrameSpec:
    subspaces: Sequence[SubspaceBasis]
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        subs = tuple(s if isinstance(s, SubspaceBasis) else SubspaceBasis(s) for s in self.subspaces)
        if not subs:
            raise ValueError("fusion frame needs at least one subspace")
        w = np.ones(len(subs)) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(subs),):
            raise ValueError(f"expected {len(subs)} weights, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("fusion frame weights must be nonnegative")
        dims = {s.d for s in subs}
        if len(dims) != 1:
            raise ValueError(f"subspaces live in different ambient dimensions: {sorted(dims)}")
        object.__setattr__(self, "subspaces", subs)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.subspaces[0].d


def _orthonormal_columns(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    q, r, _ = la.qr(a, mode="economic", pivoting=True)
    keep = np.abs(np.diag(r)) > tol
    return q[:, keep]


def _check_dim(f: np.ndarray, d: int) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {f.shape}")
    return f


def _bounds_from_operator(s: np.ndarray) -> FrameBounds:
    eig = la.eigvalsh(s)
    lo, hi = float(eig[0]), float(eig[-1])
    if hi <= 0.0 or lo < NONFRAME_RTOL * hi:
        lo = 0.0
    return FrameBounds(lo, hi)


def _solve_spd(s: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    bounds = _bounds_from_operator(s)
    if not bounds.is_frame:
        raise NotAFrameError("frame operator is singular (lower frame bound is 0)")
    return la.cho_solve(la.cho_factor(s), rhs)


# ---------------------------------------------------------------- frames


def analysis(frame: FrameSpec, f) -> np.ndarray:
    """Frame coefficients ``<f, f_i>``."""
    return frame.vectors @ _check_dim(f, frame.d)


def synthesis(frame: FrameSpec, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape != (frame.n,):
        raise ValueError(f"expected {frame.n} coefficients, got shape {c.shape}")
    return frame.vectors.T @ c


def frame_operator(frame: FrameSpec) -> np.ndarray:
    """Dense ``d x d`` frame operator ``S = sum_i f_i f_i^T``."""
    return frame.vectors.T @ frame.vectors


def frame_operator_apply(frame: FrameSpec, f) -> np.ndarray:
    return synthesis(frame, analysis(frame, f))


def frame_bounds(frame: FrameSpec) -> FrameBounds:
    """Optimal frame bounds, i.e. extreme eigenvalues of S.

    The lower bound is reported as 0 when the vectors do not span the space.
    """
    if frame.n == 0:
        raise ValueError("empty frame")
    return _bounds_from_operator(frame_operator(frame))


def dual_frame(frame: FrameSpec) -> FrameSpec:
    """Canonical dual frame ``{S^-1 f_i}``."""
    dual = _solve_spd(frame_operator(frame), frame.vectors.T).T
    return FrameSpec(dual)


def reconstruct(frame: FrameSpec, coeffs) -> np.ndarray:
    """Invert the analysis map: ``sum_i c_i S^-1 f_i``."""
    return _solve_spd(frame_operator(frame), synthesis(frame, coeffs))


# ---------------------------------------------------------------- fusion frames


def project_subspace(w: SubspaceBasis, f) -> np.ndarray:
    f = _check_dim(f, w.d)
    return w.basis @ (w.basis.T @ f)


def fusion_frame_operator(ff: FusionFrameSpec) -> np.ndarray:
    """Dense fusion frame operator ``sum_i w_i^2 P_i``."""
    s = np.zeros((ff.d, ff.d))
    for sub, w in zip(ff.subspaces, ff.weights):
        s += w**2 * sub.projector()
    return s


def fusion_frame_operator_apply(ff: FusionFrameSpec, f) -> np.ndarray:
    f = _check_dim(f, ff.d)
    out = np.zeros(ff.d)
    for sub, w in zip(ff.subspaces, ff.weights):
        out += w**2 * (sub.basis @ (sub.basis.T @ f))
    return out


def fusion_frame_bounds(ff: FusionFrameSpec) -> FrameBounds:
    return _bounds_from_operator(fusion_frame_operator(ff))


def fusion_reconstruct(ff: FusionFrameSpec, f) -> np.ndarray:
    """Recover ``f`` from its weighted subspace projections.

    The subspaces need not be orthogonal; only the fusion frame operator has
    to be invertible.
    """
    return _solve_spd(fusion_frame_operator(ff), fusion_frame_operator_apply(ff, f))
