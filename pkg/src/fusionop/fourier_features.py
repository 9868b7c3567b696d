"""Random Fourier feature encodings and the subspaces built from them.

Subspace ``k`` is the column space of the encoded grid-coordinate matrix
``Phi_k`` (one row per grid node, ``2m`` columns). Output snapshots are
projected orthogonally into it before any POD is taken.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .pde_data.grid import GridFunction

QR_DROP_TOL = 1e-10


@dataclass(frozen=True)
class FrequencyMatrix:
    B: np.ndarray  # (d, m), columns are frequency vectors
    scale: float
    seed: int

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class EncodedCoordinates:
    features: np.ndarray  # (p, 2m): [cos | sin]
    grid: np.ndarray  # (p, d)


@dataclass(frozen=True)
class SubspaceData:
    projector_basis: np.ndarray  # (p, q), orthonormal columns
    snapshots_projected: np.ndarray  # (p, N)
    frequencies: FrequencyMatrix

    @property
    def rank(self) -> int:
        return self.projector_basis.shape[1]


def sample_frequencies(d: int, m: int, scale: float, seed: int) -> FrequencyMatrix:
    """Draw a ``d x m`` Gaussian frequency matrix with standard deviation ``scale``.

    Uses the counter-based Philox generator so that ``(d, m, scale, seed)``
    always regenerates the same matrix.
    """
    if d < 1 or m < 1:
        raise ValueError(f"d and m must be >= 1, got d={d}, m={m}")
    if not scale > 0:
        raise ValueError(f"frequency scale must be positive, got {scale}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    B = scale * rng.standard_normal((d, m))
    return FrequencyMatrix(B, float(scale), int(seed))


def encode(freqs: FrequencyMatrix, points) -> EncodedCoordinates:
    """Map each coordinate ``x`` to ``[cos(2 pi B^T x), sin(2 pi B^T x)]``."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if freqs.d == 1 else x[None, :]
    if x.shape[1] != freqs.d:
        raise ValueError(f"points have dimension {x.shape[1]}, frequencies expect {freqs.d}")
    phase = 2.0 * np.pi * (x @ freqs.B)
    return EncodedCoordinates(np.hstack([np.cos(phase), np.sin(phase)]), x)


def geometric_scales(n: int, smin: float = 1.0, smax: float = 20.0) -> list[float]:
    """Frequency scale ladder ``smin * (smax/smin)**(k/(n-1))``."""
    if n == 1:
        return [float(smin)]
    return [float(smin * (smax / smin) ** (k / (n - 1))) for k in range(n)]


def subspace_seed(seed: int, k: int) -> int:
    return int(seed) ^ int(k)


def orthonormal_feature_basis(features: np.ndarray) -> np.ndarray:
    """Thin pivoted QR, keeping only columns with ``|R_jj| >= 1e-10``."""
    q, r, _ = la.qr(features, mode="economic", pivoting=True)
    keep = np.abs(np.diag(r)) >= QR_DROP_TOL
    return np.ascontiguousarray(q[:, keep])


def build_subspaces(snapshots, grid, n_subspaces: int, m_per_subspace: int,
                    scale_schedule=None, seed: int = 0, channels: int = 1) -> list[SubspaceData]:
    """Project output snapshots into ``n_subspaces`` Fourier-feature subspaces.

    Parameters
    ----------
    snapshots : (p, N) array
        Output functions as columns; ``p = channels * len(grid)``.
    grid : (p_grid, d) array
        Node coordinates shared by all channels.
    scale_schedule : sequence of float, optional
        One frequency scale per subspace; defaults to :func:`geometric_scales`.
    channels : int
        Vector-valued outputs (e.g. two displacement components) use the same
        coordinate subspace for every channel.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 1:
        grid = grid[:, None]
    Y = np.asarray(snapshots, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    p_grid, d = grid.shape
    if Y.shape[0] != channels * p_grid:
        raise ValueError(f"snapshots have {Y.shape[0]} rows, expected {channels} x {p_grid}")
    if scale_schedule is None:
        scale_schedule = geometric_scales(n_subspaces)
    if len(scale_schedule) != n_subspaces:
        raise ValueError(f"scale_schedule has {len(scale_schedule)} entries for {n_subspaces} subspaces")

    out = []
    for k in range(n_subspaces):
        if p_grid < 2 * m_per_subspace:
            raise ValueError(
                f"subspace {k}: grid has {p_grid} points but needs >= {2 * m_per_subspace} "
                f"for {m_per_subspace} Fourier features")
        freqs = sample_frequencies(d, m_per_subspace, scale_schedule[k], subspace_seed(seed, k))
        q = orthonormal_feature_basis(encode(freqs, grid).features)
        if channels > 1:
            q = np.kron(np.eye(channels), q)
        out.append(SubspaceData(q, q @ (q.T @ Y), freqs))
    return out


# ---------------------------------------------------------------- encoding demo


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit binary portable graymap (P5), min-max normalized."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi - lo > 0:
        pix = np.rint(255.0 * (img - lo) / (hi - lo))
    else:
        pix = np.full(img.shape, 255.0)
    data = pix.clip(0, 255).astype(np.uint8)
    h, w = data.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    os.replace(tmp, path)


_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    data = raw[m.end():m.end() + w * h]
    if len(data) != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def export_encoding_demo(freqs: FrequencyMatrix, field: GridFunction, path, modulate: bool = True) -> list[Path]:
    """Write the ``2m`` Fourier-encoded channels of a 2-D field as PGM images.

    Channel ``j`` is ``cos(2 pi b_j . x)`` (then the sines) evaluated on the
    field's grid, multiplied pointwise by the field when ``modulate`` is set.
    Images are oriented with x to the right and y up.
    """
    if field.grid.ndim != 2 or field.channels != 1:
        raise ValueError("encoding demo needs a single-channel 2-D field")
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = encode(freqs, field.grid.coords()).features
    files = []
    for j in range(feats.shape[1]):
        chan = feats[:, j].reshape(field.grid.shape)
        if modulate:
            chan = chan * field.values
        kind = "cos" if j < freqs.m else "sin"
        fname = out_dir / f"channel_{j:03d}_{kind}{j % freqs.m}.pgm"
        write_pgm(fname, chan.T[::-1])
        files.append(fname)
    return files
