"""FF-POD-DeepONet, POD-DeepONet and DeepONet with losses and a training loop.

The fusion-frame model keeps one branch MLP per Fourier-feature subspace.
Branch ``i`` predicts coefficients against that subspace's POD modes and the
reconstructions are combined with weights ``w_i**2``::

    G(u) = sum_i w_i**2 * (mean_i + V_i @ branch_i(u))      # combine_rule="sum"

POD-DeepONet is the one-subspace special case with an identity projector
and ``w`` pinned to 1.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import blas

from . import pod as pod_mod
from .fourier_features import FrequencyMatrix, build_subspaces, geometric_scales
from .mlp import Adam, MLPParams, ParamVector, glorot_init, mlp_forward, mlp_gradients, stacked_backward, stacked_forward
from .pde_data.grid import Grid

COMBINE_RULES = ("sum", "average")
CHECKPOINT_VERSION = 1
EVAL_CHUNK = 256


class TrainingDivergedError(FloatingPointError):
    """Loss or gradient became non-finite during optimization."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 32
    reg_lambda: float = 1e-6
    ceod_weight: float = 0.01
    ceod_bandwidth: Optional[float] = None  # None: median pairwise distance of the source features
    seed: int = 0
    optimizer: str = "adam"
    lr_schedule: str = "cosine"  # "constant" or "cosine" (decays to lr_final_fraction * lr)
    lr_final_fraction: float = 0.01

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.reg_lambda < 0 or self.ceod_weight < 0:
            raise ValueError("reg_lambda and ceod_weight must be >= 0")
        if self.ceod_bandwidth is not None and not self.ceod_bandwidth > 0:
            raise ValueError("ceod_bandwidth must be positive")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        frac = self.lr_final_fraction + (1.0 - self.lr_final_fraction) * 0.5 * (1.0 + np.cos(np.pi * epoch / (self.epochs - 1)))
        return self.lr * frac


# ---------------------------------------------------------------- models


class FFPodModel:
    """Fusion-frame POD-DeepONet.

    Parameters
    ----------
    widths : sequence of int
        Branch widths ``[input, hidden..., r]``; identical for every subspace.
    pod_bases : list of PODBasis
        Frozen output frames, one per subspace, each with ``r`` modes.
    frequency_matrices : list of FrequencyMatrix or None
        Frozen Fourier frequencies that generated each subspace (``None`` for
        the identity projector of plain POD-DeepONet).
    learn_weights : bool
        When False the fusion weights stay at their initial value.
    inverse_operator : (p, p) array, optional
        If given, predictions are multiplied by this fixed matrix (used to
        ablate an explicit ``S^-1`` stage).
    """

    kind = "ff-pod-deeponet"

    def __init__(self, widths, pod_bases, frequency_matrices=None, combine_rule="sum", learn_weights=True,
                 grid: Grid | None = None, channels: int = 1, seed: int = 0, activation="tanh",
                 inverse_operator=None, init_weights=None, _params: ParamVector | None = None):
        if combine_rule not in COMBINE_RULES:
            raise ValueError(f"combine_rule must be one of {COMBINE_RULES}")
        n = len(pod_bases)
        if n == 0:
            raise ValueError("need at least one subspace")
        widths = [int(w) for w in widths]
        r = widths[-1]
        for i, b in enumerate(pod_bases):
            if b.r != r:
                raise ValueError(f"subspace {i} has {b.r} modes but branch output width is {r}")
        if frequency_matrices is None:
            frequency_matrices = [None] * n
        if len(frequency_matrices) != n:
            raise ValueError("need one frequency matrix (or None) per subspace")
        self.widths = widths
        self.pod_bases = list(pod_bases)
        self.frequency_matrices = list(frequency_matrices)
        self.combine_rule = combine_rule
        self.learn_weights = bool(learn_weights)
        self.grid = grid
        self.channels = int(channels)
        self.seed = int(seed)
        self.activation = activation
        self.inverse_operator = None if inverse_operator is None else np.asarray(inverse_operator, dtype=np.float64)
        self.trained = False

        shapes = {}
        for l, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            shapes[f"W{l}"] = (n, fo, fi)
            shapes[f"b{l}"] = (n, fo)
        shapes["w"] = (n,)
        if _params is not None:
            self.params = _params
        else:
            self.params = ParamVector(shapes)
            self._init_branches(np.random.default_rng(self.seed))
            self.params.view("w")[:] = 1.0 if init_weights is None else init_weights
        self._bind()
        self.frozen_slices = [] if self.learn_weights else [slice(*self.params.offsets["w"])]
        self.means = np.stack([b.mean_mode for b in self.pod_bases])  # (n, p)
        self.Vcat = np.ascontiguousarray(np.hstack([b.modes for b in self.pod_bases]))  # (p, n*r)

    # -- structure

    @property
    def n_subspaces(self) -> int:
        return len(self.pod_bases)

    @property
    def r(self) -> int:
        return self.widths[-1]

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.pod_bases[0].p

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def _bind(self):
        v = self.params.views()
        self.W = [v[f"W{l}"] for l in range(self.n_layers)]
        self.b = [v[f"b{l}"] for l in range(self.n_layers)]
        self.weights = v["w"]
        self.branches = [MLPParams([W[i] for W in self.W], [b[i] for b in self.b], self.activation)
                         for i in range(self.n_subspaces)]

    def _init_branches(self, rng):
        for i in range(self.n_subspaces):
            views = []
            for l in range(self.n_layers):
                views += [self.params.view(f"W{l}")[i], self.params.view(f"b{l}")[i]]
            glorot_init(self.widths, rng, out=views)

    def reinit_branches(self, seed: int) -> None:
        self.seed = int(seed)
        self._init_branches(np.random.default_rng(self.seed))
        self.touch()

    def touch(self):
        for br in self.branches:
            br.touch()

    def copy(self) -> "FFPodModel":
        new = FFPodModel(self.widths, self.pod_bases, self.frequency_matrices, self.combine_rule,
                         self.learn_weights, self.grid, self.channels, self.seed, self.activation,
                         self.inverse_operator, _params=self.params.copy())
        new.kind = self.kind
        new.trained = self.trained
        return new

    def frozen_arrays(self) -> dict:
        out = {}
        for i, b in enumerate(self.pod_bases):
            out[f"pod{i}_modes"] = b.modes
            out[f"pod{i}_mean"] = b.mean_mode
        for i, f in enumerate(self.frequency_matrices):
            if f is not None:
                out[f"freq{i}"] = f.B
        return out

    # -- evaluation

    def _combine_scale(self) -> np.ndarray:
        w2 = self.weights**2
        return w2 / self.n_subspaces if self.combine_rule == "average" else w2

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_width:
            raise ValueError(f"input width {x.shape[1]} != branch input width {self.input_width}")
        return x

    def branch_coefficients(self, x) -> np.ndarray:
        """Per-subspace branch outputs, shape ``(n, B, r)``."""
        return stacked_forward(self.W, self.b, self._check_input(x), self.activation)[0]

    def features(self, x) -> np.ndarray:
        """Concatenated branch coefficients ``(B, n*r)``."""
        c = self.branch_coefficients(x)
        return c.transpose(1, 0, 2).reshape(c.shape[1], -1)

    def forward_cache(self, x):
        x = self._check_input(x)
        coeffs, acts = stacked_forward(self.W, self.b, x, self.activation)
        n, B, r = coeffs.shape
        s = self._combine_scale()
        feats = coeffs.transpose(1, 0, 2).reshape(B, n * r)
        scaled = (coeffs * s[:, None, None]).transpose(1, 0, 2).reshape(B, n * r)
        pred = s @ self.means + scaled @ self.Vcat.T
        if self.inverse_operator is not None:
            pred = pred @ self.inverse_operator
        return pred, feats, (x, coeffs, acts, s)

    def backward(self, cache, dpred, dfeatures=None) -> np.ndarray:
        x, coeffs, acts, s = cache
        n, B, r = coeffs.shape
        G = dpred if self.inverse_operator is None else dpred @ self.inverse_operator
        GV = (G @ self.Vcat).reshape(B, n, r).transpose(1, 0, 2)  # (n, B, r)
        dcoeff = GV * s[:, None, None]
        if dfeatures is not None:
            dcoeff = dcoeff + dfeatures.reshape(B, n, r).transpose(1, 0, 2)
        grad = np.empty_like(self.params.data)  # every view is overwritten below
        gv = self.params.views(grad)
        dW = [gv[f"W{l}"] for l in range(self.n_layers)]
        db = [gv[f"b{l}"] for l in range(self.n_layers)]
        stacked_backward(self.W, acts, x, dcoeff, dW, db, self.activation)
        # d pred / d w_i = 2 w_i c * recon_i, c = 1 or 1/n
        d_s = self.means @ G.sum(axis=0) + np.einsum("nbr,nbr->n", GV, coeffs)
        c = 1.0 / self.n_subspaces if self.combine_rule == "average" else 1.0
        gv["w"][:] = d_s * 2.0 * self.weights * c
        return grad

    def forward(self, x) -> np.ndarray:
        x = self._check_input(x)
        if x.shape[0] <= EVAL_CHUNK:
            return self.forward_cache(x)[0]
        return np.vstack([self.forward_cache(x[i:i + EVAL_CHUNK])[0] for i in range(0, x.shape[0], EVAL_CHUNK)])

    def subspace_reconstructions(self, x) -> np.ndarray:
        """Unweighted ``reconstruct(pod_i, branch_i(u))`` for each subspace, ``(n, B, p)``."""
        coeffs = self.branch_coefficients(x)
        return np.stack([pod_mod.reconstruct(b, c) for b, c in zip(self.pod_bases, coeffs)])


class DeepONetModel:
    """Vanilla DeepONet: ``G(u)(xi) = sum_k b_k(u) t_k(xi) + bias`` per output channel."""

    kind = "deeponet"

    def __init__(self, branch_widths, trunk_widths, grid: Grid, channels: int = 1, seed: int = 0,
                 activation="tanh", _params: ParamVector | None = None):
        self.branch_widths = [int(w) for w in branch_widths]
        self.trunk_widths = [int(w) for w in trunk_widths]
        if self.branch_widths[-1] != self.trunk_widths[-1] * channels:
            raise ValueError("branch output width must equal channels * trunk output width")
        if self.trunk_widths[0] != grid.ndim:
            raise ValueError(f"trunk input width must be the grid dimension {grid.ndim}")
        self.grid = grid
        self.channels = int(channels)
        self.seed = int(seed)
        self.activation = activation
        self.trained = False
        self.coords = grid.coords()
        shapes = {}
        for name, widths in (("branch", self.branch_widths), ("trunk", self.trunk_widths)):
            for l, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
                shapes[f"{name}_W{l}"] = (fo, fi)
                shapes[f"{name}_b{l}"] = (fo,)
        shapes["bias"] = (self.channels,)
        if _params is not None:
            self.params = _params
        else:
            self.params = ParamVector(shapes)
            rng = np.random.default_rng(self.seed)
            for name, widths in (("branch", self.branch_widths), ("trunk", self.trunk_widths)):
                views = []
                for l in range(len(widths) - 1):
                    views += [self.params.view(f"{name}_W{l}"), self.params.view(f"{name}_b{l}")]
                glorot_init(widths, rng, out=views)
        self.frozen_slices = []
        self._bind()

    @property
    def n_basis(self) -> int:
        return self.trunk_widths[-1]

    @property
    def input_width(self) -> int:
        return self.branch_widths[0]

    @property
    def output_width(self) -> int:
        return self.channels * self.grid.size

    def _bind(self):
        v = self.params.views()
        self.branch = MLPParams([v[f"branch_W{l}"] for l in range(len(self.branch_widths) - 1)],
                                [v[f"branch_b{l}"] for l in range(len(self.branch_widths) - 1)], self.activation)
        self.trunk = MLPParams([v[f"trunk_W{l}"] for l in range(len(self.trunk_widths) - 1)],
                               [v[f"trunk_b{l}"] for l in range(len(self.trunk_widths) - 1)], self.activation)
        self.bias = v["bias"]

    def touch(self):
        self.branch.touch()
        self.trunk.touch()

    def copy(self) -> "DeepONetModel":
        new = DeepONetModel(self.branch_widths, self.trunk_widths, self.grid, self.channels, self.seed,
                            self.activation, _params=self.params.copy())
        new.trained = self.trained
        return new

    def frozen_arrays(self) -> dict:
        return {}

    def reinit_branches(self, seed: int) -> None:
        rng = np.random.default_rng(int(seed))
        views = []
        for l in range(len(self.branch_widths) - 1):
            views += [self.branch.weights[l], self.branch.biases[l]]
        glorot_init(self.branch_widths, rng, out=views)
        self.touch()

    def features(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return mlp_forward(self.branch, x[None, :] if x.ndim == 1 else x)[0]

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_width:
            raise ValueError(f"input width {x.shape[1]} != branch input width {self.input_width}")
        bout, bcache = mlp_forward(self.branch, x)
        tout, tcache = mlp_forward(self.trunk, self.coords)
        B, K, c = x.shape[0], self.n_basis, self.channels
        bk = bout.reshape(B, c, K)
        pred = np.einsum("bck,pk->bcp", bk, tout) + self.bias[None, :, None]
        return pred.reshape(B, -1), bout, (bk, tout, bcache, tcache)

    def backward(self, cache, dpred, dfeatures=None) -> np.ndarray:
        bk, tout, bcache, tcache = cache
        B, c, K = bk.shape
        G = dpred.reshape(B, c, -1)
        dbk = np.einsum("bcp,pk->bck", G, tout).reshape(B, c * K)
        if dfeatures is not None:
            dbk = dbk + dfeatures
        dT = np.einsum("bcp,bck->pk", G, bk)
        grad = np.empty_like(self.params.data)
        gv = self.params.views(grad)
        for name, mlp, cch, up in (("branch", self.branch, bcache, dbk), ("trunk", self.trunk, tcache, dT)):
            dWs, dbs, _ = mlp_gradients(mlp, cch, up)
            for l, (dW, db) in enumerate(zip(dWs, dbs)):
                gv[f"{name}_W{l}"][...] = dW
                gv[f"{name}_b{l}"][...] = db
        gv["bias"][:] = G.sum(axis=(0, 2))
        return grad

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        return np.vstack([self.forward_cache(x[i:i + EVAL_CHUNK])[0] for i in range(0, max(x.shape[0], 1), EVAL_CHUNK)])


# ---------------------------------------------------------------- builders


def _snapshot_matrix(outputs) -> np.ndarray:
    # datasets store samples as rows; POD wants them as columns
    return np.ascontiguousarray(np.asarray(outputs, dtype=np.float64).T)


def build_ff_pod_deeponet(snapshots, grid: Grid, n_subspaces: int = 20, r: int = 80, m_per_subspace: int | None = None,
                          branch_hidden: Sequence[int] = (128, 128), input_width: int | None = None,
                          scale_schedule=None, seed: int = 0, combine_rule: str = "sum", channels: int = 1,
                          apply_inverse: bool = False, activation="tanh") -> FFPodModel:
    """Build FF-POD-DeepONet from output snapshots given as rows ``(N, p)``.

    ``m_per_subspace`` defaults to ``r`` so that each subspace (rank up to
    ``2m``) can hold ``r`` modes. If a subspace ends up with rank below
    ``r`` (collided frequencies on a coarse grid), every subspace keeps the
    smallest available count.
    """
    Y = _snapshot_matrix(snapshots)
    m = r if m_per_subspace is None else m_per_subspace
    coords = grid.coords()
    subspaces = build_subspaces(Y, coords, n_subspaces, m, scale_schedule or geometric_scales(n_subspaces), seed,
                                channels)
    r_eff = min([r, Y.shape[1]] + [s.rank for s in subspaces])
    bases = []
    for s in subspaces:
        Q = s.projector_basis
        bases.append(pod_mod.lift(pod_mod.compute_pod(Q.T @ Y, r_eff), Q))
    widths = [input_width or Y.shape[0]] + list(branch_hidden) + [r_eff]
    inverse = None
    if apply_inverse:
        S = sum(s.projector_basis @ s.projector_basis.T for s in subspaces)
        inverse = np.linalg.inv(S)
    return FFPodModel(widths, bases, [s.frequencies for s in subspaces], combine_rule, True, grid, channels,
                      seed, activation, inverse)


def build_pod_deeponet(snapshots, grid: Grid, r: int = 80, branch_hidden: Sequence[int] = (128, 128),
                       input_width: int | None = None, seed: int = 0, channels: int = 1,
                       activation="tanh") -> FFPodModel:
    """Global POD + one branch net: the single-subspace, ``w = 1`` fusion model."""
    Y = _snapshot_matrix(snapshots)
    r_eff = min(r, Y.shape[1], Y.shape[0])
    basis = pod_mod.compute_pod(Y, r_eff)
    widths = [input_width or Y.shape[0]] + list(branch_hidden) + [r_eff]
    model = FFPodModel(widths, [basis], None, "sum", False, grid, channels, seed, activation)
    model.kind = "pod-deeponet"
    return model


def build_ff_with_projectors(snapshots, projector_bases, grid: Grid | None = None, r: int = 3,
                             branch_hidden: Sequence[int] = (128, 128), input_width: int | None = None,
                             seed: int = 0, combine_rule: str = "sum", channels: int = 1,
                             learn_weights: bool = True, activation="tanh") -> FFPodModel:
    """Fusion model from explicit orthonormal projector bases (no Fourier sampling)."""
    Y = _snapshot_matrix(snapshots)
    bases = [pod_mod.lift(pod_mod.compute_pod(np.asarray(Q).T @ Y, r), Q) for Q in projector_bases]
    widths = [input_width or Y.shape[0]] + list(branch_hidden) + [r]
    return FFPodModel(widths, bases, None, combine_rule, learn_weights, grid, channels, seed, activation)


def energy_weights(bases, snapshots) -> np.ndarray:
    """Fusion weights with ``w_i^2`` proportional to the snapshot energy each basis captures.

    The energy of basis ``i`` is the squared Frobenius norm of its rank-``r``
    reconstruction ``mean_i + V_i c`` of the snapshot rows. The weights
    satisfy ``sum w_i^2 = 1``, so the initial prediction is a convex
    combination of the subspace reconstructions.
    """
    Y = _snapshot_matrix(snapshots)
    e = []
    for b in bases:
        C = b.modes.T @ (Y - b.mean_mode[:, None])
        e.append(Y.shape[1] * float(b.mean_mode @ b.mean_mode) + 2.0 * float((b.mean_mode @ b.modes) @ C.sum(axis=1))
                 + float(np.sum(C**2)))
    e = np.array(e)
    if not e.sum() > 0:
        return np.full(len(bases), 1.0 / np.sqrt(len(bases)))
    return np.sqrt(e / e.sum())


def build_deeponet(branch_widths, trunk_widths, n_basis: int | None = None, grid: Grid | None = None,
                   channels: int = 1, seed: int = 0, activation="tanh") -> DeepONetModel:
    """Standard DeepONet; ``n_basis`` overrides the last width of both nets."""
    bw, tw = list(branch_widths), list(trunk_widths)
    if n_basis is not None:
        bw[-1] = n_basis * channels
        tw[-1] = n_basis
    if grid is None:
        raise ValueError("DeepONet needs the output grid for its trunk")
    return DeepONetModel(bw, tw, grid, channels, seed, activation)


# ---------------------------------------------------------------- losses


def regression_loss(pred, target) -> float:
    """Mean over samples of the grid-averaged squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def _sqdist(A, B):
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def gaussian_gram(A, B, bandwidth: float) -> np.ndarray:
    return np.exp(-_sqdist(A, B) / (2.0 * bandwidth**2))


def median_bandwidth(features) -> float:
    F = np.asarray(features, dtype=np.float64)
    d2 = _sqdist(F, F)[np.triu_indices(F.shape[0], k=1)]
    med = float(np.sqrt(np.median(d2))) if d2.size else 0.0
    return med if med > 0 else 1.0


def _ceod_check(source, target, bandwidth):
    S = np.atleast_2d(np.asarray(source, dtype=np.float64))
    T = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if S.shape[0] == 0 or T.shape[0] == 0:
        raise ValueError("CEOD needs nonempty batches")
    if S.shape[1] != T.shape[1]:
        raise ValueError(f"feature widths differ: {S.shape[1]} vs {T.shape[1]}")
    return S, T


def ceod_loss(source, target, bandwidth: float) -> float:
    """Squared MMD between two feature batches under a Gaussian kernel."""
    S, T = _ceod_check(source, target, bandwidth)
    val = (gaussian_gram(S, S, bandwidth).mean() + gaussian_gram(T, T, bandwidth).mean()
           - 2.0 * gaussian_gram(S, T, bandwidth).mean())
    return float(max(val, 0.0))


def ceod_loss_grad(source, target, bandwidth: float):
    """CEOD value and its gradient with respect to the target batch."""
    S, T = _ceod_check(source, target, bandwidth)
    ns, nt = S.shape[0], T.shape[0]
    h2 = bandwidth**2
    Kss, Ktt, Kst = gaussian_gram(S, S, bandwidth), gaussian_gram(T, T, bandwidth), gaussian_gram(S, T, bandwidth)
    val = Kss.mean() + Ktt.mean() - 2.0 * Kst.mean()
    # d k(a, t)/dt = k * (a - t) / h^2
    dtt = (Ktt.T @ T - Ktt.sum(axis=0)[:, None] * T) * (2.0 / (nt * nt * h2))
    dst = (Kst.T @ S - Kst.sum(axis=0)[:, None] * T) * (-2.0 / (ns * nt * h2))
    return float(val), dtt + dst


def regularizer(model) -> float:
    """Squared L2 norm of the trainable parameters."""
    theta = model.params.data
    val = float(np.dot(theta, theta))
    for sl in model.frozen_slices:
        val -= float(np.dot(theta[sl], theta[sl]))
    return val


def loss_and_grad(model, x, y, config: TrainConfig, source_reference=None, bandwidth: float | None = None):
    """Total loss (regression + lambda*||theta||^2 [+ ceod]) and its flat gradient."""
    pred, feats, cache = model.forward_cache(x)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {y.shape}")
    diff = pred - y
    loss = float(np.mean(diff * diff))
    dpred = diff * (2.0 / diff.size)
    dfeat = None
    if source_reference is not None and config.ceod_weight > 0:
        h = bandwidth or config.ceod_bandwidth or median_bandwidth(source_reference)
        c, dT = ceod_loss_grad(source_reference, feats, h)
        loss += config.ceod_weight * c
        dfeat = config.ceod_weight * dT
    grad = model.backward(cache, dpred, dfeat)
    if config.reg_lambda > 0:
        loss += config.reg_lambda * regularizer(model)
        blas.daxpy(model.params.data, grad, a=2.0 * config.reg_lambda)
    for sl in model.frozen_slices:
        grad[sl] = 0.0
    return loss, grad


def total_loss(model, x, y, config: TrainConfig, source_reference=None, bandwidth: float | None = None) -> float:
    pred, feats, _ = model.forward_cache(x)
    loss = regression_loss(pred, y) + config.reg_lambda * regularizer(model)
    if source_reference is not None and config.ceod_weight > 0:
        h = bandwidth or config.ceod_bandwidth or median_bandwidth(source_reference)
        loss += config.ceod_weight * ceod_loss(source_reference, feats, h)
    return float(loss)


# ---------------------------------------------------------------- training


def train(model, dataset, config: TrainConfig, source_reference=None, bandwidth: float | None = None,
          callback=None):
    """Mini-batch Adam on ``dataset.inputs -> dataset.outputs``.

    Returns ``(model, history)`` where ``history[e]`` is the sample-weighted
    mean total loss over epoch ``e``. The model is updated in place.
    """
    X = np.asarray(dataset.inputs, dtype=np.float64)
    Y = np.asarray(dataset.outputs, dtype=np.float64)
    N = X.shape[0]
    if N == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    opt = Adam(len(model.params), config.lr)
    history = []
    for epoch in range(config.epochs):
        perm = rng.permutation(N)
        opt.lr = config.lr_at(epoch)
        acc = 0.0
        for start in range(0, N, config.batch_size):
            idx = np.sort(perm[start:start + config.batch_size])
            loss, grad = loss_and_grad(model, X[idx], Y[idx], config, source_reference, bandwidth)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(f"non-finite loss/gradient at epoch {epoch}, batch starting {start}")
            acc += loss * len(idx)
            opt.step(model.params.data, grad)
            model.touch()
        history.append(acc / N)
        if callback is not None:
            callback(epoch, history[-1])
    if not np.all(np.isfinite(model.params.data)):
        raise TrainingDivergedError("parameters became non-finite")
    model.trained = True
    return model, history


def evaluate(model, dataset) -> float:
    """Regression MSE over the whole dataset, no updates."""
    return regression_loss(model.forward(dataset.inputs), dataset.outputs)


# ---------------------------------------------------------------- querying


def _interp_weights(x: float, n: int, periodic: bool):
    if periodic:
        t = (x % 1.0) * n
        i0 = int(np.floor(t)) % n
        return i0, (i0 + 1) % n, t - np.floor(t)
    t = x * (n - 1)
    i0 = min(int(np.floor(t)), n - 2)
    return i0, i0 + 1, t - i0


def query(model, u, xi):
    """Interpolate the grid prediction for one input at coordinate ``xi`` (linear/bilinear)."""
    grid = model.grid
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if xi.shape != (grid.ndim,):
        raise ValueError(f"query point must have {grid.ndim} coordinates")
    upper_ok = (xi < 1.0) if grid.periodic else (xi <= 1.0)
    if np.any(xi < 0.0) or not np.all(upper_ok):
        raise ValueError(f"query point {xi} outside the unit domain")
    pred = model.forward(np.asarray(u)[None, :])[0]
    field = pred.reshape((model.channels,) + grid.shape)
    if grid.ndim == 1:
        i0, i1, t = _interp_weights(xi[0], grid.shape[0], grid.periodic)
        vals = (1 - t) * field[:, i0] + t * field[:, i1]
    else:
        i0, i1, tx = _interp_weights(xi[0], grid.shape[0], grid.periodic)
        j0, j1, ty = _interp_weights(xi[1], grid.shape[1], grid.periodic)
        vals = ((1 - tx) * (1 - ty) * field[:, i0, j0] + tx * (1 - ty) * field[:, i1, j0]
                + (1 - tx) * ty * field[:, i0, j1] + tx * ty * field[:, i1, j1])
    return float(vals[0]) if model.channels == 1 else vals


# ---------------------------------------------------------------- checkpoints


def _write_blob(path: Path, arr) -> None:
    np.ascontiguousarray(arr, dtype="<f8").tofile(path)


def _read_blob(path: Path, shape) -> np.ndarray:
    arr = np.fromfile(path, dtype="<f8")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise ValueError(f"{path.name}: expected {expected} values, found {arr.size}")
    return arr.reshape(shape).astype(np.float64)


def checkpoint_tensors(model) -> dict:
    """Name -> array map using the on-disk tensor names."""
    t = {}
    if isinstance(model, FFPodModel):
        for i, br in enumerate(model.branches):
            for j, (W, b) in enumerate(zip(br.weights, br.biases)):
                t[f"branch{i}_layer{j}_W"] = W
                t[f"branch{i}_layer{j}_b"] = b
        for i, basis in enumerate(model.pod_bases):
            t[f"pod{i}_modes"] = basis.modes
            t[f"pod{i}_mean"] = basis.mean_mode
            t[f"pod{i}_singular_values"] = basis.singular_values
        for i, f in enumerate(model.frequency_matrices):
            if f is not None:
                t[f"freq{i}"] = f.B
        t["weights"] = model.weights
        if model.inverse_operator is not None:
            t["inverse_operator"] = model.inverse_operator
    else:
        for j, (W, b) in enumerate(zip(model.branch.weights, model.branch.biases)):
            t[f"branch0_layer{j}_W"] = W
            t[f"branch0_layer{j}_b"] = b
        for j, (W, b) in enumerate(zip(model.trunk.weights, model.trunk.biases)):
            t[f"trunk_layer{j}_W"] = W
            t[f"trunk_layer{j}_b"] = b
        t["bias"] = model.bias
    return t


def save_checkpoint(model, path, hyperparameters: dict | None = None, extra: dict | None = None) -> Path:
    """Write ``manifest.json`` plus one little-endian float64 blob per tensor (atomic rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = checkpoint_tensors(model)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "seed": model.seed,
        "activation": model.activation,
        "channels": model.channels,
        "grid": model.grid.to_dict() if model.grid is not None else None,
        "trained": model.trained,
        "hyperparameters": hyperparameters or {},
        "tensors": {k: list(np.shape(v)) for k, v in tensors.items()},
    }
    if isinstance(model, FFPodModel):
        manifest.update({
            "n_subspaces": model.n_subspaces,
            "widths": model.widths,
            "modes_per_subspace": model.r,
            "combine_rule": model.combine_rule,
            "learn_weights": model.learn_weights,
            "frequencies": [None if f is None else {"scale": f.scale, "seed": f.seed}
                            for f in model.frequency_matrices],
        })
    else:
        manifest.update({"branch_widths": model.branch_widths, "trunk_widths": model.trunk_widths})
    if extra:
        manifest["extra"] = extra
    tmp = Path(tempfile.mkdtemp(prefix=path.name + ".", dir=path.parent))
    for name, arr in tensors.items():
        _write_blob(tmp / f"{name}.f64", arr)
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, manifest)``."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    shapes = manifest["tensors"]
    t = {name: _read_blob(path / f"{name}.f64", shape) for name, shape in shapes.items()}
    grid = Grid.from_dict(manifest["grid"]) if manifest["grid"] else None
    if manifest["kind"] == "deeponet":
        model = DeepONetModel(manifest["branch_widths"], manifest["trunk_widths"], grid, manifest["channels"],
                              manifest["seed"], manifest["activation"])
        for j in range(len(model.branch.weights)):
            model.branch.weights[j][...] = t[f"branch0_layer{j}_W"]
            model.branch.biases[j][...] = t[f"branch0_layer{j}_b"]
        for j in range(len(model.trunk.weights)):
            model.trunk.weights[j][...] = t[f"trunk_layer{j}_W"]
            model.trunk.biases[j][...] = t[f"trunk_layer{j}_b"]
        model.bias[...] = t["bias"]
    else:
        n = manifest["n_subspaces"]
        bases = [pod_mod.PODBasis(t[f"pod{i}_mean"], t[f"pod{i}_modes"], t[f"pod{i}_singular_values"])
                 for i in range(n)]
        freqs = []
        for i, meta in enumerate(manifest["frequencies"]):
            freqs.append(None if meta is None else FrequencyMatrix(t[f"freq{i}"], meta["scale"], meta["seed"]))
        model = FFPodModel(manifest["widths"], bases, freqs, manifest["combine_rule"], manifest["learn_weights"],
                           grid, manifest["channels"], manifest["seed"], manifest["activation"],
                           t.get("inverse_operator"))
        model.kind = manifest["kind"]
        for i, br in enumerate(model.branches):
            for j in range(len(br.weights)):
                br.weights[j][...] = t[f"branch{i}_layer{j}_W"]
                br.biases[j][...] = t[f"branch{i}_layer{j}_b"]
        model.weights[...] = t["weights"]
    model.trained = bool(manifest.get("trained", False))
    model.touch()
    return model, manifest
