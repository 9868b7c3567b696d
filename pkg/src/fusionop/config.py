"""Experiment configuration: JSON schema with per-scenario defaults and a stable hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import TrainConfig, build_deeponet, energy_weights, build_ff_pod_deeponet, build_pod_deeponet
from .pde_data.datasets import SCENARIOS, PairedDataset, scenario_specs

MODELS = ("ff-pod-deeponet", "pod-deeponet", "deeponet")
MODEL_LABELS = {"pod-deeponet": "POD-DeepONet", "deeponet": "DeepONet", "ff-pod-deeponet": "FF POD-DeepONet"}

# keys that only say where things live; excluded from the config hash
PATH_KEYS = ("data_dir", "out_dir")
WEIGHT_INITS = ("energy", "uniform", "one")
DEFAULT_LR = {"ff-pod-deeponet": 3e-4, "pod-deeponet": 1e-3, "deeponet": 1e-3}


@dataclass
class ExperimentConfig:
    """Everything needed to rerun one experiment.

    ``None`` entries are filled from the scenario defaults by
    :meth:`resolved`; JSON files may give any subset of the fields.
    """

    scenario: str = "darcy-dist-shift"
    model: str = "ff-pod-deeponet"
    seed: int = 0
    # data
    resolution: int | None = None
    n_source: int = 1200
    n_target: int = 800
    n_test: int = 200
    burgers_reverse: bool = False
    normalize: bool = True
    # architecture
    n_subspaces: int = 20
    modes_per_subspace: int | None = None
    freqs_per_subspace: int | None = None
    branch_hidden: list = field(default_factory=lambda: [128, 128])
    trunk_hidden: list = field(default_factory=lambda: [128, 128])
    combine_rule: str = "sum"
    apply_inverse: bool = False
    weight_init: str = "energy"  # "energy", "uniform" (1/sqrt(n)) or "one"
    # optimisation
    lr: float | None = None  # None: 3e-4 for ff-pod-deeponet, 1e-3 otherwise
    transfer_lr: float | None = None  # fine-tuning rate; None: lr / 3
    epochs: int = 500
    transfer_epochs: int = 200
    batch_size: int = 32
    reg_lambda: float = 1e-6
    ceod_weight: float = 0.01
    ceod_bandwidth: float | None = None
    lr_schedule: str = "cosine"
    lr_final_fraction: float = 0.01
    # transfer
    sample_sizes: list | None = None
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    strategy: str = "fine-tune"
    reinit_branches: bool = False
    # paths
    data_dir: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.strategy not in ("fine-tune", "scratch"):
            raise ValueError(f"strategy must be 'fine-tune' or 'scratch', got {self.strategy!r}")
        if not self.seeds:
            raise ValueError("seeds must be a nonempty list")
        if self.weight_init not in WEIGHT_INITS:
            raise ValueError(f"weight_init must be one of {WEIGHT_INITS}, got {self.weight_init!r}")
        if self.n_subspaces < 1:
            raise ValueError("n_subspaces must be >= 1")
        self.branch_hidden = [int(w) for w in self.branch_hidden]
        self.trunk_hidden = [int(w) for w in self.trunk_hidden]
        self.seeds = [int(s) for s in self.seeds]

    def resolved(self) -> "ExperimentConfig":
        burgers = self.scenario == "burgers-nu"
        lr = DEFAULT_LR[self.model] if self.lr is None else self.lr
        return replace(
            self,
            resolution=self.resolution or (128 if burgers else 32),
            lr=lr,
            transfer_lr=lr / 3.0 if self.transfer_lr is None else self.transfer_lr,
            modes_per_subspace=self.modes_per_subspace or (30 if burgers else 80),
            sample_sizes=list(self.sample_sizes or ([20, 50, 100] if burgers else [20, 50, 100, 500])),
        )

    def train_config(self, transfer: bool = False, seed: int | None = None, scratch: bool = False) -> TrainConfig:
        """Optimizer settings; ``transfer`` selects the transfer epoch budget and, unless
        ``scratch`` (a fresh model trained on target samples), the fine-tuning rate."""
        c = self.resolved()
        lr = c.transfer_lr if transfer and not scratch else c.lr
        return TrainConfig(lr=lr, epochs=self.transfer_epochs if transfer else self.epochs,
                           batch_size=self.batch_size, reg_lambda=self.reg_lambda, ceod_weight=self.ceod_weight,
                           ceod_bandwidth=self.ceod_bandwidth, seed=self.seed if seed is None else seed,
                           lr_schedule=self.lr_schedule, lr_final_fraction=self.lr_final_fraction)

    def specs(self):
        c = self.resolved()
        return scenario_specs(c.scenario, c.seed, c.resolution, c.n_source, c.n_target, c.burgers_reverse)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        d = self.resolved().to_dict()
        for k in PATH_KEYS:
            d.pop(k, None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def build_model(config: ExperimentConfig, train_set: PairedDataset, seed: int | None = None):
    """Fresh, untrained model of ``config.model`` fitted to ``train_set``'s output snapshots."""
    c = config.resolved()
    seed = c.seed if seed is None else int(seed)
    grid, channels = train_set.grid, train_set.spec.channels
    r = c.modes_per_subspace
    if c.model == "ff-pod-deeponet":
        model = build_ff_pod_deeponet(train_set.outputs, grid, c.n_subspaces, r, c.freqs_per_subspace,
                                      c.branch_hidden, train_set.inputs.shape[1], seed=seed,
                                      combine_rule=c.combine_rule, channels=channels, apply_inverse=c.apply_inverse)
        # "one" keeps the builder's w = 1, which stacks n copies of the mean field under the sum rule
        if c.weight_init == "energy":
            model.weights[:] = energy_weights(model.pod_bases, train_set.outputs)
        elif c.weight_init == "uniform":
            model.weights[:] = 1.0 / np.sqrt(model.n_subspaces)
        return model
    if c.model == "pod-deeponet":
        return build_pod_deeponet(train_set.outputs, grid, r, c.branch_hidden, train_set.inputs.shape[1],
                                  seed=seed, channels=channels)
    return build_deeponet([train_set.inputs.shape[1], *c.branch_hidden, r], [grid.ndim, *c.trunk_hidden, r], r,
                          grid, channels, seed)
