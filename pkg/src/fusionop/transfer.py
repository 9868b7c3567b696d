"""Source-to-target transfer: freeze the spectral/POD structure, relearn branches and weights."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .model import TrainConfig, evaluate, median_bandwidth, train
from .pde_data.datasets import PairedDataset

N_REFERENCE = 256
N_TEST = 200
STRATEGIES = ("fine-tune", "scratch")


class UntrainedModelError(ValueError):
    pass


class FrozenTensorError(RuntimeError):
    pass


def frozen_digest(model) -> str:
    """SHA-256 over the frozen tensors in name order."""
    h = hashlib.sha256()
    for name, arr in sorted(model.frozen_arrays().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class TransferPlan:
    """What stays fixed and what is relearned when moving to the target domain.

    ``source_reference_batch`` holds concatenated branch coefficients of up to
    256 source samples under the source model; the CEOD term pulls target
    features towards this cloud.
    """

    frozen: dict
    digest: str
    reinit_branches: bool
    source_reference_batch: np.ndarray | None
    bandwidth: float | None
    seed: int
    trainable: tuple = ("branches", "weights")


def prepare_transfer(source_model, reinit_branches: bool = False, source_inputs=None, seed: int = 0,
                     n_reference: int = N_REFERENCE):
    """Deep-copy ``source_model`` for fine-tuning; returns ``(plan, target_model)``.

    Fusion weights are always warm-started. Branch nets keep their source
    values unless ``reinit_branches``, in which case they are drawn exactly as
    a fresh build with ``seed`` would draw them.
    """
    if source_model is None or not getattr(source_model, "trained", False):
        raise UntrainedModelError("transfer needs a trained source model")
    if len(source_model.params) == 0:
        raise UntrainedModelError("source model has no parameters")
    model = source_model.copy()
    if reinit_branches:
        model.reinit_branches(seed)
    ref, bw = None, None
    if source_inputs is not None and len(source_inputs):
        ref = source_model.features(np.asarray(source_inputs)[:n_reference])
        bw = median_bandwidth(ref)
    frozen = {k: np.array(v, copy=True) for k, v in model.frozen_arrays().items()}
    plan = TransferPlan(frozen, frozen_digest(model), bool(reinit_branches), ref, bw, int(seed))
    return plan, model


def fine_tune(plan: TransferPlan, model, target_dataset: PairedDataset, config: TrainConfig, callback=None):
    """Train the trainable tensors on the target data under the hybrid loss.

    Frozen tensors are checked against the plan digest before and after.
    """
    if len(target_dataset) == 0:
        raise ValueError("target dataset is empty")
    if frozen_digest(model) != plan.digest:
        raise FrozenTensorError("model does not match the plan's frozen tensors")
    if config.epochs == 0:
        return model, []
    model, history = train(model, target_dataset, config, plan.source_reference_batch, plan.bandwidth, callback)
    if frozen_digest(model) != plan.digest:
        raise FrozenTensorError("frozen tensors changed during fine-tuning")
    return model, history


# ---------------------------------------------------------------- experiments


@dataclass
class TransferTable:
    scenario: str
    model: str
    strategy: str
    rows: list = field(default_factory=list)  # dicts: sample_size, seed, mse

    def sample_sizes(self) -> list[int]:
        return sorted({r["sample_size"] for r in self.rows})

    def mses(self, n: int) -> np.ndarray:
        return np.array([r["mse"] for r in self.rows if r["sample_size"] == n])

    def summary(self) -> list[dict]:
        out = []
        for n in self.sample_sizes():
            v = self.mses(n)
            out.append({"sample_size": n, "mean": float(v.mean()), "std": float(v.std()),
                        "median": float(np.median(v)), "n_seeds": int(v.size)})
        return out

    def to_text(self) -> str:
        lines = [f"# {self.scenario} | {self.model} | {self.strategy}",
                 f"{'N':>6}  {'mean MSE':>12}  {'std':>10}  {'median':>12}  seeds"]
        for s in self.summary():
            lines.append(f"{s['sample_size']:>6}  {s['mean']:>12.5e}  {s['std']:>10.3e}  {s['median']:>12.5e}  {s['n_seeds']}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = [{"scenario": self.scenario, "model": self.model, "strategy": self.strategy,
                 "sample_size": int(r["sample_size"]), "seed": int(r["seed"]), "mse": float(r["mse"])}
                for r in self.rows]
        return json.dumps(rows, indent=2, sort_keys=True)


def subsample(dataset: PairedDataset, n: int, seed: int) -> PairedDataset:
    """``n`` pairs drawn without replacement, kept in original order."""
    if n > len(dataset):
        raise ValueError(f"sample size {n} exceeds the {len(dataset)} available target training samples")
    if n < 1:
        raise ValueError("sample size must be positive")
    idx = np.sort(np.random.default_rng(seed).choice(len(dataset), size=n, replace=False))
    return dataset.subset(idx)


def transfer_experiment(source_dataset: PairedDataset | None, target_dataset: PairedDataset, sample_sizes,
                        config: TrainConfig, seeds, strategy: str = "fine-tune", source_model=None,
                        build: Callable | None = None, n_test: int = N_TEST, reinit_branches: bool = False,
                        scenario: str = "", progress: Callable | None = None) -> TransferTable:
    """Target MSE for each ``(sample_size, seed)`` cell.

    The last ``n_test`` target samples are a fixed test split. Each cell draws
    its training subset with the cell seed, then either fine-tunes a copy of
    ``source_model`` (``strategy="fine-tune"``) or trains ``build(subset,
    seed)`` from scratch (``strategy="scratch"``). Both use ``config`` with
    its seed replaced by the cell seed.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    train_split, test_split = target_dataset.split(n_test)
    sizes = [int(n) for n in sample_sizes]
    for n in sizes:
        if n > len(train_split) or n < 1:
            raise ValueError(f"sample size {n} not in [1, {len(train_split)}] (target training split)")
    if strategy == "fine-tune" and source_model is None:
        raise UntrainedModelError("fine-tune strategy needs a trained source model")
    if strategy == "scratch" and build is None:
        raise ValueError("scratch strategy needs a model builder")
    src_inputs = None if source_dataset is None else source_dataset.inputs
    kind = getattr(source_model, "kind", None) if strategy == "fine-tune" else None
    table = TransferTable(scenario, kind or "", strategy)
    for n in sizes:
        for seed in seeds:
            sub = subsample(train_split, n, seed)
            cfg = replace(config, seed=int(seed))
            if strategy == "fine-tune":
                plan, model = prepare_transfer(source_model, reinit_branches, src_inputs, seed)
                model, _ = fine_tune(plan, model, sub, cfg)
            else:
                model = build(sub, int(seed))
                model, _ = train(model, sub, cfg)
                table.model = table.model or model.kind
            mse = evaluate(model, test_split)
            table.rows.append({"sample_size": n, "seed": int(seed), "mse": mse})
            if progress is not None:
                progress(n, seed, mse)
    return table
