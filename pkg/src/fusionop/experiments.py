"""Multi-seed experiment drivers behind the benchmark scripts and the acceptance suite.

Both drivers keep the data fixed (generated from ``config.seed``) and vary
only the model seed: initialization, minibatch order and target subsampling.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExperimentConfig, build_model
from .model import evaluate, train
from .normalization import Standardizer
from .pde_data.datasets import make_dataset
from .transfer import TransferTable, transfer_experiment

log = logging.getLogger(__name__)


@dataclass
class SourceComparison:
    """Source-test MSE per model and seed, plus the trained models and data."""

    mses: dict = field(default_factory=dict)  # model -> [mse per seed]
    seconds: dict = field(default_factory=dict)  # model -> total training seconds
    models: dict = field(default_factory=dict)  # (model, seed) -> trained model
    scaler: Standardizer | None = None
    source_train: object = None

    def median(self, model: str) -> float:
        return float(np.median(self.mses[model]))


def prepare_source(config: ExperimentConfig):
    """``(scaler, source_train, source_test)`` in normalized units."""
    src_spec, _ = config.specs()
    tr, te = make_dataset(src_spec).split(config.n_test)
    scaler = Standardizer.fit(tr) if config.normalize else Standardizer.identity()
    return scaler, scaler.apply(tr), scaler.apply(te)


def source_comparison(config: ExperimentConfig, models, seeds, keep_models: bool = False) -> SourceComparison:
    """Train every model in ``models`` once per seed on the same source split.

    Pass an unresolved config: an ``lr`` already set on ``config`` applies to
    every model instead of each model's default rate.
    """
    scaler, tr, te = prepare_source(config)
    out = SourceComparison(scaler=scaler, source_train=tr)
    for name in models:
        cfg = replace(config, model=name).resolved()
        out.mses[name], out.seconds[name] = [], 0.0
        for seed in seeds:
            t0 = time.perf_counter()
            model = build_model(cfg, tr, seed)
            train(model, tr, cfg.train_config(seed=seed))
            out.seconds[name] += time.perf_counter() - t0
            mse = evaluate(model, te)
            out.mses[name].append(mse)
            log.info("%s seed %d: source MSE %.4e", name, seed, mse)
            if keep_models:
                out.models[(name, seed)] = model
    return out


def transfer_comparison(config: ExperimentConfig, source_model, scaler: Standardizer, source_train,
                        seeds, scratch_sizes=None) -> tuple[TransferTable, TransferTable | None]:
    """Fine-tune ``source_model`` over ``config.sample_sizes`` and, optionally, train from scratch.

    Returns ``(fine_tune_table, scratch_table)``; the scratch table covers
    ``scratch_sizes`` only (``None`` skips it).
    """
    cfg = config.resolved()
    _, tgt_spec = cfg.specs()
    target = scaler.apply(make_dataset(tgt_spec))
    tcfg = cfg.train_config(transfer=True)
    progress = lambda n, s, m: log.info("N=%d seed=%d mse=%.4e", n, s, m)
    ft = transfer_experiment(source_train, target, cfg.sample_sizes, tcfg, seeds, "fine-tune",
                             source_model=source_model, n_test=cfg.n_test, reinit_branches=cfg.reinit_branches,
                             scenario=cfg.scenario, progress=progress)
    scratch = None
    if scratch_sizes:
        scfg = cfg.train_config(transfer=True, scratch=True)
        scratch = transfer_experiment(None, target, scratch_sizes, scfg, seeds, "scratch",
                                      build=lambda sub, s: build_model(cfg, sub, s), n_test=cfg.n_test,
                                      scenario=cfg.scenario, progress=progress)
    return ft, scratch
