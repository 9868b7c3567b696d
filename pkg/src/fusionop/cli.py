"""``fusionop`` command line: generate, train, transfer, report, encode-demo.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import MODEL_LABELS, MODELS, ExperimentConfig, build_model
from .fourier_features import export_encoding_demo, sample_frequencies
from .frames import NotAFrameError
from .model import TrainingDivergedError, evaluate, load_checkpoint, save_checkpoint, train
from .normalization import Standardizer
from .pde_data.burgers import CFLError
from .pde_data.darcy import SolverError
from .pde_data.datasets import SCENARIOS, DatasetFormatError, load_dataset, make_dataset, save_dataset
from .pde_data.grid import GridFunction
from .transfer import transfer_experiment

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
NUMERICAL_ERRORS = (TrainingDivergedError, SolverError, CFLError, NotAFrameError, np.linalg.LinAlgError,
                    FloatingPointError)
USAGE_ERRORS = (ValueError, KeyError, IndexError, FileNotFoundError, DatasetFormatError)

log = logging.getLogger("fusionop")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- config plumbing


def load_config(args) -> ExperimentConfig:
    """Config file (if any) overlaid with command-line flags."""
    base = ExperimentConfig.from_file(args.config).to_dict() if getattr(args, "config", None) else {}
    for key in ("scenario", "model", "seed", "strategy"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if getattr(args, "seed", None) is not None and "seeds" not in base:
        base["seeds"] = [args.seed]
    if getattr(args, "seeds", None):
        base["seeds"] = args.seeds
    if getattr(args, "data", None):
        base["data_dir"] = args.data
    if getattr(args, "out", None):
        base["out_dir"] = args.out
    if getattr(args, "epochs", None) is not None:
        base["epochs"] = args.epochs
    if getattr(args, "transfer_epochs", None) is not None:
        base["transfer_epochs"] = args.transfer_epochs
    if getattr(args, "sample_sizes", None):
        base["sample_sizes"] = args.sample_sizes
    return ExperimentConfig.from_dict(base).resolved()


def _require_out(config: ExperimentConfig) -> Path:
    if not config.out_dir:
        raise UsageError("--out is required")
    return Path(config.out_dir)


def load_or_make(config: ExperimentConfig, role: str):
    spec = config.specs()[0 if role == "source" else 1]
    if config.data_dir:
        ds = load_dataset(Path(config.data_dir) / role)
        if ds.spec != spec:
            raise ValueError(f"{role} dataset in {config.data_dir} was generated with a different spec")
        return ds
    log.info("generating %s data (%d samples)", role, spec.n_samples)
    return make_dataset(spec)


def _tag(config: ExperimentConfig, seed: int | None = None, strategy: str | None = None) -> str:
    parts = [config.scenario, config.model]
    if strategy:
        parts.append(strategy)
    parts.append(f"seed{config.seed if seed is None else seed}")
    return "_".join(parts)


def metrics_record(config: ExperimentConfig, seed: int, source_mse=None, rows=(), strategy=None) -> dict:
    rec = {"schema_version": SCHEMA_VERSION, "scenario": config.scenario, "model": config.model,
           "seed": int(seed), "config_hash": config.config_hash(),
           "rows": [{"sample_size": int(r["sample_size"]), "mse": float(r["mse"])} for r in rows]}
    if source_mse is not None:
        rec["source_mse"] = float(source_mse)
    if strategy is not None:
        rec["strategy"] = strategy
    return rec


# ---------------------------------------------------------------- commands


def cmd_generate(config: ExperimentConfig) -> int:
    out = _require_out(config)
    for role, spec in zip(("source", "target"), config.specs()):
        ds = make_dataset(spec)
        save_dataset(ds, out / role)
        print(f"{role}: {spec.equation} n={len(ds)} res={spec.resolution} seed={spec.seed} -> {out / role}")
    return EXIT_OK


def train_source(config: ExperimentConfig):
    """Train ``config.model`` on the source training split; returns ``(model, scaler, source_mse)``."""
    src_train, src_test = load_or_make(config, "source").split(config.n_test)
    scaler = Standardizer.fit(src_train) if config.normalize else Standardizer.identity()
    src_train, src_test = scaler.apply(src_train), scaler.apply(src_test)
    model = build_model(config, src_train)
    log.info("training %s on %d source samples", config.model, len(src_train))
    model, _ = train(model, src_train, config.train_config())
    return model, scaler, evaluate(model, src_test)


def cmd_train(config: ExperimentConfig) -> int:
    out = _require_out(config)
    model, scaler, mse = train_source(config)
    tag = _tag(config)
    save_checkpoint(model, out / f"checkpoint_{tag}", hyperparameters=config.to_dict(),
                    extra={"normalization": scaler.to_dict(), "config_hash": config.config_hash()})
    atomic_write_text(out / f"metrics_{tag}.json", dump_json(metrics_record(config, config.seed, mse)))
    print(f"{tag}: source MSE {mse:.6e}")
    return EXIT_OK


def cmd_transfer(config: ExperimentConfig, checkpoint=None) -> int:
    out = _require_out(config)
    src_train, _ = load_or_make(config, "source").split(config.n_test)
    if checkpoint:
        model, manifest = load_checkpoint(checkpoint)
        norm = manifest.get("extra", {}).get("normalization")
        scaler = Standardizer.from_dict(norm) if norm else Standardizer.identity()
        source_mse = None
    else:
        model, scaler, source_mse = train_source(config)
    target = scaler.apply(load_or_make(config, "target"))
    strategy = config.strategy
    cfg = config.train_config(transfer=True, scratch=strategy == "scratch")

    def builder(subset, seed):
        return build_model(replace(config, seed=seed), subset, seed)

    table = transfer_experiment(scaler.apply(src_train), target, config.sample_sizes, cfg, config.seeds, strategy,
                                source_model=model if strategy == "fine-tune" else None,
                                build=builder, n_test=config.n_test, reinit_branches=config.reinit_branches,
                                scenario=config.scenario,
                                progress=lambda n, s, m: log.info("N=%d seed=%d mse=%.4e", n, s, m))
    table.model = config.model
    stem = f"transfer_{config.scenario}_{config.model}_{strategy}"
    atomic_write_text(out / f"{stem}.txt", table.to_text())
    atomic_write_text(out / f"{stem}.json", table.to_json() + "\n")
    for seed in config.seeds:
        rows = [r for r in table.rows if r["seed"] == seed]
        rec = metrics_record(config, seed, source_mse, rows, strategy)
        atomic_write_text(out / f"metrics_{_tag(config, seed, strategy)}.json", dump_json(rec))
    print(table.to_text(), end="")
    return EXIT_OK


def _column(model: str, strategy: str | None) -> str:
    label = MODEL_LABELS[model]
    return label if strategy in (None, "fine-tune") else f"{label} ({strategy})"


def collect_metrics(paths) -> dict:
    """``{(scenario, column, row, seed): mse}``; identical duplicates collapse, conflicting ones raise."""
    cells = {}
    for p in paths:
        rec = json.loads(Path(p).read_text())
        if rec.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{p}: unsupported metrics schema {rec.get('schema_version')!r}")
        if rec["model"] not in MODELS:
            raise ValueError(f"{p}: unknown model {rec['model']!r}")
        col = _column(rec["model"], rec.get("strategy"))
        entries = [("source", rec["source_mse"])] if "source_mse" in rec else []
        entries += [(int(r["sample_size"]), r["mse"]) for r in rec["rows"]]
        for row, mse in entries:
            key = (rec["scenario"], col, row, int(rec["seed"]))
            if key in cells and cells[key] != mse:
                raise ValueError(f"conflicting duplicate metrics for {key}: {cells[key]} vs {mse}")
            cells[key] = mse
    return cells


def render_report(cells: dict) -> str:
    """One table per scenario, sample sizes as rows, methods as columns, row minimum in bold."""
    order = [MODEL_LABELS[m] for m in ("pod-deeponet", "deeponet", "ff-pod-deeponet")]
    by_scen = defaultdict(lambda: defaultdict(list))
    for (scen, col, row, _seed), mse in sorted(cells.items(), key=lambda kv: str(kv[0])):
        by_scen[scen][(col, row)].append(mse)
    blocks = []
    for scen in sorted(by_scen):
        data = by_scen[scen]
        cols = sorted({c for c, _ in data}, key=lambda c: (next((i for i, o in enumerate(order) if c.startswith(o)
                                                                 and (c == o or c[len(o)] == " ")), 99), c))
        rows = sorted({r for _, r in data}, key=lambda r: (r != "source", r if r != "source" else 0))
        lines = [f"## {scen}", "", "| N | " + " | ".join(cols) + " |", "|---" * (len(cols) + 1) + "|"]
        for row in rows:
            vals = {c: float(np.mean(data[(c, row)])) for c in cols if (c, row) in data}
            best = min(vals.values()) if vals else None
            cells_txt = []
            for c in cols:
                if c not in vals:
                    cells_txt.append("-")
                else:
                    txt = f"{vals[c]:.4e}"
                    cells_txt.append(f"**{txt}**" if vals[c] == best else txt)
            lines.append(f"| {row} | " + " | ".join(cells_txt) + " |")
        blocks.append("\n".join(lines))
    note = "Values are means over seeds. FNO column omitted: not implemented in this package."
    return "\n\n".join(blocks + [note]) + "\n"


def cmd_report(paths, out=None) -> int:
    if not paths:
        raise UsageError("report needs at least one metrics file")
    text = render_report(collect_metrics(paths))
    if out:
        atomic_write_text(Path(out) / "report.md", text)
    print(text, end="")
    return EXIT_OK


def cmd_encode_demo(data, index: int, m: int, scale: float, seed: int, out) -> int:
    if not out:
        raise UsageError("--out is required")
    ds = load_dataset(data)
    gf = ds.input_function(index)
    field = GridFunction(gf.values[0], ds.grid) if gf.channels > 1 else gf
    freqs = sample_frequencies(ds.grid.ndim, m, scale, seed)
    paths = export_encoding_demo(freqs, field, out)
    print(f"wrote {len(paths)} images to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def _common(p, model=True):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--scenario", choices=SCENARIOS)
    if model:
        p.add_argument("--model", choices=MODELS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="directory holding source/ and target/ datasets")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusionop", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    _common(sub.add_parser("generate", help="write source and target datasets"), model=False)
    p = sub.add_parser("train", help="train on the source split and write checkpoint + metrics")
    _common(p)
    p.add_argument("--epochs", type=int)
    p = sub.add_parser("transfer", help="target-domain sample-size sweep")
    _common(p)
    p.add_argument("--checkpoint", help="trained source checkpoint (trains one if omitted)")
    p.add_argument("--strategy", choices=("fine-tune", "scratch"))
    p.add_argument("--seeds", type=int, nargs="*")
    p.add_argument("--sample-sizes", type=int, nargs="+", dest="sample_sizes")
    p.add_argument("--epochs", type=int)
    p.add_argument("--transfer-epochs", type=int, dest="transfer_epochs")
    p = sub.add_parser("report", help="merge metrics JSON files into comparison tables")
    p.add_argument("metrics", nargs="*")
    p.add_argument("--out")
    p = sub.add_parser("encode-demo", help="export Fourier-feature channel images for one input sample")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args.metrics, args.out)
    if args.command == "encode-demo":
        return cmd_encode_demo(args.data, args.index, args.m, args.scale, args.seed, args.out)
    if getattr(args, "seeds", None) is not None and len(args.seeds) == 0:
        raise UsageError("--seeds needs at least one seed")
    config = load_config(args)
    if args.command == "generate":
        return cmd_generate(config)
    if args.command == "train":
        return cmd_train(config)
    return cmd_transfer(config, args.checkpoint)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(argv)
    except UsageError as exc:
        print(f"fusionop: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"fusionop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except USAGE_ERRORS as exc:
        print(f"fusionop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
