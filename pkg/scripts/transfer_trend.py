"""Target-domain sample-size sweep: fine-tuned source model versus training from scratch.

Trains one source model (seed 0 by default), fine-tunes it on N target
samples for every N and seed, and trains fresh models on the smallest sizes
for comparison. Prints both tables.

    python scripts/transfer_trend.py --scenario darcy-dist-shift --epochs 100 --seeds 0 1 2 3 4
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from fusionop.config import MODELS, ExperimentConfig
from fusionop.experiments import source_comparison, transfer_comparison
from fusionop.pde_data.datasets import SCENARIOS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="darcy-dist-shift", choices=SCENARIOS)
    p.add_argument("--model", default="ff-pod-deeponet", choices=MODELS)
    p.add_argument("--epochs", type=int, default=100, help="source training epochs")
    p.add_argument("--transfer-epochs", type=int, default=200)
    p.add_argument("--source-seed", type=int, default=0)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--sample-sizes", type=int, nargs="+")
    p.add_argument("--scratch-sizes", type=int, nargs="*", default=[20, 50])
    p.add_argument("--json", help="write results here")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = ExperimentConfig(scenario=args.scenario, model=args.model, epochs=args.epochs,
                              transfer_epochs=args.transfer_epochs, sample_sizes=args.sample_sizes).resolved()
    src = source_comparison(config, [args.model], [args.source_seed], keep_models=True)
    print(f"source MSE (seed {args.source_seed}): {src.mses[args.model][0]:.4e}")
    ft, scratch = transfer_comparison(config, src.models[(args.model, args.source_seed)], src.scaler,
                                      src.source_train, args.seeds, args.scratch_sizes)
    print(ft.to_text(), end="")
    if scratch is not None:
        print(scratch.to_text(), end="")
        for n in scratch.sample_sizes():
            print(f"N={n}: median fine-tune {np.median(ft.mses(n)):.4e} vs scratch {np.median(scratch.mses(n)):.4e}")
    if args.json:
        out = {"source_mse": src.mses[args.model][0], "fine_tune": json.loads(ft.to_json()),
               "scratch": json.loads(scratch.to_json()) if scratch else []}
        Path(args.json).write_text(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
