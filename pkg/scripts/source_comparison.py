"""Source-domain comparison of the three models over several seeds.

Trains FF-POD-DeepONet, POD-DeepONet and DeepONet on one scenario's source
split and prints per-seed and median test MSE (normalized units).

    python scripts/source_comparison.py --scenario darcy-dist-shift --epochs 100 --seeds 0 1 2 3 4
"""

import argparse
import json
import logging
from pathlib import Path

from fusionop.config import MODELS, ExperimentConfig
from fusionop.experiments import source_comparison
from fusionop.pde_data.datasets import SCENARIOS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="darcy-dist-shift", choices=SCENARIOS)
    p.add_argument("--models", nargs="+", default=list(MODELS), choices=MODELS)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--config", help="JSON config with further overrides")
    p.add_argument("--json", help="write results here")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = json.loads(Path(args.config).read_text()) if args.config else {}
    base.update(scenario=args.scenario, epochs=args.epochs)
    config = ExperimentConfig.from_dict(base)
    res = source_comparison(config, args.models, args.seeds)
    print(f"{'model':<18} {'median MSE':>12} {'train s':>9}  per-seed")
    for name in args.models:
        per_seed = " ".join(f"{m:.3e}" for m in res.mses[name])
        print(f"{name:<18} {res.median(name):>12.4e} {res.seconds[name]:>9.0f}  {per_seed}")
    if args.json:
        Path(args.json).write_text(json.dumps({"config": config.resolved().to_dict(), "seeds": args.seeds,
                                               "mses": res.mses, "seconds": res.seconds}, indent=2))


if __name__ == "__main__":
    main()
