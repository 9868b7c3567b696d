"""Scalar standardization of paired datasets.

Raw solution fields are small (Darcy pressures are O(1e-2)), which would let
the weight penalty dominate the regression term. Experiments therefore fit
one scalar mean/std per side on the source training split and apply the same
affine map to every split of every role, so reported MSEs share units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pde_data.datasets import PairedDataset


@dataclass(frozen=True)
class Standardizer:
    input_mean: float
    input_std: float
    output_mean: float
    output_std: float

    @classmethod
    def fit(cls, dataset: PairedDataset) -> "Standardizer":
        if len(dataset) == 0:
            raise ValueError("cannot fit a standardizer on an empty dataset")

        def _std(a):
            s = float(np.std(a))
            return s if s > 0 else 1.0

        return cls(float(np.mean(dataset.inputs)), _std(dataset.inputs),
                   float(np.mean(dataset.outputs)), _std(dataset.outputs))

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(0.0, 1.0, 0.0, 1.0)

    def apply(self, dataset: PairedDataset) -> PairedDataset:
        return PairedDataset((dataset.inputs - self.input_mean) / self.input_std,
                             (dataset.outputs - self.output_mean) / self.output_std,
                             dataset.spec, dataset.indices)

    def inverse_outputs(self, y) -> np.ndarray:
        return np.asarray(y) * self.output_std + self.output_mean

    def to_dict(self) -> dict:
        return {"input_mean": self.input_mean, "input_std": self.input_std,
                "output_mean": self.output_mean, "output_std": self.output_std}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(**{k: float(d[k]) for k in ("input_mean", "input_std", "output_mean", "output_std")})
