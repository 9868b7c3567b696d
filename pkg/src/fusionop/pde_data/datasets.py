"""Scenario specs, paired dataset generation and the on-disk dataset format."""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .burgers import solve_burgers
from .darcy import solve_darcy
from .elasticity import solve_elasticity
from .grf import sample_grf_matern, sample_grf_sqexp
from .grid import Grid, GridFunction

FORMAT_VERSION = "fusionop-dataset/1"
EQUATIONS = ("darcy", "burgers", "elasticity")
ROLES = ("source", "target")
# XOR-ed into the target seed so source and target per-sample seeds never collide
TARGET_SEED_OFFSET = 1 << 20


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    equation: str
    role: str = "source"
    resolution: int = 32
    n_samples: int = 100
    seed: int = 0
    # darcy
    alpha: float = 2.2
    tau: float = 2.2
    forcing: str = "one"  # "one" (f = 1) or "5xy"
    # burgers
    nu: float = 0.1
    t_final: float = 1.0
    ic_length: float = 0.1
    # elasticity
    length_scale: float = 0.1
    youngs_modulus: float = 1.0
    poisson: float = 0.3

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        for name in ("alpha", "tau", "nu", "t_final", "ic_length", "length_scale", "youngs_modulus"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in (0, 0.5)")
        if self.forcing not in ("one", "5xy"):
            raise ValueError(f"unknown forcing {self.forcing!r}")

    @property
    def grid(self) -> Grid:
        if self.equation == "burgers":
            return Grid((self.resolution,), periodic=True)
        return Grid((self.resolution, self.resolution))

    @property
    def channels(self) -> int:
        return 2 if self.equation == "elasticity" else 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(**d)


@dataclass
class PairedDataset:
    """``inputs[i] -> outputs[i]``, each row a flattened (possibly multi-channel) grid function."""

    inputs: np.ndarray  # (N, p_in)
    outputs: np.ndarray  # (N, p_out)
    spec: ScenarioSpec
    indices: np.ndarray = field(default=None)  # original sample indices

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError("inputs and outputs must have the same number of samples")
        if self.indices is None:
            self.indices = np.arange(self.inputs.shape[0])

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def grid(self) -> Grid:
        return self.spec.grid

    def subset(self, idx) -> "PairedDataset":
        idx = np.asarray(idx)
        return PairedDataset(self.inputs[idx], self.outputs[idx], self.spec, self.indices[idx])

    def split(self, n_test: int):
        """``(train, test)`` with the last ``n_test`` samples held out."""
        if not 0 <= n_test <= len(self):
            raise ValueError(f"cannot hold out {n_test} of {len(self)} samples")
        cut = len(self) - n_test
        return self.subset(np.arange(cut)), self.subset(np.arange(cut, len(self)))

    def input_function(self, i: int) -> GridFunction:
        if not 0 <= i < len(self):
            raise IndexError(f"sample index {i} out of range [0, {len(self)})")
        return GridFunction(self.inputs[i], self.grid)

    def output_function(self, i: int) -> GridFunction:
        if not 0 <= i < len(self):
            raise IndexError(f"sample index {i} out of range [0, {len(self)})")
        return GridFunction(self.outputs[i], self.grid)


# ---------------------------------------------------------------- scenarios

SCENARIOS = ("darcy-dist-shift", "darcy-forcing", "burgers-nu", "elasticity-l")


def scenario_specs(name: str, seed: int = 0, resolution: int | None = None, n_source: int = 1200,
                   n_target: int = 800, burgers_reverse: bool = False) -> tuple[ScenarioSpec, ScenarioSpec]:
    """Source and target specs for a named transfer scenario.

    ``burgers_reverse`` swaps the viscosities (target 0.001, source 0.1).
    """
    tseed = seed ^ TARGET_SEED_OFFSET
    if name == "darcy-dist-shift":
        res = resolution or 32
        src = ScenarioSpec("darcy", "source", res, n_source, seed, alpha=2.2, tau=2.2, forcing="one")
        tgt = ScenarioSpec("darcy", "target", res, n_target, tseed, alpha=1.2, tau=1.2, forcing="one")
    elif name == "darcy-forcing":
        res = resolution or 32
        src = ScenarioSpec("darcy", "source", res, n_source, seed, alpha=2.2, tau=2.2, forcing="5xy")
        tgt = ScenarioSpec("darcy", "target", res, n_target, tseed, alpha=2.2, tau=2.2, forcing="one")
    elif name == "burgers-nu":
        res = resolution or 128
        nus = (0.1, 0.001) if burgers_reverse else (0.001, 0.1)
        src = ScenarioSpec("burgers", "source", res, n_source, seed, nu=nus[0])
        tgt = ScenarioSpec("burgers", "target", res, n_target, tseed, nu=nus[1])
    elif name == "elasticity-l":
        res = resolution or 32
        src = ScenarioSpec("elasticity", "source", res, n_source, seed, length_scale=0.04)
        tgt = ScenarioSpec("elasticity", "target", res, n_target, tseed, length_scale=0.12)
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    return src, tgt


def sample_seed(spec: ScenarioSpec, i: int) -> int:
    return int(spec.seed) ^ int(i)


def darcy_forcing(spec: ScenarioSpec) -> GridFunction:
    grid = spec.grid
    if spec.forcing == "one":
        return GridFunction(np.ones(grid.shape), grid)
    x, y = np.meshgrid(grid.axis(0), grid.axis(1), indexing="ij")
    return GridFunction(5.0 * x * y, grid)


def _darcy_pair(spec: ScenarioSpec, i: int, forcing: GridFunction):
    g = sample_grf_matern(spec.resolution, spec.alpha, spec.tau, sample_seed(spec, i))
    a = GridFunction(np.exp(g.values), g.grid)
    return a.flat, solve_darcy(a, forcing).flat


def _elasticity_pair(spec: ScenarioSpec, i: int):
    fx, fy = sample_grf_sqexp(spec.resolution, spec.length_scale, sample_seed(spec, i), n_fields=2)
    u, v = solve_elasticity(fx, fy, spec.youngs_modulus, spec.poisson)
    return np.concatenate([fx.flat, fy.flat]), np.concatenate([u.flat, v.flat])


def make_dataset(spec: ScenarioSpec) -> PairedDataset:
    """Generate ``spec.n_samples`` input/output pairs with per-sample seeds ``seed ^ i``."""
    N = spec.n_samples
    inputs, outputs = [], []
    if spec.equation == "darcy":
        forcing = darcy_forcing(spec)
        for i in range(N):
            try:
                a, u = _darcy_pair(spec, i, forcing)
            except Exception as exc:
                raise RuntimeError(f"Darcy sample {i} failed: {exc}") from exc
            inputs.append(a)
            outputs.append(u)
    elif spec.equation == "elasticity":
        for i in range(N):
            try:
                f, uv = _elasticity_pair(spec, i)
            except Exception as exc:
                raise RuntimeError(f"elasticity sample {i} failed: {exc}") from exc
            inputs.append(f)
            outputs.append(uv)
    else:
        u0 = np.array([sample_grf_sqexp(spec.resolution, spec.ic_length, sample_seed(spec, i),
                                        periodic=True, ndim=1).flat for i in range(N)])
        inputs = list(u0)
        if N:
            outputs = list(solve_burgers(u0, spec.nu, spec.t_final).values[-1])
    p_in = spec.channels * spec.grid.size
    p_out = spec.channels * spec.grid.size
    X = np.array(inputs).reshape(N, p_in)
    Y = np.array(outputs).reshape(N, p_out)
    return PairedDataset(X, Y, spec)


# ---------------------------------------------------------------- storage


def save_dataset(ds: PairedDataset, path) -> Path:
    """Directory with ``manifest.json`` + little-endian row-major ``inputs.f64``/``outputs.f64``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "spec": ds.spec.to_dict(),
        "resolution": ds.spec.resolution,
        "n_samples": len(ds),
        "input_shape": list(ds.inputs.shape),
        "output_shape": list(ds.outputs.shape),
        "indices": [int(i) for i in ds.indices],
    }
    tmp = Path(tempfile.mkdtemp(prefix=path.name + ".", dir=path.parent))
    np.ascontiguousarray(ds.inputs, dtype="<f8").tofile(tmp / "inputs.f64")
    np.ascontiguousarray(ds.outputs, dtype="<f8").tofile(tmp / "outputs.f64")
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def load_dataset(path) -> PairedDataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"{path} has no manifest.json") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {manifest.get('format_version')!r}")
    arrays = []
    for name in ("inputs", "outputs"):
        shape = tuple(manifest[f"{name[:-1]}_shape"])
        raw = np.fromfile(path / f"{name}.f64", dtype="<f8")
        if raw.size != int(np.prod(shape)):
            raise DatasetFormatError(f"{name}.f64 holds {raw.size} values, manifest expects {int(np.prod(shape))}")
        arrays.append(raw.reshape(shape).astype(np.float64))
    spec = ScenarioSpec.from_dict(manifest["spec"])
    if manifest["n_samples"] != arrays[0].shape[0]:
        raise DatasetFormatError("sample count in manifest does not match blob shape")
    return PairedDataset(arrays[0], arrays[1], spec, np.asarray(manifest["indices"], dtype=np.int64))
