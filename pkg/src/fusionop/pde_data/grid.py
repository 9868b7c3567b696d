from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_RESOLUTION = 4


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the unit interval/square.

    Non-periodic grids include both boundary nodes (``x_i = i/(n-1)``);
    periodic grids live on the unit torus (``x_i = i/n``).
    """

    shape: tuple[int, ...]
    periodic: bool = False

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        if min(shape) < MIN_RESOLUTION:
            raise ValueError(f"resolution must be >= {MIN_RESOLUTION} per axis, got {shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, k: int = 0) -> np.ndarray:
        n = self.shape[k]
        return np.arange(n) / n if self.periodic else np.linspace(0.0, 1.0, n)

    def spacing(self, k: int = 0) -> float:
        n = self.shape[k]
        return 1.0 / n if self.periodic else 1.0 / (n - 1)

    def coords(self) -> np.ndarray:
        """Node coordinates as a ``(size, ndim)`` array in row-major order."""
        axes = np.meshgrid(*[self.axis(k) for k in range(self.ndim)], indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "periodic": self.periodic}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["shape"]), bool(d["periodic"]))


@dataclass(frozen=True)
class GridFunction:
    """Real function sampled on a grid, possibly with several channels.

    ``values`` has shape ``grid.shape`` (one channel) or
    ``(channels,) + grid.shape``.
    """

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape == self.grid.shape:
            pass
        elif v.ndim == self.grid.ndim + 1 and v.shape[1:] == self.grid.shape:
            pass
        elif v.ndim == 1 and v.size % self.grid.size == 0:
            c = v.size // self.grid.size
            v = v.reshape(self.grid.shape if c == 1 else (c,) + self.grid.shape)
        else:
            raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return 1 if self.values.shape == self.grid.shape else self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()
