from typing import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.model.error import ShapeError

PARAM_NAMES: tuple[str, ...] = ("w1", "b1", "w2", "b2", "w3", "b3")


class MlpParams(BaseModel):
    """Weights of the mapping network.

    Weights use the column-vector convention, z = w·s + b, so w1 is (h1 x d_s),
    w2 is (h2 x h1) and w3 is (d' x h2). Gradients share this shape.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @model_validator(mode="after")
    def _shapes(self) -> "MlpParams":
        for name in PARAM_NAMES:
            arr = getattr(self, name)
            if arr.dtype != np.float64:
                raise ShapeError(f"{name} must be float64, got {arr.dtype}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} contains non-finite values")
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w3.ndim != 2:
            raise ShapeError("weights must be 2-D")
        h1, h2, out = self.w1.shape[0], self.w2.shape[0], self.w3.shape[0]
        if self.w2.shape[1] != h1 or self.w3.shape[1] != h2:
            raise ShapeError(
                f"inconsistent layer shapes {self.w1.shape}, {self.w2.shape}, {self.w3.shape}"
            )
        if self.b1.shape != (h1,) or self.b2.shape != (h2,) or self.b3.shape != (out,):
            raise ShapeError("bias shapes do not match their layers")
        return self

    @property
    def in_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def hidden(self) -> tuple[int, int]:
        return int(self.w1.shape[0]), int(self.w2.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.w3.shape[0])

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "MlpParams":
        return cls(**{n: np.ascontiguousarray(arrays[n], dtype=np.float64) for n in PARAM_NAMES})

    def zeros_like(self) -> "MlpParams":
        return MlpParams.from_arrays({n: np.zeros_like(a) for n, a in self.arrays()})

    def scaled(self, factor: float) -> "MlpParams":
        return MlpParams.from_arrays({n: factor * a for n, a in self.arrays()})

    def add_scaled(self, other: "MlpParams", scale: float) -> "MlpParams":
        """self + scale * other"""
        return MlpParams.from_arrays({n: a + scale * getattr(other, n) for n, a in self.arrays()})

    def sq_norm(self) -> float:
        """||Θ||², summed over every weight and bias."""
        return float(sum(np.sum(a * a) for _, a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])

    def with_flat(self, values: np.ndarray) -> "MlpParams":
        """Same shapes, entries taken from a flat vector (inverse of flat())."""
        out, offset = {}, 0
        for name, a in self.arrays():
            out[name] = np.asarray(values[offset:offset + a.size], dtype=np.float64).reshape(a.shape)
            offset += a.size
        if offset != values.size:
            raise ShapeError(f"flat vector has {values.size} entries, expected {offset}")
        return MlpParams.from_arrays(out)
