"""Named layout of the unconstrained parameter vector and the simplex transform."""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np
from scipy.special import expit, log_expit

from .errors import ShapeError


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def stop(self) -> int:
        return self.offset + self.size


class ParamLayout:
    """Contiguous named slices of a flat unconstrained vector."""

    def __init__(self, blocks: Iterable[Tuple[str, Tuple[int, ...]]]) -> None:
        self._blocks: "OrderedDict[str, Block]" = OrderedDict()
        offset = 0
        for name, shape in blocks:
            if name in self._blocks:
                raise ShapeError(f"duplicate layout block: {name}")
            block = Block(name=name, offset=offset, shape=tuple(int(s) for s in shape))
            self._blocks[name] = block
            offset = block.stop
        self.size = offset

    @property
    def names(self) -> List[str]:
        return list(self._blocks)

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def block(self, name: str) -> Block:
        return self._blocks[name]

    def slice(self, name: str) -> slice:
        block = self._blocks[name]
        return slice(block.offset, block.stop)

    def unpack(self, theta: np.ndarray) -> Dict[str, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ShapeError(f"expected parameter vector of length {self.size}, got {theta.shape}")
        return {name: theta[b.offset : b.stop].reshape(b.shape) for name, b in self._blocks.items()}

    def pack(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        theta = np.zeros(self.size)
        for name, b in self._blocks.items():
            theta[b.offset : b.stop] = np.asarray(values[name], dtype=float).reshape(-1)
        return theta

    def take(self, matrix: np.ndarray, name: str) -> np.ndarray:
        """Rows of draws restricted to one block, reshaped to (rows, *shape)."""
        b = self._blocks[name]
        matrix = np.asarray(matrix)
        return matrix[:, b.offset : b.stop].reshape((matrix.shape[0],) + b.shape)

    def labels(self) -> List[str]:
        """One label per scalar coordinate, e.g. ``b_r[3]`` or ``xi[2,1]``."""
        out: List[str] = []
        for name, b in self._blocks.items():
            if b.shape == (1,) or b.shape == ():
                out.append(name)
                continue
            for idx in np.ndindex(*b.shape):
                out.append(f"{name}[{','.join(str(i) for i in idx)}]")
        return out

    def to_record(self) -> List[Dict[str, object]]:
        return [{"name": b.name, "offset": b.offset, "shape": list(b.shape)} for b in self._blocks.values()]

    @classmethod
    def from_record(cls, record: List[Dict[str, object]]) -> "ParamLayout":
        return cls((str(item["name"]), tuple(item["shape"])) for item in record)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ParamLayout) and self.to_record() == other.to_record()

    def __repr__(self) -> str:
        inner = ", ".join(f"{b.name}{list(b.shape)}" for b in self._blocks.values())
        return f"ParamLayout({inner})"


def simplex_transform(raw: np.ndarray) -> Tuple[np.ndarray, float]:
    """Centered stick-breaking map from R^(L-1) onto the open L-simplex.

    raw = 0 maps to the uniform simplex. Returns (c, log|det J|).
    """
    raw = np.asarray(raw, dtype=float).reshape(-1)
    c, log_jac, _ = _stick_breaking(raw)
    return c, log_jac


def simplex_transform_grad(raw: np.ndarray, grad_c: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    """Pull a gradient with respect to c back onto raw.

    Returns (c, log|det J|, d/draw [grad_c . c(raw) + log|det J|]).
    """
    raw = np.asarray(raw, dtype=float).reshape(-1)
    c, log_jac, z = _stick_breaking(raw)
    num = len(raw) + 1
    weighted = np.asarray(grad_c, dtype=float) * c
    # sum_{k > j} weighted_k
    tail = np.cumsum(weighted[::-1])[::-1][1:]
    grad = (1.0 - z) * weighted[:-1] - z * tail
    j = np.arange(num - 1)
    grad += 1.0 - 2.0 * z - z * (num - 2 - j)
    return c, log_jac, grad


def _stick_breaking(raw: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    num = len(raw) + 1
    offsets = np.log(num - 1 - np.arange(num - 1, dtype=float))
    u = raw - offsets
    z = expit(u)
    log_z = log_expit(u)
    log_1mz = log_expit(-u)
    log_stick = np.concatenate([[0.0], np.cumsum(log_1mz)])
    log_c = np.empty(num)
    log_c[:-1] = log_stick[:-1] + log_z
    log_c[-1] = log_stick[-1]
    c = np.exp(log_c)
    log_jac = float(np.sum(log_z + log_1mz + log_stick[:-1]))
    return c, log_jac, z
