"""Dense float tensor type, runtime flags, and the binary tensor file format.

The engine stores values as contiguous row-major float32 arrays.  Gradient
checking internally shadows computations in float64; everything user-facing
stays float32.
"""
from __future__ import annotations

import os
import struct
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "set_deterministic",
    "deterministic",
    "set_debug_checks",
    "debug_checks",
    "save_tensor",
    "load_tensor",
    "write_tensor_record",
    "read_tensor_record",
]


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


# Runtime flags.  Determinism pins the fixed reduction/iteration order that the
# engine already uses everywhere; the flag exists so callers can require it.
_DETERMINISTIC = os.environ.get("ONCONET_DETERMINISTIC", "") not in ("", "0")
_DEBUG_CHECKS = os.environ.get("ONCONET_DEBUG", "") not in ("", "0")


def set_deterministic(on: bool) -> None:
    global _DETERMINISTIC
    _DETERMINISTIC = bool(on)


def deterministic() -> bool:
    return _DETERMINISTIC


def set_debug_checks(on: bool) -> None:
    """Enable per-op NaN/Inf validation of forward outputs."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(on)


def debug_checks() -> bool:
    return _DEBUG_CHECKS


class Tensor:
    """A dense n-dimensional float array with an optional gradient buffer.

    Image tensors use batch x channels x height x width layout.  Values are
    float32 by default; float64 is permitted internally for gradient-check
    shadow computations.  Tensors are treated as immutable after construction
    except for the gradient buffer.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.ascontiguousarray(data, dtype=dtype)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape: Sequence[int], requires_grad: bool = False, dtype=np.float32) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad, dtype)

    @staticmethod
    def ones(shape: Sequence[int], requires_grad: bool = False, dtype=np.float32) -> "Tensor":
        return Tensor(np.ones(shape, dtype=dtype), requires_grad, dtype)

    @staticmethod
    def full(shape: Sequence[int], value: float, dtype=np.float32) -> "Tensor":
        return Tensor(np.full(shape, value, dtype=dtype))

    # -- properties ------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), self.requires_grad, dtype)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), self.requires_grad, self.data.dtype)

    # -- gradients ---------------------------------------------------------------

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        self.ensure_grad()
        self.grad += g.astype(self.data.dtype, copy=False)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    # -- operator sugar (delegates to ops; imported lazily to avoid cycles) ------

    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.mul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def check_finite(name: str, arr: np.ndarray) -> None:
    """Debug-mode guard: forward outputs must stay finite for finite inputs."""
    if _DEBUG_CHECKS and not np.isfinite(arr).all():
        raise FloatingPointError(f"{name} produced non-finite values")


# -- binary tensor file format -------------------------------------------------
#
# Layout: magic "TNSR", format version u8=1, dtype code u8=1 (float32),
# rank u8, then one u32 little-endian per dimension, then the raw
# little-endian float32 payload.

_MAGIC = b"TNSR"
_VERSION = 1
_DTYPE_F32 = 1


def write_tensor_record(fh, t: Tensor) -> int:
    """Append one tensor record to an open binary file, returning its offset."""
    offset = fh.tell()
    data = np.ascontiguousarray(t.data, dtype="<f4")
    rank = data.ndim
    if rank > 255:
        raise ShapeError(f"rank {rank} exceeds the format limit of 255")
    fh.write(_MAGIC)
    fh.write(struct.pack("<BBB", _VERSION, _DTYPE_F32, rank))
    for dim in data.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(data.tobytes())
    return offset


def read_tensor_record(fh) -> Tensor:
    """Read one tensor record from the current position of an open file."""
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ValueError(f"bad tensor file magic {magic!r}, expected {_MAGIC!r}")
    version, dtype_code, rank = struct.unpack("<BBB", fh.read(3))
    if version != _VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    if dtype_code != _DTYPE_F32:
        raise ValueError(f"unsupported dtype code {dtype_code}")
    dims = [struct.unpack("<I", fh.read(4))[0] for _ in range(rank)]
    count = int(np.prod(dims)) if dims else 1
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise ValueError("truncated tensor payload")
    arr = np.frombuffer(payload, dtype="<f4", count=count).reshape(dims)
    return Tensor(arr.copy())


def save_tensor(path, t: Tensor) -> None:
    with open(path, "wb") as fh:
        write_tensor_record(fh, t)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        return read_tensor_record(fh)
