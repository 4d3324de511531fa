"""Low-rank residual adapter algebra for linear and embedding weights.

An adapter is a rank-r factor pair (A, B) attached to a frozen base weight
W (m x l). Residual application computes W x + A (B x) as two rank-r
products without ever materializing the dense A B update; ``fold`` merges
the update back (W + A B) so adapted behavior survives with no extra
parameters at inference. Bias terms stay with the caller and are never
adapted.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

KIND_LINEAR = "linear"
KIND_EMBEDDING = "embedding"
KINDS = (KIND_LINEAR, KIND_EMBEDDING)

DEFAULT_RANK = 4
INIT_STD = 0.02

_BASE_MAGIC = b"SVLW"
_ADAPTER_MAGIC = b"SVLA"
_FORMAT_VERSION = 1

# Optional observer recording (shape_a, shape_b) for every matrix product;
# lets tests assert the dense m x l update is never formed on apply paths.
_matmul_log: list[tuple[tuple[int, ...], tuple[int, ...]]] | None = None


@contextmanager
def record_matmuls() -> Iterator[list[tuple[tuple[int, ...], tuple[int, ...]]]]:
    """Collect the operand shapes of every adapter matrix product."""
    global _matmul_log
    log: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    prev = _matmul_log
    _matmul_log = log
    try:
        yield log
    finally:
        _matmul_log = prev


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _matmul_log is not None:
        _matmul_log.append((a.shape, b.shape))
    return a @ b


@dataclass(frozen=True)
class BaseWeight:
    """A named frozen weight matrix of a linear or embedding layer.

    Linear: W is (outputs m, inputs l), with an optional frozen bias that
    adapters never touch. Embedding: W is (embedding dim m, vocabulary l),
    one column per vocabulary id, and carries no bias.
    """

    name: str
    kind: str
    W: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1:
            raise ValueError(f"W must be a nonempty 2-D matrix, got shape {W.shape}")
        object.__setattr__(self, "W", W)
        if self.bias is not None:
            if self.kind != KIND_LINEAR:
                raise ValueError("only linear weights carry a bias")
            bias = np.asarray(self.bias, dtype=np.float64)
            if bias.shape != (W.shape[0],):
                raise ValueError(f"bias shape {bias.shape} does not match ({W.shape[0]},)")
            object.__setattr__(self, "bias", bias)

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass(frozen=True)
class LoraAdapter:
    """Rank-r factor pair (A: m x r, B: r x l) for a named base weight."""

    name: str
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.ndim != 2 or B.ndim != 2:
            raise ValueError("A and B must be 2-D matrices")
        if A.shape[1] != B.shape[0]:
            raise ValueError(f"rank mismatch: A is {A.shape}, B is {B.shape}")
        r = A.shape[1]
        if r < 1:
            raise ValueError("rank must be >= 1")
        if r > min(A.shape[0], B.shape[1]):
            raise ValueError(f"rank {r} exceeds min{(A.shape[0], B.shape[1])}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def param_count(self) -> int:
        """m * r + r * l, the trainable parameters this adapter adds."""
        return self.A.size + self.B.size


def _check_conforms(base: BaseWeight, adapter: LoraAdapter) -> None:
    m, l = base.shape
    if adapter.A.shape[0] != m or adapter.B.shape[1] != l:
        raise ValueError(
            f"adapter {adapter.name!r} shapes A{adapter.A.shape} B{adapter.B.shape} "
            f"do not conform to base {base.name!r} {base.shape}"
        )
    if adapter.name != base.name:
        raise ValueError(f"adapter {adapter.name!r} does not target base {base.name!r}")


def apply_linear(base: BaseWeight, adapter: LoraAdapter | None, x: np.ndarray) -> np.ndarray:
    """W x (+ frozen bias), plus the A (B x) residual when an adapter is attached."""
    if base.kind != KIND_LINEAR:
        raise ValueError(f"apply_linear on {base.kind!r} weight {base.name!r}")
    x = np.asarray(x, dtype=np.float64)
    m, l = base.shape
    if x.shape != (l,):
        raise ValueError(f"input shape {x.shape} does not match ({l},)")
    out = _matmul(base.W, x)
    if base.bias is not None:
        out = out + base.bias
    if adapter is not None:
        _check_conforms(base, adapter)
        out = out + _matmul(adapter.A, _matmul(adapter.B, x))
    return out


def apply_embedding(
    base: BaseWeight, adapter: LoraAdapter | None, ids: Sequence[int]
) -> np.ndarray:
    """Column lookups of W, plus A times the matching columns of B.

    Returns one m-vector per id, stacked as a (len(ids), m) array.
    """
    if base.kind != KIND_EMBEDDING:
        raise ValueError(f"apply_embedding on {base.kind!r} weight {base.name!r}")
    m, l = base.shape
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("ids must be a flat sequence of integers")
    if idx.size and (idx.min() < 0 or idx.max() >= l):
        raise ValueError(f"ids out of range [0, {l})")
    out = base.W[:, idx].T.copy()
    if adapter is not None:
        _check_conforms(base, adapter)
        out = out + _matmul(adapter.A, adapter.B[:, idx]).T
    return out


def fold(base: BaseWeight, adapter: LoraAdapter) -> BaseWeight:
    """Merge the residual into the base: a new weight with W + A B.

    Applying the folded weight with no adapter reproduces residual
    application of the original pair. The bias, if any, passes through
    untouched.
    """
    _check_conforms(base, adapter)
    return BaseWeight(
        name=base.name, kind=base.kind, W=base.W + adapter.A @ adapter.B, bias=base.bias
    )


def init_adapter(base: BaseWeight, rank: int, rng: np.random.Generator) -> LoraAdapter:
    """Fresh adapter: A gaussian with std 0.02, B zero.

    B = 0 makes the adapted layer behave exactly like the base until
    training moves the factors, so fine-tuning starts at the pretrained
    function.
    """
    m, l = base.shape
    if not 1 <= rank <= min(m, l):
        raise ValueError(f"rank must be in [1, {min(m, l)}], got {rank}")
    A = rng.normal(0.0, INIT_STD, size=(m, rank))
    B = np.zeros((rank, l))
    return LoraAdapter(name=base.name, A=A, B=B)


class AdapterRegistry:
    """Tracks which parametric layers carry adapters.

    With ``full_coverage`` on, :meth:`validate` rejects any registered
    base weight without an attached adapter, so no parametric layer is
    silently left unadapted.
    """

    def __init__(self, full_coverage: bool = False) -> None:
        self.full_coverage = full_coverage
        self._bases: dict[str, BaseWeight] = {}
        self._adapters: dict[str, LoraAdapter] = {}

    def register(self, base: BaseWeight) -> None:
        if base.name in self._bases:
            raise ValueError(f"base {base.name!r} already registered")
        self._bases[base.name] = base

    def attach(self, adapter: LoraAdapter) -> None:
        base = self._bases.get(adapter.name)
        if base is None:
            raise ValueError(f"no base registered under {adapter.name!r}")
        _check_conforms(base, adapter)
        self._adapters[adapter.name] = adapter

    def validate(self) -> None:
        if self.full_coverage:
            missing = sorted(set(self._bases) - set(self._adapters))
            if missing:
                raise ValueError(f"unadapted parametric layers: {', '.join(missing)}")

    def apply(self, name: str, x_or_ids) -> np.ndarray:
        base = self._bases[name]
        adapter = self._adapters.get(name)
        if base.kind == KIND_LINEAR:
            return apply_linear(base, adapter, x_or_ids)
        return apply_embedding(base, adapter, x_or_ids)

    def fold_all(self) -> list[BaseWeight]:
        self.validate()
        return [
            fold(base, self._adapters[name]) if name in self._adapters else base
            for name, base in self._bases.items()
        ]


def _write_header(sink: IO[bytes], magic: bytes, name: str, kind: str, dims: tuple[int, ...]) -> None:
    name_bytes = name.encode("utf-8")
    kind_code = KINDS.index(kind)
    sink.write(magic)
    sink.write(struct.pack("<BB", _FORMAT_VERSION, kind_code))
    sink.write(struct.pack("<H", len(name_bytes)))
    sink.write(name_bytes)
    sink.write(struct.pack(f"<{len(dims)}Q", *dims))


def _read_header(source: IO[bytes], magic: bytes, n_dims: int) -> tuple[str, str, tuple[int, ...]]:
    got = source.read(4)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    version, kind_code = struct.unpack("<BB", source.read(2))
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    if kind_code >= len(KINDS):
        raise ValueError(f"unknown kind code {kind_code}")
    (name_len,) = struct.unpack("<H", source.read(2))
    name = source.read(name_len).decode("utf-8")
    dims = struct.unpack(f"<{n_dims}Q", source.read(8 * n_dims))
    return name, KINDS[kind_code], dims


def _read_matrix(source: IO[bytes], rows: int, cols: int) -> np.ndarray:
    data = source.read(8 * rows * cols)
    if len(data) != 8 * rows * cols:
        raise ValueError("truncated payload")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()


def save_base(base: BaseWeight, path: str | Path) -> None:
    """Binary base-weight container: header {name, kind, m, l}, a bias flag
    byte, W row-major, then the bias vector when flagged."""
    with open(path, "wb") as sink:
        _write_header(sink, _BASE_MAGIC, base.name, base.kind, base.shape)
        sink.write(struct.pack("<B", base.bias is not None))
        sink.write(np.ascontiguousarray(base.W, dtype="<f8").tobytes())
        if base.bias is not None:
            sink.write(np.ascontiguousarray(base.bias, dtype="<f8").tobytes())


def load_base(path: str | Path) -> BaseWeight:
    with open(path, "rb") as source:
        name, kind, (m, l) = _read_header(source, _BASE_MAGIC, 2)
        (has_bias,) = struct.unpack("<B", source.read(1))
        W = _read_matrix(source, m, l)
        bias = _read_matrix(source, 1, m).reshape(m) if has_bias else None
        return BaseWeight(name=name, kind=kind, W=W, bias=bias)


def save_adapter(adapter: LoraAdapter, kind: str, path: str | Path) -> None:
    """Binary adapter container: header {name, kind, m, l, r} then A, then B."""
    m = adapter.A.shape[0]
    l = adapter.B.shape[1]
    with open(path, "wb") as sink:
        _write_header(sink, _ADAPTER_MAGIC, adapter.name, kind, (m, l, adapter.rank))
        sink.write(np.ascontiguousarray(adapter.A, dtype="<f8").tobytes())
        sink.write(np.ascontiguousarray(adapter.B, dtype="<f8").tobytes())


def load_adapter(path: str | Path) -> tuple[LoraAdapter, str]:
    """Read an adapter container; returns the adapter and its declared kind."""
    with open(path, "rb") as source:
        name, kind, (m, l, r) = _read_header(source, _ADAPTER_MAGIC, 3)
        A = _read_matrix(source, m, r)
        B = _read_matrix(source, r, l)
        return LoraAdapter(name=name, A=A, B=B), kind
