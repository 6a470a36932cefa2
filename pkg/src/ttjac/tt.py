"""Tensor-train container, element evaluation and the TTJ1 binary format."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from .errors import FormatError, GridIndexError, ShapeError, SizeError

TT_MAGIC = b"TTJ1"
TT_VERSION = 1
DEFAULT_MATERIALIZE_CAP = 1_000_000


@dataclass
class EvalStats:
    """Instrumentation sink for :func:`tt_eval`."""

    matvecs: int = 0


@dataclass(frozen=True)
class TTTensor:
    """d order-3 cores; core k has shape (r_{k-1}, N_k, r_k), r_0 = r_d = 1."""

    cores: tuple = field()

    def __post_init__(self):
        cores = tuple(np.array(c, dtype=np.float64) for c in self.cores)
        if not cores:
            raise ShapeError("a TT needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ShapeError(f"core {k} is not order-3: shape {c.shape}")
            if k and c.shape[0] != cores[k - 1].shape[2]:
                raise ShapeError(f"rank mismatch between cores {k - 1} and {k}")
            if not np.all(np.isfinite(c)):
                raise ShapeError(f"core {k} has non-finite entries")
            c.setflags(write=False)
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary ranks must be 1")
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    def __eq__(self, other):
        if not isinstance(other, TTTensor):
            return NotImplemented
        return len(self.cores) == len(other.cores) and all(
            np.array_equal(a, b) for a, b in zip(self.cores, other.cores)
        )

    __hash__ = None


def _check_indices(t: TTTensor, idx: np.ndarray) -> None:
    if idx.shape[-1] != t.d:
        raise GridIndexError(f"index has {idx.shape[-1]} components, tensor has {t.d}")
    sizes = np.asarray(t.mode_sizes)
    if idx.size and (np.any(idx < 0) or np.any(idx >= sizes)):
        raise GridIndexError(f"index out of range for mode sizes {t.mode_sizes}")


def tt_eval(t: TTTensor, idx, stats: EvalStats | None = None) -> float:
    """Element T[i_1, ..., i_d] as a left-to-right chain of slice products.

    The first slice is a 1 x r_1 row, so the chain costs exactly d - 1
    vector-by-matrix products; ``stats.matvecs`` counts them.
    """
    idx = np.asarray(idx, dtype=np.int64)
    _check_indices(t, idx)
    v = t.cores[0][:, idx[0], :][0]
    for k in range(1, t.d):
        v = v @ t.cores[k][:, idx[k], :]
        if stats is not None:
            stats.matvecs += 1
    return float(v[0])


def tt_eval_batch(t: TTTensor, batch) -> np.ndarray:
    """Row-wise :func:`tt_eval` over a (B, d) index matrix.

    The running state is a B x r_k matrix; each step gathers one slice per
    row and does a batched row-vector product.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 2:
        raise GridIndexError("index batch must be a (B, d) matrix")
    _check_indices(t, batch)
    if batch.shape[0] == 0:
        return np.zeros(0)
    v = t.cores[0][0, batch[:, 0], :]
    for k in range(1, t.d):
        slices = t.cores[k][:, batch[:, k], :].transpose(1, 0, 2)  # (B, r_{k-1}, r_k)
        v = np.einsum("br,brs->bs", v, slices)
    return v[:, 0].copy()


def tt_materialize(t: TTTensor, cap: int = DEFAULT_MATERIALIZE_CAP) -> np.ndarray:
    """Dense array of every entry. Oracle use only."""
    total = int(np.prod(t.mode_sizes, dtype=np.float64))
    if total > cap:
        raise SizeError(f"dense tensor would have {total} entries, cap is {cap}")
    out = t.cores[0][0]  # (N_1, r_1)
    for core in t.cores[1:]:
        out = np.tensordot(out, core, axes=([-1], [0]))
    return out[..., 0]


def tt_random(mode_sizes: Sequence[int], ranks: Sequence[int], seed=None) -> TTTensor:
    """Random TT with N(0, 1) / sqrt(r_k) entries. ``ranks`` is (r_0, ..., r_d)."""
    mode_sizes = [int(n) for n in mode_sizes]
    ranks = [int(r) for r in ranks]
    if len(ranks) != len(mode_sizes) + 1:
        raise ShapeError("need len(ranks) == len(mode_sizes) + 1")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ShapeError("boundary ranks must be 1")
    if min(ranks) < 1 or min(mode_sizes) < 1:
        raise ShapeError("ranks and mode sizes must be positive")
    rng = np.random.default_rng(seed)
    cores = []
    for k, n in enumerate(mode_sizes):
        shape = (ranks[k], n, ranks[k + 1])
        cores.append(rng.standard_normal(shape) / np.sqrt(max(ranks[k], ranks[k + 1])))
    return TTTensor(tuple(cores))


def write_tt(t: TTTensor, fh: BinaryIO) -> None:
    fh.write(TT_MAGIC)
    fh.write(struct.pack("<HI", TT_VERSION, t.d))
    for c in t.cores:
        fh.write(struct.pack("<III", *c.shape))
        fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("unexpected end of file")
    return buf


def read_tt(fh: BinaryIO) -> TTTensor:
    if _read_exact(fh, 4) != TT_MAGIC:
        raise FormatError("not a TTJ1 tensor (bad magic)")
    version, d = struct.unpack("<HI", _read_exact(fh, 6))
    if version != TT_VERSION:
        raise FormatError(f"unsupported TTJ1 version {version}")
    cores = []
    for _ in range(d):
        shape = struct.unpack("<III", _read_exact(fh, 12))
        count = shape[0] * shape[1] * shape[2]
        data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8")
        cores.append(data.astype(np.float64).reshape(shape))
    try:
        return TTTensor(tuple(cores))
    except ShapeError as exc:
        raise FormatError(f"corrupt TTJ1 tensor: {exc}") from exc


def tt_to_bytes(t: TTTensor) -> bytes:
    buf = io.BytesIO()
    write_tt(t, buf)
    return buf.getvalue()


def tt_from_bytes(data: bytes) -> TTTensor:
    return read_tt(io.BytesIO(data))
