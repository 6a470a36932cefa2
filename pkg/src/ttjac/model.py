"""ScoreModel: grid + TT + standardization, persisted as a TTM1 file."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError, ShapeError
from .grid import Grid1D, quantize
from .samples import _read_str, _write_str, read_grid, write_grid
from .tt import TTTensor, read_tt, tt_eval, tt_eval_batch, write_tt

MODEL_MAGIC = b"TTM1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ScoreModel:
    grid: Grid1D
    tensor: TTTensor
    mean: float = 0.0
    std: float = 1.0
    generator_tag: str = ""
    sample_count: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if any(n != self.grid.n_cells for n in self.tensor.mode_sizes):
            raise ShapeError("tensor mode sizes must all equal grid.n_cells")
        if not self.std > 0:
            raise ShapeError("standardization std must be positive")

    @property
    def d(self) -> int:
        return self.tensor.d

    def lookup(self, indices) -> np.ndarray:
        """De-standardized scores at grid indices (B, d)."""
        return self.mean + self.std * tt_eval_batch(self.tensor, indices)

    def lookup_one(self, idx) -> float:
        return self.mean + self.std * tt_eval(self.tensor, idx)

    def evaluate(self, latents) -> np.ndarray:
        """Score latents (B, d): nearest grid point, then batched TT lookup."""
        latents = np.asarray(latents, dtype=np.float64)
        if latents.size == 0:
            return np.zeros(0)
        latents = np.atleast_2d(latents)
        if latents.shape[1] != self.d:
            raise InputError(f"latents have d={latents.shape[1]}, model expects {self.d}")
        return self.lookup(quantize(latents, self.grid))

    def save(self, path) -> None:
        """TTM1 layout: magic, version u16, d u32, grid block, mean f64,
        std f64, tag str, sample count u64, config hash str, then an embedded
        TTJ1 tensor."""
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<HI", MODEL_VERSION, self.d))
            write_grid(self.grid, fh)
            fh.write(struct.pack("<dd", self.mean, self.std))
            _write_str(self.generator_tag, fh)
            fh.write(struct.pack("<Q", self.sample_count))
            _write_str(self.config_hash, fh)
            write_tt(self.tensor, fh)

    @classmethod
    def load(cls, path) -> "ScoreModel":
        with open(path, "rb") as fh:
            if fh.read(4) != MODEL_MAGIC:
                raise FormatError(f"{path}: not a TTM1 model file (bad magic)")
            head = fh.read(6)
            if len(head) != 6:
                raise FormatError(f"{path}: truncated header")
            version, d = struct.unpack("<HI", head)
            if version != MODEL_VERSION:
                raise FormatError(f"{path}: unsupported TTM1 version {version}")
            grid = read_grid(fh)
            raw = fh.read(16)
            if len(raw) != 16:
                raise FormatError(f"{path}: truncated header")
            mean, std = struct.unpack("<dd", raw)
            tag = _read_str(fh)
            raw = fh.read(8)
            if len(raw) != 8:
                raise FormatError(f"{path}: truncated header")
            (count,) = struct.unpack("<Q", raw)
            chash = _read_str(fh)
            tensor = read_tt(fh)
            if fh.read(1):
                raise FormatError(f"{path}: trailing bytes after model payload")
        if tensor.d != d:
            raise FormatError(f"{path}: header d={d} but tensor has {tensor.d} cores")
        try:
            return cls(grid, tensor, mean, std, tag, count, chash)
        except ShapeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
