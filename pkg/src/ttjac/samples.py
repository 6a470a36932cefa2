"""SampleSet container and its TTS1 / CSV file formats."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError, InputError
from .grid import Grid1D, quantize

SAMPLES_MAGIC = b"TTS1"
SAMPLES_VERSION = 1


@dataclass(frozen=True)
class SampleSet:
    """M latent codes with their grid indices and score values."""

    latents: np.ndarray  # (M, d) float64
    indices: np.ndarray  # (M, d) int64
    values: np.ndarray  # (M,) float64
    grid: Grid1D
    generator_tag: str = ""

    def __post_init__(self):
        lat = np.atleast_2d(np.asarray(self.latents, dtype=np.float64))
        idx = np.atleast_2d(np.asarray(self.indices, dtype=np.int64))
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if lat.shape != idx.shape or lat.shape[0] != val.shape[0]:
            raise InputError(
                f"inconsistent sample shapes: latents {lat.shape}, "
                f"indices {idx.shape}, values {val.shape}"
            )
        if lat.shape[0] < 1:
            raise InputError("a SampleSet needs at least one sample")
        if not np.all(np.isfinite(val)):
            raise InputError("sample values must be finite")
        for arr in (lat, idx, val):
            arr.setflags(write=False)
        object.__setattr__(self, "latents", lat)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.latents.shape[1]

    @classmethod
    def from_latents(cls, latents, values, grid: Grid1D, generator_tag: str = ""):
        latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
        return cls(latents, quantize(latents, grid), values, grid, generator_tag)

    def subset(self, rows) -> "SampleSet":
        rows = np.asarray(rows)
        return SampleSet(
            self.latents[rows], self.indices[rows], self.values[rows],
            self.grid, self.generator_tag,
        )

    def check_consistent(self) -> bool:
        """True when the stored indices equal quantize(latents) on the stored grid."""
        return bool(np.array_equal(quantize(self.latents, self.grid), self.indices))


def write_grid(grid: Grid1D, fh: BinaryIO) -> None:
    fh.write(struct.pack("<Id", grid.n_cells, grid.tail_mass))
    fh.write(np.ascontiguousarray(grid.boundaries, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(grid.centers, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("unexpected end of file")
    return buf


def read_grid(fh: BinaryIO) -> Grid1D:
    n, tail = struct.unpack("<Id", _read_exact(fh, 12))
    if n < 2:
        raise FormatError(f"corrupt grid block: n_cells={n}")
    t = np.frombuffer(_read_exact(fh, 8 * (n + 1)), dtype="<f8").astype(np.float64)
    c = np.frombuffer(_read_exact(fh, 8 * n), dtype="<f8").astype(np.float64)
    return Grid1D(n_cells=n, boundaries=t, centers=c, tail_mass=tail)


def _write_str(s: str, fh: BinaryIO) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    try:
        return _read_exact(fh, n).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("corrupt string field") from exc


def write_samples(samples: SampleSet, path) -> None:
    """Write a TTS1 file.

    Layout (little-endian): magic, version u16, d u32, M u64, N u32, latents
    f64[M*d], indices u16[M*d], values f64[M]; then a trailer holding the grid
    block and the generator tag.
    """
    grid = samples.grid
    if grid.n_cells > 0xFFFF:
        raise InputError("grid too large for u16 indices")
    with open(path, "wb") as fh:
        fh.write(SAMPLES_MAGIC)
        fh.write(struct.pack("<HIQI", SAMPLES_VERSION, samples.d, samples.m, grid.n_cells))
        fh.write(np.ascontiguousarray(samples.latents, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(samples.indices, dtype="<u2").tobytes())
        fh.write(np.ascontiguousarray(samples.values, dtype="<f8").tobytes())
        write_grid(grid, fh)
        _write_str(samples.generator_tag, fh)


def read_samples(path) -> SampleSet:
    with open(path, "rb") as fh:
        if fh.read(4) != SAMPLES_MAGIC:
            raise FormatError(f"{path}: not a TTS1 sample file (bad magic)")
        version, d, m, n = struct.unpack("<HIQI", _read_exact(fh, 18))
        if version != SAMPLES_VERSION:
            raise FormatError(f"{path}: unsupported TTS1 version {version}")
        lat = np.frombuffer(_read_exact(fh, 8 * m * d), dtype="<f8").reshape(m, d)
        idx = np.frombuffer(_read_exact(fh, 2 * m * d), dtype="<u2").reshape(m, d)
        val = np.frombuffer(_read_exact(fh, 8 * m), dtype="<f8")
        grid = read_grid(fh)
        tag = _read_str(fh)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after TTS1 payload")
    if grid.n_cells != n:
        raise FormatError(f"{path}: header N={n} disagrees with grid block")
    if idx.size and int(idx.max()) >= n:
        raise FormatError(f"{path}: grid index out of range")
    try:
        return SampleSet(lat.astype(np.float64), idx.astype(np.int64),
                         val.astype(np.float64), grid, tag)
    except InputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def export_samples_csv(samples: SampleSet, path) -> None:
    d = samples.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"z{k}" for k in range(d)] + [f"i{k}" for k in range(d)] + ["value"])
        for z, i, v in zip(samples.latents, samples.indices, samples.values):
            w.writerow([repr(float(x)) for x in z] + [int(x) for x in i] + [repr(float(v))])


def read_latents_csv(path) -> np.ndarray:
    """Latent matrix from a CSV; a non-numeric first row is taken as a header."""
    rows = []
    with open(path, newline="") as fh:
        for n, row in enumerate(csv.reader(fh)):
            row = [c.strip() for c in row if c.strip()]
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if n == 0:
                    continue
                raise InputError(f"{path}: non-numeric value on line {n + 1}")
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have differing widths {sorted(widths)}")
    return np.array(rows, dtype=np.float64)


def write_scores_csv(path, latents: np.ndarray, indices: np.ndarray, scores: np.ndarray) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = indices.shape[1] if np.ndim(indices) == 2 else 0
        w.writerow(["row"] + [f"i{k}" for k in range(d)] + ["score"])
        for r, (i, s) in enumerate(zip(indices, scores)):
            w.writerow([r] + [int(x) for x in i] + [repr(float(s))])
