"""Raster grids, binary masks, shape sets, region metrics and PGM mask I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class MaskFormatError(ValueError):
    """Raised when a PGM file cannot be parsed. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RasterGrid:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Characteristic function of one segmentation on a raster grid.

    ``values`` is a read-only ``(height, width)`` uint8 array holding 0/1.
    """

    grid: RasterGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if v.dtype == bool:
            v = v.astype(np.uint8)
        elif not np.all((v == 0) | (v == 1)):
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "values", _frozen(v.astype(np.uint8)))

    @classmethod
    def from_array(cls, a) -> "BinaryMask":
        a = np.asarray(a)
        if a.ndim != 2:
            raise ValueError("mask array must be 2-D")
        return cls(RasterGrid(a.shape[1], a.shape[0]), a.astype(bool))

    @property
    def bool(self) -> np.ndarray:
        return self.values.astype(bool)

    def complement(self) -> "BinaryMask":
        return BinaryMask(self.grid, 1 - self.values)

    def area(self) -> int:
        return region_area(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.grid, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class ShapeSet:
    """An ordered family of masks on one grid."""

    grid: RasterGrid
    masks: tuple[BinaryMask, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        masks = tuple(self.masks)
        if len(masks) < 1:
            raise ValueError("a shape set needs at least one mask")
        for m in masks:
            if m.grid != self.grid:
                raise GridMismatchError(f"mask grid {m.grid} differs from set grid {self.grid}")
        names = tuple(self.names) or tuple(f"mask{i + 1}" for i in range(len(masks)))
        if len(names) != len(masks):
            raise ValueError("names and masks must have equal length")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_stack", _frozen(np.stack([m.values for m in masks])))

    @classmethod
    def from_masks(cls, masks: Sequence[BinaryMask], names: Sequence[str] = ()) -> "ShapeSet":
        if not masks:
            raise ValueError("a shape set needs at least one mask")
        return cls(masks[0].grid, tuple(masks), tuple(names))

    @property
    def n(self) -> int:
        return len(self.masks)

    @property
    def stack(self) -> np.ndarray:
        """``(n, height, width)`` uint8 array of all characteristic functions."""
        return self._stack

    def __len__(self) -> int:
        return len(self.masks)

    def __getitem__(self, i: int) -> BinaryMask:
        return self.masks[i]


def _check_same_grid(a: BinaryMask, b: BinaryMask) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def region_area(m: BinaryMask) -> int:
    return int(np.count_nonzero(m.values))


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    _check_same_grid(a, b)
    return int(np.count_nonzero(a.values & b.values))


def symmetric_difference_area(a: BinaryMask, b: BinaryMask) -> int:
    _check_same_grid(a, b)
    return int(np.count_nonzero(a.values ^ b.values))


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|a∩b|/(|a|+|b|); two empty masks score 1."""
    _check_same_grid(a, b)
    total = region_area(a) + region_area(b)
    if total == 0:
        return 1.0
    return 2.0 * intersection_area(a, b) / total


def average_image(s: ShapeSet) -> np.ndarray:
    return s.stack.sum(axis=0, dtype=np.int64) / s.n


# ---------------------------------------------------------------------------
# PGM I/O

_WS = b" \t\r\n\v\f"


def _header_tokens(data: bytes, count: int) -> tuple[list[tuple[int, int]], int]:
    """Read ``count`` whitespace-separated integer header fields.

    Returns ``[(value, offset), ...]`` and the offset just past the single
    whitespace byte terminating the last field.
    """
    pos = 0
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise MaskFormatError("truncated header", pos)
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise MaskFormatError(f"expected an integer header field, got {tok[:16]!r}", start)
        out.append((int(tok), start))
    if pos >= n or data[pos] not in _WS:
        raise MaskFormatError("missing whitespace after header", pos)
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM file into a ``(height, width)`` integer array."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_pgm(data)


def parse_pgm(data: bytes) -> np.ndarray:
    if len(data) < 2:
        raise MaskFormatError("file too short for a PGM magic number", 0)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise MaskFormatError(f"bad magic {magic!r}, expected P2 or P5", 0)
    fields, body = _header_tokens(data[2:], 3)
    (w, w_off), (h, h_off), (maxval, m_off) = [(v, off + 2) for v, off in fields]
    body += 2
    if w < 1:
        raise MaskFormatError("zero width", w_off)
    if h < 1:
        raise MaskFormatError("zero height", h_off)
    if not 1 <= maxval <= 65535:
        raise MaskFormatError(f"maxval {maxval} out of range", m_off)
    npix = w * h
    if magic == b"P5":
        bpp = 1 if maxval < 256 else 2
        need = npix * bpp
        if len(data) - body < need:
            raise MaskFormatError(f"truncated payload: need {need} bytes, have {len(data) - body}", len(data))
        dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
        vals = np.frombuffer(data, dtype=dtype, count=npix, offset=body).astype(np.int64)
    else:
        vals = np.empty(npix, dtype=np.int64)
        pos = body
        n = len(data)
        for k in range(npix):
            while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
                if data[pos] == ord("#"):
                    while pos < n and data[pos] not in b"\r\n":
                        pos += 1
                else:
                    pos += 1
            if pos >= n:
                raise MaskFormatError(f"truncated payload: got {k} of {npix} samples", pos)
            start = pos
            while pos < n and data[pos] not in _WS:
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise MaskFormatError(f"bad sample {tok[:16]!r}", start)
            vals[k] = int(tok)
    if vals.size and vals.max() > maxval:
        raise MaskFormatError(f"sample exceeds maxval {maxval}", body)
    return vals.reshape(h, w)


def load_mask(path, threshold: int = 128, invert: bool = False) -> BinaryMask:
    """Load a PGM as a mask: foreground is ``gray >= threshold`` (or the
    complement with ``invert``)."""
    gray = read_pgm(path)
    fg = gray >= threshold
    if invert:
        fg = ~fg
    return BinaryMask.from_array(fg)


def encode_pgm(values: np.ndarray, binary: bool = True, maxval: int = 255) -> bytes:
    values = np.asarray(values)
    h, w = values.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    if binary:
        return header + values.astype(np.uint8).tobytes()
    rows = [" ".join(str(int(v)) for v in row) for row in values]
    return header + ("\n".join(rows) + "\n").encode("ascii")


def save_mask(m: BinaryMask, path, binary: bool = True) -> None:
    """Write a mask as PGM (P5 by default, P2 with ``binary=False``), 255 = foreground."""
    write_bytes(path, encode_pgm(m.values * 255, binary=binary))


def write_bytes(path, payload: bytes) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(payload)
