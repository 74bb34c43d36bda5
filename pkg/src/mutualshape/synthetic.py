"""Synthetic lozenge fixture: a diamond, four quarter segmentations and an outlier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, RasterGrid, ShapeSet

MIN_SIZE = 64


@dataclass(frozen=True)
class LozengeGeometry:
    size: int
    center: float
    half_diagonal: float
    overlap: int
    outlier_center: tuple[float, float] | None
    outlier_radius: float | None

    @property
    def init_radius(self) -> float:
        """Radius of an initial circle enclosing the lozenge with some margin."""
        return 1.35 * self.half_diagonal


def lozenge_geometry(size: int = 128, half_diagonal_frac: float = 0.27, overlap: int = 2,
                     outlier_area_frac: float = 0.4, with_outlier: bool = True) -> LozengeGeometry:
    if size < MIN_SIZE:
        raise ValueError(f"grid_size must be >= {MIN_SIZE}, got {size}")
    c = (size - 1) / 2.0
    a = half_diagonal_frac * size
    oc = orad = None
    if with_outlier:
        area = outlier_area_frac * 2.0 * a * a
        orad = math.sqrt(area / math.pi)
        # along the top-right diagonal, clear of the lozenge edge by a few pixels
        dist = a / math.sqrt(2.0) + orad + 4.0
        off = dist / math.sqrt(2.0)
        oc = (c + off, c - off)
        if oc[0] + orad > size - 1 or oc[1] - orad < 0:
            raise ValueError(f"grid of size {size} too small to separate the outlier from the lozenge")
    return LozengeGeometry(size, c, a, overlap, oc, orad)


def make_lozenge_set(grid_size: int = 128, with_outlier: bool = False, overlap: int = 2,
                     half_diagonal_frac: float = 0.27, outlier_area_frac: float = 0.4):
    """Ground truth and input set for the lozenge experiment.

    The set is ``[truth, top-left, top-right, bottom-right, bottom-left]``
    (+ ``outlier``). The quarters partition the truth by half-open clipping
    at the two centre axes; the bottom-left quarter additionally reaches
    ``overlap`` pixel rows into the top-left one, so masks 2 and 5 share a
    thin strip along the horizontal axis.

    Returns
    -------
    truth : BinaryMask
    shapes : ShapeSet
    """
    geo = lozenge_geometry(grid_size, half_diagonal_frac, overlap, outlier_area_frac, with_outlier)
    grid = RasterGrid(grid_size, grid_size)
    y, x = np.mgrid[0:grid_size, 0:grid_size].astype(np.float64)
    c, a = geo.center, geo.half_diagonal
    truth = np.abs(x - c) / a + np.abs(y - c) / a <= 1.0
    left, top = x < c, y < c
    quarters = [
        truth & left & top,
        truth & ~left & top,
        truth & ~left & ~top,
        truth & left & (y >= c - overlap),
    ]
    masks = [truth] + quarters
    names = ["truth", "q_top_left", "q_top_right", "q_bottom_right", "q_bottom_left"]
    if with_outlier:
        ox, oy = geo.outlier_center
        outlier = (x - ox) ** 2 + (y - oy) ** 2 <= geo.outlier_radius ** 2
        masks.append(outlier)
        names.append("outlier")
    shapes = ShapeSet(grid, tuple(BinaryMask(grid, m) for m in masks), tuple(names))
    return BinaryMask(grid, truth), shapes


def quadrant_partition(truth: BinaryMask) -> list[BinaryMask]:
    """The four half-open quadrant clips of ``truth`` (no overlap)."""
    g = truth.grid
    y, x = np.mgrid[0:g.height, 0:g.width].astype(np.float64)
    cx, cy = (g.width - 1) / 2.0, (g.height - 1) / 2.0
    t = truth.values.astype(bool)
    left, top = x < cx, y < cy
    parts = [t & left & top, t & ~left & top, t & ~left & ~top, t & left & ~top]
    return [BinaryMask(g, p) for p in parts]
