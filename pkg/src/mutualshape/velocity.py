"""Normal velocities of the evolving contour.

Positive velocity moves the contour along the inward normal, i.e. removes
pixels from the region. For a boundary pixel ``x`` the first-order energy
change is ``-v(x)`` when ``x`` is removed from the region and ``+v(x)`` when
it is added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criterion import (DEFAULT_EPS, JointProbs, KernelSpec, QualityParams, RegionSums,
                        joint_from_sums, kernel, mask_stamp, phi_binary, quality_from_sums,
                        region_sums)
from .grid import ShapeSet
from .levelset import LevelSetField, contour_band_mask, curvature_array

MODES = ("mutual", "sd")


class StaleStatisticsError(RuntimeError):
    """The statistics in a context were computed for a different contour state."""


@dataclass(frozen=True, eq=False)
class VelocityContext:
    """Statistics frozen for one iteration, plus the regularisation weight."""

    shapes: ShapeSet
    quality: QualityParams
    joint: JointProbs
    omega_area: int
    kernel: KernelSpec
    lam: float
    stamp: str
    work: np.ndarray | None = None

    @classmethod
    def from_region(cls, s: ShapeSet, region, lam: float = 0.0, k: KernelSpec = KernelSpec(),
                    work=None, eps: float = DEFAULT_EPS) -> "VelocityContext":
        rs = region_sums(s, region, k, work)
        return cls.from_sums(s, rs, lam, k, work, eps)

    @classmethod
    def from_sums(cls, s: ShapeSet, rs: RegionSums, lam: float, k: KernelSpec,
                  work=None, eps: float = DEFAULT_EPS) -> "VelocityContext":
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        w = None if work is None else np.asarray(getattr(work, "values", work), dtype=bool)
        return cls(s, quality_from_sums(rs, eps), joint_from_sums(rs, eps), rs.omega_area,
                   k, float(lam), rs.stamp, w)

    def check_fresh(self, f: LevelSetField) -> None:
        region = f.u < 0
        if self.work is not None:
            region = region & self.work
        if mask_stamp(region) != self.stamp:
            raise StaleStatisticsError("velocity context was computed for another contour state")

    # -- whole-grid fields --------------------------------------------------

    def _kernels(self):
        d = self.shapes.stack.astype(np.float64)
        return kernel(d - 1.0, self.kernel), kernel(d, self.kernel)

    def v_sd_field(self) -> np.ndarray:
        return (self.shapes.n - 2 * self.shapes.stack.sum(axis=0, dtype=np.int64)).astype(np.float64)

    def v_mi_field(self) -> np.ndarray:
        p = self.quality.p[:, None, None]
        q = self.quality.q[:, None, None]
        k1, k0 = self._kernels()
        terms = ((p - k1) * np.log(p / (1 - p)) - (q - k0) * np.log(q / (1 - q))
                 + phi_binary(q) - phi_binary(p))
        return terms.sum(axis=0) / self.omega_area

    def v_mi_plus_phi_field(self) -> np.ndarray:
        """Variant with ``+phi(p)`` in place of ``-phi(p)``; kept for comparison only."""
        p = self.quality.p[:, None, None]
        return self.v_mi_field() + 2.0 * phi_binary(p).sum(axis=0) / self.omega_area

    def v_jh_field(self) -> np.ndarray:
        t = self.joint.table
        r1 = np.log(t[:, 1, 1] / t[:, 1, 0])[:, None, None]
        r0 = np.log(t[:, 0, 1] / t[:, 0, 0])[:, None, None]
        k1, k0 = self._kernels()
        return -(k1 * r1 + k0 * r0).sum(axis=0) / self.omega_area

    def data_field(self, mode: str) -> np.ndarray:
        if mode == "mutual":
            return self.v_jh_field() + self.v_mi_field()
        if mode == "sd":
            return self.v_sd_field()
        raise ValueError(f"unknown mode {mode!r}")


def v_sd(ctx: VelocityContext, x: tuple[int, int]) -> float:
    """``sum_i (1 - 2 d_i(x)) = n - 2k`` with ``k`` the number of masks covering ``x``."""
    k = int(ctx.shapes.stack[(slice(None),) + tuple(x)].sum())
    return float(ctx.shapes.n - 2 * k)


def _column(ctx: VelocityContext, x):
    r, c = x
    d = ctx.shapes.stack[:, r, c].astype(np.float64)
    return kernel(d - 1.0, ctx.kernel), kernel(d, ctx.kernel)


def v_mi(ctx: VelocityContext, x: tuple[int, int]) -> float:
    p, q = ctx.quality.p, ctx.quality.q
    k1, k0 = _column(ctx, x)
    terms = ((p - k1) * np.log(p / (1 - p)) - (q - k0) * np.log(q / (1 - q))
             + phi_binary(q) - phi_binary(p))
    return float(terms.sum() / ctx.omega_area)


def v_jh(ctx: VelocityContext, x: tuple[int, int]) -> float:
    t = ctx.joint.table
    k1, k0 = _column(ctx, x)
    s = k1 * np.log(t[:, 1, 1] / t[:, 1, 0]) + k0 * np.log(t[:, 0, 1] / t[:, 0, 0])
    return float(-s.sum() / ctx.omega_area)


def v_reg(f: LevelSetField, x: tuple[int, int]) -> float:
    return float(curvature_array(f.u)[tuple(x)])


def reg_weight(ctx: VelocityContext) -> float:
    """Multiplier of the curvature term: ``lambda / |Omega|``."""
    return ctx.lam / ctx.omega_area


def composite_F(ctx: VelocityContext, f: LevelSetField, x: tuple[int, int], mode: str = "mutual") -> float:
    ctx.check_fresh(f)
    if mode == "mutual":
        data = v_jh(ctx, x) + v_mi(ctx, x)
    elif mode == "sd":
        data = v_sd(ctx, x)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if ctx.lam == 0:
        return data
    return data + reg_weight(ctx) * v_reg(f, x)


def speed_field(ctx: VelocityContext, f: LevelSetField, mode: str = "mutual",
                band: np.ndarray | None = None) -> np.ndarray:
    """Composite speed on the contour band (zero elsewhere and outside the working area)."""
    ctx.check_fresh(f)
    if band is None:
        band = contour_band_mask(f.u)
    F = ctx.data_field(mode)
    if ctx.lam != 0:
        F = F + reg_weight(ctx) * curvature_array(f.u)
    F = np.where(band, F, 0.0)
    if ctx.work is not None:
        F = np.where(ctx.work, F, 0.0)
    return F
