"""Signed-distance level-set fields.

The region is ``{u < 0}``: ``u`` is negative inside, so ``grad u`` points
outward and the inward unit normal is ``-grad u / |grad u|``. A normal
speed ``F`` (positive = inward) is applied as ``du/dt = F |grad u|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .grid import BinaryMask, RasterGrid

GRAD_EPS = 1e-8
CURVATURE_CLAMP = 1.0
DEFAULT_BAND = 2.0
INTERFACE_SLOPE_TOL = 0.1


@dataclass(frozen=True, eq=False)
class LevelSetField:
    grid: RasterGrid
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, copy=True)
        if u.shape != self.grid.shape:
            raise ValueError(f"field shape {u.shape} does not match grid {self.grid.shape}")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_array(cls, u) -> "LevelSetField":
        u = np.asarray(u, dtype=np.float64)
        return cls(RasterGrid(u.shape[1], u.shape[0]), u)

    @property
    def is_degenerate(self) -> bool:
        """True when the field has no zero crossing (empty or full region)."""
        inside = self.u < 0
        return bool(inside.all() or not inside.any())


def _coords(grid: RasterGrid) -> tuple[np.ndarray, np.ndarray]:
    y, x = np.mgrid[0:grid.height, 0:grid.width]
    return x.astype(np.float64), y.astype(np.float64)


def init_from_mask(m: BinaryMask) -> LevelSetField:
    """Signed distance to the boundary between mask and background pixels.

    Pixels sit at half-pixel distance from the boundary separating them from
    their nearest opposite-label pixel, so signs reproduce the mask exactly.
    An empty (full) mask yields a uniformly positive (negative) field.
    """
    inside = m.values.astype(bool)
    big = float(m.grid.width + m.grid.height)
    if not inside.any():
        return LevelSetField(m.grid, np.full(m.grid.shape, big))
    if inside.all():
        return LevelSetField(m.grid, np.full(m.grid.shape, -big))
    d_out = ndimage.distance_transform_edt(~inside)  # to nearest inside pixel
    d_in = ndimage.distance_transform_edt(inside)  # to nearest outside pixel
    u = np.where(inside, -(d_in - 0.5), d_out - 0.5)
    return LevelSetField(m.grid, u)


def init_circle(grid: RasterGrid, center: tuple[float, float], radius: float) -> LevelSetField:
    """Exact signed distance to a circle; ``center`` is ``(x, y)`` in pixels."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    x, y = _coords(grid)
    return LevelSetField(grid, np.hypot(x - center[0], y - center[1]) - radius)


def bubble_centers(grid: RasterGrid, spacing: float) -> list[tuple[float, float]]:
    xs = np.arange(spacing / 2.0, grid.width, spacing)
    ys = np.arange(spacing / 2.0, grid.height, spacing)
    return [(float(cx), float(cy)) for cy in ys for cx in xs]


def init_bubbles(grid: RasterGrid, spacing: float, radius: float) -> LevelSetField:
    """Union of small circles on a square lattice (pointwise min of distances)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if radius >= min(grid.width, grid.height):
        raise ValueError(f"bubble radius {radius} too large for a {grid.width}x{grid.height} grid")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    x, y = _coords(grid)
    u = np.full(grid.shape, np.inf)
    for cx, cy in bubble_centers(grid, spacing):
        np.minimum(u, np.hypot(x - cx, y - cy) - radius, out=u)
    return LevelSetField(grid, u)


def extract_mask(f: LevelSetField) -> BinaryMask:
    return BinaryMask(f.grid, f.u < 0)


# ---------------------------------------------------------------------------
# finite differences (edge replication at the border)

def _pad(u: np.ndarray) -> np.ndarray:
    return np.pad(u, 1, mode="edge")


def one_sided_differences(u: np.ndarray):
    """Backward/forward differences ``(dxm, dxp, dym, dyp)``; x runs along columns."""
    p = _pad(u)
    c = p[1:-1, 1:-1]
    dxm = c - p[1:-1, :-2]
    dxp = p[1:-1, 2:] - c
    dym = c - p[:-2, 1:-1]
    dyp = p[2:, 1:-1] - c
    return dxm, dxp, dym, dyp


def upwind_gradnorm_array(u: np.ndarray, speed: np.ndarray) -> np.ndarray:
    """Godunov |grad u| for ``du/dt = F |grad u|``, upwinded by ``sign(F)``.

    Positive ``F`` moves the front toward negative ``u``, so information
    arrives from the ``+`` side of increasing ``u``.
    """
    dxm, dxp, dym, dyp = one_sided_differences(u)
    pos = (np.maximum(np.minimum(dxm, 0.0) ** 2, np.maximum(dxp, 0.0) ** 2)
           + np.maximum(np.minimum(dym, 0.0) ** 2, np.maximum(dyp, 0.0) ** 2))
    neg = (np.maximum(np.maximum(dxm, 0.0) ** 2, np.minimum(dxp, 0.0) ** 2)
           + np.maximum(np.maximum(dym, 0.0) ** 2, np.minimum(dyp, 0.0) ** 2))
    return np.sqrt(np.where(np.asarray(speed) >= 0, pos, neg))


def upwind_gradnorm(f: LevelSetField, x: tuple[int, int], speed_sign: int) -> float:
    """Upwind |grad u| at pixel ``x = (row, col)`` for a speed of the given sign."""
    r, c = x
    lo_r, hi_r = max(r - 1, 0), min(r + 2, f.grid.height)
    lo_c, hi_c = max(c - 1, 0), min(c + 2, f.grid.width)
    patch = f.u[lo_r:hi_r, lo_c:hi_c]
    # re-pad by replication so the local stencil matches the array version
    g = upwind_gradnorm_array(patch, np.full(patch.shape, 1.0 if speed_sign >= 0 else -1.0))
    return float(g[r - lo_r, c - lo_c])


def central_gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = _pad(u)
    ux = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    uy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return ux, uy


def curvature_array(u: np.ndarray, eps: float = GRAD_EPS) -> np.ndarray:
    """Mean curvature ``div(grad u / |grad u|)``, clamped to +-1 px^-1.

    Positive on convex parts of the region boundary. Zero where the gradient
    vanishes.
    """
    p = _pad(u)
    c = p[1:-1, 1:-1]
    ux = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    uy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    uxx = p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]
    uyy = p[2:, 1:-1] - 2.0 * c + p[:-2, 1:-1]
    uxy = 0.25 * (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2])
    g2 = ux * ux + uy * uy
    flat = g2 <= eps * eps
    num = uxx * uy * uy - 2.0 * ux * uy * uxy + uyy * ux * ux
    with np.errstate(divide="ignore", invalid="ignore"):
        k = num / np.where(flat, 1.0, g2) ** 1.5
    k = np.where(flat, 0.0, k)
    return np.clip(k, -CURVATURE_CLAMP, CURVATURE_CLAMP)


def curvature(f: LevelSetField, x: tuple[int, int]) -> float:
    r, c = x
    return float(curvature_array(f.u)[r, c])


def sign_change_mask(u: np.ndarray) -> np.ndarray:
    """Pixels having a 4-neighbour on the other side of ``u < 0``."""
    inside = u < 0
    p = np.pad(inside, 1, mode="edge")
    c = p[1:-1, 1:-1]
    return ((p[1:-1, :-2] != c) | (p[1:-1, 2:] != c)
            | (p[:-2, 1:-1] != c) | (p[2:, 1:-1] != c))


def contour_band(f: LevelSetField, beta: float = DEFAULT_BAND) -> np.ndarray:
    """Flat indices of pixels with ``|u| <= beta`` or a sign change next to them."""
    return np.flatnonzero(contour_band_mask(f.u, beta))


def contour_band_mask(u: np.ndarray, beta: float = DEFAULT_BAND) -> np.ndarray:
    return (np.abs(u) <= beta) | sign_change_mask(u)


# ---------------------------------------------------------------------------
# redistancing by fast sweeping

@numba.njit(cache=True)
def _fast_sweep(d, fixed, max_rounds):
    h, w = d.shape
    for _ in range(max_rounds):
        changed = False
        for order in range(4):
            for ii in range(h):
                i = ii if order < 2 else h - 1 - ii
                for jj in range(w):
                    j = jj if order % 2 == 0 else w - 1 - jj
                    if fixed[i, j]:
                        continue
                    a = np.inf
                    if i > 0:
                        a = d[i - 1, j]
                    if i < h - 1 and d[i + 1, j] < a:
                        a = d[i + 1, j]
                    b = np.inf
                    if j > 0:
                        b = d[i, j - 1]
                    if j < w - 1 and d[i, j + 1] < b:
                        b = d[i, j + 1]
                    if a > b:
                        a, b = b, a
                    if a == np.inf:
                        continue
                    if b - a >= 1.0:
                        t = a + 1.0
                    else:
                        t = 0.5 * (a + b + np.sqrt(2.0 - (a - b) * (a - b)))
                    if t < d[i, j] - 1e-13:
                        d[i, j] = t
                        changed = True
        if not changed:
            break
    return d


def _interface_distance(u: np.ndarray, slope_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance estimates ``|u| / |grad u|`` on pixels adjacent to the zero crossing.

    Along an axis with a sign change the slope is the difference across the
    crossing; otherwise a centred difference. Slopes within ``slope_tol`` of
    one are treated as exactly one.
    """
    inside = u < 0
    h, w = u.shape
    p = np.pad(u, 1, mode="edge")
    pin = np.pad(inside, 1, mode="edge")
    c = p[1:-1, 1:-1]

    def axis_slope(lo, hi, lo_in, hi_in):
        cross_lo = lo_in != inside
        cross_hi = hi_in != inside
        cross = np.maximum(np.where(cross_lo, np.abs(c - lo), 0.0),
                           np.where(cross_hi, np.abs(hi - c), 0.0))
        central = 0.5 * np.abs(hi - lo)
        return np.where(cross_lo | cross_hi, cross, central), cross_lo | cross_hi

    gx, cx = axis_slope(p[1:-1, :-2], p[1:-1, 2:], pin[1:-1, :-2], pin[1:-1, 2:])
    gy, cy = axis_slope(p[:-2, 1:-1], p[2:, 1:-1], pin[:-2, 1:-1], pin[2:, 1:-1])
    iface = cx | cy
    g = np.hypot(gx, gy)
    # consistent slopes are left alone so repeated redistancing does not drift the front
    g = np.where(np.abs(g - 1.0) <= slope_tol, 1.0, g)
    d = np.full((h, w), np.inf)
    ok = iface & (g > 0)
    d[ok] = np.abs(c[ok]) / g[ok]
    d[iface & ~ok] = 0.0
    return d, iface


def redistance(f: LevelSetField, max_rounds: int = 20,
               slope_tol: float = INTERFACE_SLOPE_TOL) -> LevelSetField:
    """Rebuild ``f`` as a signed distance function with the same sign map.

    Pixels next to the zero crossing are rescaled to ``u / |grad u|`` (only
    where the slope is off by more than ``slope_tol``) and kept fixed; all
    other pixels are filled by Gauss-Seidel Eikonal sweeps in four
    alternating orders. A field without a sign change, or one that its own
    interface values already regenerate through the sweeps (in particular any
    output of this function), is returned unchanged.
    """
    if f.is_degenerate:
        return f
    # a field its own interface values already regenerate is a discrete distance field
    iface = sign_change_mask(f.u)
    a = np.abs(f.u)
    keep = _fast_sweep(np.where(iface, a, np.inf), iface, max_rounds)
    if np.all(np.abs(keep - a) <= 1e-9 * (1.0 + a)):
        return f
    d, iface = _interface_distance(f.u, slope_tol)
    d = _fast_sweep(d, iface, max_rounds)
    u = np.where(f.u < 0, -d, d)
    return LevelSetField(f.grid, u)


def eikonal_gradnorm(u: np.ndarray) -> np.ndarray:
    """Upwind gradient magnitude of the unsigned distance ``|u|``.

    This is the viscosity-solution stencil the sweeps solve, so it is well
    defined on medial-axis kinks where centred differences collapse.
    """
    a = np.abs(u)
    dxm, dxp, dym, dyp = one_sided_differences(a)
    gx = np.maximum(np.maximum(dxm, -dxp), 0.0)
    gy = np.maximum(np.maximum(dym, -dyp), 0.0)
    return np.hypot(gx, gy)


def distance_to_contour_mask(u: np.ndarray, distance: float) -> np.ndarray:
    """Pixels farther than ``distance`` from the zero crossing (via |u| of a redistanced copy)."""
    f = redistance(LevelSetField.from_array(u))
    return np.abs(f.u) > distance


def dump_field(f: LevelSetField, path_base) -> None:
    """Write ``<base>.raw`` (float32, row-major) and ``<base>.txt`` (dims, min, max)."""
    base = str(path_base)
    f.u.astype("<f4").tofile(base + ".raw")
    with open(base + ".txt", "w") as fh:
        fh.write(f"width={f.grid.width}\nheight={f.grid.height}\n"
                 f"min={float(f.u.min()):.9g}\nmax={float(f.u.max()):.9g}\n")
