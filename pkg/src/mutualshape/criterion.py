"""Kernel probability estimates and the energies built on them.

Everything here works on a region ``mu`` (the current consensus) and an
optional working area ``work``; pixels outside ``work`` are ignored and the
working-area size stands in for ``|Omega|``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, GridMismatchError, ShapeSet
from .levelset import LevelSetField, central_gradient

DEFAULT_SIGMA = 0.1
DEFAULT_EPS = 1e-6
LENGTH_BAND = 1.5


class DegenerateRegionError(ValueError):
    """The region or its complement is empty inside the working area."""


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with peak value one: ``K(x) = exp(-x^2 / (2 sigma^2))``."""

    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def __call__(self, x):
        return kernel(x, self)


def kernel(x, k: KernelSpec = KernelSpec()):
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-(x * x) / (2.0 * k.sigma * k.sigma))
    return float(out) if out.ndim == 0 else out


def clamp(p, eps: float = DEFAULT_EPS):
    return np.clip(p, eps, 1.0 - eps)


@dataclass(frozen=True, eq=False)
class QualityParams:
    """Per-input sensitivity ``p`` and specificity ``q``, clamped to ``[eps, 1-eps]``."""

    p: np.ndarray
    q: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        p = clamp(np.asarray(self.p, dtype=np.float64).copy(), self.eps)
        q = clamp(np.asarray(self.q, dtype=np.float64).copy(), self.eps)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("p and q must be 1-D arrays of equal length")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return len(self.p)


@dataclass(frozen=True, eq=False)
class JointProbs:
    """``table[i, a, b] = p(d_i = a, t = b)``, clamped to ``[eps, 1-eps]``.

    ``raw`` keeps the unclamped estimates (each mask's four cells sum to one).
    """

    raw: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64).copy()
        if raw.ndim != 3 or raw.shape[1:] != (2, 2):
            raise ValueError("joint table must have shape (n, 2, 2)")
        raw.setflags(write=False)
        table = clamp(raw, self.eps)
        table.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "table", table)

    @property
    def n(self) -> int:
        return self.raw.shape[0]


@dataclass(frozen=True)
class EnergyBreakdown:
    jh: float
    mi_surrogate: float
    sd: int
    reg: float
    total: float

    def csv_row(self, iteration: int, area: int) -> str:
        return (f"{iteration},{self.jh:.6g},{self.mi_surrogate:.6g},"
                f"{self.reg:.6g},{self.total:.6g},{area}")


CSV_HEADER = "iter,jh,mi,reg,total,area"


def mask_stamp(region: np.ndarray) -> str:
    """Content hash of a region, used to tie statistics to one contour state."""
    packed = np.packbits(np.asarray(region, dtype=bool))
    return hashlib.blake2b(packed.tobytes() + repr(region.shape).encode(), digest_size=12).hexdigest()


def _region_array(s: ShapeSet, mu) -> np.ndarray:
    if isinstance(mu, BinaryMask):
        if mu.grid != s.grid:
            raise GridMismatchError(f"region grid {mu.grid} differs from set grid {s.grid}")
        return mu.values.astype(bool)
    mu = np.asarray(mu, dtype=bool)
    if mu.shape != s.grid.shape:
        raise GridMismatchError(f"region shape {mu.shape} differs from grid {s.grid.shape}")
    return mu


def _work_array(s: ShapeSet, work) -> np.ndarray:
    if work is None:
        return np.ones(s.grid.shape, dtype=bool)
    return _region_array(s, work)


@dataclass(frozen=True, eq=False)
class RegionSums:
    """Kernel sums of each input over the region and its complement.

    ``inside[i, a] = sum_{x in mu} K(d_i(x) - a)``, ``outside`` likewise on
    the complement, both restricted to the working area.
    """

    inside: np.ndarray
    outside: np.ndarray
    mu_area: int
    omu_area: int
    stamp: str

    @property
    def omega_area(self) -> int:
        return self.mu_area + self.omu_area


def region_sums(s: ShapeSet, mu, k: KernelSpec = KernelSpec(), work=None) -> RegionSums:
    region = _region_array(s, mu)
    w = _work_array(s, work)
    inside_sel = region & w
    outside_sel = ~region & w
    d = s.stack.astype(np.float64)
    inside = np.empty((s.n, 2))
    outside = np.empty((s.n, 2))
    for a in (0, 1):
        kv = kernel(d - a, k)
        inside[:, a] = kv[:, inside_sel].sum(axis=1)
        outside[:, a] = kv[:, outside_sel].sum(axis=1)
    return RegionSums(inside, outside, int(inside_sel.sum()), int(outside_sel.sum()),
                      mask_stamp(inside_sel))


def quality_from_sums(rs: RegionSums, eps: float = DEFAULT_EPS) -> QualityParams:
    if rs.mu_area == 0 or rs.omu_area == 0:
        raise DegenerateRegionError(
            f"degenerate region: |mu|={rs.mu_area}, |complement|={rs.omu_area}")
    return QualityParams(rs.inside[:, 1] / rs.mu_area, rs.outside[:, 0] / rs.omu_area, eps)


def joint_from_sums(rs: RegionSums, eps: float = DEFAULT_EPS) -> JointProbs:
    omega = rs.omega_area
    raw = np.empty((rs.inside.shape[0], 2, 2))
    raw[:, :, 1] = rs.inside / omega
    raw[:, :, 0] = rs.outside / omega
    return JointProbs(raw, eps)


def sensitivity_specificity(s: ShapeSet, mu, k: KernelSpec = KernelSpec(), work=None,
                            eps: float = DEFAULT_EPS) -> QualityParams:
    """Kernel estimates of ``p_i = P(d_i=1 | t=1)`` and ``q_i = P(d_i=0 | t=0)``.

    Raises
    ------
    DegenerateRegionError
        If the region or its complement has no pixel in the working area.
    """
    return quality_from_sums(region_sums(s, mu, k, work), eps)


def joint_probs(s: ShapeSet, mu, k: KernelSpec = KernelSpec(), work=None,
                eps: float = DEFAULT_EPS) -> JointProbs:
    return joint_from_sums(region_sums(s, mu, k, work), eps)


def phi_binary(p):
    """``p log p + (1-p) log(1-p)`` (negative binary entropy)."""
    p = np.asarray(p, dtype=np.float64)
    return p * np.log(p) + (1.0 - p) * np.log1p(-p)


def energy_mi(qp: QualityParams, mu_area: int, omu_area: int, omega_area: int | None = None) -> float:
    """Sum of conditional entropies ``H(D_i | T)`` in nats.

    This is the mutual-information term up to the constant ``sum H(D_i)``.
    """
    if omega_area is None:
        omega_area = mu_area + omu_area
    per_mask = -(mu_area / omega_area * phi_binary(qp.p) + omu_area / omega_area * phi_binary(qp.q))
    return float(np.sum(per_mask))


def energy_jh(jp: JointProbs) -> float:
    t = jp.table
    return float(-np.sum(t * np.log(t)))


def energy_sd(s: ShapeSet, mu, work=None) -> int:
    region = _region_array(s, mu)
    w = _work_array(s, work)
    return int(np.count_nonzero((s.stack.astype(bool) ^ region[None]) & w[None]))


def _entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def joint_entropy(joint) -> float:
    return _entropy(joint)


def mutual_information(joint) -> float:
    joint = np.asarray(joint, dtype=np.float64)
    return _entropy(joint.sum(axis=1)) + _entropy(joint.sum(axis=0)) - _entropy(joint)


def phi_metric(joint) -> float:
    """Information distance ``H(X,Y) - I(X,Y) = H(X|Y) + H(Y|X)`` of a 2x2 pmf."""
    joint = np.asarray(joint, dtype=np.float64)
    if joint.shape != (2, 2):
        raise ValueError("expected a 2x2 joint pmf")
    if np.any(joint < 0) or not np.isclose(joint.sum(), 1.0, atol=1e-12):
        raise ValueError("joint pmf entries must be >= 0 and sum to 1")
    return max(joint_entropy(joint) - mutual_information(joint), 0.0)


def contour_length(f: LevelSetField, beta: float = LENGTH_BAND) -> float:
    """Contour length as ``sum delta_beta(u) |grad u|`` with a hat-shaped delta."""
    u = f.u
    delta = np.maximum(0.0, 1.0 - np.abs(u) / beta) / beta
    ux, uy = central_gradient(u)
    return float(np.sum(delta * np.hypot(ux, uy)))


def energy_breakdown(s: ShapeSet, f: LevelSetField, lam: float, mode: str = "mutual",
                     k: KernelSpec = KernelSpec(), work=None, eps: float = DEFAULT_EPS) -> EnergyBreakdown:
    """All energy terms for the contour state ``f``.

    The regularisation enters the total as ``lam * length / |Omega|`` for both
    criteria, i.e. contour length per unit working area.
    """
    region = f.u < 0
    rs = region_sums(s, region, k, work)
    jh = energy_jh(joint_from_sums(rs, eps))
    if rs.mu_area and rs.omu_area:
        mi = energy_mi(quality_from_sums(rs, eps), rs.mu_area, rs.omu_area)
    else:
        mi = float("nan")
    sd = energy_sd(s, region, work)
    reg = contour_length(f)
    scaled_reg = lam * reg / rs.omega_area
    if mode == "mutual":
        total = jh + mi + scaled_reg
    elif mode == "sd":
        total = sd + scaled_reg
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EnergyBreakdown(jh, mi, sd, reg, total)
