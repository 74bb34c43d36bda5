"""Explicit level-set evolution with jointly re-estimated statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .criterion import (CSV_HEADER, DEFAULT_EPS, DEFAULT_SIGMA, DegenerateRegionError,
                        EnergyBreakdown, KernelSpec, QualityParams, contour_length, energy_jh, energy_mi,
                        energy_sd, quality_from_sums, region_sums)
from .grid import BinaryMask, ShapeSet
from .levelset import (DEFAULT_BAND, LevelSetField, contour_band_mask, extract_mask,
                       init_bubbles, init_circle, init_from_mask, redistance,
                       upwind_gradnorm_array)
from .velocity import MODES, VelocityContext, reg_weight, speed_field

log = logging.getLogger(__name__)

PARABOLIC_LIMIT = 0.25
DEFAULT_RADIUS_FRAC = 0.35


class EvolutionError(RuntimeError):
    def __init__(self, message: str, trace: "EvolutionTrace"):
        super().__init__(message)
        self.trace = trace


class DegenerateEvolutionError(EvolutionError):
    """The contour vanished or swallowed the whole working area."""


class NumericalError(EvolutionError):
    """A non-finite speed appeared."""


@dataclass
class EvolutionConfig:
    lam: float = 10.0
    sigma: float = DEFAULT_SIGMA
    cfl: float = 0.45
    max_iters: int = 1000
    reinit_every: int = 20
    conv_window: int = 25
    conv_tol: int = 0
    mode: str = "mutual"
    init: str = "circle"
    init_radius: float | None = None
    bubble_spacing: float = 16.0
    bubble_radius: float = 5.0
    band: float = DEFAULT_BAND
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.max_iters < 1 or self.reinit_every < 1 or self.conv_window < 1:
            raise ValueError("max_iters, reinit_every and conv_window must be >= 1")
        if self.conv_tol < 0:
            raise ValueError("conv_tol must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.init in ("circle", "bubbles") or self.init.startswith("mask:")):
            raise ValueError("init must be 'circle', 'bubbles' or 'mask:PATH'")

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    energy: EnergyBreakdown
    p: np.ndarray
    q: np.ndarray
    area: int
    changed: int


@dataclass
class EvolutionTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def to_csv(self) -> str:
        n = len(self.records[0].p) if self.records else 0
        cols = CSV_HEADER.split(",") + ["sd", "changed"]
        cols += [f"p{i + 1}" for i in range(n)] + [f"q{i + 1}" for i in range(n)]
        lines = [",".join(cols)]
        for r in self.records:
            row = [r.energy.csv_row(r.iteration, r.area), str(r.energy.sd), str(r.changed)]
            row += [f"{v:.6g}" for v in r.p] + [f"{v:.6g}" for v in r.q]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def check_convergence(trace: EvolutionTrace, cfg: EvolutionConfig) -> bool:
    """True once the mask changed by at most ``conv_tol`` pixels for ``conv_window`` iterations."""
    if len(trace) < cfg.conv_window:
        return False
    return all(r.changed <= cfg.conv_tol for r in trace.records[-cfg.conv_window:])


def initial_field(s: ShapeSet, cfg: EvolutionConfig, init_mask: BinaryMask | None = None) -> LevelSetField:
    g = s.grid
    if cfg.init == "circle":
        # about 38% of the grid inside, so region and complement statistics stay comparable
        r = cfg.init_radius if cfg.init_radius is not None else DEFAULT_RADIUS_FRAC * min(g.width, g.height)
        return init_circle(g, ((g.width - 1) / 2.0, (g.height - 1) / 2.0), r)
    if cfg.init == "bubbles":
        return init_bubbles(g, cfg.bubble_spacing, cfg.bubble_radius)
    if init_mask is None:
        from .grid import load_mask
        init_mask = load_mask(cfg.init[len("mask:"):])
    return init_from_mask(init_mask)


@dataclass
class EvolutionResult:
    mask: BinaryMask
    quality: QualityParams
    trace: EvolutionTrace
    field: LevelSetField
    converged: bool

    def __iter__(self):
        # unpacks as (mask, quality, trace)
        return iter((self.mask, self.quality, self.trace))


def evolve(s: ShapeSet, cfg: EvolutionConfig = EvolutionConfig(), *, init: LevelSetField | None = None,
           init_mask: BinaryMask | None = None, work: BinaryMask | None = None,
           callback: Callable[[int, LevelSetField, np.ndarray], None] | None = None) -> EvolutionResult:
    """Evolve a contour to minimise the mutual (or SD) criterion.

    Each iteration extracts the region, re-estimates ``p``, ``q`` and the joint
    tables on it, evaluates the composite speed on the contour band, and
    takes an explicit upwind step ``u += dt F |grad u|`` with
    ``dt = cfl / max|F|``, capped at ``1 / (4 w)`` for a curvature weight
    ``w`` so the parabolic part stays stable. The field is redistanced every ``reinit_every``
    iterations. ``callback(iteration, field, speed)`` sees the state each
    iteration started from and the speed applied to it.

    Raises
    ------
    DegenerateEvolutionError
        If the region becomes empty or fills the working area.
    NumericalError
        If the speed becomes non-finite.
    """
    if s.n < 2:
        raise ValueError("evolution needs at least two input masks")
    k = KernelSpec(cfg.sigma)
    f = init if init is not None else initial_field(s, cfg, init_mask)
    if f.grid != s.grid:
        raise ValueError("initial field grid differs from the shape set grid")
    work_arr = None if work is None else work.values.astype(bool)
    trace = EvolutionTrace()
    u = np.array(f.u)
    converged = False
    quality = None
    dt_capped = 0

    for it in range(cfg.max_iters):
        f = LevelSetField(s.grid, u)
        region = u < 0
        rs = region_sums(s, region, k, work_arr)
        try:
            ctx = VelocityContext.from_sums(s, rs, cfg.lam, k, work_arr, cfg.eps)
        except DegenerateRegionError as exc:
            raise DegenerateEvolutionError(f"contour degenerated at iteration {it}: {exc}", trace) from exc
        quality = ctx.quality

        band = contour_band_mask(u, cfg.band)
        F = speed_field(ctx, f, cfg.mode, band)
        if not np.all(np.isfinite(F)):
            raise NumericalError(f"non-finite speed at iteration {it}", trace)
        fmax = float(np.max(np.abs(F)))
        dt = cfg.cfl / max(fmax, 1e-12)
        if ctx.lam > 0:
            # explicit curvature flow is parabolic: keep w * dt <= h^2 / 4
            dt = min(dt, PARABOLIC_LIMIT / reg_weight(ctx))
        dt_capped += dt < cfg.cfl / max(fmax, 1e-12)
        u = u + dt * F * upwind_gradnorm_array(u, F)
        if (it + 1) % cfg.reinit_every == 0:
            u = np.array(redistance(LevelSetField(s.grid, u)).u)

        changed = int(np.count_nonzero((u < 0) != region))
        jh = energy_jh(ctx.joint)
        mi = energy_mi(ctx.quality, rs.mu_area, rs.omu_area)
        sd = energy_sd(s, region, work_arr)
        reg = contour_length(f)
        scaled = cfg.lam * reg / rs.omega_area
        total = jh + mi + scaled if cfg.mode == "mutual" else sd + scaled
        trace.append(TraceRecord(it, EnergyBreakdown(jh, mi, sd, reg, total),
                                 ctx.quality.p.copy(), ctx.quality.q.copy(), rs.mu_area, changed))
        if callback is not None:
            callback(it, f, F)
        if check_convergence(trace, cfg):
            converged = True
            break

    f = LevelSetField(s.grid, u)
    final = extract_mask(f)
    try:
        quality = quality_from_sums(region_sums(s, final.values.astype(bool), k, work_arr), cfg.eps)
    except DegenerateRegionError as exc:
        raise DegenerateEvolutionError(f"contour degenerated at the final step: {exc}", trace) from exc
    log.info("evolution stopped after %d iterations (converged=%s, curvature-limited steps=%d)",
             len(trace), converged, dt_capped)
    return EvolutionResult(final, quality, trace, f, converged)
