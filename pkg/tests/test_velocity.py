import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import flip_gradient_check, mutual_energy, mutual_velocity, random_state

from mutualshape.criterion import JointProbs, KernelSpec, QualityParams, energy_sd, mask_stamp
from mutualshape.grid import BinaryMask, RasterGrid, ShapeSet
from mutualshape.levelset import curvature_array, init_circle, init_from_mask
from mutualshape.velocity import (StaleStatisticsError, VelocityContext, composite_F, reg_weight,
                                  speed_field, v_jh, v_mi, v_reg, v_sd)


def context(masks, p, q, table=None, omega=None, lam=0.0, region=None):
    s = ShapeSet.from_masks([BinaryMask.from_array(np.asarray(m)) for m in masks])
    if table is None:
        table = np.full((s.n, 2, 2), 0.25)
    region = np.zeros(s.grid.shape, bool) if region is None else region
    return VelocityContext(s, QualityParams(p, q), JointProbs(table), omega or s.grid.size,
                           KernelSpec(), lam, mask_stamp(region))


def mi_oracle(d, p, q, omega, sigma=0.1):
    k1 = math.exp(-((d - 1) ** 2) / (2 * sigma ** 2))
    k0 = math.exp(-(d ** 2) / (2 * sigma ** 2))
    phi = lambda t: t * math.log(t) + (1 - t) * math.log(1 - t)
    return ((p - k1) * math.log(p / (1 - p)) - (q - k0) * math.log(q / (1 - q)) + phi(q) - phi(p)) / omega


# -- v_sd ------------------------------------------------------------------------------

@pytest.mark.parametrize("cover,want", [((1, 1, 1, 1, 1), -5), ((0, 0, 0, 0, 0), 5), ((1, 1, 1, 0, 0), -1)])
def test_v_sd(cover, want):
    ctx = context([[[c]] for c in cover], [0.5] * 5, [0.5] * 5)
    assert v_sd(ctx, (0, 0)) == want


# -- v_mi ------------------------------------------------------------------------------

def test_v_mi_half_quality():
    ctx = context([[[1, 0]], [[0, 1]]], [0.5, 0.5], [0.5, 0.5])
    assert v_mi(ctx, (0, 0)) == pytest.approx(0.0, abs=1e-15)
    plus_phi = ctx.v_mi_plus_phi_field()[0, 0]
    assert plus_phi == pytest.approx(-2 * 2 * math.log(2) / 2, rel=1e-12)


def test_v_mi_hand_evaluation():
    ctx = context([np.ones((10, 10))], [0.9], [0.9])
    assert v_mi(ctx, (3, 4)) == pytest.approx(mi_oracle(1, 0.9, 0.9, 100), rel=1e-12)
    # (0.9-1) log 9 - (0.9-0) log 9, entropy terms cancel
    assert v_mi(ctx, (3, 4)) == pytest.approx(-math.log(9) / 100, rel=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 1), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_v_mi_label_swap_antisymmetry(d, p, q):
    a = context([[[d]]], [p], [q])
    b = context([[[1 - d]]], [q], [p])
    # relabelling inside/outside reverses the normal, hence the velocity
    assert v_mi(b, (0, 0)) == pytest.approx(-v_mi(a, (0, 0)), abs=1e-12)
    assert v_mi(a, (0, 0)) == pytest.approx(mi_oracle(d, p, q, 1), abs=1e-12)


# -- v_jh ------------------------------------------------------------------------------

def test_v_jh_examples():
    t = np.array([[[0.4, 0.1], [0.1, 0.4]]])  # [a, b] = p(d=a, t=b)
    ctx = context([[[1]]], [0.5], [0.5], table=t)
    assert v_jh(ctx, (0, 0)) == pytest.approx(-math.log(4), rel=1e-12)
    balanced = context([[[1]]], [0.5], [0.5], table=np.array([[[0.3, 0.3], [0.2, 0.2]]]))
    assert v_jh(balanced, (0, 0)) == 0.0
    swapped = context([[[1]]], [0.5], [0.5], table=t[:, :, ::-1])
    assert v_jh(swapped, (0, 0)) == pytest.approx(math.log(4), rel=1e-12)


def test_scale_with_working_area():
    t = np.array([[[0.35, 0.15], [0.2, 0.3]]])
    a = context([[[1, 0]]], [0.7], [0.6], table=t, omega=50)
    b = context([[[1, 0]]], [0.7], [0.6], table=t, omega=100)
    for x in [(0, 0), (0, 1)]:
        assert v_mi(b, x) == v_mi(a, x) / 2
        assert v_jh(b, x) == v_jh(a, x) / 2


def test_whole_field_matches_pixel_functions():
    s, region = random_state(5, size=16, n=3)
    ctx = VelocityContext.from_region(s, region)
    vm, vj, vs = ctx.v_mi_field(), ctx.v_jh_field(), ctx.v_sd_field()
    for r, c in [(0, 0), (3, 7), (15, 15), (8, 2)]:
        assert vm[r, c] == pytest.approx(v_mi(ctx, (r, c)), rel=1e-12, abs=1e-18)
        assert vj[r, c] == pytest.approx(v_jh(ctx, (r, c)), rel=1e-12, abs=1e-18)
        assert vs[r, c] == v_sd(ctx, (r, c))


# -- composition -------------------------------------------------------------------------

def test_composite_lambda_zero_and_sd_zero():
    s, region = random_state(7, size=16, n=4)
    f = init_from_mask(BinaryMask.from_array(region))
    ctx = VelocityContext.from_region(s, region, lam=0.0)
    x = (5, 5)
    assert composite_F(ctx, f, x, "mutual") == v_jh(ctx, x) + v_mi(ctx, x)
    tie = ShapeSet.from_masks([BinaryMask.from_array(np.eye(4)), BinaryMask.from_array(1 - np.eye(4))])
    reg = np.zeros((4, 4), bool)
    reg[:2] = True
    ctx_tie = VelocityContext.from_region(tie, reg, lam=0.0)
    assert composite_F(ctx_tie, init_from_mask(BinaryMask.from_array(reg)), (1, 1), "sd") == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 20.0))
def test_composite_is_component_sum(seed, lam):
    s, region = random_state(seed, size=16, n=3)
    f = init_from_mask(BinaryMask.from_array(region))
    ctx = VelocityContext.from_region(s, region, lam=lam)
    w = lam / s.grid.size
    assert reg_weight(ctx) == w
    for x in [(2, 3), (8, 8), (12, 1)]:
        want = v_jh(ctx, x) + v_mi(ctx, x) + w * v_reg(f, x)
        assert composite_F(ctx, f, x, "mutual") == pytest.approx(want, rel=1e-12, abs=1e-18)
        assert composite_F(ctx, f, x, "sd") == pytest.approx(v_sd(ctx, x) + w * v_reg(f, x))


def test_v_reg_is_curvature():
    f = init_circle(RasterGrid(40, 40), (19.5, 19.5), 10.0)
    assert v_reg(f, (19, 29)) == curvature_array(f.u)[19, 29]


def test_speed_field_band_and_work():
    g = RasterGrid(40, 40)
    f = init_circle(g, (19.5, 19.5), 10.0)
    region = f.u < 0
    s = ShapeSet.from_masks([BinaryMask.from_array(region), BinaryMask.from_array(np.roll(region, 3, 0))])
    F = speed_field(VelocityContext.from_region(s, region, lam=5.0), f)
    assert F[19, 19] == 0.0 and F[0, 0] == 0.0
    assert np.count_nonzero(F) > 0
    work = np.zeros((40, 40), bool)
    work[:, :20] = True
    Fw = speed_field(VelocityContext.from_region(s, region, lam=5.0, work=work), f)
    assert np.all(Fw[:, 20:] == 0.0)


def test_stale_context_rejected():
    g = RasterGrid(30, 30)
    f = init_circle(g, (14.5, 14.5), 8.0)
    s = ShapeSet.from_masks([BinaryMask.from_array(f.u < 0)] * 2)
    ctx = VelocityContext.from_region(s, f.u < 0)
    moved = init_circle(g, (14.5, 14.5), 6.0)
    with pytest.raises(StaleStatisticsError):
        composite_F(ctx, moved, (14, 14))
    with pytest.raises(StaleStatisticsError):
        speed_field(ctx, moved)


# -- gradient consistency -----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_mutual_velocity_matches_flip_differences(seed):
    s, region = random_state(seed)
    agree, rel = flip_gradient_check(s, region, mutual_velocity(s, region), mutual_energy)
    assert agree.mean() >= 0.85
    assert np.median(rel) <= 0.15


@pytest.mark.parametrize("seed", range(5))
def test_sd_velocity_is_exact(seed):
    s, region = random_state(seed)
    ctx = VelocityContext.from_region(s, region)
    agree, rel = flip_gradient_check(s, region, ctx.v_sd_field(), lambda s_, m: energy_sd(s_, m))
    assert agree.all() and np.all(rel == 0.0)
