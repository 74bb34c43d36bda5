"""Independent reference computations shared by the unit and acceptance tests."""

import itertools

import numpy as np
from scipy import ndimage

from mutualshape.criterion import (energy_jh, energy_mi, energy_sd, joint_from_sums, quality_from_sums,
                                   region_sums)
from mutualshape.grid import BinaryMask, ShapeSet
from mutualshape.velocity import VelocityContext


def smooth_blob(rng, size, smooth=2.5, level=0.0):
    return ndimage.gaussian_filter(rng.standard_normal((size, size)), smooth) > level


def random_state(seed, size=32, n=4):
    """Correlated inputs (perturbed copies of a hidden shape) and an unrelated-ish region."""
    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.standard_normal((size, size)), 3.0)
    masks = []
    for _ in range(n):
        noise = ndimage.gaussian_filter(rng.standard_normal((size, size)), 2.0)
        masks.append(base + 0.3 * noise / noise.std() * base.std() > 0)
    region = base + 0.6 * ndimage.gaussian_filter(rng.standard_normal((size, size)), 2.5) * base.std() > 0
    region[0, 0], region[-1, -1] = True, False
    s = ShapeSet.from_masks([BinaryMask.from_array(m) for m in masks])
    return s, region


def mutual_energy(s, region):
    """Discrete ``JH + sum H(D_i|T)`` of a region, without regularisation."""
    rs = region_sums(s, region)
    return energy_jh(joint_from_sums(rs)) + energy_mi(quality_from_sums(rs), rs.mu_area, rs.omu_area)


def boundary_pixels(region):
    inner = region & ~ndimage.binary_erosion(region, border_value=1)
    outer = ~region & ndimage.binary_dilation(region)
    return np.argwhere(inner), np.argwhere(outer)


def flip_gradient_check(s, region, velocity_field, energy):
    """Compare single-pixel flip energy changes with first-order predictions.

    Removing an inner boundary pixel changes the energy by about ``-v``;
    adding an outer one by about ``+v``. Returns (signs agree, relative errors).
    """
    e0 = energy(s, region)
    agree, rel = [], []
    inner, outer = boundary_pixels(region)
    for pts, direction in ((inner, -1.0), (outer, 1.0)):
        for r, c in pts:
            flipped = region.copy()
            flipped[r, c] = not flipped[r, c]
            de = energy(s, flipped) - e0
            pred = direction * velocity_field[r, c]
            agree.append(np.sign(de) == np.sign(pred))
            rel.append(abs(de - pred) / max(abs(de), 1e-300))
    return np.array(agree), np.array(rel)


def mutual_velocity(s, region, plus_phi=False):
    ctx = VelocityContext.from_region(s, region)
    v = ctx.v_mi_plus_phi_field() if plus_phi else ctx.v_mi_field()
    return ctx.v_jh_field() + v


def sd_velocity(s, region):
    return VelocityContext.from_region(s, region).v_sd_field()


def brute_force_sd_minimisers(s):
    """All masks minimising the summed symmetric difference, by enumeration."""
    h, w = s.grid.shape
    best, argbest = None, []
    for bits in itertools.product((False, True), repeat=h * w):
        mu = np.array(bits).reshape(h, w)
        e = energy_sd(s, mu)
        if best is None or e < best:
            best, argbest = e, [mu]
        elif e == best:
            argbest.append(mu)
    return best, argbest
