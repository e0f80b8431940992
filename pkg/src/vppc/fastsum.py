"""Compiled pairwise-summation loops (numba).

Everything here is a plain loop nest over float64 arrays, jitted with
``fastmath`` so LLVM can vectorise the inner reductions.  Each target's sum
runs in a fixed source order inside a single thread, so results are
bit-reproducible run to run for a given build and thread count.

The Plummer kernel needs no self-exclusion branch: with a positive softening
the j = i term has zero displacement and contributes exactly (0, 0, 0).
"""
from __future__ import annotations

import numpy as np
import numba
from numba import njit, prange

__all__ = [
    "plummer_field",
    "plummer_pair_potential_parts",
    "sphere_field",
    "softened_inv_sq_sum",
    "tree_field",
]


def _plummer_field_impl(targets, src, w, ep2):
    t_count = targets.shape[0]
    m = src.shape[0]
    out = np.empty((t_count, 3))
    for i in prange(t_count):
        xi = targets[i, 0]
        yi = targets[i, 1]
        zi = targets[i, 2]
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(m):
            dx = xi - src[j, 0]
            dy = yi - src[j, 1]
            dz = zi - src[j, 2]
            r2 = dx * dx + dy * dy + dz * dz + ep2
            s = w[j] / (r2 * np.sqrt(r2))
            ax += s * dx
            ay += s * dy
            az += s * dz
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
    return out


def _plummer_pair_potential_impl(pos, w, ep2):
    m = pos.shape[0]
    part = np.zeros(m)
    for i in prange(m):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        acc = 0.0
        for j in range(i + 1, m):
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz + ep2
            acc += w[j] / np.sqrt(r2)
        part[i] = w[i] * acc
    return part


# The two O(M^2) kernels are compiled twice: the prange scheduler costs about
# 15% even on one thread, so single-thread runs dispatch to a plain serial
# build instead.
_plummer_field_par = njit(cache=True, fastmath=True, parallel=True)(_plummer_field_impl)
_plummer_field_ser = njit(cache=True, fastmath=True)(_plummer_field_impl)
_pair_potential_par = njit(cache=True, fastmath=True, parallel=True)(_plummer_pair_potential_impl)
_pair_potential_ser = njit(cache=True, fastmath=True)(_plummer_pair_potential_impl)


def plummer_field(targets, src, w, ep2):
    """Sum of w_j * d / (|d|^2 + ep2)^{3/2}, d = target - source.  (T, 3)."""
    if numba.get_num_threads() > 1:
        return _plummer_field_par(targets, src, w, ep2)
    return _plummer_field_ser(targets, src, w, ep2)


def plummer_pair_potential_parts(pos, w, ep2):
    """Per-row partial sums of the pair potential w_i w_j / sqrt(r2 + ep2).

    Row i holds the sum over j > i; the caller reduces with np.sum so the
    final reduction order is fixed.
    """
    if numba.get_num_threads() > 1:
        return _pair_potential_par(pos, w, ep2)
    return _pair_potential_ser(pos, w, ep2)


@njit(cache=True, fastmath=True, parallel=True)
def sphere_field(targets, src, w, eps):
    """Sum of the sphere-regularised kernel over sources.  (T, 3).

    Bare Coulomb for separations >= eps, linear interior d/eps^3 below.
    Used for the plasma <-> charge coupling in both directions, where one
    side of the sum is always the small set of charges.
    """
    t_count = targets.shape[0]
    m = src.shape[0]
    e3 = eps * eps * eps
    out = np.empty((t_count, 3))
    for i in prange(t_count):
        xi = targets[i, 0]
        yi = targets[i, 1]
        zi = targets[i, 2]
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(m):
            dx = xi - src[j, 0]
            dy = yi - src[j, 1]
            dz = zi - src[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            if r >= eps:
                s = w[j] / (r2 * r)
            else:
                s = w[j] / e3
            ax += s * dx
            ay += s * dy
            az += s * dz
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
    return out


@njit(cache=True, fastmath=True, parallel=True)
def softened_inv_sq_sum(probes, pos, w, ep2):
    """Sum of w_j / (|x - x_j|^2 + ep2) at each probe.  (P,)."""
    p_count = probes.shape[0]
    m = pos.shape[0]
    out = np.empty(p_count)
    for i in prange(p_count):
        xi = probes[i, 0]
        yi = probes[i, 1]
        zi = probes[i, 2]
        acc = 0.0
        for j in range(m):
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            acc += w[j] / (dx * dx + dy * dy + dz * dz + ep2)
        out[i] = acc
    return out


@njit(cache=True, fastmath=True, parallel=True)
def tree_field(targets, self_idx, node_centroid, node_half, node_weight,
               node_first_child, node_start, node_count,
               ppos, pw, perm, theta, ep2):
    """Barnes-Hut monopole traversal of an array-encoded octree.

    A cell of half-width s whose weight centroid sits at distance d from the
    target is summed as a monopole when 2 s / d < theta, otherwise its eight
    children are visited; leaves are summed particle by particle with the
    Plummer kernel.  ``self_idx[i]`` is the original particle index of target
    i (or -1), excluded from leaf sums by index.

    Returns the field array and, per target, the original index of a source
    found at exactly zero softened distance (-1 if none); the caller turns
    that into an error when the softening is zero.
    """
    t_count = targets.shape[0]
    out = np.empty((t_count, 3))
    bad = np.full(t_count, -1, np.int64)
    th2 = theta * theta
    for i in prange(t_count):
        stack = np.empty(2048, np.int64)
        stack[0] = 0
        sp = 1
        xi = targets[i, 0]
        yi = targets[i, 1]
        zi = targets[i, 2]
        si = self_idx[i]
        ax = 0.0
        ay = 0.0
        az = 0.0
        while sp > 0:
            sp -= 1
            n = stack[sp]
            if node_weight[n] <= 0.0:
                continue
            fc = node_first_child[n]
            if fc >= 0:
                dx = xi - node_centroid[n, 0]
                dy = yi - node_centroid[n, 1]
                dz = zi - node_centroid[n, 2]
                d2 = dx * dx + dy * dy + dz * dz
                s2 = 4.0 * node_half[n] * node_half[n]
                if s2 < th2 * d2:
                    r2 = d2 + ep2
                    s = node_weight[n] / (r2 * np.sqrt(r2))
                    ax += s * dx
                    ay += s * dy
                    az += s * dz
                else:
                    for c in range(8):
                        stack[sp] = fc + c
                        sp += 1
            else:
                for k in range(node_start[n], node_start[n] + node_count[n]):
                    if perm[k] == si:
                        continue
                    dx = xi - ppos[k, 0]
                    dy = yi - ppos[k, 1]
                    dz = zi - ppos[k, 2]
                    r2 = dx * dx + dy * dy + dz * dz + ep2
                    if r2 == 0.0:
                        bad[i] = perm[k]
                        continue
                    s = pw[k] / (r2 * np.sqrt(r2))
                    ax += s * dx
                    ay += s * dy
                    az += s * dz
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
    return out, bad
