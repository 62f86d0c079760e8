"""Compiled inner loop of the lattice update.

The arithmetic mirrors :func:`dbmc.tdgl.euler_step` term for term (same
neighbour order, same association) so the compiled and numpy paths agree
bitwise on the field.
"""
import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def field_total(f):
    L = f.shape[0]
    tot = 0.0
    for i in range(L):
        for j in range(L):
            tot += f[i, j]
    return tot


@nb.njit(cache=True)
def integrate_chunk(fields, thetas, chi, diffusion, dt, dx, amp, noise, first_step,
                    pi, pj, point_step, point_out, total_out, spacetime, step_totals, scratch):
    """Advance every field in ``fields`` through ``noise.shape[0]`` steps.

    All ``k`` fields see the same noise. Returns -1 on success, otherwise the
    (1-based) step index at which a non-finite value appeared.
    """
    k = fields.shape[0]
    L = fields.shape[1]
    m = noise.shape[0]
    dx2 = dx * dx
    ddt = diffusion * dt
    record = step_totals.shape[1] > 0
    for s in range(m):
        step = first_step + s
        for q in range(k):
            th = thetas[q]
            f = fields[q]
            for i in range(L):
                ip = i + 1 if i + 1 < L else 0
                im = i - 1 if i > 0 else L - 1
                for j in range(L):
                    jp = j + 1 if j + 1 < L else 0
                    jm = j - 1 if j > 0 else L - 1
                    c = f[i, j]
                    lap = (f[im, j] + f[ip, j] + f[i, jm] + f[i, jp] - 4.0 * c) / dx2
                    scratch[i, j] = c + ddt * lap - dt * (-th * c + chi * c * c * c) + amp * noise[s, i, j]
            tot = 0.0
            for i in range(L):
                for j in range(L):
                    f[i, j] = scratch[i, j]
                    tot += scratch[i, j]
            if not math.isfinite(tot):
                return step
            spacetime[q] += tot
            if record:
                step_totals[q, step] = tot
            if step == point_step:
                point_out[q] = f[pi, pj]
                total_out[q] = tot
    return -1
