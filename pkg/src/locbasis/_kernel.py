"""Compiled inner loop of the greedy rotation search."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def block_entries(theta, alpha, beta):
    c = math.cos(theta)
    s = math.sin(theta)
    b00 = complex(math.cos(alpha), math.sin(alpha)) * c
    b01 = complex(math.cos(beta), math.sin(beta)) * s
    b10 = -complex(math.cos(beta), -math.sin(beta)) * s
    b11 = complex(math.cos(alpha), -math.sin(alpha)) * c
    return b00, b01, b10, b11


@njit(cache=True)
def pair_gain(z, i, j, b00, b01, b10, b11):
    """Change of |z_ii|^2 + |z_jj|^2 when rows i, j are mixed by the block."""
    zii = z[i, i]
    zij = z[i, j]
    zji = z[j, i]
    zjj = z[j, j]
    ni = b00.conjugate() * (zii * b00 + zij * b01) + b01.conjugate() * (zji * b00 + zjj * b01)
    nj = b10.conjugate() * (zii * b10 + zij * b11) + b11.conjugate() * (zji * b10 + zjj * b11)
    # differences taken per component so an unchanged entry contributes exactly 0
    return (((ni.real * ni.real - zii.real * zii.real) + (ni.imag * ni.imag - zii.imag * zii.imag))
            + ((nj.real * nj.real - zjj.real * zjj.real) + (nj.imag * nj.imag - zjj.imag * zjj.imag)))


@njit(cache=True)
def rotate_pair(u, z, i, j, b00, b01, b10, b11):
    n = u.shape[0]
    for k in range(n):
        ui = u[i, k]
        uj = u[j, k]
        u[i, k] = b00 * ui + b01 * uj
        u[j, k] = b10 * ui + b11 * uj
        zi = z[i, k]
        zj = z[j, k]
        z[i, k] = b00.conjugate() * zi + b01.conjugate() * zj
        z[j, k] = b10.conjugate() * zi + b11.conjugate() * zj
    for k in range(n):
        zi = z[k, i]
        zj = z[k, j]
        z[k, i] = zi * b00 + zj * b01
        z[k, j] = zi * b10 + zj * b11


@njit(cache=True)
def greedy_sweep(u, z, rows_a, rows_b, angles, start, stop, min_delta, s,
                 streak, window, max_accepts, hist_pos, hist_s):
    """Process proposals ``start..stop-1`` in place.

    Returns (next position, accepted count, rejection streak, s). Stops early
    once ``streak`` reaches ``window`` or ``max_accepts`` proposals have been
    kept. For each kept proposal the number of proposals consumed so far and
    the running S go to ``hist_pos``/``hist_s``.
    """
    accepted = 0
    t = start
    while t < stop:
        i = rows_a[t]
        j = rows_b[t]
        b00, b01, b10, b11 = block_entries(angles[t, 0], angles[t, 1], angles[t, 2])
        d = pair_gain(z, i, j, b00, b01, b10, b11)
        t += 1
        if d > min_delta:
            rotate_pair(u, z, i, j, b00, b01, b10, b11)
            s += d
            hist_pos[accepted] = t
            hist_s[accepted] = s
            accepted += 1
            streak = 0
            if accepted >= max_accepts:
                break
        else:
            streak += 1
            if streak >= window:
                break
    return t, accepted, streak, s


def warmup():
    """Trigger compilation on a tiny problem."""
    u = np.eye(2, dtype=np.complex128)
    z = np.zeros((2, 2), dtype=np.complex128)
    a = np.zeros(1, dtype=np.int64)
    b = np.ones(1, dtype=np.int64)
    ang = np.zeros((1, 3))
    greedy_sweep(u, z, a, b, ang, 0, 1, 0.0, 0.0, 0, 10, 10,
                 np.zeros(1, dtype=np.int64), np.zeros(1))
