"""Truncated harmonic-oscillator space: quadrature matrices and Hermite functions.

Units are fixed to hbar = omega = m = 1, so level ``j`` has energy ``j + 1/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# |psi| values above this are rescaled during the Hermite recurrence
_RESCALE_AT = 1e100


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TruncatedSpace:
    """The first ``dim`` oscillator levels |0>, ..., |dim-1>."""

    dim: int

    def __post_init__(self):
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def energies(self) -> np.ndarray:
        return np.arange(self.dim) + 0.5

    @property
    def top_energy(self) -> float:
        return self.dim - 0.5

    def default_grid(self, points: int = 4096) -> np.ndarray:
        """Symmetric grid reaching 1.5 sqrt(2N) + 4, past the top turning point.

        The fixed margin keeps the Gaussian tails of small N on the grid.
        """
        half = 1.5 * np.sqrt(2.0 * self.dim) + 4.0
        return np.linspace(-half, half, points)


@dataclass(frozen=True)
class QuadratureMatrices:
    """Matrix elements <j|op|k> of x, p, x^2 and p^2 on a truncated space.

    ``x2_mat`` and ``p2_mat`` are the exact matrix elements of x^2 and p^2,
    not squares of the truncated ``x_mat``/``p_mat`` (those are wrong in the
    last row and column).
    """

    x_mat: np.ndarray
    p_mat: np.ndarray
    x2_mat: np.ndarray
    p2_mat: np.ndarray
    energies: np.ndarray
    space: TruncatedSpace = field(repr=False)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def z_mat(self) -> np.ndarray:
        """x + i p, which equals sqrt(2) times the annihilation operator."""
        return self.x_mat + 1j * self.p_mat


def build_space(dim: int) -> TruncatedSpace:
    return TruncatedSpace(dim)


def build_quadratures(space: TruncatedSpace) -> QuadratureMatrices:
    n = space.dim
    j = np.arange(n - 1)
    off = np.sqrt((j + 1) / 2.0)

    x = np.zeros((n, n))
    x[j, j + 1] = off
    x[j + 1, j] = off

    p = np.zeros((n, n), dtype=complex)
    p[j, j + 1] = -1j * off
    p[j + 1, j] = 1j * off

    diag = np.arange(n) + 0.5
    k = np.arange(n - 2) if n > 2 else np.arange(0)
    off2 = np.sqrt((k + 1) * (k + 2)) / 2.0
    x2 = np.diag(diag)
    x2[k, k + 2] = off2
    x2[k + 2, k] = off2
    p2 = np.diag(diag)
    p2[k, k + 2] = -off2
    p2[k + 2, k] = -off2

    return QuadratureMatrices(
        x_mat=_frozen(x),
        p_mat=_frozen(p),
        x2_mat=_frozen(x2),
        p2_mat=_frozen(p2),
        energies=_frozen(diag),
        space=space,
    )


def eval_eigenfunctions(space: TruncatedSpace, grid) -> np.ndarray:
    """Normalized Hermite functions phi_j(x), shape ``(dim, len(grid))``.

    Uses the normalized three-term recurrence

        phi_{j+1} = x sqrt(2/(j+1)) phi_j - sqrt(j/(j+1)) phi_{j-1}

    on the Gaussian-stripped functions, carrying a per-point log scale so that
    neither the seed exp(-x^2/2) underflows nor high orders overflow.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("grid contains non-finite values")

    n = space.dim
    out = np.empty((n, x.size))
    log_scale = -0.5 * x * x
    prev = np.zeros_like(x)
    cur = np.full_like(x, np.pi ** -0.25)
    out[0] = cur * np.exp(log_scale)
    for j in range(n - 1):
        nxt = x * np.sqrt(2.0 / (j + 1)) * cur - np.sqrt(j / (j + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE_AT
        if np.any(big):
            s = np.where(big, np.abs(cur), 1.0)
            cur = cur / s
            prev = prev / s
            log_scale = log_scale + np.log(s)
        out[j + 1] = cur * np.exp(log_scale)
    return out
