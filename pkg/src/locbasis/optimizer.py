"""Greedy Monte-Carlo search for a phase-space localized orthonormal basis.

The basis is an N x N unitary ``U``; row ``n`` expands the localized state
|n~> over oscillator levels. Because sum_n <x^2>_n + <p^2>_n = N^2 for every
unitary ``U``, minimizing the total variance is the same as maximizing

    S = sum_n <n~|x|n~>^2 + <n~|p|n~>^2 = sum_n |<n~|x + ip|n~>|^2.

Moves mix two random rows with a random three-angle SU(2) block and are kept
only if S increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel
from .oscillator import QuadratureMatrices, TruncatedSpace

log = logging.getLogger(__name__)

_BATCH = 1 << 16
UNITARITY_TOL = 1e-10
BLOWUP_TOL = 1e-6


class OptimizerError(RuntimeError):
    """Numerical state of the basis is no longer trustworthy."""


@dataclass
class LocalizedBasis:
    coeffs: np.ndarray
    space: TruncatedSpace

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        n = self.space.dim
        if self.coeffs.shape != (n, n):
            raise ValueError(f"coeffs must be {n}x{n}, got {self.coeffs.shape}")

    @property
    def dim(self) -> int:
        return self.space.dim

    def unitarity_residual(self) -> float:
        u = self.coeffs
        return float(np.max(np.abs(u @ u.conj().T - np.eye(self.dim))))

    def copy(self) -> "LocalizedBasis":
        return LocalizedBasis(self.coeffs.copy(), self.space)


@dataclass(frozen=True)
class RotationProposal:
    row_a: int
    row_b: int
    theta: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.row_a == self.row_b:
            raise ValueError("rotation rows must differ")

    def block(self) -> np.ndarray:
        b = _kernel.block_entries(self.theta, self.alpha, self.beta)
        return np.array([[b[0], b[1]], [b[2], b[3]]])


@dataclass
class OptimizerConfig:
    """Settings for :func:`run`.

    ``max_proposals`` and ``saturation_window`` default to 2e6*N and 5000*N.
    ``theta_max`` switches to small-angle proposals (theta uniform on
    [0, theta_max]); the default draws all three angles on [0, 2pi).
    """

    seed: int = 0
    max_proposals: int | None = None
    saturation_window: int | None = None
    min_delta: float = 0.0
    renorm_interval: int = 10_000
    rel_tol: float = 1e-9
    theta_max: float | None = None

    def __post_init__(self):
        if self.max_proposals is not None and self.max_proposals < 1:
            raise ValueError("max_proposals must be >= 1")
        if self.saturation_window is not None and self.saturation_window < 1:
            raise ValueError("saturation_window must be >= 1")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")
        if self.renorm_interval < 1:
            raise ValueError("renorm_interval must be >= 1")
        if self.theta_max is not None and not 0 < self.theta_max <= 2 * math.pi:
            raise ValueError("theta_max must lie in (0, 2pi]")

    def resolved(self, dim: int) -> tuple[int, int]:
        max_prop = self.max_proposals if self.max_proposals is not None else 2_000_000 * dim
        window = self.saturation_window if self.saturation_window is not None else 5000 * dim
        return max_prop, window

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationTrace:
    accepted_count: int = 0
    rejected_count: int = 0
    history_pos: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    history_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    final_s: float = 0.0
    stop_reason: str = ""
    checkpoints: int = 0

    @property
    def proposals(self) -> int:
        return self.accepted_count + self.rejected_count

    @property
    def s_history(self) -> list[tuple[int, float]]:
        """(proposals consumed, S) after the start and after each kept move."""
        return list(zip(self.history_pos.tolist(), self.history_s.tolist()))

    def summary(self, max_samples: int = 512) -> dict:
        """JSON-ready digest with a thinned S history."""
        k = len(self.history_s)
        if k > max_samples:
            idx = np.unique(np.geomspace(1, k, max_samples).astype(int) - 1)
        else:
            idx = np.arange(k)
        return {
            "accepted_count": int(self.accepted_count),
            "rejected_count": int(self.rejected_count),
            "final_s": float(self.final_s),
            "stop_reason": self.stop_reason,
            "checkpoints": int(self.checkpoints),
            "s_history": [[int(self.history_pos[i]), float(self.history_s[i])] for i in idx],
        }


@dataclass
class QuadratureMoments:
    mean_x: np.ndarray
    mean_p: np.ndarray
    mean_x2: np.ndarray
    mean_p2: np.ndarray

    @property
    def dx2(self) -> np.ndarray:
        return self.mean_x2 - self.mean_x ** 2

    @property
    def dp2(self) -> np.ndarray:
        return self.mean_p2 - self.mean_p ** 2


def init_identity(space: TruncatedSpace) -> LocalizedBasis:
    return LocalizedBasis(np.eye(space.dim, dtype=np.complex128), space)


def _expect_diag(u: np.ndarray, op: np.ndarray) -> np.ndarray:
    # <n~|op|n~> = sum_jk conj(U_nj) op_jk U_nk
    return np.einsum("nj,jk,nk->n", u.conj(), op, u)


def _real(values: np.ndarray, what: str) -> np.ndarray:
    resid = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if resid > 1e-9:
        raise OptimizerError(f"{what} has imaginary residue {resid:.3e}; basis is corrupted")
    return values.real


def quadrature_moments(basis: LocalizedBasis, quads: QuadratureMatrices) -> QuadratureMoments:
    u = basis.coeffs
    return QuadratureMoments(
        mean_x=_real(_expect_diag(u, quads.x_mat), "<x>"),
        mean_p=_real(_expect_diag(u, quads.p_mat), "<p>"),
        mean_x2=_real(_expect_diag(u, quads.x2_mat), "<x^2>"),
        mean_p2=_real(_expect_diag(u, quads.p2_mat), "<p^2>"),
    )


def objective_s(basis: LocalizedBasis, quads: QuadratureMatrices) -> float:
    u = basis.coeffs
    mx = _real(_expect_diag(u, quads.x_mat), "<x>")
    mp = _real(_expect_diag(u, quads.p_mat), "<p>")
    return float(np.sum(mx ** 2 + mp ** 2))


def mean_variance(basis: LocalizedBasis, quads: QuadratureMatrices) -> float:
    """Average of dx^2 + dp^2 over the basis states, (N^2 - S)/N.

    Cross-checked against the per-state moments; a mismatch means the
    x^2/p^2 matrices are inconsistent with x/p.
    """
    n = basis.dim
    via_s = (n * n - objective_s(basis, quads)) / n
    m = quadrature_moments(basis, quads)
    direct = float(np.mean(m.dx2 + m.dp2))
    if abs(via_s - direct) > 1e-6:
        raise OptimizerError(f"mean variance mismatch: {via_s!r} vs {direct!r}")
    return via_s


def draw_proposals(rng: np.random.Generator, dim: int, count: int,
                   theta_max: float | None = None):
    """Vectorized proposal draws: (rows_a, rows_b, angles[count, 3])."""
    if dim < 2:
        raise ValueError("proposals need dim >= 2")
    a = rng.integers(0, dim, count)
    b = rng.integers(0, dim - 1, count)
    b = b + (b >= a)
    angles = rng.uniform(0.0, 2 * math.pi, (count, 3))
    if theta_max is not None:
        angles[:, 0] *= theta_max / (2 * math.pi)
    return a.astype(np.int64), b.astype(np.int64), angles


def propose(rng: np.random.Generator, dim: int, theta_max: float | None = None) -> RotationProposal:
    a, b, ang = draw_proposals(rng, dim, 1, theta_max)
    return RotationProposal(int(a[0]), int(b[0]), float(ang[0, 0]), float(ang[0, 1]), float(ang[0, 2]))


def apply_rotation(basis: LocalizedBasis, prop: RotationProposal) -> LocalizedBasis:
    u = basis.coeffs.copy()
    rows = [prop.row_a, prop.row_b]
    u[rows, :] = prop.block() @ u[rows, :]
    return LocalizedBasis(u, basis.space)


class RotationCache:
    """Rotated complex quadrature Z = conj(U) (x + ip) U^T for O(1) gains.

    diag(Z) holds <n~|x|n~> + i<n~|p|n~>, so S = sum |Z_nn|^2 and a 2x2 move
    only needs the four entries of Z on the two affected rows.
    """

    def __init__(self, basis: LocalizedBasis, quads: QuadratureMatrices):
        self.u = basis.coeffs.copy()
        self.z = self.u.conj() @ quads.z_mat @ self.u.T
        self.space = basis.space

    @property
    def s(self) -> float:
        return float(np.sum(np.abs(np.diag(self.z)) ** 2))

    def delta_s(self, prop: RotationProposal) -> float:
        b = _kernel.block_entries(prop.theta, prop.alpha, prop.beta)
        return float(_kernel.pair_gain(self.z, prop.row_a, prop.row_b, *b))

    def apply(self, prop: RotationProposal) -> None:
        b = _kernel.block_entries(prop.theta, prop.alpha, prop.beta)
        _kernel.rotate_pair(self.u, self.z, prop.row_a, prop.row_b, *b)

    def basis(self) -> LocalizedBasis:
        return LocalizedBasis(self.u.copy(), self.space)


def delta_s(basis: LocalizedBasis, prop: RotationProposal, cache: RotationCache) -> float:
    """S(after) - S(before) for ``prop`` applied to ``basis`` (held by ``cache``)."""
    if cache.u.shape != basis.coeffs.shape:
        raise ValueError("cache does not match basis")
    return cache.delta_s(prop)


def orthonormalize_rows(u: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt over rows."""
    q = np.array(u, dtype=np.complex128, copy=True)
    for i in range(q.shape[0]):
        for k in range(i):
            q[i] -= np.vdot(q[k], q[i]) * q[k]
        q[i] /= np.linalg.norm(q[i])
    return q


def _checkpoint(u: np.ndarray, quads: QuadratureMatrices) -> tuple[np.ndarray, np.ndarray]:
    resid = float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))
    if resid > BLOWUP_TOL:
        raise OptimizerError(f"unitarity residual {resid:.3e} at checkpoint")
    u = orthonormalize_rows(u)
    basis = LocalizedBasis(u, quads.space)
    n = u.shape[0]
    m = quadrature_moments(basis, quads)
    s = float(np.sum(m.mean_x ** 2 + m.mean_p ** 2))
    total = float(np.sum(m.dx2 + m.dp2))
    if abs(n * n - s - total) > 1e-8 * max(1.0, n * n):
        raise OptimizerError(f"variance sum rule violated: N^2 - S = {n * n - s!r}, sum = {total!r}")
    return u, u.conj() @ quads.z_mat @ u.T


def run(basis: LocalizedBasis, cfg: OptimizerConfig,
        quads: QuadratureMatrices) -> tuple[LocalizedBasis, OptimizationTrace]:
    """Greedy hill climb on S; returns the improved basis and its trace."""
    n = basis.dim
    trace = OptimizationTrace()
    if n < 2:
        out = basis.copy()
        trace.final_s = objective_s(out, quads)
        trace.stop_reason = "no pairs"
        return out, trace

    max_prop, window = cfg.resolved(n)
    rng = np.random.default_rng(cfg.seed)
    u = basis.coeffs.copy()
    z = u.conj() @ quads.z_mat @ u.T
    s = float(np.sum(np.abs(np.diag(z)) ** 2))

    hist_pos, hist_s = [np.array([0], dtype=np.int64)], [np.array([s])]
    buf_pos = np.empty(_BATCH, dtype=np.int64)
    buf_s = np.empty(_BATCH)
    done = 0
    streak = 0
    since_renorm = 0
    check_s = s
    next_check = window
    stop = ""

    while not stop:
        rows_a, rows_b, angles = draw_proposals(rng, n, _BATCH, cfg.theta_max)
        pos = 0
        while pos < _BATCH and not stop:
            end = min(_BATCH, pos + (max_prop - done), pos + (next_check - done))
            new_pos, acc, streak, s = _kernel.greedy_sweep(
                u, z, rows_a, rows_b, angles, pos, end, cfg.min_delta, s,
                streak, window, cfg.renorm_interval - since_renorm, buf_pos, buf_s)
            if acc:
                hist_pos.append(buf_pos[:acc] + (done - pos))
                hist_s.append(buf_s[:acc].copy())
            done += new_pos - pos
            pos = new_pos
            trace.accepted_count += acc
            since_renorm += acc
            if since_renorm >= cfg.renorm_interval:
                u, z = _checkpoint(u, quads)
                trace.checkpoints += 1
                since_renorm = 0
            if streak >= window:
                stop = "rejection window"
            elif done >= max_prop:
                stop = "max proposals"
            elif done >= next_check:
                if s - check_s <= cfg.rel_tol * abs(s):
                    stop = "relative improvement"
                check_s = s
                next_check += window

    u, z = _checkpoint(u, quads)
    trace.checkpoints += 1
    out = LocalizedBasis(u, basis.space)
    resid = out.unitarity_residual()
    if resid > UNITARITY_TOL:
        raise OptimizerError(f"final unitarity residual {resid:.3e}")
    trace.rejected_count = done - trace.accepted_count
    trace.history_pos = np.concatenate(hist_pos)
    trace.history_s = np.concatenate(hist_s)
    trace.final_s = objective_s(out, quads)
    trace.stop_reason = stop
    log.debug("N=%d: %d proposals, %d accepted, S=%.6f (%s)",
              n, done, trace.accepted_count, trace.final_s, stop)
    return out, trace
