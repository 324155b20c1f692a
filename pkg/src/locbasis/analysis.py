"""Statistics of optimized bases: energy spread, curve fits, position tails."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .optimizer import LocalizedBasis
from .oscillator import eval_eigenfunctions

# log-space RMS above which a tail is not reported as a clean power law
TAIL_RESIDUAL_FLAG = 0.1
MIN_TAIL_POINTS = 8
TAIL_START = 3.0
TAIL_EDGE = 0.8


@dataclass
class EnergyStats:
    mean_e: np.ndarray
    de2: np.ndarray

    @property
    def avg_de2(self) -> float:
        return float(np.mean(self.de2))

    @property
    def avg_mean_e(self) -> float:
        return float(np.mean(self.mean_e))


def energy_stats(basis: LocalizedBasis) -> EnergyStats:
    # H is diagonal in the oscillator basis: <H^2> = sum_k |U_nk|^2 E_k^2
    e = basis.space.energies
    w = np.abs(basis.coeffs) ** 2
    mean_e = w @ e
    de2 = np.maximum(w @ (e * e) - mean_e ** 2, 0.0)
    return EnergyStats(mean_e=mean_e, de2=de2)


@dataclass
class FitResult:
    model: str
    coefficients: dict[str, float]
    residual_rms: float
    n_values: list[float] = field(default_factory=list)

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        c = self.coefficients
        if self.model == "log":
            return c["a"] + c["b"] * np.log(n)
        return c["c"] * n ** c["e"]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "coefficients": dict(self.coefficients),
            "residual_rms": self.residual_rms,
            "n_values": list(self.n_values),
        }


def _points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (N, y) pairs")
    if len(arr) < 3:
        raise ValueError(f"need at least 3 points, got {len(arr)}")
    n, y = arr[:, 0], arr[:, 1]
    if np.any(n < 1) or not np.all(np.isfinite(arr)):
        raise ValueError("N must be >= 1 and all values finite")
    if np.unique(n).size < 2:
        raise ValueError("fit is rank deficient: all N values are equal")
    return n, y


def _line(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    design = np.column_stack([np.ones_like(t), t])
    (c0, c1), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (c0 + c1 * t)
    return float(c0), float(c1), float(np.sqrt(np.mean(resid ** 2)))


def fit_log(points) -> FitResult:
    """Least squares y = a + b ln N."""
    n, y = _points(points)
    a, b, rms = _line(np.log(n), y)
    return FitResult("log", {"a": a, "b": b}, rms, n.tolist())


def fit_power(points) -> FitResult:
    """Least squares ln y = ln c + e ln N; the residual is in log space."""
    n, y = _points(points)
    if np.any(y <= 0):
        raise ValueError("power-law fit needs y > 0")
    lc, e, rms = _line(np.log(n), np.log(y))
    return FitResult("power", {"c": math.exp(lc), "e": e}, rms, n.tolist())


def position_profiles(basis: LocalizedBasis, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """|psi_n(x)|^2 for every state, shape (N, len(grid)), plus the grid."""
    x = basis.space.default_grid() if grid is None else np.asarray(grid, dtype=float)
    psi = basis.coeffs @ eval_eigenfunctions(basis.space, x)
    dens = np.abs(psi) ** 2
    norms = np.trapezoid(dens, x, axis=1)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > 1e-2:
        raise ValueError(f"profile norm off by {worst:.3e}; grid too narrow or coarse")
    return dens, x


def position_profile(basis: LocalizedBasis, state: int, grid=None) -> np.ndarray:
    if not 0 <= state < basis.dim:
        raise IndexError(f"state {state} out of range for N={basis.dim}")
    x = basis.space.default_grid() if grid is None else np.asarray(grid, dtype=float)
    psi = basis.coeffs[state] @ eval_eigenfunctions(basis.space, x)
    dens = np.abs(psi) ** 2
    err = abs(float(np.trapezoid(dens, x)) - 1.0)
    if err > 1e-2:
        raise ValueError(f"profile norm off by {err:.3e}; grid too narrow or coarse")
    return dens


@dataclass
class TailFit:
    state: int
    x_lo: float
    x_hi: float
    nu: float
    amplitude: float
    residual_rms: float

    @property
    def power_law_ok(self) -> bool:
        return self.residual_rms < TAIL_RESIDUAL_FLAG


def fit_tail(r, density, window, state: int = -1) -> TailFit:
    """Fit |psi| ~ A r^nu over ``window`` by log-log regression of sqrt(density)."""
    r = np.asarray(r, dtype=float)
    density = np.asarray(density, dtype=float)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    if lo <= 0 or lo < r.min() or hi > r.max():
        raise ValueError("window must lie inside the positive part of the grid")
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < MIN_TAIL_POINTS:
        raise ValueError(f"window holds {int(sel.sum())} points, need {MIN_TAIL_POINTS}")
    if np.any(density[sel] <= 0):
        raise ValueError("density must be positive on the window")
    log_amp, nu, rms = _line(np.log(r[sel]), 0.5 * np.log(density[sel]))
    return TailFit(state, lo, hi, nu, math.exp(log_amp), rms)


def _first_local_min(d: np.ndarray) -> int | None:
    idx = np.flatnonzero((d[1:-1] < d[:-2]) & (d[1:-1] <= d[2:]))
    return int(idx[0]) + 1 if idx.size else None


def state_tail(basis: LocalizedBasis, state: int, density: np.ndarray,
               grid: np.ndarray, window=None) -> TailFit | None:
    """Tail of one state, measured as distance from its mean position.

    The fit runs toward the side of the grid with more room. Without an
    explicit ``window`` (in distance units) it spans
    [max(3, first |psi|^2 minimum past <x>), distance to the 0.8 sqrt(2N) edge].
    Returns None when no usable window exists.
    """
    x = grid
    center = float(np.trapezoid(density * x, x))
    side = -1.0 if center > 0 else 1.0
    edge = TAIL_EDGE * math.sqrt(2 * basis.dim)
    r = side * (x - center)
    keep = (r > 0) & (np.abs(x) <= edge)
    if keep.sum() < MIN_TAIL_POINTS:
        return None
    rr, dd = r[keep], density[keep]
    order = np.argsort(rr)
    rr, dd = rr[order], dd[order]
    if window is None:
        i0 = _first_local_min(dd)
        lo = max(TAIL_START, rr[i0] if i0 is not None else TAIL_START)
        window = (lo, rr[-1])
    lo, hi = window
    if not lo < hi or np.count_nonzero((rr >= lo) & (rr <= hi)) < MIN_TAIL_POINTS:
        return None
    if np.any(dd[(rr >= lo) & (rr <= hi)] <= 0):
        return None
    return fit_tail(rr, dd, (lo, hi), state=state)


def tail_summary(basis: LocalizedBasis, grid=None) -> dict:
    """Median and interquartile range of the tail exponent over all states."""
    dens, x = position_profiles(basis, grid)
    fits = [f for n in range(basis.dim)
            if (f := state_tail(basis, n, dens[n], x)) is not None]
    if not fits:
        return {"count": 0, "median_nu": None, "q25_nu": None, "q75_nu": None, "fits": []}
    nus = np.array([f.nu for f in fits])
    q25, med, q75 = np.percentile(nus, [25, 50, 75])
    return {
        "count": len(fits),
        "median_nu": float(med),
        "q25_nu": float(q25),
        "q75_nu": float(q75),
        "fits": fits,
    }


def central_fourth_moment(basis: LocalizedBasis, grid=None) -> float:
    """State average of <(x - <x>)^4> by quadrature of the position profiles."""
    dens, x = position_profiles(basis, grid)
    center = np.trapezoid(dens * x, x, axis=1)
    m4 = np.trapezoid(dens * (x[None, :] - center[:, None]) ** 4, x, axis=1)
    return float(np.mean(m4))


def localization_estimate(phase_space_volume: float, hbar: float) -> tuple[float, float]:
    """Number of states in a phase-space volume and their relative width.

    N = volume / (2 pi hbar); width = sqrt(0.5 + 0.3 ln N), the half of the
    fitted mean variance that belongs to each quadrature.
    """
    if not phase_space_volume > 0 or not hbar > 0:
        raise ValueError("volume and hbar must be positive")
    n = phase_space_volume / (2 * math.pi * hbar)
    w2 = 0.5 + 0.3 * math.log(n)
    if w2 <= 0:
        raise ValueError(f"volume holds N={n:.3g} states, too few for the width law")
    return n, math.sqrt(w2)
