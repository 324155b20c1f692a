"""Thermal mixtures of localized states and their linear response.

A mixture of localized states is not diagonal in the energy basis. Its
off-diagonal band makes the response of <H0> to a perturbation nonzero,
while the canonical exp(-beta H)/Z gives exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import energy_stats
from .optimizer import LocalizedBasis
from .oscillator import QuadratureMatrices, TruncatedSpace

BAND_FRACTION = 0.99


@dataclass
class ThermalEnsemble:
    beta: float
    probs: np.ndarray
    rho: np.ndarray
    energies: np.ndarray

    @property
    def dim(self) -> int:
        return self.rho.shape[0]


@dataclass
class BandProfile:
    band_weight: np.ndarray
    effective_bandwidth: int


@dataclass
class ResponseSeries:
    times: np.ndarray
    values: np.ndarray
    spectrum: np.ndarray
    perturbation: str
    max_imag: float

    def quartile_weights(self) -> tuple[float, float]:
        """Spectral magnitude summed over the lowest and highest frequency quartiles."""
        q = max(1, len(self.spectrum) // 4)
        return float(self.spectrum[:q].sum()), float(self.spectrum[-q:].sum())


def _boltzmann(beta: float, energies: np.ndarray) -> np.ndarray:
    w = -beta * np.asarray(energies, dtype=float)
    p = np.exp(w - w.max())
    return p / p.sum()


def build_ensemble(basis: LocalizedBasis, beta: float) -> ThermalEnsemble:
    """rho_jk = sum_n p_n U_nj conj(U_nk) with p_n ~ exp(-beta <E>_n)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    p = _boltzmann(beta, energy_stats(basis).mean_e)
    u = basis.coeffs
    rho = (u.T * p) @ u.conj()
    rho = 0.5 * (rho + rho.conj().T)
    return ThermalEnsemble(beta, p, rho, basis.space.energies)


def canonical_ensemble(space: TruncatedSpace, beta: float) -> ThermalEnsemble:
    """exp(-beta H)/Z on the truncated space, diagonal by construction."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    p = _boltzmann(beta, space.energies)
    return ThermalEnsemble(beta, p, np.diag(p).astype(complex), space.energies)


def check_ensemble(ens: ThermalEnsemble) -> None:
    rho = ens.rho
    if abs(np.trace(rho) - 1) > 1e-12:
        raise ValueError(f"trace(rho) = {np.trace(rho)!r}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValueError("rho is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("rho has negative eigenvalues")
    if np.any(ens.probs < 0) or abs(ens.probs.sum() - 1) > 1e-12:
        raise ValueError("probabilities are not a distribution")


def band_profile(ens: ThermalEnsemble) -> BandProfile:
    n = ens.dim
    a = np.abs(ens.rho) ** 2
    w = np.array([np.trace(a, offset=d) + (np.trace(a, offset=-d) if d else 0.0)
                  for d in range(n)])
    cum = np.cumsum(w)
    width = int(np.searchsorted(cum, BAND_FRACTION * cum[-1]))
    return BandProfile(w, min(width, n - 1))


def default_perturbation(quads: QuadratureMatrices, strength: float = 0.1) -> np.ndarray:
    return strength * quads.x_mat.astype(complex)


def default_times(points: int = 1024) -> np.ndarray:
    """One revival period [0, 2pi]; integer level spacings make it periodic."""
    return np.linspace(0.0, 2 * np.pi, points)


def response(ens: ThermalEnsemble, h1_matrix, times=None,
             perturbation: str = "custom") -> ResponseSeries:
    """delta<H0>(t) = sum_jk (exp(-i(E_k - E_j)t) - 1) rho_jk (H1)_kj."""
    h1 = np.asarray(h1_matrix, dtype=complex)
    n = ens.dim
    if h1.shape != (n, n):
        raise ValueError(f"h1 must be {n}x{n}")
    herm = float(np.max(np.abs(h1 - h1.conj().T)))
    if herm > 1e-10:
        raise ValueError(f"h1 is not Hermitian (residual {herm:.3e})")
    t = default_times() if times is None else np.asarray(times, dtype=float)
    if t.size and t[0] != 0:
        raise ValueError("time grid must start at 0")

    # only pairs with rho_jk * h1_kj != 0 contribute
    weight = ens.rho * h1.T
    j, k = np.nonzero(weight)
    gap = ens.energies[k] - ens.energies[j]
    phase = np.exp(-1j * np.outer(t, gap)) - 1.0
    vals = phase @ weight[j, k]
    max_imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if max_imag > 1e-10:
        raise ValueError(f"response has imaginary part {max_imag:.3e}")
    values = vals.real
    spectrum = np.abs(np.fft.rfft(values))
    return ResponseSeries(t, values, spectrum, perturbation, max_imag)


def kernel_eigenstates(sigma1: float = 0.1, sigma2: float = 10.0,
                       half_width: float = 10.0, step: float = 0.02,
                       count: int = 6):
    """Leading eigenvectors of rho(x, x') ~ exp(-(x-x')^2/2s1^2 - (x+x')^2/2s2^2).

    Although this kernel is narrow across the diagonal and wide along it, its
    eigenvectors are oscillator eigenfunctions of length
    ``sqrt(sigma1 * sigma2 / 2)``. Returns (grid, eigenvalues, eigenvectors
    normalized on the grid, length scale).
    """
    x = np.arange(-half_width, half_width + step / 2, step)
    d = x[:, None] - x[None, :]
    s = x[:, None] + x[None, :]
    k = np.exp(-d ** 2 / (2 * sigma1 ** 2) - s ** 2 / (2 * sigma2 ** 2)) * step
    vals, vecs = np.linalg.eigh(k)
    order = np.argsort(vals)[::-1][:count]
    vecs = vecs[:, order] / np.sqrt(step)
    return x, vals[order], vecs.T, np.sqrt(sigma1 * sigma2 / 2)
