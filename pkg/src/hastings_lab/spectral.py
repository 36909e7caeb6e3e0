"""Exact diagonalization, Heisenberg evolution, Gaussian energy filters and
spectral windows.

All energies are shifted so that the ground energy is zero; every function
downstream relies on that gauge.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (BoundaryEigenvalue, DimensionCap, NotGapped, NotHermitian,
                     QuadratureUnstable)
from .opspace import Observable, StateVector, embed, is_hermitian, opnorm

__all__ = [
    "DIMENSION_CAP",
    "SpectralData",
    "diagonalize",
    "evolve",
    "filter_factors",
    "gaussian_filter",
    "gaussian_filter_eigen",
    "heat_projector",
    "window_projection",
    "f_alpha",
    "gauss_hermite",
    "heat_projector_gh",
    "dump_spectrum",
]

DIMENSION_CAP = 2**13
GAP_TOL = 1e-8


@dataclass(eq=False)
class SpectralData:
    """Full eigendecomposition of a finite-volume Hamiltonian.

    ``energies`` are shifted so that the ground energy is 0; ``e0`` keeps the
    original ground energy and ``hamiltonian`` the unshifted matrix.
    """

    energies: np.ndarray
    eigvecs: np.ndarray
    ground: StateVector
    gap: float
    e0: float
    hamiltonian: Observable = field(repr=False)

    @property
    def volume(self):
        return self.hamiltonian.support

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def shifted_hamiltonian(self) -> np.ndarray:
        """``H - E0 I``, which annihilates the ground state."""
        h = self.hamiltonian.matrix.copy()
        h[np.diag_indices_from(h)] -= self.e0
        return h

    def ground_projector(self) -> np.ndarray:
        w = self.ground.amplitudes
        return np.outer(w, w.conj())

    def to_eigenbasis(self, m):
        v = self.eigvecs
        return v.conj().T @ (m @ v)

    def from_eigenbasis(self, m):
        v = self.eigvecs
        return (v @ m) @ v.conj().T


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column real and positive."""
    rows = np.argmax(np.abs(vecs), axis=0)
    pivots = vecs[rows, np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivots) / pivots)[None, :]


def diagonalize(h: Observable, gap_tol: float = GAP_TOL, cap: int = DIMENSION_CAP,
                check_residual: bool = True) -> SpectralData:
    """Full Hermitian eigendecomposition with the ground energy moved to 0.

    Raises
    ------
    NotHermitian, DimensionCap, NotGapped
    """
    mat = h.matrix
    if mat.shape[0] > cap:
        raise DimensionCap(f"dimension {mat.shape[0]} exceeds the cap {cap}")
    if not is_hermitian(mat):
        raise NotHermitian("Hamiltonian is not self-adjoint")
    if np.iscomplexobj(mat) and not np.any(mat.imag):
        mat = mat.real
    evals, vecs = sla.eigh(mat, driver="evd")
    vecs = _fix_phases(vecs)
    if check_residual and mat.shape[0] > 1:
        scale = max(float(np.abs(evals).max()), 1.0)
        res = np.linalg.norm(mat @ vecs - vecs * evals[None, :], axis=0).max()
        if res > 1e-9 * scale:
            raise NotHermitian(f"eigensolver residual {res:.2e} too large")
    e0 = float(evals[0])
    energies = evals - e0
    energies[0] = 0.0
    gap = float(energies[1]) if len(energies) > 1 else math.inf
    if gap <= gap_tol:
        raise NotGapped(f"ground state is degenerate or nearly so (gap {gap:.3e})")
    ground = StateVector(vecs[:, 0], h.support, norm_tol=1e-10)
    return SpectralData(energies, vecs, ground, gap, e0, Observable(h.support, mat, True))


def _volume_matrix(a: Observable, spec: SpectralData) -> np.ndarray:
    return embed(a, spec.volume).matrix


def evolve(a: Observable, t: float, spec: SpectralData) -> Observable:
    """Heisenberg picture ``exp(itH) A exp(-itH)`` through the eigenbasis."""
    am = _volume_matrix(a, spec)
    if t == 0:
        return Observable(spec.volume, am.copy(), a.hermitian_flag)
    phase = np.exp(1j * t * spec.energies)
    ae = spec.to_eigenbasis(am) * (phase[:, None] * phase.conj()[None, :])
    return Observable(spec.volume, spec.from_eigenbasis(ae), a.hermitian_flag)


def filter_factors(energies, alpha: float) -> np.ndarray:
    """Matrix ``G[m, n] = exp(-(E_m - E_n)^2 / 4 alpha)``."""
    if alpha <= 0:
        raise ValueError("filter strength alpha must be positive")
    diff = energies[:, None] - energies[None, :]
    return np.exp(-(diff**2) / (4.0 * alpha))


def gaussian_filter_eigen(a_eig: np.ndarray, energies, alpha: float) -> np.ndarray:
    """Filter an operator already written in the energy eigenbasis."""
    return a_eig * filter_factors(energies, alpha)


def gaussian_filter(a: Observable, alpha: float, spec: SpectralData,
                    eigenbasis: bool = False):
    """Gaussian time average of the Heisenberg evolution of ``a``.

    Matrix elements in the energy basis are damped by
    ``exp(-(E_m - E_n)^2 / 4 alpha)``, the Fourier transform of the weight
    ``f_alpha``. With ``eigenbasis=True`` the filtered matrix is returned in the
    energy basis instead of as an :class:`Observable`.
    """
    v = spec.eigvecs
    # local observables are applied factor-wise instead of being embedded
    from .opspace import apply_local
    av = apply_local(a, v, spec.volume)
    filtered = gaussian_filter_eigen(v.conj().T @ av, spec.energies, alpha)
    if eigenbasis:
        return filtered
    return Observable(spec.volume, spec.from_eigenbasis(filtered), a.hermitian_flag)


def heat_projector(spec: SpectralData, alpha: float, measure: bool = False):
    """``exp(-H^2 / 4 alpha)`` and its distance to the ground projector.

    The distance is read off the spectrum, ``max_{m>0} exp(-E_m^2/4 alpha)``.
    With ``measure=True`` it is instead the operator norm of the assembled
    difference matrix.
    """
    if alpha <= 0:
        raise ValueError("filter strength alpha must be positive")
    weights = np.exp(-spec.energies**2 / (4.0 * alpha))
    v = spec.eigvecs
    proj = (v * weights[None, :]) @ v.conj().T
    if measure:
        defect = opnorm(proj - spec.ground_projector(), True)
    else:
        defect = float(weights[1:].max()) if spec.dim > 1 else 0.0
    return Observable(spec.volume, proj, True), defect


def window_projection(m: Observable, a: float, edge_tol: float = 1e-12) -> Observable:
    """Spectral projection of ``m`` onto the closed window ``[-a, a]``."""
    if a < 0:
        raise ValueError("window half-width must be nonnegative")
    mat = m.matrix
    if not is_hermitian(mat, 1e-10):
        raise NotHermitian("window projection needs a self-adjoint operator")
    mat = (mat + mat.conj().T) / 2
    evals, vecs = sla.eigh(mat, driver="evd")
    if np.any(np.abs(np.abs(evals) - a) <= edge_tol):
        warnings.warn(f"an eigenvalue sits on the window edge {a}", BoundaryEigenvalue,
                      stacklevel=2)
    keep = np.abs(evals) <= a + edge_tol
    w = vecs[:, keep]
    return Observable(m.support, w @ w.conj().T, True)


# ---------------------------------------------------------------------------
# Gaussian weight and quadrature


def f_alpha(t, alpha: float):
    """Normalized Gaussian weight ``sqrt(alpha/pi) exp(-alpha t^2)``."""
    t = np.asarray(t, dtype=float)
    return math.sqrt(alpha / math.pi) * np.exp(-alpha * t**2)


def gauss_hermite(alpha: float, nodes: int = 64, omega_max: float | None = None):
    """Times and weights integrating against ``f_alpha``.

    If ``omega_max`` is given, the rule is also checked on the scalar integrand
    ``exp(itE)`` for ``E`` in ``[0, omega_max]`` against ``exp(-E^2/4 alpha)``.

    Raises
    ------
    QuadratureUnstable
        A weight underflows to zero or the scalar check misses by more than 1e-10.
    """
    if alpha <= 0:
        raise ValueError("filter strength alpha must be positive")
    if nodes < 1:
        raise ValueError("need at least one node")
    x, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    if np.any(w == 0) or not np.all(np.isfinite(w)):
        raise QuadratureUnstable(f"{nodes}-node Gauss-Hermite weights underflow")
    times = x / math.sqrt(alpha)
    if omega_max is not None:
        es = np.linspace(0.0, omega_max, 257)
        approx = (np.exp(1j * np.outer(es, times)) @ w).real
        err = float(np.abs(approx - np.exp(-es**2 / (4 * alpha))).max())
        if err > 1e-10:
            raise QuadratureUnstable(
                f"{nodes} nodes cannot resolve energies up to {omega_max} at alpha={alpha} "
                f"(scalar error {err:.1e})")
    return times, w


def heat_projector_gh(spec: SpectralData, alpha: float, nodes: int = 64) -> np.ndarray:
    """``sum_k w_k exp(i t_k H)``, the quadrature version of :func:`heat_projector`."""
    times, w = gauss_hermite(alpha, nodes)
    weights = (np.exp(1j * np.outer(spec.energies, times)) @ w)
    v = spec.eigvecs
    return (v * weights[None, :]) @ v.conj().T


def dump_spectrum(path, spec: SpectralData) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "energy"])
        for k, e in enumerate(spec.energies):
            out.writerow([k, repr(float(e))])
