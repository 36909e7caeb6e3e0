"""Lieb-Robinson bounds, the dynamics truncation bound, and their
comparison with exactly computed commutators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import BadGeometry, RangeViolation
from .geometry import FFunction, FConstants, Region, distance, f_constants, phi_boundary
from .model import Interaction, constants
from .opspace import Observable, apply_local, embed, norm_commutator, opnorm
from .spectral import SpectralData, diagonalize, evolve
from .model import local_hamiltonian

__all__ = [
    "LRConstants",
    "LRSample",
    "lr_constants",
    "lr_rhs",
    "lr_cor_assembled",
    "lr_empirical",
    "truncation_rhs",
    "truncation_check",
]


@dataclass(frozen=True)
class LRConstants:
    """Constants of the exponential light-cone bound at decay rate ``mu``.

    ``c_mu = 2 ||F|| / c_{F_mu}`` and ``v_mu = 2 ||Phi||_{F_mu} c_{F_mu} / mu``.
    The untilted data (``f_norm``, ``c_f``, ``phi_f_norm``) feed the
    power-law bound.
    """

    mu: float
    c_mu: float
    v_mu: float
    f_mu_norm: float
    c_f_mu: float
    phi_f_mu_norm: float
    f_norm: float
    c_f: float
    phi_f_norm: float
    lattice_size: int


@dataclass(frozen=True)
class LRSample:
    t: float
    distance: float
    measured: float
    thm_bound: float
    cor_bound: float

    @property
    def thm_margin(self) -> float:
        return self.thm_bound - self.measured

    @property
    def cor_margin(self) -> float:
        return self.cor_bound - self.measured


def lr_constants(phi: Interaction, f: FFunction, mu: float = 1.0) -> LRConstants:
    """Evaluate the light-cone constants by exact sums over the lattice."""
    if mu <= 0:
        raise ValueError("decay rate mu must be positive")
    lat = phi.lattice
    base: FConstants = f_constants(f, lat)
    f_mu = f.tilt(mu)
    tilted = f_constants(f_mu, lat)
    phi_f = constants(phi, f).phi_f_norm
    phi_f_mu = constants(phi, f_mu).phi_f_norm
    if phi_f_mu > math.exp(mu * phi.range) * phi_f + 1e-10:
        raise AssertionError("tilted interaction norm exceeds exp(mu r) ||Phi||_F")
    c_mu = 2.0 * base.f_norm / tilted.c_f
    v_mu = 2.0 * phi_f_mu * tilted.c_f / mu
    return LRConstants(mu, c_mu, v_mu, tilted.f_norm, tilted.c_f, phi_f_mu,
                       base.f_norm, base.c_f, phi_f, len(lat))


def _far_sum(bx: Region, y: Region, f: FFunction) -> float:
    yc = y.complement()
    if not bx or not yc:
        return 0.0
    return float(f(bx.lattice.dist[np.ix_(bx.idx, yc.idx)]).sum())


def lr_rhs(x: Region, y: Region, t: float, phi: Interaction, f: FFunction,
           consts: LRConstants):
    """Power-law and exponential commutator bounds for unit-norm A, B.

    Returns ``(thm_bound, cor_bound)`` for ``A`` supported in ``x`` and ``B``
    commuting with the algebra of ``y``.
    """
    if not x <= y:
        raise BadGeometry("the observable region must lie inside y")
    bx = phi_boundary(x, phi)
    growth = math.expm1(2.0 * consts.phi_f_norm * consts.c_f * abs(t))
    thm = 2.0 / consts.c_f * growth * _far_sum(bx, y, f)
    yc = y.complement()
    if not yc or not bx:
        return thm, 0.0
    d = distance(x, yc)
    cor = consts.c_mu * len(bx) * math.exp(-consts.mu * (d - consts.v_mu * abs(t)))
    return thm, cor


def lr_cor_assembled(x: Region, y: Region, t: float, phi: Interaction,
                     consts: LRConstants) -> float:
    """Exponential bound before relaxing ``d(bd_Phi X, Y^c)`` to ``d(X, Y^c)``."""
    bx = phi_boundary(x, phi)
    yc = y.complement()
    if not yc or not bx:
        return 0.0
    pref = 2.0 * consts.f_norm / consts.c_f_mu
    return (pref * math.exp(2.0 * consts.phi_f_mu_norm * consts.c_f_mu * abs(t))
            * len(bx) * math.exp(-consts.mu * distance(bx, yc)))


def lr_empirical(a: Observable, b: Observable, t: float, spec: SpectralData,
                 y: Region, phi: Interaction, f: FFunction,
                 consts: LRConstants) -> LRSample:
    """Measure ``||[alpha^t(A), B]||`` and pair it with both bounds.

    ``B`` must commute with the algebra of ``y``; the bounds are scaled by
    ``||A|| ||B||``.
    """
    at = evolve(a, t, spec)
    measured, na, nb = norm_commutator(at, embed(b, spec.volume))
    thm, cor = lr_rhs(a.support, y, t, phi, f, consts)
    yc = y.complement()
    d = distance(a.support, yc) if yc else math.inf
    return LRSample(float(t), d, measured, thm * na * nb, cor * na * nb)


def truncation_rhs(x: Region, inner: Region, t: float, phi: Interaction,
                   consts: LRConstants, j1: float) -> float:
    """Bound on ``||alpha^t_outer(A) - alpha^t_inner(A)||`` for unit-norm A on ``x``."""
    outside = inner.complement()
    if not outside:
        return 0.0
    d = distance(outside, x)
    if d <= phi.range:
        raise RangeViolation(f"d(inner^c, X) = {d} must exceed the range {phi.range}")
    mu, v = consts.mu, consts.v_mu
    return (consts.c_mu * j1 / (mu * v) * len(phi_boundary(x, phi))
            * len(phi_boundary(inner, phi)) * math.exp(-mu * (d - phi.range))
            * math.expm1(mu * v * abs(t)))


def _mul(m, z):
    # keeps real matrices real instead of upcasting them on every product
    if np.isrealobj(m):
        return m @ z.real + 1j * (m @ z.imag)
    return m @ z


def truncation_check(a: Observable, inner: Region, outer: Region, t: float,
                     phi: Interaction, consts: LRConstants,
                     outer_spec: SpectralData | None = None,
                     inner_spec: SpectralData | None = None):
    """Compare the inner-volume dynamics with the outer-volume dynamics.

    Returns ``(measured, rhs)``. The outer evolution is never formed as a
    matrix; the difference is applied through its eigenbasis and its norm is
    found with a Lanczos solver.
    """
    x = a.support
    if not (x <= inner <= outer):
        raise BadGeometry("need support <= inner <= outer")
    j1 = constants(phi, FFunction()).j1
    rhs = truncation_rhs(x, inner, t, phi, consts, j1) * a.norm()
    if t == 0 or inner == outer:
        return 0.0, rhs
    if outer_spec is None:
        outer_spec = diagonalize(local_hamiltonian(phi, outer), gap_tol=-1.0)
    if inner_spec is None:
        inner_spec = diagonalize(local_hamiltonian(phi, inner), gap_tol=-1.0)
    a_inner = evolve(a, t, inner_spec)
    v = outer_spec.eigvecs
    vh = np.ascontiguousarray(v.conj().T)
    fwd = np.exp(1j * t * outer_spec.energies)
    vol = outer_spec.volume

    def matvec(z):
        z = np.asarray(z, dtype=complex).reshape(-1)
        w = _mul(v, fwd.conj() * _mul(vh, z))
        w = apply_local(a, w, vol)
        w = _mul(v, fwd * _mul(vh, w))
        return w - apply_local(a_inner, z, vol)

    n = vol.hilbert_dim
    op = LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=complex)
    return opnorm(op, hermitian=a.hermitian_flag), rhs
