"""Entanglement of ground states: Schmidt spectra, entropies, the overlap
statistic ``p_X``, the entropy bound assembled from a factorization defect,
the division inequality and area-law sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (BadConstants, DegenerateCut, GeometryOverflow,
                     PreconditionNotMet, SupportMismatch, ZeroTrace)
from .geometry import Region
from .hastings import Check
from .model import Interaction, local_hamiltonian
from .opspace import Observable, StateVector, apply_local, bipartition, embed
from .spectral import SpectralData, diagonalize

__all__ = [
    "SchmidtSpectrum",
    "EntropyReport",
    "QDistribution",
    "EntropyBound",
    "schmidt",
    "schmidt_vectors",
    "entropy",
    "reduced_density",
    "region_entropy",
    "fidelity",
    "sigma_check",
    "q_distribution",
    "q_bound",
    "entropy_bound",
    "relative_entropy",
    "division_check",
    "window_search",
    "area_sweep",
]

EIG_FLOOR = 1e-14


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Nonincreasing Schmidt weights summing to one."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("spectrum must be a nonempty vector")
        if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-10:
            raise ValueError("Schmidt weights must be nonnegative and sum to 1")
        if np.any(np.diff(lam) > 1e-15):
            raise ValueError("Schmidt weights must be nonincreasing")
        object.__setattr__(self, "lambdas", np.clip(lam, 0.0, None))

    def __len__(self):
        return self.lambdas.size

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.lambdas > 1e-14))


@dataclass
class EntropyReport:
    region: Region
    s: float
    p_x: float
    schmidt: SchmidtSpectrum = field(repr=False)
    bound_rhs: float | None = None


# ---------------------------------------------------------------------------
# spectra and entropies


def _amplitude_matrix(omega: StateVector, x: Region) -> np.ndarray:
    if not x or x == omega.volume:
        raise DegenerateCut("the cut must be a nonempty proper subregion")
    cut = bipartition(x, omega.volume)
    return cut.to_split(omega.amplitudes).reshape(cut.split_dims)


def schmidt_vectors(omega: StateVector, x: Region):
    """``(lambdas, psi, upsilon)`` with ``psi[:, j]`` on ``x`` and ``upsilon[:, j]`` on the rest."""
    u, s, vh = sla.svd(_amplitude_matrix(omega, x), full_matrices=False)
    lam = s**2
    return lam / lam.sum(), u, vh.T


def schmidt(omega: StateVector, x: Region) -> SchmidtSpectrum:
    lam = sla.svdvals(_amplitude_matrix(omega, x)) ** 2
    return SchmidtSpectrum(np.sort(lam / lam.sum())[::-1])


def entropy(spectrum) -> float:
    """von Neumann entropy in nats, with ``0 log 0 = 0``."""
    lam = spectrum.lambdas if isinstance(spectrum, SchmidtSpectrum) else np.asarray(spectrum)
    lam = lam[lam > 0]
    return float(-(lam * np.log(lam)).sum())


def reduced_density(omega: StateVector, region: Region) -> np.ndarray:
    """Density matrix of the restriction of ``omega`` to ``region``."""
    if not region:
        return np.ones((1, 1))
    if region == omega.volume:
        a = omega.amplitudes
        return np.outer(a, a.conj())
    m = _amplitude_matrix(omega, region)
    return m @ m.conj().T


def region_entropy(omega: StateVector, region: Region) -> float:
    if not region or region == omega.volume:
        return 0.0
    return entropy(np.clip(sla.eigvalsh(reduced_density(omega, region)), 0, None))


def fidelity(omega: StateVector, x: Region):
    """``(sum lambda^3, <Omega, rho_X rho'_X Omega>)`` computed independently."""
    lam, psi, ups = schmidt_vectors(omega, x)
    p = float((lam**3).sum())
    rho_x = Observable(x, (psi * lam) @ psi.conj().T, True)
    rest = omega.volume - x
    rho_rest = Observable(rest, (ups * lam) @ ups.conj().T, True)
    w = omega.amplitudes
    v = apply_local(rho_x, apply_local(rho_rest, w, omega.volume), omega.volume)
    return p, float(np.real(np.vdot(w, v)))


def _rho_pair(omega: StateVector, x: Region) -> np.ndarray:
    """``rho_X (x) rho'_X`` on the volume."""
    lam, psi, ups = schmidt_vectors(omega, x)
    cut = bipartition(x, omega.volume)
    a = (psi * lam) @ psi.conj().T
    b = (ups * lam) @ ups.conj().T
    return cut.from_split(np.kron(a, b)), lam


@dataclass
class SigmaVerdict:
    overlap: float
    trace: float
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())


def sigma_check(omega: StateVector, x: Region, o, d_boundary: int,
                epsilon: float | None = None) -> SigmaVerdict:
    """Overlap of the projected pair state ``O rho rho' O*`` with the ground state.

    ``o`` is the factorization product on the volume (matrix or Observable).
    ``epsilon`` defaults to the measured ``||O - P_0||``.
    """
    om = embed(o, omega.volume).matrix if isinstance(o, Observable) else np.asarray(o)
    pair, lam = _rho_pair(omega, x)
    tilde = om @ pair @ om.conj().T
    tr = float(np.real(np.trace(tilde)))
    if tr < 1e-14:
        raise ZeroTrace("the projected pair state has vanishing trace")
    w = omega.amplitudes
    overlap = float(np.real(np.vdot(w, tilde @ w))) / tr
    if epsilon is None:
        from .opspace import opnorm
        epsilon = opnorm(om - np.outer(w, w.conj()), False)
    p = float((lam**3).sum())
    lam_sorted = np.sort(lam)[::-1]
    head = float(lam_sorted[: max(int(d_boundary), 0)].sum())
    checks = {
        "overlap_below_schmidt_head": Check(
            "overlap_below_schmidt_head", overlap, head, "rank bound on the boundary",
            slack=1e-9),
        "overlap_deficit": Check(
            "overlap_deficit", 1 - overlap, 2 * epsilon / p, "defect controls the overlap",
            slack=1e-9),
    }
    return SigmaVerdict(overlap, tr, checks)


# ---------------------------------------------------------------------------
# q-distribution and the entropy bound


def _check_constants(c1, c2, kappa, nu, d_inf, boundary_size, p_x):
    if not c1 > 1:
        raise BadConstants("C1 must exceed 1")
    if not c2 > 0:
        raise BadConstants("C2 must be positive")
    if not kappa > 0 or not nu >= 1:
        raise BadConstants("need kappa > 0 and nu >= 1")
    if not d_inf >= 2:
        raise BadConstants("site dimension must be at least 2")
    if not boundary_size >= 1:
        raise BadConstants("boundary must be nonempty")
    if not 0 < p_x <= 1:
        raise BadConstants("p_X must lie in (0, 1]")


@dataclass(frozen=True)
class QDistribution:
    """Reference distribution built from the defect profile ``eps(l) = C1 |bd| exp(-C2 l)``.

    Index ``j`` (1-based) gets the plateau weight for ``j <= D(m0)`` and a
    block weight on ``D(m0 + n0 m) < j <= D(m0 + n0 (m+1))``, where
    ``log D(l) = kappa |bd| (3 l)^nu log d_inf``.
    """

    c1: float
    c2: float
    kappa: float
    nu: float
    d_inf: float
    boundary_size: int
    p_x: float
    m0: int
    n0: int

    def eps(self, ell):
        return self.c1 * self.boundary_size * np.exp(-self.c2 * np.asarray(ell, float))

    def log_d(self, ell):
        ell = np.asarray(ell, float)
        return self.kappa * self.boundary_size * (3 * ell) ** self.nu * math.log(self.d_inf)

    def d_scale(self, ell) -> float:
        """``D(l)`` rounded down, or ``inf`` beyond floating range."""
        ld = float(self.log_d(ell))
        return float(math.floor(math.exp(ld))) if ld < 700 else math.inf

    def capped(self, ell, cap: int) -> int:
        d = self.d_scale(ell)
        return int(min(d, cap))

    @property
    def plateau_mass(self) -> float:
        return 1.0 - 2 * float(self.eps(self.m0)) / self.p_x

    def block_mass(self, m: int) -> float:
        a = self.m0 + self.n0 * m
        return 2.0 / self.p_x * float(self.eps(a) - self.eps(a + self.n0))

    def total_mass(self, tol: float = 1e-16) -> float:
        """Plateau plus every block, summed until the remaining tail is below ``tol``."""
        acc = self.plateau_mass
        m = 0
        while True:
            acc += self.block_mass(m)
            rest = 2.0 / self.p_x * float(self.eps(self.m0 + self.n0 * (m + 1)))
            if rest < tol:
                return acc
            m += 1

    def log_q(self, j) -> np.ndarray:
        """``log q(j)`` for 1-based indices ``j``; computed in log space."""
        j = np.asarray(j, dtype=float)
        out = np.empty(j.shape)
        logj = np.log(j)
        ld0 = float(self.log_d(self.m0))
        d0 = self.d_scale(self.m0)
        plateau = j <= d0
        out[plateau] = math.log(self.plateau_mass) - ld0 if math.isinf(d0) else \
            math.log(self.plateau_mass) - math.log(d0)
        rest = ~plateau
        if np.any(rest):
            m = 0
            todo = rest.copy()
            while np.any(todo):
                lo, hi = self.m0 + self.n0 * m, self.m0 + self.n0 * (m + 1)
                d_lo, d_hi = self.d_scale(lo), self.d_scale(hi)
                if math.isinf(d_hi):
                    in_block = todo & (logj <= float(self.log_d(hi)))
                    width = float(self.log_d(hi)) + math.log1p(
                        -math.exp(float(self.log_d(lo) - self.log_d(hi))))
                else:
                    in_block = todo & (j > d_lo) & (j <= d_hi)
                    width = math.log(d_hi - d_lo) if d_hi > d_lo else math.inf
                out[in_block] = math.log(self.block_mass(m)) - width
                todo &= ~in_block
                m += 1
        return out

    def weights(self, n: int) -> np.ndarray:
        return np.exp(self.log_q(np.arange(1, n + 1)))


def q_distribution(boundary_size: int, p_x: float, c1: float, c2: float,
                   kappa: float, nu: float, d_inf: float, n0: int | None = None) -> QDistribution:
    """Build the reference distribution; ``m0`` is the first scale with ``2 eps(m0) < p_X``."""
    _check_constants(c1, c2, kappa, nu, d_inf, boundary_size, p_x)
    if n0 is None:
        n0 = 1  # smallest stride with exp(-C2 n0) < 1
    if n0 < 1 or not math.exp(-c2 * n0) < 1:
        raise BadConstants("stride n0 must be a positive integer with exp(-C2 n0) < 1")
    m0 = max(1, math.floor(math.log(2 * c1 * boundary_size / p_x) / c2) + 1)
    # guard against rounding at the threshold
    while 2 * c1 * boundary_size * math.exp(-c2 * m0) / p_x >= 1:
        m0 += 1
    while m0 > 1 and 2 * c1 * boundary_size * math.exp(-c2 * (m0 - 1)) / p_x < 1:
        m0 -= 1
    return QDistribution(c1, c2, kappa, nu, d_inf, int(boundary_size), p_x, m0, n0)


def q_bound(spectrum, q) -> float:
    """``sum_j -lambda_j log q(j)``; asserts it dominates the entropy.

    ``q`` is a :class:`QDistribution` or an array of weights indexed like the
    spectrum.
    """
    lam = spectrum.lambdas if isinstance(spectrum, SchmidtSpectrum) else np.asarray(spectrum)
    if isinstance(q, QDistribution):
        log_q = q.log_q(np.arange(1, lam.size + 1))
    else:
        qa = np.asarray(q, dtype=float)
        if qa.shape != lam.shape:
            raise SupportMismatch("q must be indexed like the spectrum")
        with np.errstate(divide="ignore"):
            log_q = np.log(qa)
    live = lam > 0
    if np.any(~np.isfinite(log_q[live])):
        raise SupportMismatch("q vanishes where the spectrum does not")
    value = float(-(lam[live] * log_q[live]).sum())
    s = entropy(lam)
    if s > value + 1e-10:
        raise AssertionError(f"Gibbs inequality failed: {s} > {value}")
    return value


@dataclass(frozen=True)
class EntropyBound:
    """Constants of the entropy bound and the bound itself.

    ``c3_mid`` is the intermediate ``6^nu kappa log(d_inf) / 2``; ``c3_final``
    multiplies ``|bd| (log |bd|)^nu`` in the final form. ``pre_collapse`` is
    the last bound before the logarithms are separated, and ``collapse_valid``
    tells whether the final absorption of the constant terms (which needs
    ``log |bd| >= 1``) is legitimate.
    """

    c3_mid: float
    c3_prime: float
    c4_prime: float
    c5_prime: float
    c4: float
    c3_final: float
    m0: int
    n0: int
    bound: float
    pre_collapse: float
    m0_form: float
    collapse_valid: bool


def _series(term, tol=1e-17, max_terms=10**7):
    acc, m = 0.0, 0
    while m < max_terms:
        t = term(m)
        acc += t
        if m > 10 and abs(t) < tol * max(1.0, abs(acc)):
            return acc
        m += 1
    raise BadConstants("series did not converge")


def entropy_bound(boundary_size: int, p_x: float, c2: float, constants,
                  n0: int | None = None) -> EntropyBound:
    """Entropy bound ``C3 |bd| (log |bd|)^nu + C4 |bd| (log 1/p_X)^nu``.

    ``constants`` is ``(kappa, nu, d_inf, c1)``.
    """
    kappa, nu, d_inf, c1 = constants
    q = q_distribution(boundary_size, p_x, c1, c2, kappa, nu, d_inf, n0)
    n0 = q.n0
    logd = math.log(d_inf)
    r = math.exp(-c2 * n0)
    c3_mid = 6**nu * kappa * logd / 2

    def g1(m):
        return c2 * (n0 * m + 1) - math.log(1 - r)

    def g2(m):
        return (6 * n0) ** nu * kappa * logd / 2 * m**nu

    c3p = 3**nu * kappa * logd + c3_mid * _series(lambda m: r**m)
    c4p = _series(lambda m: g2(m) * r**m)
    c5p = 1 / math.e + _series(lambda m: g1(m) * r**m)
    c4 = 3 ** (nu - 1) / c2**nu * c3p
    c3f = c4 + c4 * (c2 + math.log(2 * c1)) ** nu + c4p + c5p
    b = boundary_size
    bound = c3f * b * math.log(b) ** nu + c4 * b * math.log(1 / p_x) ** nu
    pre = (c3p * b * (1 + math.log(2 * c1 * b / p_x) / c2) ** nu + c4p * b + c5p)
    m0_form = c3p * b * q.m0**nu + c4p * b + c5p
    return EntropyBound(c3_mid, c3p, c4p, c5p, c4, c3f, q.m0, n0, bound, pre, m0_form,
                        math.log(b) >= 1)


# ---------------------------------------------------------------------------
# relative entropy and the division inequality


def relative_entropy(a: np.ndarray, b: np.ndarray) -> float:
    """``Tr a (log a - log b)`` for density matrices; ``inf`` if supp a is not in supp b."""
    ea, va = sla.eigh(np.asarray(a))
    eb, vb = sla.eigh(np.asarray(b))
    ea = np.clip(ea, 0, None)
    keep_b = eb > EIG_FLOOR
    # weight of a outside the support of b
    proj = vb[:, ~keep_b]
    if proj.size:
        leak = float(np.real(np.trace(proj.conj().T @ np.asarray(a) @ proj)))
        if leak > 1e-12:
            return math.inf
    live = ea > EIG_FLOOR
    s_a = float((ea[live] * np.log(ea[live])).sum())
    overlap = np.abs(va[:, live].conj().T @ vb[:, keep_b]) ** 2
    cross = float((ea[live][:, None] * overlap * np.log(eb[keep_b])[None, :]).sum())
    return max(s_a - cross, 0.0) if s_a - cross > -1e-12 else s_a - cross


@dataclass
class DivisionVerdict:
    s_y: float
    s_y_in: float
    s_y_out: float
    p_x: float
    epsilon: float
    pinched: float
    full: float
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())


def _pinched(t: float, s: float) -> float:
    def term(u, v):
        if u <= 0:
            return 0.0
        if v <= 0:
            return math.inf
        return u * math.log(u / v)

    return term(t, s) + term(1 - t, 1 - s)


def division_check(omega: StateVector, x: Region, y: Region, o_b: Observable,
                   epsilon: float, p_x: float | None = None):
    """Entropy split of ``y`` across the cut ``x``.

    ``o_b`` must be a positive contraction supported inside ``y``. Returns a
    :class:`PreconditionNotMet` (falsy) when ``p_X > 1/4`` or
    ``24 sqrt(eps) >= 1``; otherwise a :class:`DivisionVerdict`.
    """
    if not o_b.support <= y:
        return PreconditionNotMet("boundary contraction is not supported inside y")
    if p_x is None:
        p_x = fidelity(omega, x)[0]
    if p_x > 0.25:
        return PreconditionNotMet(f"p_X = {p_x:.4g} exceeds 1/4")
    if 24 * math.sqrt(epsilon) >= 1:
        return PreconditionNotMet(f"24 sqrt(eps) = {24 * math.sqrt(epsilon):.4g} is not below 1")
    y_in, y_out = y & x, y - x
    rho_y = reduced_density(omega, y)
    s_y = region_entropy(omega, y)
    s_in = region_entropy(omega, y_in)
    s_out = region_entropy(omega, y_out)
    prod = (embed(Observable(y_in, reduced_density(omega, y_in), True), y).matrix
            @ embed(Observable(y_out, reduced_density(omega, y_out), True), y).matrix)
    ob = embed(o_b, y).matrix
    w_ob = float(np.real(np.trace(rho_y @ ob)))
    w_prod = float(np.real(np.trace(prod @ ob)))
    pinched = _pinched(w_ob, w_prod)
    full = relative_entropy(rho_y, prod)
    rhs = s_in + s_out - 0.5 * math.log(1 / (p_x + 6 * math.sqrt(epsilon))) + math.log(2)
    checks = {
        "subadditivity": Check("subadditivity", s_y, s_in + s_out, "entropy subadditivity",
                               slack=1e-8),
        "division": Check("division", s_y, rhs, "entropy division across the cut",
                          slack=1e-8),
        "pinching": Check("pinching", pinched, full, "data processing under the pinching",
                          slack=1e-9),
        "mutual_information": Check("mutual_information", abs(full - (s_in + s_out - s_y)),
                                    0.0, "relative entropy equals mutual information",
                                    slack=1e-8),
    }
    return DivisionVerdict(s_y, s_in, s_out, p_x, epsilon, pinched, full, checks)


# ---------------------------------------------------------------------------
# sweeps


def _slab(volume: Region, lo, hi) -> Region:
    """Sites of ``volume`` whose first coordinate lies in ``[lo, hi]``."""
    lat = volume.lattice
    first = lat.coords[list(volume.idx), 0]
    keep = [i for i, c in zip(volume.idx, first) if lo <= c <= hi]
    return Region(lat, keep)


def _ground(phi: Interaction, volume: Region, spec: SpectralData | None) -> StateVector:
    if spec is None:
        spec = diagonalize(local_hamiltonian(phi, volume))
    return spec.ground


def window_search(phi: Interaction, volume: Region, a: int, b: int, ell0: int,
                  threshold: float, spec: SpectralData | None = None):
    """Maximize ``p`` over slabs ``[a0, b0]`` with ``a - ell0 <= a0 <= a`` and ``b <= b0 <= b + ell0``.

    Returns ``(a0, b0, p, met)`` where ``met`` tells whether ``p >= threshold``.
    """
    first = volume.lattice.coords[list(volume.idx), 0]
    if a - ell0 < first.min() or b + ell0 > first.max() or a > b or ell0 < 0:
        raise GeometryOverflow("the search window leaves the volume")
    omega = _ground(phi, volume, spec)
    best = None
    for a0 in range(a, a - ell0 - 1, -1):
        for b0 in range(b, b + ell0 + 1):
            p = fidelity(omega, _slab(volume, a0, b0))[0]
            if best is None or p > best[2] + 1e-15:
                best = (a0, b0, p)
    return best + (bool(best[2] >= threshold),)


@dataclass
class AreaSweep:
    reports: list
    saturation: float


def area_sweep(phi: Interaction, volume: Region, cuts, spec: SpectralData | None = None,
               top: int = 8) -> AreaSweep:
    """Entropy of the slabs ``[first, m]`` for each ``m`` in ``cuts``."""
    omega = _ground(phi, volume, spec)
    first = volume.lattice.coords[list(volume.idx), 0]
    lo = first.min()
    reports = []
    for m in cuts:
        x = _slab(volume, lo, m)
        sp = schmidt(omega, x)
        reports.append(EntropyReport(x, entropy(sp), float((sp.lambdas**3).sum()), sp))
    s = [r.s for r in reports]
    return AreaSweep(reports, float(max(s) - s[-1]) if s else 0.0)
