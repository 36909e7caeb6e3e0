"""Dense operator algebra on tensor products of site Hilbert spaces.

Tensor factors are always ordered like the canonical site order of the
lattice, first site most significant.  Everything here works on plain numpy
arrays underneath; :class:`Observable` only adds the support region.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh

from .errors import DegenerateCut, DimensionMismatch, NormAccuracy, SupportNotContained
from .geometry import Region

__all__ = [
    "Observable",
    "StateVector",
    "BipartitionMap",
    "DENSE_NORM_MAX",
    "opnorm",
    "is_hermitian",
    "positions",
    "apply_local",
    "apply_local_right",
    "partial_trace",
    "embed",
    "norm_commutator",
    "cond_expect",
    "twirl",
    "twirl_weyl",
    "weyl_operators",
    "bipartition",
    "save_observable",
    "load_observable",
]

# up to this dimension norms use a full SVD; up to DENSE_GRAM_MAX the Gram
# matrix is diagonalized densely; beyond that a Lanczos solver is used
DENSE_NORM_MAX = 1024
DENSE_GRAM_MAX = 4096
# Lanczos residual tolerances tried in turn; clustered tops (tensor factors leave
# near-degenerate plateaus) may stall the tight ones, and then the size decides
# between an exact dense fallback and a relaxed, warned estimate
ARPACK_LADDER = (1e-10, 1e-8, 1e-6)
ARPACK_RESTARTS = 30
HERM_TOL = 1e-12


def is_hermitian(m, tol: float = HERM_TOL) -> bool:
    m = np.asarray(m)
    scale = max(1.0, float(np.abs(m).max())) if m.size else 1.0
    return bool(np.abs(m - m.conj().T).max() <= tol * scale) if m.size else True


def _start_vector(n: int, dtype) -> np.ndarray:
    v = np.random.default_rng(20240611).standard_normal(n)
    if np.issubdtype(dtype, np.complexfloating):
        v = v + 1j * np.random.default_rng(7).standard_normal(n)
    return v / np.linalg.norm(v)


def _dense_large_norm(dense: np.ndarray, hermitian: bool) -> float:
    # Lanczos stalls on clustered top singular values; dense is predictable
    n = dense.shape[0]
    if hermitian:
        return float(np.abs(sla.eigvalsh(dense)).max())
    gram = dense.conj().T @ dense
    top = sla.eigvalsh(gram, subset_by_index=[n - 1, n - 1], driver="evr")
    return float(np.sqrt(max(top[0], 0.0)))


def opnorm(m, hermitian: bool | None = None) -> float:
    """Operator norm (largest singular value).

    Hermitian input uses the spectral radius. Matrices larger than
    ``DENSE_GRAM_MAX`` and LinearOperators go through ARPACK with a fixed
    start vector so repeated calls are bit-identical. When Lanczos stalls, an
    operator of at most ``DENSE_NORM_MAX`` rows is densified; a larger one is
    retried at looser tolerances with a :class:`NormAccuracy` warning.
    """
    if isinstance(m, LinearOperator):
        n = m.shape[0]
        dense = None
    else:
        dense = np.asarray(m)
        n = dense.shape[0]
        if n == 0:
            return 0.0
        if not np.any(dense):
            return 0.0
        if hermitian is None:
            hermitian = is_hermitian(dense)
        if n <= DENSE_NORM_MAX:
            if hermitian:
                return float(np.abs(sla.eigvalsh(dense)).max())
            return float(sla.svdvals(dense)[0])
        if n <= DENSE_GRAM_MAX:
            return _dense_large_norm(dense, hermitian)
    dtype = m.dtype if m.dtype is not None else np.complex128
    v0 = _start_vector(n, dtype)
    if hermitian:
        target, which = m, "LM"
    else:
        op = m if isinstance(m, LinearOperator) else None
        if op is None:
            target = LinearOperator((n, n), matvec=lambda x: dense.conj().T @ (dense @ x),
                                    dtype=dense.dtype)
        else:
            target = LinearOperator((n, n), matvec=lambda x: op.rmatvec(op.matvec(x)),
                                    dtype=op.dtype)
        which = "LA"
    # +-lambda pairs are common; asking for two resolves both ends together
    k = min(2, n - 1) if hermitian else 1
    for tol in ARPACK_LADDER:
        try:
            val = eigsh(target, k=k, which=which, v0=v0, tol=tol, ncv=min(n, 40),
                        maxiter=ARPACK_RESTARTS, return_eigenvectors=False)
        except (ArpackNoConvergence, ArpackError):
            if n <= DENSE_NORM_MAX:
                break
            continue
        if tol > ARPACK_LADDER[0]:
            warnings.warn(f"operator norm converged only to relative tolerance {tol:g}",
                          NormAccuracy, stacklevel=2)
        if hermitian:
            return float(np.abs(val).max())
        return float(np.sqrt(max(val.max(), 0.0)))
    if dense is None:
        dense = m @ np.eye(n, dtype=dtype)
    if hermitian:
        return float(np.abs(sla.eigvalsh(dense)).max())
    return float(sla.svdvals(dense)[0])


@dataclass(eq=False)
class Observable:
    """Square matrix acting on the Hilbert space of ``support``."""

    support: Region
    matrix: np.ndarray
    hermitian_flag: bool | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch("observable matrix must be square")
        if self.matrix.shape[0] != self.support.hilbert_dim:
            raise DimensionMismatch(
                f"matrix dimension {self.matrix.shape[0]} does not match support "
                f"dimension {self.support.hilbert_dim}")
        if self.hermitian_flag is None:
            self.hermitian_flag = is_hermitian(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def lattice(self):
        return self.support.lattice

    def norm(self) -> float:
        return opnorm(self.matrix, self.hermitian_flag)

    def dagger(self) -> "Observable":
        return Observable(self.support, self.matrix.conj().T, self.hermitian_flag)

    def embed(self, volume: Region) -> "Observable":
        return embed(self, volume)

    def _binary(self, other, op):
        vol = self.support | other.support
        return Observable(vol, op(embed(self, vol).matrix, embed(other, vol).matrix))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __matmul__(self, other):
        return self._binary(other, np.matmul)

    def __mul__(self, scalar):
        return Observable(self.support, self.matrix * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Observable(support={list(self.support.labels)}, dim={self.dim})"


@dataclass(eq=False)
class StateVector:
    """Unit vector in the Hilbert space of ``volume``."""

    amplitudes: np.ndarray
    volume: Region
    norm_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes).reshape(-1)
        if self.amplitudes.shape[0] != self.volume.hilbert_dim:
            raise DimensionMismatch("state length does not match the volume dimension")
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > self.norm_tol:
            raise ValueError("state vector is not normalized")

    def expectation(self, obs: Observable) -> complex:
        v = self.amplitudes
        return complex(np.vdot(v, apply_local(obs, v, self.volume)))


# ---------------------------------------------------------------------------
# tensor helpers


def positions(sub: Region, volume: Region) -> list[int]:
    """Tensor-factor positions of the sites of ``sub`` inside ``volume``."""
    where = {i: k for k, i in enumerate(volume.idx)}
    try:
        return [where[i] for i in sub.idx]
    except KeyError:
        raise SupportNotContained(f"{sub} is not contained in {volume}") from None


def _apply(mat_local, pos, dims, m):
    dims = [int(d) for d in dims]
    vec = m.ndim == 1
    mt = m.reshape(dims + [-1])
    ns = len(pos)
    dsub = [dims[p] for p in pos]
    at = mat_local.reshape(dsub + dsub)
    out = np.tensordot(at, mt, axes=(list(range(ns, 2 * ns)), pos))
    out = np.moveaxis(out, list(range(ns)), pos)
    out = out.reshape(m.shape[0], -1)
    return out[:, 0] if vec else out


def apply_local(op, m, volume: Region):
    """Compute ``embed(op, volume) @ m`` without forming the embedding."""
    if not op.support:
        return op.matrix[0, 0] * m
    pos = positions(op.support, volume)
    return _apply(op.matrix, pos, volume.dims, np.asarray(m))


def apply_local_right(m, op, volume: Region):
    """Compute ``m @ embed(op, volume)`` without forming the embedding."""
    if not op.support:
        return m * op.matrix[0, 0]
    pos = positions(op.support, volume)
    return _apply(op.matrix.T, pos, volume.dims, np.asarray(m).T).T


def partial_trace(mat, dims, keep) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``."""
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = sorted(keep)
    t = np.asarray(mat).reshape(dims + dims)
    rows = list(range(n))
    cols = [n + k if k in keep else k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return np.einsum(t, rows + cols, out).reshape(dk, dk)


def embed(a: Observable, volume: Region) -> Observable:
    """Tensor ``a`` with the identity on ``volume - support`` in canonical order."""
    if a.support == volume:
        return a
    pos = positions(a.support, volume)
    dims = [int(d) for d in volume.dims]
    if not pos:
        d = volume.hilbert_dim
        return Observable(volume, a.matrix[0, 0] * np.eye(d, dtype=a.matrix.dtype),
                          a.hermitian_flag)
    if pos == list(range(pos[0], pos[0] + len(pos))):
        left = int(np.prod(dims[: pos[0]]))
        right = int(np.prod(dims[pos[-1] + 1:]))
        mat = np.kron(np.kron(np.eye(left, dtype=a.matrix.dtype), a.matrix),
                      np.eye(right, dtype=a.matrix.dtype))
        return Observable(volume, mat, a.hermitian_flag)
    rest = [k for k in range(len(dims)) if k not in pos]
    drest = int(np.prod([dims[k] for k in rest]))
    big = np.kron(a.matrix, np.eye(drest, dtype=a.matrix.dtype))
    order = pos + rest
    t = big.reshape([dims[k] for k in order] * 2)
    inv = list(np.argsort(order))
    t = t.transpose(inv + [len(dims) + k for k in inv])
    d = volume.hilbert_dim
    return Observable(volume, np.ascontiguousarray(t.reshape(d, d)), a.hermitian_flag)


def norm_commutator(a: Observable, b: Observable):
    """Return ``(||[A, B]||, ||A||, ||B||)``, computed on the union of supports."""
    if a.lattice != b.lattice:
        raise DimensionMismatch("observables live on different lattices")
    na, nb = a.norm(), b.norm()
    if a.support.isdisjoint(b.support):
        return 0.0, na, nb
    vol = a.support | b.support
    ma, mb = embed(a, vol).matrix, embed(b, vol).matrix
    comm = ma @ mb - mb @ ma
    herm = bool(a.hermitian_flag and b.hermitian_flag)
    # i[A, B] is Hermitian when A and B are
    return opnorm(1j * comm if herm else comm, herm), na, nb


def cond_expect(a: Observable, x: Region) -> Observable:
    """Normalized partial trace onto the algebra of ``x``.

    The trace runs over ``support - x``; the result is re-embedded so that its
    support is exactly ``x``.
    """
    s = a.support
    keep_region = s & x
    gone = s - x
    keep = positions(keep_region, s)
    reduced = partial_trace(a.matrix, s.dims, keep) / gone.hilbert_dim
    return embed(Observable(keep_region, reduced, a.hermitian_flag), x)


def twirl(a: Observable, x: Region) -> Observable:
    """Conditional expectation onto the commutant of the algebra of ``x``.

    Equal to ``I_x (x) Tr_x(A) / d_x``; returned with support ``support - x``.
    """
    s = a.support
    inside = s & x
    keep_region = s - x
    keep = positions(keep_region, s)
    reduced = partial_trace(a.matrix, s.dims, keep) / inside.hilbert_dim
    return Observable(keep_region, reduced, a.hermitian_flag)


def weyl_operators(d: int):
    """Yield the ``d**2`` clock-and-shift unitaries ``S^p C^q`` of dimension ``d``."""
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    sp = np.eye(d, dtype=complex)
    for _ in range(d):
        cq = np.eye(d, dtype=complex)
        for _ in range(d):
            yield sp @ cq
            cq = cq @ clock
        sp = sp @ shift


def twirl_weyl(a: Observable, x: Region) -> Observable:
    """Group average of ``U* A U`` over the Weyl-Heisenberg group on ``x``.

    Returned on ``support | x``; agrees with :func:`twirl` after embedding.
    """
    vol = a.support | x
    m = embed(a, vol).matrix.astype(complex)
    acc = np.zeros_like(m)
    d = x.hilbert_dim
    for u in weyl_operators(d):
        uo = Observable(x, u, False)
        udag = Observable(x, u.conj().T, False)
        acc += apply_local(udag, apply_local_right(m, uo, vol), vol)
    return Observable(vol, acc / d**2)


@dataclass(frozen=True)
class BipartitionMap:
    """Basis permutation taking ``H_volume`` to ``H_cut (x) H_rest``.

    ``perm[k]`` is the volume basis index of the k-th split basis vector, so
    ``M[perm][:, perm]`` rewrites a volume operator in the split basis.
    """

    cut: Region
    volume: Region
    perm: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.perm)

    def to_split(self, m):
        m = np.asarray(m)
        return m[self.perm] if m.ndim == 1 else m[np.ix_(self.perm, self.perm)]

    def from_split(self, m):
        inv = self.inverse
        m = np.asarray(m)
        return m[inv] if m.ndim == 1 else m[np.ix_(inv, inv)]

    @property
    def split_dims(self) -> tuple[int, int]:
        d_cut = self.cut.hilbert_dim
        return d_cut, self.volume.hilbert_dim // d_cut


def bipartition(x: Region, volume: Region) -> BipartitionMap:
    if not x or x == volume:
        raise DegenerateCut("the cut must be a nonempty proper subregion")
    pos = positions(x, volume)
    rest = [k for k in range(len(volume)) if k not in pos]
    dims = [int(d) for d in volume.dims]
    idx = np.arange(volume.hilbert_dim).reshape(dims)
    perm = idx.transpose(pos + rest).reshape(-1)
    return BipartitionMap(x, volume, perm)


# ---------------------------------------------------------------------------
# binary container: little-endian uint64 dimension, then row-major complex128


def save_observable(path, obs: Observable | np.ndarray) -> None:
    m = obs.matrix if isinstance(obs, Observable) else np.asarray(obs)
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<Q", m.shape[0]))
        fh.write(np.ascontiguousarray(m, dtype="<c16").tobytes())


def load_observable(path, support: Region | None = None):
    raw = Path(path).read_bytes()
    (d,) = struct.unpack("<Q", raw[:8])
    m = np.frombuffer(raw[8:], dtype="<c16")
    if m.size != d * d:
        raise DimensionMismatch("container payload does not match its header")
    m = m.reshape(d, d).copy()
    return Observable(support, m) if support is not None else m
