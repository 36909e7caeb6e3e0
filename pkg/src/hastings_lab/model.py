"""Interactions, their summability constants, local Hamiltonians and the
interior / boundary / exterior Hamiltonian split around a region."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import BadCoupling, GeometryOverflow, NotHermitian, UnknownModel
from .geometry import (FFunction, Lattice, Region, diameter, interior,
                       r_boundary, thicken)
from .opspace import Observable, apply_local, is_hermitian, positions

__all__ = [
    "PAULI",
    "Interaction",
    "InteractionConstants",
    "HamiltonianSplit",
    "MODELS",
    "preset",
    "load_interaction",
    "constants",
    "local_hamiltonian",
    "local_hamiltonian_sparse",
    "split",
]

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
# X(x)X + Y(x)Y is real, which keeps the XXZ chain in real arithmetic
_XX_YY = np.real(np.kron(PAULI["X"], PAULI["X"]) + np.kron(PAULI["Y"], PAULI["Y"]))


class Interaction:
    """Finite family of self-adjoint local terms ``Phi(Y)`` on a lattice.

    Parameters
    ----------
    lattice : Lattice
    terms : mapping or list of Observable
        One observable per support region; duplicate supports are summed.
    declared_range : float, optional
        Interaction range. Defaults to the largest term diameter (at least 1).
    """

    def __init__(self, lattice: Lattice, terms, declared_range: float | None = None,
                 name: str = "custom", params: Mapping | None = None):
        items = terms.values() if isinstance(terms, Mapping) else terms
        merged: dict[Region, Observable] = {}
        for obs in items:
            if obs.support.lattice != lattice:
                raise BadCoupling("term lives on a different lattice")
            if not is_hermitian(obs.matrix):
                raise NotHermitian(f"term on {obs.support} is not self-adjoint")
            if obs.support in merged:
                prev = merged[obs.support]
                obs = Observable(obs.support, prev.matrix + obs.matrix, True)
            merged[obs.support] = obs
        self.lattice = lattice
        self.terms = dict(sorted(merged.items(), key=lambda kv: (kv[0].idx)))
        widest = max((diameter(y) for y in self.terms), default=0.0)
        if declared_range is None:
            declared_range = max(widest, 1.0)
        if widest > declared_range:
            raise BadCoupling(f"a term has diameter {widest} beyond the range {declared_range}")
        if declared_range <= 0:
            raise BadCoupling("interaction range must be positive")
        self.range = float(declared_range)
        self.name = name
        self.params = dict(params or {})
        self._norms = {y: obs.norm() for y, obs in self.terms.items()}

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def term_norm(self, y: Region) -> float:
        return self._norms[y]

    def nonzero_supports(self):
        return [y for y, nrm in self._norms.items() if nrm > 0]

    def restrict(self, volume: Region) -> "Interaction":
        """Terms whose support lies inside ``volume``."""
        kept = [obs for y, obs in self.terms.items() if y <= volume]
        return Interaction(self.lattice, kept, self.range, self.name, self.params)

    def __repr__(self):
        return f"Interaction({self.name}, terms={len(self)}, range={self.range})"


@dataclass(frozen=True)
class InteractionConstants:
    """Summability constants of an interaction for a given F-function."""

    j: float
    j1: float
    j2: float
    phi_f_norm: float
    range: float


@dataclass
class HamiltonianSplit:
    """Interior, boundary and exterior pieces of the Hamiltonian around ``x``.

    ``h_r`` collects terms meeting ``interior(x, n + r)``, ``h_b`` those inside
    ``r_boundary(x, n + r)``. Primed pieces have their ground expectation
    removed and ``h_l_primed`` is the rest of the shifted Hamiltonian.
    """

    x: Region
    n: float
    volume: Region
    h_r: Observable
    h_b: Observable
    h_r_primed: Observable
    h_b_primed: Observable
    h_l_primed: Observable | None
    shift_r: float
    shift_b: float
    regions: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# presets


def _site_term(lat, i, mat):
    return Observable(Region(lat, [i]), mat)


def _check_params(name, params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise BadCoupling(f"{name} does not take parameters {sorted(unknown)}")
    vals = {k: float(params.get(k, v)) for k, v in allowed.items()}
    for k, v in vals.items():
        if not math.isfinite(v):
            raise BadCoupling(f"coupling {k} must be finite")
    return vals


def _chain_sites(volume: Region):
    lat = volume.lattice
    if lat.coords.shape[1] != 1:
        raise BadCoupling("preset models are defined on chains")
    idx = list(volume.idx)
    bonds = [(a, b) for a, b in zip(idx, idx[1:]) if lat.dist[a, b] == 1]
    triples = [(a, b, c) for a, b, c in zip(idx, idx[1:], idx[2:])
               if lat.dist[a, b] == 1 and lat.dist[b, c] == 1]
    return lat, idx, bonds, triples


def _tfim(volume, p):
    v = _check_params("tfim", p, {"g": 1.0, "J": 1.0})
    lat, idx, bonds, _ = _chain_sites(volume)
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    terms = [_site_term(lat, i, -v["g"] * PAULI["X"]) for i in idx]
    terms += [Observable(Region(lat, b), -v["J"] * zz) for b in bonds]
    return terms, 1.0, v


def _onsite(volume, p):
    v = _check_params("onsite", p, {"g": 1.0})
    lat, idx, _, _ = _chain_sites(volume)
    return [_site_term(lat, i, -v["g"] * PAULI["X"]) for i in idx], 1.0, v


def _xxz(volume, p):
    v = _check_params("xxz", p, {"J": 1.0, "delta": 1.0, "g": 0.0})
    lat, idx, bonds, _ = _chain_sites(volume)
    bond = v["J"] * (_XX_YY + v["delta"] * np.kron(PAULI["Z"], PAULI["Z"]))
    terms = [Observable(Region(lat, b), bond) for b in bonds]
    if v["g"] != 0:
        terms += [_site_term(lat, i, -v["g"] * PAULI["Z"]) for i in idx]
    return terms, 1.0, v


def _cluster(volume, p):
    v = _check_params("cluster", p, {"J": 1.0, "g": 0.0})
    lat, idx, _, triples = _chain_sites(volume)
    zxz = np.kron(np.kron(PAULI["Z"], PAULI["X"]), PAULI["Z"])
    terms = [Observable(Region(lat, t), -v["J"] * zxz) for t in triples]
    if v["g"] != 0:
        terms += [_site_term(lat, i, -v["g"] * PAULI["X"]) for i in idx]
    return terms, 2.0, v


MODELS = {"tfim": _tfim, "onsite": _onsite, "xxz": _xxz, "cluster": _cluster}


def preset(name: str, params: Mapping | None, volume: Region) -> Interaction:
    """Named model on the chain sites of ``volume``.

    ``tfim``: ``-g X_i`` and ``-J Z_i Z_{i+1}``. ``onsite``: ``-g X_i``.
    ``xxz``: ``J (XX + YY + delta ZZ)`` on bonds and ``-g Z_i``.
    ``cluster``: ``-J Z X Z`` on triples and ``-g X_i``.
    """
    try:
        build = MODELS[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    if any(volume.lattice.site_dims[list(volume.idx)] != 2):
        raise BadCoupling("preset models need qubit sites")
    terms, rng, vals = build(volume, dict(params or {}))
    return Interaction(volume.lattice, terms, rng, name, vals)


def load_interaction(doc, lattice: Lattice, declared_range: float | None = None) -> Interaction:
    """Read ``[{"sites": [...], "matrix": [[re, im], ...]}, ...]``.

    ``matrix`` lists the row-major entries as ``[re, im]`` pairs; a nested list
    of rows of pairs is accepted too.
    """
    if isinstance(doc, (str, Path)) and Path(str(doc)).exists():
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    terms = []
    for k, entry in enumerate(doc):
        try:
            region = lattice.region(entry["sites"])
            arr = np.asarray(entry["matrix"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise BadCoupling(f"interaction entry {k} is malformed: {exc}") from None
        d = region.hilbert_dim
        if arr.shape[-1] != 2 or arr.size != 2 * d * d:
            raise BadCoupling(f"interaction entry {k} needs {d * d} [re, im] pairs")
        pairs = arr.reshape(d * d, 2)
        mat = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(d, d)
        if not np.any(mat.imag):
            mat = mat.real
        terms.append(Observable(region, mat))
    return Interaction(lattice, terms, declared_range)


# ---------------------------------------------------------------------------
# constants


def constants(phi: Interaction, f: FFunction) -> InteractionConstants:
    """Exact enumeration of the summability constants over the lattice."""
    n = len(phi.lattice)
    j = np.zeros(n)
    j1 = np.zeros(n)
    j2 = np.zeros(n)
    pair = np.zeros((n, n))
    for y, _ in phi:
        nrm = phi.term_norm(y)
        k = len(y)
        ids = list(y.idx)
        j[ids] += nrm / k
        j1[ids] += nrm
        j2[ids] += nrm * k
        pair[np.ix_(ids, ids)] += nrm
    fd = f(phi.lattice.dist)
    return InteractionConstants(float(j.max()), float(j1.max()), float(j2.max()),
                                float((pair / fd).max()), phi.range)


# ---------------------------------------------------------------------------
# Hamiltonians


def _sparse_embed(obs: Observable, volume: Region):
    pos = positions(obs.support, volume)
    dims = [int(d) for d in volume.dims]
    mat = sp.csr_matrix(obs.matrix)
    if pos == list(range(pos[0], pos[0] + len(pos))):
        left = int(np.prod(dims[: pos[0]]))
        right = int(np.prod(dims[pos[-1] + 1:]))
        return sp.kron(sp.kron(sp.identity(left, format="csr"), mat),
                       sp.identity(right, format="csr"), format="csr")
    rest = [k for k in range(len(dims)) if k not in pos]
    drest = int(np.prod([dims[k] for k in rest]))
    big = sp.kron(mat, sp.identity(drest, format="csr"), format="coo")
    order = pos + rest
    perm = np.arange(volume.hilbert_dim).reshape(dims).transpose(order).reshape(-1)
    d = volume.hilbert_dim
    return sp.csr_matrix((big.data, (perm[big.row], perm[big.col])), shape=(d, d))


def local_hamiltonian_sparse(phi: Interaction, volume: Region, select=None):
    """Sparse sum of the terms inside ``volume`` (optionally filtered by ``select``)."""
    d = volume.hilbert_dim
    dtype = np.result_type(*[o.matrix.dtype for _, o in phi] or [float])
    acc = sp.csr_matrix((d, d), dtype=dtype)
    for y, obs in phi:
        if y <= volume and (select is None or select(y)):
            acc = acc + _sparse_embed(obs, volume)
    return acc


def local_hamiltonian(phi: Interaction, volume: Region, select=None) -> Observable:
    """Dense ``H_volume``: the sum of all terms supported inside ``volume``."""
    if not volume:
        return Observable(volume, np.zeros((1, 1)), True)
    mat = local_hamiltonian_sparse(phi, volume, select).toarray()
    return Observable(volume, mat, True)


def split(phi: Interaction, volume: Region, x: Region, n: float, ground,
          with_exterior: bool = True) -> HamiltonianSplit:
    """Split the shifted Hamiltonian of ``volume`` around the region ``x``.

    ``ground`` is the :class:`~hastings_lab.spectral.SpectralData` of
    ``local_hamiltonian(phi, volume)``. The pieces ``h_r`` and ``h_b`` are
    returned with support ``thicken(x, n + r)``.
    """
    if not x <= volume:
        raise GeometryOverflow("region is not inside the volume")
    width = n + phi.range
    x_int = interior(x, width)
    bd = r_boundary(x, width)
    x_n = thicken(x, width)
    if not x_n <= volume:
        raise GeometryOverflow(
            f"thickened region {x_n} leaves the volume {volume}; shrink n or grow the volume")
    in_r = lambda y: y <= volume and not y.isdisjoint(x_int)  # noqa: E731
    in_b = lambda y: y <= bd  # noqa: E731
    for y, _ in phi:
        if in_r(y) and not y <= x_n:
            raise GeometryOverflow("an interior term leaves the thickened region")
    h_r = local_hamiltonian(phi, x_n, in_r)
    h_b = local_hamiltonian(phi, x_n, in_b)
    omega = ground.ground.amplitudes
    shift_r = float(np.real(np.vdot(omega, apply_local(h_r, omega, volume))))
    shift_b = float(np.real(np.vdot(omega, apply_local(h_b, omega, volume))))
    eye = np.eye(x_n.hilbert_dim)
    h_r_p = Observable(x_n, h_r.matrix - shift_r * eye, True)
    h_b_p = Observable(x_n, h_b.matrix - shift_b * eye, True)
    h_l_p = None
    if with_exterior:
        h_omega = ground.shifted_hamiltonian()
        h_x = h_r_p.matrix + h_b_p.matrix
        h_l_p = Observable(volume, h_omega - _embed_dense(h_x, x_n, volume), True)
    regions = {"interior": x_int, "boundary": bd, "thickened": x_n}
    return HamiltonianSplit(x, n, volume, h_r, h_b, h_r_p, h_b_p, h_l_p,
                            shift_r, shift_b, regions)


def _embed_dense(mat, sub, volume):
    from .opspace import embed
    return embed(Observable(sub, mat, True), volume).matrix
