"""Finite metric lattices, regions and the geometric constants built on them.

A :class:`Lattice` is a finite set of sites with integer coordinates, a
pairwise distance table and a Hilbert-space dimension per site.  Regions are
immutable, canonically sorted subsets of one lattice.  The complement of a
region is always taken inside its lattice, so the lattice plays the role of
the whole space in every set-builder definition below.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import comb

from .errors import BadGeometry, EmptyRegion, FullVolume

__all__ = [
    "Lattice",
    "Region",
    "FFunction",
    "FConstants",
    "GrowthConstants",
    "distance",
    "diameter",
    "ball",
    "r_boundary",
    "interior",
    "thicken",
    "phi_boundary",
    "f_constants",
    "growth_constants",
]


class Lattice:
    """Finite metric space of sites carrying local Hilbert spaces.

    Parameters
    ----------
    labels : sequence
        Site identifiers. They are sorted on construction and that order is
        the canonical tensor-product order everywhere in the library.
    coords : array_like, shape (n_sites, nu)
        Integer coordinates, aligned with ``labels``.
    site_dims : int or sequence of int
        Local dimension ``d_x >= 2`` of every site.
    dist : array_like, optional
        Symmetric distance table. Defaults to the l1 metric on ``coords``.
    zdim : int, optional
        Set when the lattice is a box cut out of ``Z^nu``; enables the
        infinite-lattice tail estimates in :func:`f_constants`.
    """

    def __init__(self, labels, coords, site_dims=2, dist=None, zdim=None):
        labels = list(labels)
        coords = np.asarray(coords, dtype=np.int64).reshape(len(labels), -1)
        order = sorted(range(len(labels)), key=lambda i: labels[i])
        self.labels = tuple(labels[i] for i in order)
        self.coords = coords[order]
        if np.isscalar(site_dims):
            dims = np.full(len(labels), int(site_dims), dtype=np.int64)
        else:
            dims = np.asarray(site_dims, dtype=np.int64)[order]
        if len(dims) != len(labels) or np.any(dims < 2):
            raise BadGeometry("every site needs a local dimension >= 2")
        self.site_dims = dims
        if dist is None:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            table = np.abs(diff).sum(axis=2).astype(float)
        else:
            table = np.asarray(dist, dtype=float)[np.ix_(order, order)]
        self.dist = table
        self.zdim = zdim
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise BadGeometry("duplicate site labels")
        self._check_metric()

    def _check_metric(self):
        d = self.dist
        n = len(self.labels)
        if d.shape != (n, n):
            raise BadGeometry("distance table has the wrong shape")
        if not np.allclose(d, d.T) or np.any(d < 0):
            raise BadGeometry("distance table must be symmetric and nonnegative")
        off = d + np.eye(n)
        if np.any(np.diag(d) != 0) or np.any(off[~np.eye(n, dtype=bool)] <= 0):
            raise BadGeometry("distance must vanish exactly on the diagonal")
        if n <= 200:
            # d(x,z) <= d(x,y) + d(y,z) for all triples
            via = (d[:, :, None] + d[None, :, :]).min(axis=1)
            if np.any(d > via + 1e-12):
                raise BadGeometry("distance table violates the triangle inequality")

    # constructors ---------------------------------------------------------
    @classmethod
    def chain(cls, start, stop=None, site_dim=2):
        """Integer chain. ``chain(L)`` gives sites 0..L-1, ``chain(a, b)`` gives a..b inclusive."""
        if stop is None:
            start, stop = 0, start - 1
        labels = list(range(int(start), int(stop) + 1))
        if not labels:
            raise BadGeometry("empty chain")
        return cls(labels, [[x] for x in labels], site_dim, zdim=1)

    @classmethod
    def grid(cls, extent: Sequence[int], site_dim=2):
        """Box ``[0, n_1) x ... x [0, n_nu)`` of ``Z^nu`` with tuple labels."""
        extent = [int(e) for e in extent]
        if not extent or min(extent) < 1:
            raise BadGeometry("grid extent must be positive")
        pts = list(itertools.product(*[range(e) for e in extent]))
        return cls(pts, pts, site_dim, zdim=len(extent))

    @classmethod
    def from_distance_table(cls, labels, table, site_dims=2):
        n = len(labels)
        return cls(labels, np.zeros((n, 1)), site_dims, dist=table)

    @classmethod
    def from_json(cls, doc):
        """Build from ``{"kind": "chain"|"grid", "extent": [...], "site_dim": d}``.

        ``doc`` may be a mapping, a JSON string or a path to a JSON file.
        """
        if isinstance(doc, (str, Path)) and Path(str(doc)).exists():
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        try:
            kind = doc["kind"]
            extent = list(doc["extent"])
            site_dim = int(doc.get("site_dim", 2))
        except (KeyError, TypeError) as exc:
            raise BadGeometry(f"lattice document is missing a field: {exc}") from None
        if kind == "chain":
            if len(extent) == 1:
                return cls.chain(extent[0], site_dim=site_dim)
            if len(extent) == 2:
                return cls.chain(extent[0], extent[1], site_dim=site_dim)
            raise BadGeometry("chain extent is [L] or [start, stop]")
        if kind == "grid":
            return cls.grid(extent, site_dim=site_dim)
        raise BadGeometry(f"unknown lattice kind {kind!r}")

    def to_json(self) -> dict:
        if self.zdim == 1 and self.coords.shape[1] == 1:
            return {"kind": "chain", "extent": [self.labels[0], self.labels[-1]],
                    "site_dim": int(self.site_dims.max())}
        if self.zdim:
            ext = (self.coords.max(axis=0) + 1).tolist()
            return {"kind": "grid", "extent": ext, "site_dim": int(self.site_dims.max())}
        raise BadGeometry("only chain and grid lattices have a JSON form")

    # basic accessors ------------------------------------------------------
    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise BadGeometry(f"site {label!r} is not in the lattice") from None

    @cached_property
    def _key(self):
        return (self.labels, self.site_dims.tobytes(), self.dist.tobytes())

    def __eq__(self, other):
        return isinstance(other, Lattice) and (self is other or self._key == other._key)

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Lattice(n_sites={len(self)}, zdim={self.zdim})"

    @property
    def d_inf(self) -> int:
        return int(self.site_dims.max())

    def region(self, labels: Iterable) -> "Region":
        return Region(self, (self.index(lab) for lab in labels))

    def interval(self, a, b) -> "Region":
        """Sites with labels in ``[a, b]`` (chain lattices)."""
        return Region(self, (i for i, lab in enumerate(self.labels) if a <= lab <= b))

    def full(self) -> "Region":
        return Region(self, range(len(self)))

    def empty(self) -> "Region":
        return Region(self, ())


class Region:
    """Immutable subset of a lattice, stored as sorted site indices."""

    __slots__ = ("lattice", "idx", "_hash")

    def __init__(self, lattice: Lattice, indices: Iterable[int]):
        self.lattice = lattice
        self.idx = tuple(sorted(set(int(i) for i in indices)))
        if self.idx and (self.idx[0] < 0 or self.idx[-1] >= len(lattice)):
            raise BadGeometry("site index outside the lattice")
        self._hash = None

    @property
    def labels(self) -> tuple:
        return tuple(self.lattice.labels[i] for i in self.idx)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.lattice), dtype=bool)
        m[list(self.idx)] = True
        return m

    @property
    def dims(self) -> np.ndarray:
        return self.lattice.site_dims[list(self.idx)]

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.dims)) if self.idx else 1

    def __len__(self):
        return len(self.idx)

    def __iter__(self):
        return iter(self.labels)

    def __bool__(self):
        return bool(self.idx)

    def __contains__(self, label):
        i = self.lattice._index.get(label)
        return i is not None and i in set(self.idx)

    def _same(self, other: "Region"):
        if not isinstance(other, Region):
            return NotImplemented
        if other.lattice is not self.lattice and other.lattice != self.lattice:
            raise BadGeometry("regions live on different lattices")
        return True

    def __eq__(self, other):
        if not isinstance(other, Region):
            return NotImplemented
        return self.idx == other.idx and (
            self.lattice is other.lattice or self.lattice == other.lattice)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.idx)
        return self._hash

    def __or__(self, other):
        self._same(other)
        return Region(self.lattice, set(self.idx) | set(other.idx))

    def __and__(self, other):
        self._same(other)
        return Region(self.lattice, set(self.idx) & set(other.idx))

    def __sub__(self, other):
        self._same(other)
        return Region(self.lattice, set(self.idx) - set(other.idx))

    def __le__(self, other):
        self._same(other)
        return set(self.idx) <= set(other.idx)

    def __ge__(self, other):
        return other <= self

    def complement(self) -> "Region":
        return Region(self.lattice, set(range(len(self.lattice))) - set(self.idx))

    def isdisjoint(self, other) -> bool:
        self._same(other)
        return set(self.idx).isdisjoint(other.idx)

    def __repr__(self):
        return f"Region({list(self.labels)})"


# ---------------------------------------------------------------------------
# distances and region operations


def _dist_to(region: Region) -> np.ndarray:
    """Distance from every lattice site to ``region`` (inf if it is empty)."""
    if not region:
        return np.full(len(region.lattice), np.inf)
    return region.lattice.dist[:, list(region.idx)].min(axis=1)


def distance(a: Region, b: Region) -> float:
    """Minimal site distance between two nonempty regions."""
    if not a or not b:
        raise EmptyRegion("distance needs two nonempty regions")
    a._same(b)
    return float(a.lattice.dist[np.ix_(a.idx, b.idx)].min())


def diameter(x: Region) -> float:
    if not x:
        return 0.0
    return float(x.lattice.dist[np.ix_(x.idx, x.idx)].max())


def ball(lattice: Lattice, label, r: float) -> Region:
    i = lattice.index(label)
    return Region(lattice, np.flatnonzero(lattice.dist[i] <= r))


def r_boundary(x: Region, r: float) -> Region:
    """Sites within distance ``r`` of the cut, taken on both sides of it."""
    if r < 0:
        raise BadGeometry("width must be nonnegative")
    if not x:
        raise EmptyRegion("boundary of the empty region")
    comp = x.complement()
    if not comp:
        raise FullVolume("the region covers the whole lattice")
    inside = x.mask & (_dist_to(comp) <= r)
    outside = comp.mask & (_dist_to(x) <= r)
    return Region(x.lattice, np.flatnonzero(inside | outside))


def interior(x: Region, n: float) -> Region:
    """Sites farther than ``n`` from the complement of ``x``."""
    if n < 0:
        raise BadGeometry("depth must be nonnegative")
    return Region(x.lattice, np.flatnonzero(_dist_to(x.complement()) > n))


def thicken(x: Region, n: float) -> Region:
    """Sites within distance ``n`` of ``x``."""
    if n < 0:
        raise BadGeometry("width must be nonnegative")
    return Region(x.lattice, np.flatnonzero(_dist_to(x) <= n))


def phi_boundary(x: Region, phi) -> Region:
    """Sites of ``x`` touched by a nonzero interaction term that leaves ``x``.

    ``phi`` is any object exposing ``nonzero_supports()``, typically a
    :class:`hastings_lab.model.Interaction`.
    """
    inside = set(x.idx)
    hit = set()
    for y in phi.nonzero_supports():
        ys = set(y.idx)
        if ys - inside:
            hit |= ys & inside
    return Region(x.lattice, hit)


# ---------------------------------------------------------------------------
# F-functions


@dataclass(frozen=True)
class FFunction:
    """Power law ``F(r) = (1+r)^-power`` with exponential tilt ``exp(-mu r)``."""

    power: float = 2.0
    mu: float = 0.0

    def __post_init__(self):
        if self.power <= 0 or self.mu < 0:
            raise BadGeometry("F-function needs power > 0 and mu >= 0")

    @classmethod
    def for_dimension(cls, nu: int, mu: float = 0.0) -> "FFunction":
        """Default choice ``(1+r)^-(nu+1)`` for a nu-regular lattice."""
        return cls(power=float(nu + 1), mu=mu)

    def tilt(self, mu: float) -> "FFunction":
        return FFunction(self.power, self.mu + mu)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-self.mu * r) * (1.0 + r) ** (-self.power)


@dataclass(frozen=True)
class FConstants:
    """``f_norm`` and ``c_f`` on the finite lattice.

    When the lattice is a box of ``Z^nu``, ``f_norm_zinf`` brackets the
    infinite-lattice norm as ``(lower, upper)`` and ``c_f_zinf_upper`` is a
    rigorous upper bound for the infinite-lattice convolution constant.
    """

    f_norm: float
    c_f: float
    f_norm_zinf: tuple | None = None
    c_f_zinf_upper: float | None = None
    truncation_radius: int | None = None


def _sphere_size(nu: int, k):
    """Number of points of Z^nu at l1 distance exactly k (real k allowed for k >= 1)."""
    if np.isscalar(k) and k == 0:
        return 1.0
    return sum(2.0**j * comb(nu, j) * comb(np.asarray(k, float) - 1, j - 1)
               for j in range(1, nu + 1))


def f_constants(f: FFunction, lattice: Lattice) -> FConstants:
    """Exact ``||F||`` and ``c_F`` on the lattice, plus Z^nu tail estimates."""
    fm = f(lattice.dist)
    f_norm = float(fm.sum(axis=1).max())
    c_f = float(((fm @ fm) / fm).max())
    if not lattice.zdim or lattice.coords.shape[1] != lattice.zdim:
        return FConstants(f_norm, c_f)
    nu = lattice.zdim
    # largest radius such that some site sees the full l1 ball inside the box
    lo, hi = lattice.coords.min(axis=0), lattice.coords.max(axis=0)
    depth = np.minimum(lattice.coords - lo, hi - lattice.coords).min(axis=1)
    radius = int(depth.max())
    head = float(sum(_sphere_size(nu, k) * f(k) for k in range(radius + 1)))

    def g(t):
        return float(_sphere_size(nu, t) * f(t))

    # integral comparison needs g non-increasing beyond the radius
    start = max(radius, 1)
    ts = np.linspace(start, start + 1000, 2001)
    if np.all(np.diff([g(t) for t in ts]) <= 1e-15) and f.power > nu:
        tail = integrate.quad(g, start, np.inf, limit=200)[0]
        extra = sum(_sphere_size(nu, k) * f(k) for k in range(radius + 1, start + 1))
        upper = head + float(extra) + tail
        c_up = 2.0 ** (f.power + 1) * upper
    else:
        upper, c_up = math.inf, math.inf
    return FConstants(f_norm, c_f, (head, upper), c_up, radius)


# ---------------------------------------------------------------------------
# growth constants


@dataclass(frozen=True)
class GrowthConstants:
    nu: float
    kappa: float
    kappa_a3: float | None


def growth_constants(lattice: Lattice, interaction_range: float, nu: float,
                     test_regions: Iterable[Region] = ()) -> GrowthConstants:
    """Smallest constants making the ball and boundary growth bounds hold.

    ``kappa`` is the least value with ``|B_r(x)| <= kappa r^nu`` for every site
    and every integer ``1 <= r <= diam``. ``kappa_a3`` is the least value with
    ``|bd X(n + r0)| <= kappa_a3 |bd X(r0)| n^nu`` over ``test_regions`` and
    integer ``1 <= n <= diam``, where ``r0`` is the interaction range.
    ``interaction_range`` may also be an interaction object with a
    ``range`` attribute.
    """
    if nu < 1:
        raise BadGeometry("regularity exponent must be at least 1")
    r0 = float(getattr(interaction_range, "range", interaction_range))
    d = lattice.dist
    diam = max(int(math.ceil(d.max())), 1)
    kappa = 0.0
    for r in range(1, diam + 1):
        kappa = max(kappa, float((d <= r).sum(axis=1).max()) / r**nu)
    kappa_a3 = None
    for x in test_regions:
        base = len(r_boundary(x, r0))
        if base == 0:
            continue
        for n in range(1, diam + 1):
            val = len(r_boundary(x, n + r0)) / (base * n**nu)
            kappa_a3 = val if kappa_a3 is None else max(kappa_a3, val)
    return GrowthConstants(nu, kappa, kappa_a3)
