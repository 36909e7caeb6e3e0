"""Numerical laboratory for ground-state factorization and area laws of
gapped quantum spin systems on finite lattices."""

from . import entropy, geometry, hastings, lrbound, model, opspace, spectral
from .errors import *  # noqa: F401,F403
from .geometry import Lattice, Region
from .opspace import Observable, StateVector

__version__ = "0.1.0"
