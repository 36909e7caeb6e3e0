"""Measured commutator growth against the two Lieb-Robinson bound evaluations."""

import numpy as np

from hastings_lab.geometry import FFunction, Lattice
from hastings_lab.lrbound import lr_constants, lr_empirical
from hastings_lab.model import local_hamiltonian, preset
from hastings_lab.opspace import Observable
from hastings_lab.spectral import diagonalize

Z = np.diag([1.0, -1.0])


def main(L=8, g=1.5):
    lat = Lattice.chain(L)
    phi = preset("tfim", {"g": g}, lat.full())
    f = FFunction()
    k = lr_constants(phi, f, 1.0)
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    a = Observable(lat.region([1]), Z, True)
    b = Observable(lat.region([L - 2]), Z, True)
    y = lat.full() - b.support
    print(f"{'t':>5} {'measured':>12} {'theorem':>12} {'corollary':>12}")
    for t in np.arange(0.25, 2.01, 0.25):
        s = lr_empirical(a, b, float(t), spec, y, phi, f, k)
        print(f"{t:5.2f} {s.measured:12.4e} {s.thm_bound:12.4e} {s.cor_bound:12.4e}")


if __name__ == "__main__":
    main()
