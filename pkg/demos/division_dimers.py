"""Entropy division across a cut on a chain of decoupled Heisenberg dimers.

The region X = {3..6} cuts two singlets, so the overlap p_X is 1/16 and the
factorization defect is small enough for the division inequality to apply.
"""

import numpy as np

from hastings_lab.entropy import division_check, fidelity
from hastings_lab.geometry import FFunction, Lattice
from hastings_lab.hastings import FactorizationConfig, factorize
from hastings_lab.lrbound import lr_constants
from hastings_lab.model import PAULI, Interaction, constants, local_hamiltonian
from hastings_lab.opspace import Observable
from hastings_lab.spectral import diagonalize


def main(L=10):
    lat = Lattice.chain(L)
    heis = np.real(sum(np.kron(PAULI[p], PAULI[p]) for p in "XYZ"))
    bonds = [Observable(lat.region([i, i + 1]), heis) for i in range(0, L, 2)]
    phi = Interaction(lat, bonds, 1.0, "dimer")
    f = FFunction()
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    x = lat.interval(3, 6)
    print(f"p_X = {fidelity(spec.ground, x)[0]:.6f}")
    for ell in (1.0, 2.0, 3.0):
        res = factorize(FactorizationConfig(x, ell), phi, spec, constants(phi, f),
                        lr_constants(phi, f))
        v = division_check(spec.ground, x, res.o_b_pos.support | x, res.o_b_pos,
                           res.defect_pos)
        if not v:
            print(f"ell={ell:g}: {v.reason}")
            continue
        c = v.checks["division"]
        print(f"ell={ell:g}: eps={res.defect_pos:.3e}  s(Y)={c.lhs:.4f} <= {c.rhs:.4f}  "
              f"all checks ok={v.ok}")


if __name__ == "__main__":
    main()
