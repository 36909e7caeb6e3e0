"""Entanglement entropy of the left block [0, m] across the Ising phase diagram."""

from hastings_lab.entropy import area_sweep
from hastings_lab.geometry import Lattice
from hastings_lab.model import local_hamiltonian, preset
from hastings_lab.spectral import diagonalize


def main(L=10):
    lat = Lattice.chain(L)
    cuts = range(L - 1)
    print("g     " + " ".join(f"m={m:<5d}" for m in cuts))
    for g in (1.0, 1.5, 2.0, 4.0):
        phi = preset("tfim", {"g": g}, lat.full())
        spec = diagonalize(local_hamiltonian(phi, lat.full()))
        sweep = area_sweep(phi, lat.full(), cuts, spec)
        print(f"{g:<5g} " + " ".join(f"{r.s:7.4f}" for r in sweep.reports))


if __name__ == "__main__":
    main()
