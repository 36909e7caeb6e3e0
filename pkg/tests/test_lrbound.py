import math

import numpy as np
import pytest

from hastings_lab.errors import BadGeometry, RangeViolation
from hastings_lab.geometry import FFunction, Lattice, distance, phi_boundary
from hastings_lab.lrbound import (lr_constants, lr_cor_assembled, lr_empirical, lr_rhs,
                                  truncation_check, truncation_rhs)
from hastings_lab.model import constants, local_hamiltonian, preset
from hastings_lab.opspace import Observable
from hastings_lab.spectral import diagonalize

Z = np.diag([1.0, -1.0])


def brute_f_constants(f, lat):
    n = len(lat)
    d = lat.dist
    norm = max(sum(f(d[x, y]) for y in range(n)) for x in range(n))
    c = max(sum(f(d[x, z]) * f(d[z, y]) for z in range(n)) / f(d[x, y])
            for x in range(n) for y in range(n))
    return float(norm), float(c)


def test_theorem_bound_against_hand_formula():
    lat = Lattice.chain(10)
    phi = preset("tfim", {"g": 2.0}, lat.full())
    f = FFunction(2.0)
    consts = lr_constants(phi, f, 1.0)
    x, y = lat.region([3]), lat.interval(1, 6)
    t = 0.5
    f_norm, c_f = brute_f_constants(f, lat)
    assert consts.c_f == pytest.approx(c_f, rel=1e-12)
    assert consts.phi_f_norm == pytest.approx(4.0)
    # the single-site X has both bonds leaving it
    far = sum((1 + abs(3 - yy)) ** -2.0 for yy in (0, 7, 8, 9))
    expected = 2 / c_f * math.expm1(2 * 4.0 * c_f * t) * far
    thm, cor = lr_rhs(x, y, t, phi, f, consts)
    assert thm == pytest.approx(expected, rel=1e-12)
    d = 3  # d({3}, {0, 7, 8, 9})
    assert cor == pytest.approx(consts.c_mu * 1 * math.exp(-(d - consts.v_mu * t)), rel=1e-12)


def test_constants_match_definitions():
    lat = Lattice.chain(12)
    phi = preset("tfim", {"g": 1.5}, lat.full())
    f = FFunction(2.0)
    for mu in (0.5, 1.0, 2.0):
        k = lr_constants(phi, f, mu)
        f_norm, _ = brute_f_constants(f, lat)
        _, c_f_mu = brute_f_constants(f.tilt(mu), lat)
        phi_mu = constants(phi, f.tilt(mu)).phi_f_norm
        assert k.c_mu == pytest.approx(2 * f_norm / c_f_mu, rel=1e-12)
        assert k.v_mu == pytest.approx(2 * phi_mu * c_f_mu / mu, rel=1e-12)
        assert k.phi_f_mu_norm <= math.exp(mu * phi.range) * k.phi_f_norm + 1e-10


def test_rhs_trivial_cases():
    lat = Lattice.chain(8)
    phi = preset("tfim", {"g": 1.0}, lat.full())
    f = FFunction()
    k = lr_constants(phi, f)
    x = lat.region([3])
    assert lr_rhs(x, lat.interval(1, 5), 0.0, phi, f, k)[0] == 0.0
    assert lr_rhs(x, lat.full(), 1.0, phi, f, k) == (0.0, 0.0)
    with pytest.raises(BadGeometry):
        lr_rhs(x, lat.region([4]), 1.0, phi, f, k)
    vals = [lr_rhs(x, lat.interval(1, 5), t, phi, f, k)[0] for t in (0.1, 0.2, 0.4, 0.8)]
    assert vals == sorted(vals) and vals[0] > 0


def test_corollary_matches_assembled_expression():
    lat = Lattice.chain(14)
    phi = preset("tfim", {"g": 2.0}, lat.full())
    f = FFunction()
    k = lr_constants(phi, f, 1.0)
    for x, y in ((lat.interval(5, 7), lat.interval(3, 9)), (lat.region([6]), lat.interval(2, 9))):
        for t in (0.0, 0.3, 1.0):
            cor = lr_rhs(x, y, t, phi, f, k)[1]
            assembled = lr_cor_assembled(x, y, t, phi, k)
            bx = phi_boundary(x, phi)
            yc = y.complement()
            relax = math.exp(-k.mu * (distance(bx, yc) - distance(x, yc)))
            assert assembled == pytest.approx(cor * relax, rel=1e-12)
            assert assembled <= cor * (1 + 1e-12)


def test_empirical_far_apart_at_time_zero():
    lat = Lattice.chain(6)
    phi = preset("tfim", {"g": 1.5}, lat.full())
    f = FFunction()
    k = lr_constants(phi, f)
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    a = Observable(lat.region([0]), Z, True)
    b = Observable(lat.region([5]), Z, True)
    s = lr_empirical(a, b, 0.0, spec, lat.full() - b.support, phi, f, k)
    assert s.measured == 0.0
    assert s.thm_margin == s.thm_bound and s.cor_margin == s.cor_bound


def test_empirical_commutators_below_both_bounds():
    lat = Lattice.chain(8)
    phi = preset("tfim", {"g": 1.5}, lat.full())
    f = FFunction()
    k = lr_constants(phi, f)
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    a = Observable(lat.region([2]), Z, True)
    for site in (4, 5, 7):
        b = Observable(lat.region([site]), Z, True)
        y = lat.full() - b.support
        for t in (0.25, 0.75, 1.5):
            s = lr_empirical(a, b, t, spec, y, phi, f, k)
            assert s.thm_margin >= -1e-9 and s.cor_margin >= -1e-9


def test_truncation_check_small_instance():
    lat = Lattice.chain(10)
    phi = preset("tfim", {"g": 2.0}, lat.full())
    k = lr_constants(phi, FFunction())
    a = Observable(lat.region([4, 5]), np.kron(Z, Z), True)
    inner = lat.interval(2, 7)
    outer = lat.full()
    assert truncation_check(a, inner, outer, 0.0, phi, k)[0] == 0.0
    assert truncation_check(a, outer, outer, 0.7, phi, k)[0] == 0.0
    for t in (0.25, 0.5):
        measured, rhs = truncation_check(a, inner, outer, t, phi, k)
        assert 0 < measured <= rhs + 1e-9


def test_truncation_rhs_formula_and_range_guard():
    lat = Lattice.chain(12)
    phi = preset("tfim", {"g": 2.0}, lat.full())
    k = lr_constants(phi, FFunction())
    j1 = constants(phi, FFunction()).j1
    x, inner = lat.region([5, 6]), lat.interval(2, 9)
    got = truncation_rhs(x, inner, 1.0, phi, k, j1)
    # d(inner^c, X) = 4, both boundaries have two sites
    want = (k.c_mu * j1 / (k.mu * k.v_mu) * 2 * 2 * math.exp(-(4 - 1))
            * math.expm1(k.mu * k.v_mu))
    assert got == pytest.approx(want, rel=1e-12)
    with pytest.raises(RangeViolation):
        truncation_rhs(x, lat.interval(5, 6), 1.0, phi, k, j1)


def test_truncation_measurement_matches_dense_difference():
    from hastings_lab.opspace import embed
    from hastings_lab.spectral import evolve
    lat = Lattice.chain(10)
    phi = preset("tfim", {"g": 2.0}, lat.full())
    k = lr_constants(phi, FFunction())
    inner = lat.interval(2, 7)
    outer_spec = diagonalize(local_hamiltonian(phi, lat.full()), gap_tol=-1.0)
    inner_spec = diagonalize(local_hamiltonian(phi, inner), gap_tol=-1.0)
    x_op = np.array([[0.0, 1.0], [1.0, 0.0]])
    for mat in (np.kron(Z, Z), np.kron(x_op, Z)):
        a = Observable(lat.region([4, 5]), mat, True)
        for t in (0.25, 1.0):
            measured, _ = truncation_check(a, inner, lat.full(), t, phi, k, outer_spec,
                                           inner_spec)
            diff = evolve(a, t, outer_spec).matrix - \
                embed(evolve(a, t, inner_spec), lat.full()).matrix
            dense = np.abs(np.linalg.eigvalsh(diff)).max()
            assert measured == pytest.approx(dense, rel=1e-9)
