import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hastings_lab.errors import BadConstants, GeometryOverflow, SupportMismatch
from hastings_lab.entropy import (DivisionVerdict, area_sweep, division_check, entropy,
                                  entropy_bound, fidelity, q_bound, q_distribution,
                                  reduced_density, region_entropy, relative_entropy, schmidt,
                                  sigma_check, window_search)
from hastings_lab.geometry import FFunction, Lattice
from hastings_lab.hastings import FactorizationConfig, factorize
from hastings_lab.lrbound import lr_constants
from hastings_lab.model import PAULI, Interaction, constants, local_hamiltonian, preset
from hastings_lab.opspace import Observable, StateVector, partial_trace
from hastings_lab.spectral import diagonalize

HEIS = np.real(sum(np.kron(PAULI[p], PAULI[p]) for p in "XYZ"))


def rand_state(rng, lat):
    d = lat.full().hilbert_dim
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector(v / np.linalg.norm(v), lat.full())


def bell_pairs(L):
    """Ground state of decoupled singlets on the bonds (0,1), (2,3), ..."""
    lat = Lattice.chain(L)
    phi = Interaction(lat, [Observable(lat.region([i, i + 1]), HEIS) for i in range(0, L, 2)],
                      1.0, "dimer")
    return lat, phi, diagonalize(local_hamiltonian(phi, lat.full()))


def tfim(L, g=2.0):
    lat = Lattice.chain(L)
    phi = preset("tfim", {"g": g}, lat.full())
    return lat, phi, diagonalize(local_hamiltonian(phi, lat.full()))


# ---------------------------------------------------------------------------
# Schmidt data and reduced states


def test_schmidt_of_product_and_bell_states():
    lat = Lattice.chain(2)
    prod = StateVector(np.array([1.0, 0, 0, 0]), lat.full())
    assert np.allclose(schmidt(prod, lat.region([0])).lambdas, [1.0, 0.0])
    bell = StateVector(np.array([1.0, 0, 0, 1.0]) / math.sqrt(2), lat.full())
    sp = schmidt(bell, lat.region([0]))
    assert np.allclose(sp.lambdas, [0.5, 0.5])
    assert entropy(sp) == pytest.approx(math.log(2), abs=1e-14)
    assert entropy(schmidt(prod, lat.region([0]))) == 0.0


def test_entropy_of_uniform_spectrum():
    for k in (1, 3, 16):
        assert entropy(np.full(k, 1 / k)) == pytest.approx(math.log(k), abs=1e-13)


def test_reduced_density_matches_partial_trace():
    rng = np.random.default_rng(0)
    lat = Lattice.chain(8)
    omega = rand_state(rng, lat)
    full = np.outer(omega.amplitudes, omega.amplitudes.conj())
    for keep in ([0, 1, 2], [1, 4, 6], [7], [0, 2, 3, 5, 6]):
        rho = reduced_density(omega, lat.region(keep))
        oracle = partial_trace(full, [2] * 8, keep)
        assert np.abs(rho - oracle).max() <= 1e-12
        lam = np.sort(np.clip(np.linalg.eigvalsh(oracle), 0, None))[::-1]
        sp = schmidt(omega, lat.region(keep)).lambdas
        assert np.abs(sp[: lam.size] - lam[: sp.size]).max() <= 1e-12
        # a pure state has equal entropy on both sides of any cut
        rest = lat.full() - lat.region(keep)
        assert region_entropy(omega, lat.region(keep)) == \
            pytest.approx(region_entropy(omega, rest), abs=1e-10)


def test_fidelity_routes_agree_on_random_states():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 11))
        lat = Lattice.chain(n)
        omega = rand_state(rng, lat)
        k = int(rng.integers(1, n))
        x = lat.region(sorted(rng.choice(n, size=k, replace=False)))
        spectral, operator = fidelity(omega, x)
        assert abs(spectral - operator) <= 1e-12
        lam = schmidt(omega, x).lambdas
        # sum lambda^3 >= (sum lambda^2)^2 by Cauchy-Schwarz
        assert spectral >= (lam**2).sum() ** 2 - 1e-15


# ---------------------------------------------------------------------------
# overlap of the projected pair state


def test_sigma_check_with_exact_ground_projection():
    lat, phi, spec = tfim(8)
    w = spec.ground.amplitudes
    p0 = np.outer(w, w.conj())
    x = lat.interval(3, 4)
    rank = schmidt(spec.ground, x).rank
    v = sigma_check(spec.ground, x, p0, rank)
    assert v.ok
    assert v.overlap == pytest.approx(1.0, abs=1e-12)
    assert v.checks["overlap_deficit"].rhs == pytest.approx(0.0, abs=1e-10)


def test_sigma_check_on_factorization_product():
    lat, phi, spec = bell_pairs(10)
    f = FFunction()
    x = lat.interval(3, 6)
    res = factorize(FactorizationConfig(x, 1.0), phi, spec, constants(phi, f),
                    lr_constants(phi, f))
    v = sigma_check(spec.ground, x, res.product, 2 ** len(res.o_b.support))
    assert v.ok, {k: c.as_dict() for k, c in v.checks.items()}


# ---------------------------------------------------------------------------
# reference distribution and the entropy bound


def test_q_bound_equality_and_uniform():
    lam = np.array([0.5, 0.25, 0.125, 0.125])
    assert q_bound(lam, lam) == pytest.approx(entropy(lam), abs=1e-15)
    assert q_bound(lam, np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-15)
    with pytest.raises(SupportMismatch):
        q_bound(lam, np.array([0.5, 0.5, 0.0, 0.0]))
    with pytest.raises(SupportMismatch):
        q_bound(lam, np.ones(3) / 3)


def test_q_bound_gibbs_fuzz():
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        n = int(rng.integers(1, 12))
        lam = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n)) * rng.uniform(0.2, 1.0)
        assert q_bound(lam, q) >= entropy(lam) - 1e-10


def test_q_distribution_first_scale_and_mass():
    q = q_distribution(4, 0.1, 2.0, 0.5, 2.0, 1.0, 2.0)
    # smallest m >= 1 with 16 exp(-m / 2) < 0.1
    assert q.m0 == 11
    assert q.n0 == 1
    assert q.total_mass() == pytest.approx(1.0, abs=1e-12)
    w = q.weights(4096)
    assert np.all(w > 0) and w.sum() <= 1 + 1e-12
    assert np.all(np.diff(w) <= 1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.floats(1e-3, 1.0), st.floats(1.01, 10.0), st.floats(0.05, 3.0))
def test_q_distribution_is_normalized(boundary, p_x, c1, c2):
    q = q_distribution(boundary, p_x, c1, c2, 2.0, 1.0, 2.0)
    assert q.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert 2 * c1 * boundary * math.exp(-c2 * q.m0) < p_x


def test_q_distribution_rejects_bad_constants():
    with pytest.raises(BadConstants):
        q_distribution(4, 0.1, 1.0, 0.5, 2.0, 1.0, 2.0)
    with pytest.raises(BadConstants):
        q_distribution(4, 0.0, 2.0, 0.5, 2.0, 1.0, 2.0)
    with pytest.raises(BadConstants):
        q_distribution(4, 0.1, 2.0, 0.5, 2.0, 0.5, 2.0)


def test_entropy_bound_against_closed_form():
    kappa, nu, d_inf, c1, c2, b, p = 2.0, 1.0, 2.0, 2.0, 0.5, 4, 0.1
    eb = entropy_bound(b, p, c2, (kappa, nu, d_inf, c1))
    # geometric sums with nu = 1 and stride 1
    r = math.exp(-c2)
    kl = kappa * math.log(d_inf)
    c3_mid = 3 * kl
    c3p = 3 * kl + c3_mid / (1 - r)
    c4p = 3 * kl * r / (1 - r) ** 2
    c5p = 1 / math.e + c2 * (r / (1 - r) ** 2 + 1 / (1 - r)) - math.log(1 - r) / (1 - r)
    c4 = c3p / c2
    c3f = c4 + c4 * (c2 + math.log(2 * c1)) + c4p + c5p
    assert eb.c3_mid == pytest.approx(c3_mid, rel=1e-13)
    assert eb.c3_prime == pytest.approx(c3p, rel=1e-13)
    assert eb.c4_prime == pytest.approx(c4p, rel=1e-13)
    assert eb.c5_prime == pytest.approx(c5p, rel=1e-13)
    assert eb.c4 == pytest.approx(c4, rel=1e-13)
    assert eb.c3_final == pytest.approx(c3f, rel=1e-13)
    want = c3f * b * math.log(b) + c4 * b * math.log(1 / p)
    assert eb.bound == pytest.approx(want, rel=1e-13)
    assert eb.collapse_valid
    assert eb.m0_form <= eb.pre_collapse + 1e-9
    assert eb.pre_collapse <= eb.bound + 1e-9


def test_entropy_bound_with_unit_overlap_drops_second_term():
    eb = entropy_bound(8, 1.0, 0.7, (2.0, 1.0, 2.0, 3.0))
    assert eb.bound == pytest.approx(eb.c3_final * 8 * math.log(8), rel=1e-13)
    assert not entropy_bound(2, 0.5, 0.7, (2.0, 1.0, 2.0, 3.0)).collapse_valid


# ---------------------------------------------------------------------------
# relative entropy and the division inequality


def test_relative_entropy_basic():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a = m @ m.conj().T
        a /= np.trace(a).real
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        b = m @ m.conj().T
        b /= np.trace(b).real
        assert relative_entropy(a, b) >= 0
        assert relative_entropy(a, a) == pytest.approx(0.0, abs=1e-10)
    diag = relative_entropy(np.diag([0.5, 0.5]), np.diag([0.25, 0.75]))
    assert diag == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-13)
    assert relative_entropy(np.diag([0.5, 0.5]), np.diag([1.0, 0.0])) == math.inf


def test_division_preconditions_fail_on_product_state():
    lat = Lattice.chain(6)
    phi = preset("onsite", {}, lat.full())
    spec = diagonalize(local_hamiltonian(phi, lat.full()))
    x = lat.interval(2, 3)
    ob = Observable(lat.full(), np.eye(64), True)
    v = division_check(spec.ground, x, lat.full(), ob, 1e-6)
    assert not v and "1/4" in v.reason
    lat, phi, spec = bell_pairs(6)
    x = lat.interval(1, 4)
    assert not division_check(spec.ground, x, lat.full(), ob, 0.01)
    assert not division_check(spec.ground, x, lat.interval(0, 4), ob, 1e-6)


@pytest.mark.parametrize("ell", [1.0, 2.0])
def test_division_inequality_on_dimer_chain(ell):
    # X = {3..6} cuts two singlets, so p_X = 1/16
    lat, phi, spec = bell_pairs(10)
    f = FFunction()
    x = lat.interval(3, 6)
    assert fidelity(spec.ground, x)[0] == pytest.approx(1 / 16, abs=1e-12)
    res = factorize(FactorizationConfig(x, ell), phi, spec, constants(phi, f),
                    lr_constants(phi, f))
    assert res.ok
    y = res.o_b_pos.support | x
    v = division_check(spec.ground, x, y, res.o_b_pos, res.defect_pos)
    assert isinstance(v, DivisionVerdict)
    assert v.ok, {k: c.as_dict() for k, c in v.checks.items()}
    assert v.s_y_in == pytest.approx(2 * math.log(2), abs=1e-10)


# ---------------------------------------------------------------------------
# window search and the area sweep


def brute_window(omega, lat, a, b, ell0):
    best = None
    for a0 in range(a, a - ell0 - 1, -1):
        for b0 in range(b, b + ell0 + 1):
            rho = reduced_density(omega, lat.interval(a0, b0))
            p = float(np.real(np.trace(rho @ rho @ rho)))
            if best is None or p > best[2] + 1e-15:
                best = (a0, b0, p)
    return best


def test_window_search_against_reduced_density_oracle():
    lat, phi, spec = tfim(10)
    for ell0 in (0, 2):
        a0, b0, p, met = window_search(phi, lat.full(), 4, 5, ell0, 0.5, spec)
        oa, ob, op = brute_window(spec.ground, lat, 4, 5, ell0)
        assert (a0, b0) == (oa, ob)
        assert p == pytest.approx(op, abs=1e-12)
        assert met == (op >= 0.5)
    with pytest.raises(GeometryOverflow):
        window_search(phi, lat.full(), 1, 5, 2, 0.5, spec)


def test_window_search_on_product_state():
    lat = Lattice.chain(6)
    phi = preset("onsite", {}, lat.full())
    a0, b0, p, met = window_search(phi, lat.full(), 2, 3, 1, 0.99)
    assert (a0, b0) == (2, 3) and p == pytest.approx(1.0) and met


def test_area_sweep_examples():
    lat = Lattice.chain(6)
    sweep = area_sweep(preset("onsite", {}, lat.full()), lat.full(), range(5))
    assert [r.s for r in sweep.reports] == pytest.approx([0.0] * 5, abs=1e-12)
    lat, phi, spec = bell_pairs(8)
    sweep = area_sweep(phi, lat.full(), range(7), spec)
    expect = [math.log(2) if m % 2 == 0 else 0.0 for m in range(7)]
    assert [r.s for r in sweep.reports] == pytest.approx(expect, abs=1e-10)
    assert [r.p_x for r in sweep.reports] == \
        pytest.approx([0.25 if m % 2 == 0 else 1.0 for m in range(7)], abs=1e-12)


# ---------------------------------------------------------------------------
# restriction and overlap invariants


def test_entropy_is_not_monotone_under_restriction():
    # a singlet: the half has log 2, the whole pure pair has 0
    lat, phi, spec = bell_pairs(2)
    assert region_entropy(spec.ground, lat.region([0])) == pytest.approx(math.log(2))
    assert region_entropy(spec.ground, lat.full()) == 0.0


def test_restriction_obeys_data_processing_bound():
    # partial trace is trace preserving: S(Y) <= S(X) + |Y - X| log d
    rng = np.random.default_rng(4)
    for _ in range(40):
        n = int(rng.integers(3, 9))
        lat = Lattice.chain(n)
        omega = rand_state(rng, lat)
        ys = sorted(rng.choice(n, size=int(rng.integers(2, n)), replace=False))
        xs = sorted(rng.choice(ys, size=int(rng.integers(1, len(ys))), replace=False))
        x, y = lat.region(xs), lat.region(ys)
        s_x, s_y = region_entropy(omega, x), region_entropy(omega, y)
        assert s_y <= s_x + len(y - x) * math.log(2) + 1e-10
        assert s_x <= s_y + len(y - x) * math.log(2) + 1e-10


def test_overlap_is_one_exactly_at_schmidt_rank_one():
    lat, phi, spec = bell_pairs(6)
    for m, rank in ((0, 2), (1, 1), (2, 2), (3, 1)):
        x = lat.interval(0, m)
        p = fidelity(spec.ground, x)[0]
        assert 0 < p <= 1 + 1e-12
        assert (abs(p - 1) <= 1e-12) == (schmidt(spec.ground, x).rank == 1)
        assert schmidt(spec.ground, x).rank == rank
