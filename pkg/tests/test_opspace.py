import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hastings_lab.errors import DegenerateCut, DimensionMismatch, SupportNotContained
from hastings_lab.geometry import Lattice, Region
from hastings_lab.opspace import (Observable, StateVector, apply_local, apply_local_right,
                                  bipartition, cond_expect, embed, is_hermitian,
                                  load_observable, norm_commutator, opnorm, partial_trace,
                                  save_observable, twirl, twirl_weyl, weyl_operators)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def rand_matrix(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def random_instance(rng, lat, max_sites=8):
    n = rng.integers(2, max_sites + 1)
    s = Region(lat, rng.choice(len(lat), size=n, replace=False))
    k = rng.integers(1, n)
    x = Region(lat, rng.choice(list(s.idx), size=k, replace=False))
    return s, x


def vol(obs, region):
    return embed(obs, region).matrix


# ---------------------------------------------------------------------------
# conditional expectation axioms


@pytest.mark.parametrize("seed", range(5))
def test_cond_expect_axioms(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice.chain(10)
    for _ in range(20):
        s, x = random_instance(rng, lat)
        a = Observable(s, rand_matrix(rng, s.hilbert_dim))
        e = cond_expect(a, x)
        assert e.support == x
        # idempotent
        again = cond_expect(Observable(s, vol(e, s)), x)
        assert np.abs(again.matrix - e.matrix).max() <= 1e-10
        # positive
        pos = cond_expect(Observable(s, a.matrix.conj().T @ a.matrix), x)
        assert np.linalg.eigvalsh(pos.matrix).min() >= -1e-10
        # bimodule
        b1 = Observable(x, rand_matrix(rng, x.hilbert_dim))
        b2 = Observable(x, rand_matrix(rng, x.hilbert_dim))
        lhs = cond_expect(Observable(s, vol(b1, s) @ a.matrix @ vol(b2, s)), x).matrix
        rhs = b1.matrix @ e.matrix @ b2.matrix
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())
        # contraction
        assert e.norm() <= a.norm() + 1e-10
        # unital
        one = cond_expect(Observable(s, np.eye(s.hilbert_dim)), x)
        assert np.abs(one.matrix - np.eye(x.hilbert_dim)).max() <= 1e-12


def test_twirl_lands_in_commutant_and_matches_weyl_average():
    rng = np.random.default_rng(3)
    lat = Lattice.chain(6)
    for _ in range(10):
        s, x = random_instance(rng, lat, max_sites=5)
        a = Observable(s, rand_matrix(rng, s.hilbert_dim))
        t = twirl(a, x)
        assert t.support == s - x
        w = twirl_weyl(a, x)
        assert np.abs(vol(t, w.support) - w.matrix).max() <= 1e-12
        for site in x.idx:
            for p in (X, Z):
                b = Observable(Region(lat, [site]), p)
                assert norm_commutator(Observable(w.support, w.matrix), b)[0] <= 1e-10


def test_weyl_operators_form_a_unitary_basis():
    for d in (2, 3, 4):
        ops = list(weyl_operators(d))
        assert len(ops) == d * d
        gram = np.array([[np.trace(u.conj().T @ v) / d for v in ops] for u in ops])
        assert np.abs(gram - np.eye(d * d)).max() <= 1e-12


# ---------------------------------------------------------------------------
# embeddings, partial traces and norms


def test_embed_matches_kron_order():
    lat = Lattice.chain(4)
    a = Observable(lat.region([1]), X)
    b = Observable(lat.region([3]), Z)
    full = lat.full()
    expect = np.kron(np.kron(np.eye(2), X), np.kron(np.eye(2), Z))
    assert np.allclose(vol(a @ b, full), expect)
    ab = Observable(lat.region([1, 3]), np.kron(X, Z))
    assert np.allclose(vol(ab, full), expect)


def test_apply_local_agrees_with_embedding():
    rng = np.random.default_rng(0)
    lat = Lattice.chain(5)
    volm = lat.full()
    a = Observable(lat.region([0, 3]), rand_matrix(rng, 4))
    m = rand_matrix(rng, 32)
    big = vol(a, volm)
    assert np.allclose(apply_local(a, m, volm), big @ m)
    assert np.allclose(apply_local_right(m, a, volm), m @ big)
    v = m[:, 0]
    assert np.allclose(apply_local(a, v, volm), big @ v)


def test_partial_trace_of_product():
    rng = np.random.default_rng(1)
    a, b, c = rand_matrix(rng, 2), rand_matrix(rng, 2), rand_matrix(rng, 2)
    m = np.kron(np.kron(a, b), c)
    assert np.allclose(partial_trace(m, [2, 2, 2], [0, 2]), np.kron(a, c) * np.trace(b))
    assert np.allclose(partial_trace(m, [2, 2, 2], []), np.trace(m))


def test_opnorm_routes_agree():
    rng = np.random.default_rng(2)
    for d in (16, 1500):
        m = rng.standard_normal((d, d))
        h = m + m.T
        assert opnorm(h) == pytest.approx(np.abs(np.linalg.eigvalsh(h)).max(), rel=1e-10)
        if d <= 256:
            assert opnorm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-10)
    assert opnorm(np.zeros((3, 3))) == 0.0


def test_opnorm_large_non_hermitian():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((1200, 1200)) / 40
    assert opnorm(m, False) == pytest.approx(np.linalg.norm(m, 2), rel=1e-9)


def test_norm_commutator_pauli():
    lat = Lattice.chain(3)
    x0 = Observable(lat.region([0]), X)
    z0 = Observable(lat.region([0]), Z)
    z2 = Observable(lat.region([2]), Z)
    assert norm_commutator(x0, z0)[0] == pytest.approx(2.0)
    assert norm_commutator(x0, z2) == (0.0, 1.0, 1.0)


def test_observable_validation():
    lat = Lattice.chain(2)
    with pytest.raises(DimensionMismatch):
        Observable(lat.region([0]), np.eye(4))
    with pytest.raises(SupportNotContained):
        embed(Observable(lat.full(), np.eye(4)), lat.region([0]))
    with pytest.raises(ValueError):
        StateVector(np.ones(4), lat.full())
    assert is_hermitian(X) and not is_hermitian(X @ Z)


def test_bipartition_round_trip():
    rng = np.random.default_rng(5)
    lat = Lattice.chain(4)
    cut = bipartition(lat.region([1, 3]), lat.full())
    a = rand_matrix(rng, 4)
    b = rand_matrix(rng, 4)
    # operator a on {1,3}, b on {0,2}: split basis gives kron(a, b)
    big = vol(Observable(lat.region([1, 3]), a) @ Observable(lat.region([0, 2]), b), lat.full())
    assert np.allclose(cut.to_split(big), np.kron(a, b))
    assert np.allclose(cut.from_split(cut.to_split(big)), big)
    assert cut.split_dims == (4, 4)
    with pytest.raises(DegenerateCut):
        bipartition(lat.full(), lat.full())


def test_observable_container_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    lat = Lattice.chain(2)
    m = rand_matrix(rng, 4)
    path = tmp_path / "obs.bin"
    save_observable(path, Observable(lat.full(), m))
    back = load_observable(path, lat.full())
    assert np.array_equal(back.matrix, m)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(DimensionMismatch):
        load_observable(path)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cond_expect_preserves_trace_against_region_operators(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice.chain(5)
    s, x = random_instance(rng, lat, max_sites=5)
    a = Observable(s, rand_matrix(rng, s.hilbert_dim))
    b = Observable(x, rand_matrix(rng, x.hilbert_dim))
    # tr(E(A) B) on x equals the normalized tr(A B) on s
    lhs = np.trace(cond_expect(a, x).matrix @ b.matrix) / x.hilbert_dim
    rhs = np.trace(a.matrix @ vol(b, s)) / s.hilbert_dim
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_opnorm_on_clustered_linear_operator():
    from scipy.sparse.linalg import LinearOperator
    # a top plateau of near-degenerate values stalls Lanczos at tight tolerances
    rng = np.random.default_rng(7)
    q, _ = np.linalg.qr(rng.standard_normal((600, 600)))
    vals = np.concatenate([1 - 1e-7 * rng.random(200), rng.uniform(-0.9, 0.9, 400)])
    h = (q * vals) @ q.T
    op = LinearOperator(h.shape, matvec=lambda x: h @ x, dtype=float)
    assert opnorm(op, hermitian=True) == pytest.approx(np.abs(vals).max(), rel=1e-12)
