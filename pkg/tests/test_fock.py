from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import sparse

from lightcone import fock
from lightcone.lattice import Lattice, Region
from oracles import KronBosons, permute_to, reduced_density_by_sum


def sector(L, n):
    return fock.enumerate_sector(Lattice.chain(L).full(), n)


def random_hermitian(rng, m):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return (a + a.conj().T) / 2


# ---------------------------------------------------------------------------
# bases


@given(st.integers(1, 6), st.integers(0, 5))
def test_sector_dimension_is_stars_and_bars(L, n):
    basis = sector(L, n)
    assert basis.dim == math.comb(L + n - 1, n) == fock.sector_dimension(L, n)
    assert np.all(basis.states.sum(axis=1) == n)


def test_sector_order_is_descending_lexicographic():
    states = [tuple(r) for r in sector(3, 2).states]
    assert states == sorted(states, reverse=True)
    assert states[0] == (2, 0, 0) and states[-1] == (0, 0, 2)


@given(st.integers(1, 6), st.integers(0, 4))
def test_lookup_inverts_enumeration(L, n):
    basis = sector(L, n)
    assert np.array_equal(basis.lookup(basis.states), np.arange(basis.dim))
    assert basis.index_of(basis.states[-1]) == basis.dim - 1


def test_truncated_fock_space_offsets():
    space = fock.truncated_fock_space(Lattice.chain(3).full(), 2)
    assert space.dim == 1 + 3 + 6
    assert space.offsets == {0: 0, 1: 1, 2: 4}
    assert np.array_equal(space.lookup(space.states), np.arange(space.dim))
    with pytest.raises(fock.BasisMismatch):
        space.lookup(np.array([[3, 0, 0]]))


# ---------------------------------------------------------------------------
# second quantization against the Kronecker oracle


@given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_quadratic_and_pair_terms_match_kronecker_oracle(L, n, seed):
    rng = np.random.default_rng(seed)
    b = random_hermitian(rng, L)
    v = rng.standard_normal((L, L))
    v = v + v.T
    basis = sector(L, n)
    kron = KronBosons(L, n)
    ref_b, occs = kron.restrict(kron.hopping(b), n)
    ref_v, _ = kron.restrict(kron.pair(v), n)
    assert np.allclose(fock.second_quantize_kernel(b, basis).dense(), permute_to(basis.states, occs, ref_b), atol=1e-12)
    assert np.allclose(fock.pair_interaction(v, basis).dense(), permute_to(basis.states, occs, ref_v), atol=1e-12)


def _dg(b, basis):
    return fock.second_quantize_kernel(b, basis).dense()


def _ad(a, b):
    return a @ b - b @ a


@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_second_quantization_identities(L, n, seed):
    rng = np.random.default_rng(seed)
    basis = sector(L, n)
    v = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
    w = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
    c = complex(rng.standard_normal(), rng.standard_normal())
    # linearity and adjoint
    assert np.allclose(_dg(v + c * w, basis), _dg(v, basis) + c * _dg(w, basis), atol=1e-10)
    assert np.allclose(_dg(v.conj().T, basis), _dg(v, basis).conj().T, atol=1e-10)
    # nested commutators pass through dGamma
    ak, bk = _dg(v, basis), _dg(w, basis)
    one_k = w
    for _ in range(2):
        ak_w = _ad(ak, bk)
        one_k = _ad(v, one_k)
        assert np.allclose(ak_w, _dg(one_k, basis), atol=1e-10 * max(1, np.abs(ak_w).max()))
        bk = ak_w
    # pair term commutes with every second-quantized multiplier
    u = rng.standard_normal((L, L))
    V = fock.pair_interaction(u + u.T, basis).dense()
    f = rng.standard_normal(L)
    F = fock.second_quantize_multiplier(f, basis).dense()
    assert np.abs(_ad(V, F)).max(initial=0.0) <= 1e-10


@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_second_quantization_preserves_order(L, n, seed):
    rng = np.random.default_rng(seed)
    basis = sector(L, n)
    g = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
    psd = g @ g.conj().T
    v = random_hermitian(rng, L)
    gap = _dg(v + psd, basis) - _dg(v, basis)
    assert np.linalg.eigvalsh(gap).min() >= -1e-10
    # converse direction: a non-positive one-particle difference shows up on N >= 1
    neg = psd - (np.linalg.eigvalsh(psd).max() + 1.0) * np.eye(L)
    assert np.linalg.eigvalsh(_dg(neg, basis)).min() < 0


@given(st.integers(1, 5), st.integers(0, 3))
def test_canonical_commutation_between_sectors(L, n):
    lo = sector(L, n)
    hi = sector(L, n + 1)
    for x in range(L):
        for y in range(L):
            a_y = fock.annihilator(y, hi).matrix
            ad_x = fock.creator(x, lo).matrix
            # a_y a*_x - a*_x a_y on sector n
            lhs = (a_y @ ad_x).toarray()
            if n > 0:
                lhs -= (fock.creator(x, sector(L, n - 1)).matrix @ fock.annihilator(y, lo).matrix).toarray()
            assert np.allclose(lhs, (x == y) * np.eye(lo.dim), atol=1e-12)


def test_annihilator_on_vacuum_is_zero_map():
    op = fock.annihilator(0, sector(3, 0))
    assert op.matrix.shape == (1, 1) and op.matrix.nnz == 0


def test_apply_annihilator_matches_amplitude():
    basis = sector(3, 2)
    psi = fock.basis_state(basis, (2, 0, 0))
    out = fock.apply_annihilator(0, psi)
    assert out.basis.particles == 1
    assert np.isclose(out.amplitudes[out.basis.index_of((1, 0, 0))], math.sqrt(2))


def test_pair_interaction_rejects_bad_potentials():
    basis = sector(3, 2)
    with pytest.raises(ValueError, match="real"):
        fock.pair_interaction(1j * np.eye(3), basis)
    with pytest.raises(ValueError, match="symmetric"):
        fock.pair_interaction(np.triu(np.ones((3, 3))), basis)


def test_operator_checks():
    basis = sector(3, 1)
    with pytest.raises(ValueError, match="hermitian"):
        fock.Operator(basis, sparse.csr_matrix(np.triu(np.ones((3, 3)))), basis.region, True)
    with pytest.raises(fock.BasisMismatch):
        fock.Operator(basis, sparse.csr_matrix(np.eye(2)), basis.region)
    other = fock.identity_operator(sector(3, 2))
    with pytest.raises(fock.BasisMismatch):
        fock.identity_operator(basis) + other


@given(st.integers(0, 2**32 - 1))
def test_spectral_norm_paths_agree(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((40, 40))
    exact = np.linalg.norm(m, 2)
    assert math.isclose(fock.spectral_norm(m), exact, rel_tol=1e-12)
    big = sparse.random(600, 600, density=0.01, random_state=seed % 2**31) + sparse.identity(600)
    assert math.isclose(fock.spectral_norm(big), np.linalg.norm(big.toarray(), 2), rel_tol=1e-6)


# ---------------------------------------------------------------------------
# factorization, partial trace and localization


@given(st.integers(2, 5), st.integers(1, 3), st.data())
def test_factorization_is_a_permutation(L, n, data):
    basis = sector(L, n)
    S = Region(basis.region.lattice, data.draw(st.sets(st.integers(0, L - 1), min_size=1, max_size=L - 1)))
    U = fock.factorize(basis, S).unitary
    assert np.allclose((U @ U.getH()).toarray(), np.eye(basis.dim), atol=1e-12)
    assert sorted(U.indices) == list(range(basis.dim))


def test_partial_trace_matches_brute_force_sum():
    rng = np.random.default_rng(3)
    basis = sector(4, 3)
    amps = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    psi = fock.StateVector(basis, amps).normalized()
    Y = basis.region.lattice.region([1, 3])
    red = fock.partial_trace(psi, Y)
    ref = reduced_density_by_sum(psi.amplitudes, basis.states, [1, 3])
    for (oy, oy2), val in ref.items():
        assert np.isclose(red.matrix[red.basis.index_of(oy), red.basis.index_of(oy2)], val, atol=1e-13)
    assert np.allclose(red.matrix, fock.partial_trace(psi.density(), Y).matrix, atol=1e-13)
    assert math.isclose(red.trace, 1.0, rel_tol=1e-12)


def random_local_blocks(rng, S, n):
    return {k: random_hermitian(rng, fock.sector_dimension(len(S), k)) for k in range(n + 1)}


@given(st.integers(0, 2**32 - 1))
def test_partial_trace_duality(seed):
    rng = np.random.default_rng(seed)
    basis = sector(4, 2)
    lat = basis.region.lattice
    Y = lat.region(rng.choice(4, size=2, replace=False))
    rho = rng.standard_normal((basis.dim, basis.dim)) + 1j * rng.standard_normal((basis.dim, basis.dim))
    rho = rho @ rho.conj().T
    rho = fock.DensityMatrix(basis, rho / np.trace(rho))
    red = fock.partial_trace(rho, Y)
    blocks = random_local_blocks(rng, Y, 2)
    lifted = fock.lift_local_operator(blocks, Y, basis)
    full_block = np.zeros((red.basis.dim, red.basis.dim), dtype=complex)
    for k, blk in blocks.items():
        o = red.basis.offsets[k]
        full_block[o:o + blk.shape[0], o:o + blk.shape[0]] = blk
    lhs = rho.expectation(lifted)
    rhs = np.trace(red.matrix @ full_block)
    assert abs(lhs - rhs) <= 1e-10


@given(st.integers(0, 2**32 - 1))
def test_factorization_and_commutation_criteria_agree(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice.chain(4)
    S = lat.region(sorted(rng.choice(4, size=2, replace=False)))
    particles = range(0, 4)
    blocks = random_local_blocks(rng, S, 3)
    local = fock.operator_family(lambda b: fock.lift_local_operator(blocks, S, b), lat.full(), particles)
    assert all(fock.is_localized(op, S) for op in local.values())
    assert fock.commutes_with_outside_ladders(local, S)
    # hopping across the boundary of S breaks both criteria
    x, y = S.members[0], S.complement().members[0]
    b = np.zeros((4, 4))
    b[x, y] = b[y, x] = 1.0
    leaky = fock.operator_family(lambda bs: fock.second_quantize_kernel(b, bs), lat.full(), particles)
    assert not all(fock.is_localized(op, S) for n, op in leaky.items() if n > 0)
    assert not fock.commutes_with_outside_ladders(leaky, S)


def test_number_operator_localized_on_its_site():
    basis = sector(5, 2)
    n0 = fock.second_quantize_multiplier(np.eye(5)[0], basis)
    assert fock.is_localized(n0, basis.region.lattice.region([0]))
    assert not fock.is_localized(n0, basis.region.lattice.region([1]))


# ---------------------------------------------------------------------------
# fidelity and file export


def test_fidelity_two_ways():
    rng = np.random.default_rng(1)
    space = fock.truncated_fock_space(Lattice.chain(2).full(), 2)
    phi = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
    phi /= np.linalg.norm(phi)
    g = rng.standard_normal((space.dim, space.dim)) + 1j * rng.standard_normal((space.dim, space.dim))
    rho = fock.DensityMatrix(space, g @ g.conj().T / np.trace(g @ g.conj().T))
    sigma = fock.DensityMatrix(space, np.outer(phi, phi.conj()))
    assert abs(fock.fidelity(rho, sigma) - fock.fidelity_with_pure(rho, phi)) <= 1e-10
    assert math.isclose(fock.fidelity(sigma, sigma), 1.0, rel_tol=1e-12)
    recovered = fock.pure_vector(sigma)
    assert abs(abs(np.vdot(recovered, phi)) - 1) < 1e-10
    assert fock.pure_vector(rho) is None


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    fock.write_matrix(tmp_path / "m.mtx", m)
    assert np.array_equal(fock.read_matrix(tmp_path / "m.mtx"), m)


def test_superposition_normalizes():
    basis = sector(3, 1)
    psi = fock.superposition(basis, {(1, 0, 0): 3.0, (0, 0, 1): 4.0})
    assert math.isclose(psi.norm, 1.0)
    assert np.isclose(psi.amplitudes[basis.index_of((0, 0, 1))], 0.8)
