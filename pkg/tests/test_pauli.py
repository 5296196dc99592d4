import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import kron_pauli, kron_sum, random_state, random_sum
from icqse.errors import ConfigError, DimensionError, ResourceError
from icqse.model import hamiltonian
from icqse.pauli import PauliString, PauliSum, apply, dense, mul, pow, random_pauli, sum_mul, to_sparse


def strings(n):
    return st.builds(lambda x, z, e: PauliString(n, x, z, e),
                     st.integers(0, (1 << n) - 1), st.integers(0, (1 << n) - 1), st.integers(0, 3))


def X(n, q):
    return PauliString.single(n, "X", q)


def Y(n, q):
    return PauliString.single(n, "Y", q)


def Z(n, q):
    return PauliString.single(n, "Z", q)


class TestPauliString:
    def test_identity_fields(self):
        p = PauliString.identity(4)
        assert (p.x_mask, p.z_mask, p.phase_exp, p.weight) == (0, 0, 0, 0)

    def test_x_times_x_is_identity(self):
        r = mul(X(1, 0), X(1, 0))
        assert r.is_identity and r.phase_exp == 0

    def test_x_times_y_is_i_z(self):
        r = mul(X(1, 0), Y(1, 0))
        assert r.key == Z(1, 0).key and r.phase_exp == 1

    def test_all_two_qubit_products_match_dense(self):
        paulis = [PauliString(2, x, z) for x in range(4) for z in range(4)]
        for p, q in itertools.product(paulis, paulis):
            np.testing.assert_allclose(kron_pauli(mul(p, q)), kron_pauli(p) @ kron_pauli(q), atol=1e-14)

    def test_masks_beyond_size_rejected(self):
        with pytest.raises(ConfigError):
            PauliString(2, 0b100, 0)

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            mul(X(2, 0), X(3, 0))

    @settings(max_examples=300, deadline=None)
    @given(strings(5), strings(5), strings(5))
    def test_associative(self, p, q, r):
        assert mul(mul(p, q), r) == mul(p, mul(q, r))

    def test_associative_bulk(self, rng):
        n = 7
        for _ in range(10_000):
            p, q, r = (PauliString(n, *map(int, rng.integers(0, 1 << n, 2)), int(rng.integers(4)))
                       for _ in range(3))
            assert mul(mul(p, q), r) == mul(p, mul(q, r))

    @given(strings(4))
    def test_square_of_hermitian_is_plain_identity(self, p):
        if p.is_hermitian:
            sq = mul(p, p)
            assert sq.is_identity and sq.phase_exp == 0

    @settings(max_examples=200, deadline=None)
    @given(strings(3), strings(3))
    def test_commutation_matches_dense_commutator(self, p, q):
        a, b = kron_pauli(p), kron_pauli(q)
        assert p.commutes(q) == np.allclose(a @ b, b @ a)

    def test_label_round_trip(self):
        p = PauliString.from_label("Z5 X6 Z7", 8)
        assert p.to_label() == "Z5 X6 Z7"
        assert p.support() == [4, 5, 6]
        assert PauliString.from_label("I", 3).is_identity
        assert PauliString.from_label("Y1 X2", 2).letter(0) == "Y"

    @pytest.mark.parametrize("bad", ["Q1", "Z0", "Z9", "Z1 X1", "X"])
    def test_bad_labels(self, bad):
        with pytest.raises(ConfigError):
            PauliString.from_label(bad, 8)

    def test_permuted_moves_letters(self):
        p = PauliString.from_label("X1 Y2 Z4", 4)
        assert p.permuted([1, 2, 3, 0]).to_label() == "Z1 X2 Y3"


class TestRandomPauli:
    def test_single_qubit_letter_frequencies(self):
        rng = np.random.default_rng(7)
        counts = {"X": 0, "Y": 0, "Z": 0}
        draws = 10_000
        for _ in range(draws):
            counts[random_pauli(1, 1, rng).letter(0)] += 1
        sigma = np.sqrt(draws * (1 / 3) * (2 / 3))
        for c in counts.values():
            assert abs(c - draws / 3) < 3 * sigma

    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))),
           st.integers(0, 2**32))
    def test_weight_and_determinism(self, nw, seed):
        n, w = nw
        p = random_pauli(n, w, seed)
        assert p.weight == w and p.phase_exp == 0
        assert random_pauli(n, w, seed) == p

    @pytest.mark.parametrize("w", [0, 5])
    def test_weight_out_of_range(self, w):
        with pytest.raises(ConfigError):
            random_pauli(4, w, 0)


class TestPauliSum:
    def test_anticommuting_cross_terms_cancel(self):
        a = PauliSum.from_list(1, [(1, X(1, 0)), (1, Z(1, 0))])
        assert sum_mul(a, a) == PauliSum.identity(1, 2.0)

    def test_sum_mul_matches_dense(self, rng):
        for _ in range(20):
            a = random_sum(rng, 4, int(rng.integers(1, 7)))
            b = random_sum(rng, 4, int(rng.integers(1, 7)))
            np.testing.assert_allclose(kron_sum(sum_mul(a, b)), kron_sum(a) @ kron_sum(b), atol=1e-12)

    def test_phase_folded_into_coefficients(self):
        s = PauliSum.from_pauli(mul(X(1, 0), Y(1, 0)))
        assert s.terms == {Z(1, 0).key: 1j}

    def test_collection_threshold(self):
        a = PauliSum.from_list(2, [(1.0, X(2, 0)), (-1.0 + 1e-14, X(2, 0)), (0.5, Z(2, 1))])
        assert len(a) == 1

    def test_pow(self):
        h = hamiltonian(6, -0.5)
        assert pow(h, 1) == h
        assert pow(h, 0) == PauliSum.identity(6)
        assert pow(PauliSum.from_pauli(X(3, 0)), 2) == PauliSum.identity(3)
        with pytest.raises(ConfigError):
            pow(h, -1)

    def test_pow_hermitian(self):
        h = hamiltonian(6, 0.3)
        for p in (1, 2, 3):
            assert pow(h, p).is_hermitian(1e-9)

    def test_cube_max_weight_is_nine(self):
        assert pow(hamiltonian(11, -0.5), 3).max_weight() == 9

    def test_cube_term_count_permutation_invariant(self, rng):
        h = hamiltonian(8, -0.5)
        count = len(pow(h, 3))
        perm = rng.permutation(8)
        assert len(pow(h.permuted(perm), 3)) == count

    def test_cube_matches_dense(self):
        h = hamiltonian(5, 0.4)
        m = kron_sum(h)
        np.testing.assert_allclose(kron_sum(pow(h, 3)), m @ m @ m, atol=1e-10)

    def test_text_round_trip(self):
        h = hamiltonian(5, -0.5)
        assert PauliSum.from_text(h.to_text(), 5).allclose(h, 1e-12)
        s = PauliSum.from_text("0.5 Z1 Z2 + -1 X3 + 1e-3 Y1", 3)
        assert s.terms[PauliString.from_label("Y1", 3).key] == pytest.approx(1e-3)

    def test_hermiticity(self):
        assert hamiltonian(4, 0.2).is_hermitian()
        assert not PauliSum.from_list(1, [(1j, X(1, 0))]).is_hermitian()


class TestDense:
    def test_identity(self):
        np.testing.assert_array_equal(dense(PauliSum.identity(3)), np.eye(8))

    def test_z(self):
        np.testing.assert_array_equal(dense(PauliSum.from_pauli(Z(1, 0))), np.diag([1, -1]))

    def test_matches_oracle(self, rng):
        for _ in range(10):
            a = random_sum(rng, 4, 5)
            np.testing.assert_allclose(dense(a), kron_sum(a), atol=1e-14)

    def test_open_chain_hamiltonian_hermitian(self):
        from icqse.model import ModelParams, build_hamiltonian
        m = dense(build_hamiltonian(ModelParams.from_g(2, -0.5, pbc=False)))
        assert np.abs(m - m.conj().T).max() < 1e-12

    def test_guard(self):
        with pytest.raises(ResourceError):
            dense(PauliSum.identity(13))

    def test_apply_and_sparse_match_dense(self, rng):
        a = random_sum(rng, 5, 8)
        psi = random_state(rng, 5)
        m = kron_sum(a)
        np.testing.assert_allclose(apply(a, psi), m @ psi, atol=1e-12)
        np.testing.assert_allclose(to_sparse(a).toarray(), m, atol=1e-12)
