import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from bqamd.constellation import Modulation, map_block, points, slice_symbols
from bqamd.objective import (
    BlockProblem,
    LambdaSchedule,
    block_cost,
    block_cost_table,
    block_observation,
    extract_hubo,
    hubo_from_table,
    index_to_spins,
    lambda_of,
    lex_rank,
    mmse_hard,
    mmse_reference,
    spin_table,
    spins_to_index,
)
from bqamd.preprocess import preprocess

from conftest import crandn, random_block_problem


class TestLambda:
    def test_midpoint(self):
        assert lambda_of(13.0) == pytest.approx(0.2275, abs=1e-12)

    def test_limits(self):
        assert lambda_of(1e6) == pytest.approx(0.005)
        assert lambda_of(-1e6) == pytest.approx(0.45)

    def test_strictly_decreasing_and_bounded(self):
        vals = [lambda_of(r) for r in range(0, 31, 2)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(0.005 < v < 0.45 for v in vals)

    def test_custom_schedule(self):
        s = LambdaSchedule(0.1, 0.3, 5.0, 1.0)
        assert lambda_of(5.0, s) == pytest.approx(0.2)
        assert s.as_list() == [0.1, 0.3, 5.0, 1.0]


class TestBlockObservation:
    def test_last_block_is_rotated_observation(self, rng):
        H, y = crandn(rng, 6, 6), crandn(rng, 6)
        plan = preprocess(H, y, 2)
        np.testing.assert_allclose(block_observation(plan, 2, np.zeros(0)), plan.y_rot[4:])

    def test_zero_suffix(self, rng):
        H, y = crandn(rng, 6, 6), crandn(rng, 6)
        plan = preprocess(H, y, 2)
        np.testing.assert_allclose(block_observation(plan, 0, np.zeros(4)), plan.y_rot[:2])

    def test_matches_dense_expression(self, rng):
        H, y = crandn(rng, 6, 6), crandn(rng, 6)
        plan = preprocess(H, y, 2)
        z = crandn(rng, 6)
        expect = plan.y_rot[2:4] - plan.R[2:4, 4:] @ z[4:]
        np.testing.assert_allclose(block_observation(plan, 1, z[4:]), expect, atol=1e-12)

    def test_wrong_suffix_length(self, rng):
        H, y = crandn(rng, 4, 4), crandn(rng, 4)
        with pytest.raises(ValueError):
            block_observation(preprocess(H, y, 2), 0, np.zeros(3))


class TestMmse:
    def test_identity_channel_slices_observation(self, rng):
        y = crandn(rng, 4)
        np.testing.assert_array_equal(mmse_hard(np.eye(4), y, 0.0, "QAM16"), slice_symbols(y, "QAM16"))

    def test_noiseless_unitary_recovers(self, rng):
        U, _ = np.linalg.qr(crandn(rng, 4, 4))
        x = points(Modulation.QAM16)[rng.integers(16, size=4)]
        np.testing.assert_allclose(mmse_hard(U, U @ x, 0.0, "QAM16"), x)

    def test_matches_augmented_least_squares(self, rng):
        for _ in range(10):
            H, y = crandn(rng, 4, 4), crandn(rng, 4)
            s2 = 0.3
            A = np.vstack([H, np.sqrt(s2) * np.eye(4)])
            b = np.concatenate([y, np.zeros(4)])
            x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
            np.testing.assert_allclose(mmse_hard(H, y, s2, "QAM16"), slice_symbols(x_ls, "QAM16"))

    def test_reference_is_reordered_block(self, rng):
        H, y = crandn(rng, 4, 4), crandn(rng, 4)
        perm = np.array([2, 0, 3, 1])
        full = mmse_hard(H, y, 0.1, "QPSK")
        np.testing.assert_array_equal(mmse_reference(H, y, 0.1, perm, slice(2, 4), "QPSK"), full[[3, 1]])

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            mmse_hard(np.eye(2), np.ones(2), -1.0, "QPSK")


class TestBlockCost:
    def test_exact_fit_is_zero(self, rng):
        R = np.triu(crandn(rng, 2, 2)) + np.eye(2)
        s = np.array([1, -1, 1, 1, -1, -1, 1, -1])
        z = map_block(s, "QAM16")
        prob = BlockProblem(0, R @ z, R, Modulation.QAM16)
        assert block_cost(prob, s) == pytest.approx(0.0, abs=1e-24)

    def test_zero_lambda_equals_unregularized(self, rng):
        prob = random_block_problem(rng, lam=0.0)
        reg = BlockProblem(0, prob.y_bar, prob.R_diag, prob.mod, points(prob.mod)[:2], 0.0)
        np.testing.assert_allclose(block_cost_table(reg), block_cost_table(prob))

    def test_quadratic_form_expansion(self, rng):
        prob = random_block_problem(rng, lam=0.37)
        R, yb, zr = prob.R_diag, prob.y_bar, prob.z_ref
        G = R.conj().T @ R
        u = R.conj().T @ yb
        for k in rng.integers(256, size=20):
            s = index_to_spins(k, 8)
            g = map_block(s, "QAM16")
            expect = (g.conj() @ G @ g).real - 2 * (u.conj() @ g).real + np.vdot(yb, yb).real
            expect += 0.37 * np.sum(np.abs(g - zr) ** 2)
            assert block_cost(prob, s) == pytest.approx(expect, rel=1e-10)

    def test_wrong_spin_count(self, rng):
        with pytest.raises(ValueError):
            block_cost(random_block_problem(rng), np.ones(7))

    def test_problem_validation(self, rng):
        with pytest.raises(ValueError):
            BlockProblem(0, np.ones(2, complex), np.eye(2), Modulation.QAM16, None, 0.2)
        with pytest.raises(ValueError):
            BlockProblem(0, np.ones(2, complex), np.eye(3), Modulation.QAM16)
        with pytest.raises(ValueError):
            BlockProblem(0, np.ones(2, complex), np.eye(2), Modulation.QAM16, None, -0.1)


class TestIndexing:
    def test_round_trip(self):
        for k in range(64):
            assert spins_to_index(index_to_spins(k, 6)) == k

    def test_spin_table_rows(self):
        t = spin_table(3)
        np.testing.assert_array_equal(t[0], [1, 1, 1])
        np.testing.assert_array_equal(t[1], [-1, 1, 1])
        np.testing.assert_array_equal(t[6], [1, -1, -1])

    def test_lex_rank_orders_bit_strings(self):
        q = 4
        strings = ["".join(str((k >> r) & 1) for r in range(q)) for k in range(1 << q)]
        ranks = lex_rank(q)
        assert sorted(range(1 << q), key=lambda k: ranks[k]) == sorted(range(1 << q), key=lambda k: strings[k])


def dense_coefficients(f):
    n = len(f)
    return hadamard(n) @ f / n


class TestHubo:
    def test_constant(self):
        poly = hubo_from_table(np.full(8, 2.5))
        assert poly.constant == pytest.approx(2.5)
        assert poly.terms == {}

    def test_pure_parity(self):
        t = spin_table(3)
        poly = hubo_from_table(t[:, 1] * t[:, 2].astype(float))
        assert poly.constant == pytest.approx(0.0)
        assert poly.terms.keys() == {0b110}
        assert poly.terms[0b110] == pytest.approx(1.0)

    @pytest.mark.parametrize("lam", [0.0, 0.3])
    def test_reconstruction_q8(self, rng, lam):
        prob = random_block_problem(rng, lam=lam)
        poly = extract_hubo(prob)
        table = block_cost_table(prob)
        for k in range(256):
            assert poly.evaluate(index_to_spins(k, 8)) == pytest.approx(table[k], abs=1e-9)

    def test_coefficients_match_dense_hadamard(self, rng):
        prob = random_block_problem(rng, lam=0.2)
        poly = extract_hubo(prob)
        np.testing.assert_allclose(poly.coefficient_vector(), dense_coefficients(block_cost_table(prob)), atol=1e-12)

    def test_ml_sets_agree(self, rng):
        prob = random_block_problem(rng)
        poly = extract_hubo(prob)
        table = block_cost_table(prob)
        vals = np.array([poly.evaluate(s) for s in spin_table(8)])
        assert set(np.flatnonzero(np.isclose(vals, vals.min(), atol=1e-9))) == set(
            np.flatnonzero(np.isclose(table, table.min(), atol=1e-9))
        )

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
    def test_order_bounds(self, seed, n):
        rng = np.random.default_rng(seed)
        assert extract_hubo(random_block_problem(rng, n, Modulation.QPSK, lam=0.1)).max_order <= 2
        assert extract_hubo(random_block_problem(rng, min(n, 2), Modulation.QAM16, lam=0.1)).max_order <= 4

    def test_size_bound(self, rng):
        prob = random_block_problem(rng, n_symbols=6)
        with pytest.raises(ValueError):
            extract_hubo(prob)

    def test_all_assignments_exhaustively_small(self):
        # one QPSK symbol: cost |y - z|^2 has only linear terms
        prob = BlockProblem(0, np.array([0.3 - 0.2j]), np.eye(1, dtype=complex), Modulation.QPSK)
        poly = extract_hubo(prob)
        assert poly.max_order == 1
        for s in itertools.product((1, -1), repeat=2):
            z = (s[0] + 1j * s[1]) / np.sqrt(2)
            assert poly.evaluate(s) == pytest.approx(abs(0.3 - 0.2j - z) ** 2)
