"""Relay scheme constructions, the DFT duality, and the Gramian."""

import numpy as np
import pytest

from relaydiv import (
    InternalConsistencyError,
    InvalidParameterError,
    RelayScheme,
    SchemeInvalidError,
    custom_scheme,
    cyclic_delay_scheme,
    dft_matrix,
    gramian,
    phase_rolling_scheme,
)


def test_cdd_single_relay_is_scaled_identity():
    scheme = cyclic_delay_scheme(1, 2)
    np.testing.assert_allclose(scheme.matrices[0], np.eye(2) / np.sqrt(2))


def test_cdd_shift_by_one_on_length_two():
    scheme = cyclic_delay_scheme(2, 2)
    np.testing.assert_allclose(scheme.matrices[1], np.array([[0, 1], [1, 0]]) / np.sqrt(2))


def test_cdd_shifts_vector_up():
    # entry n of P_i x is x[(n + i - 1) mod N]
    scheme = cyclic_delay_scheme(3, 4)
    x = np.arange(4).astype(complex)
    shifted = scheme.matrices[2] @ x * 2.0  # undo 1/sqrt(N)
    np.testing.assert_allclose(shifted, [2, 3, 0, 1])


@pytest.mark.parametrize("k,n", [(1, 1), (2, 2), (2, 5), (4, 4), (3, 8)])
def test_cdd_shift_matrices_orthogonal(k, n):
    scheme = cyclic_delay_scheme(k, n)
    perms = [g * np.sqrt(n) for g in scheme.matrices]
    for i, pi in enumerate(perms):
        for j, pj in enumerate(perms):
            inner = np.trace(pi @ pj.conj().T)
            assert abs(inner - (n if i == j else 0.0)) <= 1e-12


def test_phase_rolling_first_matrix_identity():
    for n in (1, 3, 5):
        scheme = phase_rolling_scheme(1, n)
        np.testing.assert_allclose(scheme.matrices[0], np.eye(n) / np.sqrt(n))


def test_phase_rolling_quarter_turns():
    scheme = phase_rolling_scheme(2, 4)
    lam2 = np.diag(scheme.matrices[1]) * 2.0
    np.testing.assert_allclose(lam2, [1, 1j, -1, -1j], atol=1e-14)


def test_dft_matrix_small_cases():
    np.testing.assert_allclose(dft_matrix(1), [[1.0]])
    np.testing.assert_allclose(
        dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15
    )


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16, 33])
def test_dft_matrix_unitary(n):
    f = dft_matrix(n)
    assert np.abs(f @ f.conj().T - np.eye(n)).max() <= 1e-12


@pytest.mark.parametrize("n", [2, 4, 8, 12])
def test_permutations_diagonalized_by_dft(n):
    f = dft_matrix(n)
    cdd = cyclic_delay_scheme(n, n)
    pr = phase_rolling_scheme(n, n)
    for gc, gp in zip(cdd.matrices, pr.matrices):
        p_i = gc * np.sqrt(n)
        lam_i = gp * np.sqrt(n)
        assert np.abs(p_i - f.conj().T @ lam_i @ f).max() <= 1e-12
        # the two scheme families are DFT duals
        assert np.abs(gp - f @ gc @ f.conj().T).max() <= 1e-12


def test_unitary_scaling_constraint_on_builtins():
    for k, n in [(1, 1), (2, 3), (3, 8), (5, 5)]:
        for scheme in (cyclic_delay_scheme(k, n), phase_rolling_scheme(k, n)):
            for g in scheme.matrices:
                assert np.abs(g @ g.conj().T - np.eye(n) / n).max() <= 1e-12


def test_relay_count_cannot_exceed_block_length():
    with pytest.raises(InvalidParameterError):
        cyclic_delay_scheme(3, 2)
    with pytest.raises(InvalidParameterError):
        phase_rolling_scheme(5, 4)
    with pytest.raises(InvalidParameterError):
        cyclic_delay_scheme(0, 2)


def test_custom_scheme_accepts_scaled_identity():
    scheme = custom_scheme([np.eye(3) / np.sqrt(3)])
    assert scheme.num_relays == 1


def test_custom_scheme_rejects_unscaled_identity():
    with pytest.raises(SchemeInvalidError) as excinfo:
        custom_scheme([np.eye(4)])
    assert excinfo.value.index == 0
    assert excinfo.value.deviation == pytest.approx(1.0 - 0.25)


def test_custom_scheme_matches_builtin_gramian():
    cdd = cyclic_delay_scheme(3, 5)
    rebuilt = custom_scheme([np.array(g) for g in cdd.matrices])
    np.testing.assert_allclose(gramian(rebuilt).gram, gramian(cdd).gram, atol=1e-14)


def test_gramian_identity_for_cdd_and_phase_rolling():
    for k, n in [(1, 1), (2, 4), (3, 8), (4, 4)]:
        for scheme in (cyclic_delay_scheme(k, n), phase_rolling_scheme(k, n)):
            summary = gramian(scheme)
            np.testing.assert_allclose(summary.gram, np.eye(k), atol=1e-12)
            assert summary.lambda_min == pytest.approx(1.0, abs=1e-12)
            assert summary.lambda_max == pytest.approx(1.0, abs=1e-12)


def test_phase_rolling_gramian_off_diagonals_vanish_by_geometric_sum():
    # entry (r, c) is (1/N) sum_n exp(j 2 pi n (c - r) / N), a full root-of-unity sum
    k, n = 4, 6
    summary = gramian(phase_rolling_scheme(k, n))
    grid = np.arange(n)
    for r in range(k):
        for c in range(k):
            expected = np.exp(2j * np.pi * grid * (c - r) / n).sum() / n
            assert abs(summary.gram[r, c] - expected) <= 1e-12


def test_gramian_of_duplicated_matrix_is_all_ones():
    g = np.eye(3) / np.sqrt(3)
    scheme = RelayScheme((g, g))
    summary = gramian(scheme)
    np.testing.assert_allclose(summary.gram, np.ones((2, 2)), atol=1e-12)
    assert summary.lambda_min == pytest.approx(0.0, abs=1e-12)
    assert summary.lambda_max == pytest.approx(2.0, abs=1e-12)


def test_gramian_trace_equals_relay_count():
    rng = np.random.default_rng(11)
    for _ in range(20):
        k = int(rng.integers(1, 5))
        n = int(rng.integers(k, 9))
        scheme = phase_rolling_scheme(k, n)
        summary = gramian(scheme)
        assert abs(np.trace(summary.gram).real - k) <= 1e-10
        assert abs(summary.eigenvalues.sum() - k) <= 1e-10


def test_gramian_invariant_under_common_left_unitary():
    rng = np.random.default_rng(23)
    base = cyclic_delay_scheme(3, 6)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6)))
    rotated = custom_scheme([q @ g for g in base.matrices])
    np.testing.assert_allclose(gramian(rotated).gram, gramian(base).gram, atol=1e-12)


def test_gramian_eigenvalues_clamped_at_zero():
    # a rank-deficient Gramian computes a tiny negative eigenvalue in floating
    # point; the summary must clamp it to exactly zero
    g = np.eye(4) / 2.0
    summary = gramian(RelayScheme((g, g, g)))
    assert summary.lambda_min == 0.0
    assert summary.eigenvalues.min() == 0.0


def test_scheme_matrices_are_immutable():
    scheme = cyclic_delay_scheme(2, 4)
    with pytest.raises(ValueError):
        scheme.matrices[0][0, 0] = 5.0
