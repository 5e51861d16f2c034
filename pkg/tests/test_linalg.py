import numpy as np
import pytest

from rrmar.linalg import (
    PermutationSpec,
    column_space_basis,
    kron,
    kron_null_decomposition,
    nearest_psd,
    null_space_basis,
    sample_matrix_normal,
    spectral_radius,
    vec,
    vecb,
    vecb_permutation,
)


def test_kron_identity_blocks():
    assert np.array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))


def test_kron_scalar_case():
    b = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(kron(np.array([[2.0]]), b), 2.0 * b)


def test_kron_swap_blocks():
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = kron(np.eye(2), swap)
    expected = np.zeros((4, 4))
    expected[:2, :2] = swap
    expected[2:, 2:] = swap
    assert np.array_equal(out, expected)


def test_kron_rejects_nonfinite():
    with pytest.raises(ValueError):
        kron(np.array([[np.nan]]), np.eye(2))


def test_vec_definition():
    assert np.array_equal(vec(np.array([[1.0, 3.0], [2.0, 4.0]])), [1, 2, 3, 4])


def test_vec_column_vector_passthrough():
    v = np.array([[1.0], [2.0], [3.0]])
    assert np.array_equal(vec(v), [1, 2, 3])


def test_vec_of_triple_product_identity():
    # vec(A X B) == kron(B.T, A) vec(X), checked against the direct product
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.standard_normal((2, 3))
        x = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        lhs = vec(a @ x @ b)
        rhs = kron(b.T, a) @ vec(x)
        assert np.linalg.norm(lhs - rhs) < 1e-10


def test_vecb_explicit_order_3x4():
    # r1=2, r2=2 on a 3x4 matrix: (1,1),(1,2), rows 2-3 of cols 1-2
    # column-wise, row 1 of cols 3-4, rows 2-3 of cols 3-4 column-wise.
    m = np.arange(12.0).reshape(3, 4)
    out = vecb(m, 2, 2)
    expected = [
        m[0, 0], m[0, 1],
        m[1, 0], m[2, 0], m[1, 1], m[2, 1],
        m[0, 2], m[0, 3],
        m[1, 2], m[2, 2], m[1, 3], m[2, 3],
    ]
    assert np.array_equal(out, expected)


def test_vecb_full_rank_reduces_to_vec():
    m = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(vecb(m, 3, 4), vec(m))


def test_vecb_degenerate_block_is_reordered_vec():
    # r2 = cols: the two left blocks are empty, output is a row reorder of vec
    m = np.arange(6.0).reshape(2, 3)
    out = vecb(m, 1, 3)
    assert sorted(out.tolist()) == sorted(vec(m).tolist())


def test_vecb_rank_out_of_range():
    with pytest.raises(ValueError):
        vecb(np.eye(3), 4, 1)
    with pytest.raises(ValueError):
        vecb_permutation(3, 3, 1, -1)


def test_vecb_matches_permutation_path():
    rng = np.random.default_rng(11)
    for n1, n2, r1, r2 in [(2, 2, 1, 1), (3, 4, 2, 2), (3, 4, 1, 3), (4, 5, 3, 2)]:
        m = rng.standard_normal((n1, n2))
        perm = vecb_permutation(n1, n2, r1, r2)
        assert np.array_equal(vecb(m, r1, r2), perm.apply(vec(m)))
        assert np.array_equal(perm.matrix() @ vec(m), vecb(m, r1, r2))


def test_vecb_permutation_identity_at_full_ranks():
    perm = vecb_permutation(3, 4, 3, 4)
    assert np.array_equal(perm.indices, np.arange(12))


def test_vecb_permutation_2x2_brute_force():
    # enumerate block membership for every index of a 2x2, r1=r2=1
    n1 = n2 = 2
    expected = []
    for rows, cols in [((0,), (0,)), ((1,), (0,)), ((0,), (1,)), ((1,), (1,))]:
        for j in cols:
            for i in rows:
                expected.append(j * n1 + i)
    perm = vecb_permutation(n1, n2, 1, 1)
    assert perm.indices.tolist() == expected


def test_permutation_round_trip():
    perm = vecb_permutation(3, 4, 2, 1)
    x = np.arange(12.0)
    assert np.array_equal(perm.inverse().apply(perm.apply(x)), x)


def test_permutation_rejects_non_bijection():
    with pytest.raises(ValueError):
        PermutationSpec(np.array([0, 0, 1]))


def test_null_space_of_identity_is_empty():
    assert null_space_basis(np.eye(4)).shape == (4, 0)


def test_null_space_of_ones_vector():
    b = null_space_basis(np.array([[1.0], [1.0]]))
    assert b.shape == (2, 1)
    expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
    assert min(np.linalg.norm(b[:, 0] - expected), np.linalg.norm(b[:, 0] + expected)) < 1e-12


def test_null_space_random_tall_matrix():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((4, 2))
    b = null_space_basis(m)
    assert b.shape == (4, 2)
    assert np.linalg.norm(b.T @ m) < 1e-10
    assert np.allclose(b.T @ b, np.eye(2), atol=1e-12)


def test_null_space_residual_bound():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = rng.standard_normal((5, 3)) @ rng.standard_normal((3, 4))
        b = null_space_basis(m)
        assert np.linalg.norm(b.T @ m) <= 1e-12 * np.linalg.norm(m) + 1e-14


def test_kron_null_decomposition_trivial_full_rank():
    rng = np.random.default_rng(5)
    u1 = rng.standard_normal((3, 3))
    u2 = rng.standard_normal((4, 4))
    b1, b2, b3 = kron_null_decomposition(u1, u2)
    assert b1.shape[1] == 0 and b2.shape[1] == 0 and b3.shape[1] == 0


def test_kron_null_decomposition_widths_3x4():
    rng = np.random.default_rng(6)
    u1 = rng.standard_normal((3, 2))
    u2 = rng.standard_normal((4, 3))
    b1, b2, b3 = kron_null_decomposition(u1, u2)
    assert (b1.shape[1], b2.shape[1], b3.shape[1]) == (2, 3, 1)
    assert b1.shape[1] + b2.shape[1] + b3.shape[1] == 3 * 4 - 2 * 3


def test_kron_null_decomposition_annihilation_and_orthogonality():
    rng = np.random.default_rng(8)
    for n1, n2, r1, r2 in [(3, 4, 2, 3), (4, 4, 1, 2), (5, 3, 3, 1)]:
        u1 = rng.standard_normal((n1, r1))
        u2 = rng.standard_normal((n2, r2))
        bases = kron_null_decomposition(u1, u2)
        k = np.kron(u2, u1)
        stacked = np.hstack(bases)
        assert np.max(np.abs(stacked.T @ k)) < 1e-10
        assert np.linalg.matrix_rank(stacked) == n1 * n2 - r1 * r2
        for i in range(3):
            for j in range(i + 1, 3):
                if bases[i].size and bases[j].size:
                    assert np.max(np.abs(bases[i].T @ bases[j])) < 1e-10
        # together with col(u2) ⊗ col(u1) the bases span the whole space
        full = np.hstack(
            [stacked, np.kron(column_space_basis(u2), column_space_basis(u1))]
        )
        assert np.linalg.matrix_rank(full) == n1 * n2


def test_kron_null_decomposition_rejects_rank_deficiency():
    u1 = np.ones((3, 2))
    with pytest.raises(ValueError):
        kron_null_decomposition(u1, np.eye(4)[:, :2])


def test_spectral_radius_diagonal():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)


def test_spectral_radius_nilpotent():
    assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(0.0)


def test_spectral_radius_companion_vs_polynomial_roots():
    a1, a2 = 0.5, 0.3
    comp = np.array([[a1, a2], [1.0, 0.0]])
    roots = np.roots([1.0, -a1, -a2])
    assert spectral_radius(comp) == pytest.approx(np.max(np.abs(roots)), abs=1e-12)


def test_spectral_radius_requires_square():
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))


def test_nearest_psd_leaves_psd_input():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((4, 4))
    psd = a @ a.T
    out = nearest_psd(psd)
    assert np.max(np.abs(out - psd)) < 1e-11


def test_nearest_psd_clamps_negative_eigenvalue():
    out = nearest_psd(np.diag([1.0, -0.3]))
    assert np.allclose(out, np.diag([1.0, 0.0]), atol=1e-11)


def test_nearest_psd_matches_eigh_projection_oracle():
    rng = np.random.default_rng(10)
    m = rng.standard_normal((5, 5))
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    oracle = v @ np.diag(np.maximum(w, 0.0)) @ v.T
    assert np.max(np.abs(nearest_psd(m) - oracle)) < 1e-10
    assert np.min(np.linalg.eigvalsh(nearest_psd(m))) >= 0.0


def test_nearest_psd_idempotent():
    rng = np.random.default_rng(12)
    m = rng.standard_normal((4, 4))
    once = nearest_psd(m)
    twice = nearest_psd(once)
    assert np.max(np.abs(twice - once)) < 1e-10


def test_sample_matrix_normal_monte_carlo_covariance():
    rng = np.random.default_rng(13)
    n = 100_000
    draws = np.empty((n, 6))
    for i in range(n):
        draws[i] = sample_matrix_normal(rng, np.zeros((2, 3)), np.eye(2), np.eye(3)).reshape(-1, order="F")
    cov = np.cov(draws, rowvar=False)
    # entries of a sample covariance of N(0, I) have sd <= sqrt(2/n)
    assert np.max(np.abs(cov - np.eye(6))) < 3.0 * np.sqrt(2.0 / n)


def test_sample_matrix_normal_kronecker_covariance():
    rng = np.random.default_rng(14)
    sigma1 = np.array([[2.0, 0.5], [0.5, 1.0]])
    sigma2 = np.array([[1.0, -0.3], [-0.3, 0.5]])
    n = 100_000
    draws = np.empty((n, 4))
    for i in range(n):
        draws[i] = sample_matrix_normal(rng, np.zeros((2, 2)), sigma1, sigma2).reshape(-1, order="F")
    cov = np.cov(draws, rowvar=False)
    target = np.kron(sigma2, sigma1)
    scale = np.sqrt(np.outer(np.diag(target), np.diag(target)))
    assert np.max(np.abs(cov - target) / scale) < 3.0 * np.sqrt(2.0 / n)


def test_sample_matrix_normal_zero_covariance_limit():
    rng = np.random.default_rng(15)
    mean = np.arange(6.0).reshape(2, 3)
    out = sample_matrix_normal(rng, mean, 1e-30 * np.eye(2), 1e-30 * np.eye(3))
    assert np.max(np.abs(out - mean)) < 1e-12


def test_sample_matrix_normal_deterministic_given_seed():
    a = sample_matrix_normal(np.random.default_rng(42), np.zeros((3, 2)), np.eye(3), np.eye(2))
    b = sample_matrix_normal(np.random.default_rng(42), np.zeros((3, 2)), np.eye(3), np.eye(2))
    assert np.array_equal(a, b)


def test_sample_matrix_normal_rejects_non_pd():
    rng = np.random.default_rng(16)
    with pytest.raises(ValueError):
        sample_matrix_normal(rng, np.zeros((2, 2)), np.diag([1.0, -1.0]), np.eye(2))
