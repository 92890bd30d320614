import numpy as np
import pytest

from qexpect import (
    ResourceError,
    SparseMatrix,
    kron,
    linear_combine,
    matvec_counter,
    spmv,
    trace_form,
    unvec,
    vec,
)

from conftest import random_hermitian


def test_spmv_identity():
    x = np.array([1.0, 1.0j, 0.0, -2.0])
    y = spmv(SparseMatrix.identity(4), x)
    assert np.array_equal(y, x)


def test_spmv_diagonal():
    a = SparseMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
    assert np.array_equal(spmv(a, np.ones(3)), [1.0, 2.0, 3.0])


def test_spmv_single_entry():
    a = SparseMatrix.from_triplets([0], [1], [1.0j], shape=(2, 2))
    y = spmv(a, np.array([0.0, 3.0]))
    assert np.array_equal(y, [3.0j, 0.0])


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        spmv(SparseMatrix.identity(3), np.ones(4))


@pytest.mark.parametrize("dim", [7, 64, 256])
def test_spmv_matches_dense(dim, rng):
    a_dense = random_hermitian(dim, rng)
    a_dense[rng.random((dim, dim)) < 0.5] = 0.0
    a = SparseMatrix.from_dense(a_dense)
    x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    y = spmv(a, x)
    ref = a_dense @ x
    assert np.linalg.norm(y - ref) <= 1e-13 * max(np.linalg.norm(ref), 1.0)


def test_spmv_increments_counter():
    before = matvec_counter.count
    spmv(SparseMatrix.identity(2), np.ones(2))
    assert matvec_counter.count == before + 1


def test_kron_identity_factor():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    c = kron(SparseMatrix.identity(2), SparseMatrix.from_dense(m))
    expected = np.block([[m, np.zeros((2, 2))], [np.zeros((2, 2)), m]])
    assert np.array_equal(c.to_dense(), expected)


def test_kron_diagonal_case():
    m = SparseMatrix.from_dense(np.diag([2.0, 5.0]))
    c = kron(m, SparseMatrix.identity(2))
    assert np.array_equal(np.diag(c.to_dense()).real, [2.0, 2.0, 5.0, 5.0])


def test_kron_pauli_example():
    sz = SparseMatrix.from_dense(np.diag([1.0, -1.0]))
    sx = SparseMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    c = kron(sz, sx).to_dense()
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[1, 0] = 1.0
    expected[2, 3] = expected[3, 2] = -1.0
    assert np.array_equal(c, expected)


def test_kron_matches_dense_product(rng):
    a_d = random_hermitian(4, rng)
    b_d = random_hermitian(4, rng)
    c = kron(SparseMatrix.from_dense(a_d), SparseMatrix.from_dense(b_d))
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    ref = np.kron(a_d, b_d) @ x
    assert np.linalg.norm(spmv(c, x) - ref) <= 1e-13 * np.linalg.norm(ref)


def test_kron_dimension_guard():
    a = SparseMatrix.identity(1 << 13)
    with pytest.raises(ResourceError, match="exceeds"):
        kron(a, a, max_dim=1 << 20)


def test_linear_combine_cancellation():
    a = SparseMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 3.0]]))
    c = linear_combine(1.0, a, -1.0, a)
    assert c.nnz == 0


def test_linear_combine_copy():
    a = SparseMatrix.from_dense(np.array([[1.0, 0.0], [0.0, 2.0]]))
    b = SparseMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    c = linear_combine(1.0, a, 0.0, b)
    assert np.array_equal(c.to_dense(), a.to_dense())


def test_linear_combine_merged_pattern():
    a = SparseMatrix.from_dense(np.diag([1.0, 2.0]))
    b = SparseMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    c = linear_combine(1.0, a, 1.0, b)
    assert np.array_equal(c.to_dense(), np.array([[1.0, 1.0], [1.0, 2.0]]))


def test_linear_combine_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        linear_combine(1.0, SparseMatrix.identity(2), 1.0, SparseMatrix.identity(3))


def test_triplets_sum_duplicates_and_accept_unordered():
    a = SparseMatrix.from_triplets(
        rows=[1, 0, 1, 0], cols=[0, 1, 0, 1], values=[2.0, 1.0, 3.0, -1.0], shape=(2, 2)
    )
    # (1,0) entries sum to 5; (0,1) entries cancel exactly and are pruned
    assert a.nnz == 1
    assert a.to_dense()[1, 0] == 5.0
    assert np.all(np.diff(a.row_offsets) >= 0)


def test_explicit_zeros_pruned():
    a = SparseMatrix.from_triplets([0, 1], [0, 1], [0.0, 2.0], shape=(2, 2))
    assert a.nnz == 1


def test_column_indices_sorted_within_rows():
    a = SparseMatrix.from_triplets([0, 0, 0], [2, 0, 1], [1.0, 2.0, 3.0], shape=(1, 3))
    assert np.array_equal(a.col_indices, [0, 1, 2])


def test_storage_is_immutable():
    a = SparseMatrix.identity(3)
    with pytest.raises(ValueError):
        a.values[0] = 7.0


def test_trace_form_identity():
    w = trace_form(SparseMatrix.identity(2))
    rho = vec(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert w @ rho == pytest.approx(5.0)  # a + d


def test_trace_form_zero_observable():
    w = trace_form(SparseMatrix.zeros(2))
    assert np.all(w == 0)


def test_trace_form_shift_up_against_dense():
    # rho = -Iy, Q = Ix + i*Iy: trace is -i/2
    iy = np.array([[0.0, -0.5j], [0.5j, 0.0]])
    ip = np.array([[0.0, 1.0], [0.0, 0.0]])
    w = trace_form(SparseMatrix.from_dense(ip))
    value = w @ vec(-iy)
    assert value == pytest.approx(-0.5j)
    assert value == pytest.approx(np.trace((-iy) @ ip))


def test_trace_form_linearity(rng):
    q1 = random_hermitian(4, rng)
    q2 = random_hermitian(4, rng)
    rho = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    alpha, beta = 1.3 - 0.2j, -0.7 + 2.1j
    combined = trace_form(
        SparseMatrix.from_dense(alpha * q1 + beta * q2)
    )
    split = alpha * (trace_form(SparseMatrix.from_dense(q1)) @ rho) + beta * (
        trace_form(SparseMatrix.from_dense(q2)) @ rho
    )
    assert abs(combined @ rho - split) <= 1e-12 * max(abs(split), 1.0)


def test_trace_form_hermitian_real(rng):
    q = random_hermitian(8, rng)
    rho_mat = random_hermitian(8, rng)
    value = trace_form(SparseMatrix.from_dense(q)) @ vec(rho_mat)
    assert abs(value.imag) <= 1e-12


def test_trace_form_requires_square():
    a = SparseMatrix.from_triplets([0], [0], [1.0], shape=(2, 3))
    with pytest.raises(ValueError, match="square"):
        trace_form(a)


def test_vec_unvec_roundtrip(rng):
    m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert np.array_equal(unvec(vec(m)), m)


def test_vec_is_column_stacking():
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert np.array_equal(vec(m), [1.0, 2.0, 3.0, 4.0])


def test_spmv_is_run_to_run_deterministic(rng):
    a_dense = random_hermitian(128, rng)
    a_dense[rng.random((128, 128)) < 0.6] = 0.0
    a = SparseMatrix.from_dense(a_dense)
    x = rng.standard_normal(128) + 1j * rng.standard_normal(128)
    assert np.array_equal(spmv(a, x), spmv(a, x))
