import numpy as np
import pytest
import scipy.linalg

from qexpect import (
    SparseMatrix,
    SpinSystemSpec,
    build_hamiltonian,
    build_liouvillian,
    dec_evaluate_grid,
    dec_precompute,
    initial_state,
    krylov_propagate,
    krylov_step,
    observable_ip,
)

from conftest import random_hermitian, random_spin_spec


def test_step_on_eigenvector_is_single_iteration():
    l_op = SparseMatrix.from_dense(np.diag([2.0, -1.0, 0.5]))
    rho = np.array([0.0, 3.0, 0.0], dtype=complex)
    result = krylov_step(l_op, rho, dt=0.4)
    assert result.m_used == 1
    assert result.converged
    assert np.allclose(result.state, np.exp(-1j * (-1.0) * 0.4) * rho, atol=1e-14)


def test_step_two_by_two_analytic():
    l_op = SparseMatrix.from_dense(np.diag([0.0, 1.0]))
    rho = np.array([1.0, 1.0]) / np.sqrt(2.0)
    dt, eps = 0.1, 1e-7
    result = krylov_step(l_op, rho, dt, eps=eps)
    exact = scipy.linalg.expm(-1j * dt * np.diag([0.0, 1.0])) @ rho
    assert np.linalg.norm(result.state - exact) <= eps


def test_step_rejects_zero_state():
    with pytest.raises(ValueError, match="nonzero"):
        krylov_step(SparseMatrix.identity(3), np.zeros(3), dt=0.1)


def test_step_m_max_warning_flag(rng):
    a = random_hermitian(32, rng, scale=8.0)
    l_op = SparseMatrix.from_dense(a)
    rho = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    result = krylov_step(l_op, rho, dt=2.0, eps=1e-12, m_max=3)
    assert result.m_used == 3
    assert not result.converged


def test_step_norm_preservation(rng):
    spec = random_spin_spec(3, rng)
    l_op = build_liouvillian(build_hamiltonian(spec))
    rho = initial_state(3)
    eps = 1e-7
    for _ in range(20):
        before = np.linalg.norm(rho)
        rho = krylov_step(l_op, rho, 0.1, eps=eps).state
        assert abs(np.linalg.norm(rho) - before) <= 10 * eps


def test_step_iterations_monotone_in_eps(rng):
    spec = random_spin_spec(3, rng)
    l_op = build_liouvillian(build_hamiltonian(spec))
    rho = initial_state(3)
    m_loose = krylov_step(l_op, rho, 0.1, eps=1e-4).m_used
    m_tight = krylov_step(l_op, rho, 0.1, eps=1e-10).m_used
    assert m_loose <= m_tight


@pytest.mark.parametrize("dim", [8, 24, 64])
def test_step_error_sound_against_dense(dim, rng):
    a = random_hermitian(dim, rng, scale=2.0)
    l_op = SparseMatrix.from_dense(a)
    eps = 1e-7
    u = scipy.linalg.expm(-1j * 0.25 * a)
    rho = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    rho /= np.linalg.norm(rho)
    for _ in range(10):
        stepped = krylov_step(l_op, rho, 0.25, eps=eps).state
        exact = u @ rho
        assert np.linalg.norm(stepped - exact) <= 50 * eps
        rho = exact / np.linalg.norm(exact)


def test_propagate_zero_steps():
    spec = SpinSystemSpec(n=1, omega0=[1.0], j_coupling=np.zeros((1, 1)))
    l_op = build_liouvillian(build_hamiltonian(spec))
    trace = krylov_propagate(l_op, initial_state(1), 0.1, 0, {"ip": observable_ip(1)})
    assert trace.n_times == 1
    assert trace.values[0, 0] == pytest.approx(-0.5j)


def test_propagate_single_spin_analytic():
    omega = 1.0
    spec = SpinSystemSpec(n=1, omega0=[omega], j_coupling=np.zeros((1, 1)))
    l_op = build_liouvillian(build_hamiltonian(spec))
    eps = 1e-7
    steps = 1000
    trace = krylov_propagate(l_op, initial_state(1), 0.1, steps,
                             {"ip": observable_ip(1)}, eps=eps)
    analytic = -0.5j * np.exp(-1j * omega * trace.times)
    assert np.max(np.abs(trace.values[0] - analytic)) <= steps * eps


def test_propagate_agrees_with_direct_series(rng):
    spec = random_spin_spec(3, rng)
    l_op = build_liouvillian(build_hamiltonian(spec))
    rho0 = initial_state(3)
    obs = {"ip": observable_ip(3)}
    eps = 1e-7
    dt, steps = 0.1, 300
    krylov = krylov_propagate(l_op, rho0, dt, steps, obs, eps=eps)
    series = dec_precompute(l_op, rho0, obs, tau=dt * steps, eps=eps)
    direct = dec_evaluate_grid(series, krylov.times)
    assert np.max(np.abs(krylov.values[0] - direct.values[0])) <= 1e-5


def test_propagate_reports_unconverged_steps(rng):
    a = random_hermitian(16, rng, scale=10.0)
    l_op = SparseMatrix.from_dense(a)
    rho0 = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    w = np.zeros(16, dtype=complex)
    w[0] = 1.0
    trace = krylov_propagate(l_op, rho0, 1.0, 3, {"w": w}, eps=1e-12, m_max=4)
    assert trace.metadata["warnings"]
    assert "m_max" in trace.metadata["warnings"][0]
