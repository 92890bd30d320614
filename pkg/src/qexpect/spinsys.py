"""Spin-1/2 systems: operators, Hamiltonian, Liouvillian, states, observables.

Conventions fixed here (and validated against the dense oracle in the test
suite):

* basis ordering: site 0 is the slowest-varying Kronecker factor;
* single-spin basis: ``Iz = diag(1/2, -1/2)`` (spin-up first), so the shift-up
  operator ``Ip = Ix + i*Iy`` has its unit entry at (0, 1);
* angular frequencies throughout (rad per time unit); converting from cyclic
  frequencies is the caller's job (the CLI multiplies Hz by 2*pi);
* with column-stacking vectorisation the commutator superoperator is
  ``L = Id (x) H - H.T (x) Id``, which satisfies ``L vec(rho) = vec(H rho - rho H)``
  and is Hermitian for Hermitian H.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .sparse import SparseMatrix, kron, linear_combine, vec

__all__ = [
    "SpinOperatorSet",
    "SpinSystemSpec",
    "spin_half",
    "embed",
    "build_hamiltonian",
    "build_liouvillian",
    "initial_state",
    "observable_ip",
    "observable_iz",
    "observable_by_name",
]


@dataclass(frozen=True)
class SpinOperatorSet:
    """The three Cartesian spin-1/2 operators as dense 2x2 arrays."""

    ix: np.ndarray
    iy: np.ndarray
    iz: np.ndarray

    @property
    def ip(self) -> np.ndarray:
        """Shift-up operator ``Ix + i*Iy``."""
        return self.ix + 1j * self.iy


def spin_half() -> SpinOperatorSet:
    return SpinOperatorSet(
        ix=np.array([[0.0, 0.5], [0.5, 0.0]], dtype=np.complex128),
        iy=np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=np.complex128),
        iz=np.array([[0.5, 0.0], [0.0, -0.5]], dtype=np.complex128),
    )


@dataclass(frozen=True)
class SpinSystemSpec:
    """An n-spin-1/2 problem: Larmor frequencies and scalar couplings.

    ``omega0[j]`` is the angular Larmor frequency of spin j and ``j_coupling``
    the symmetric coupling matrix (zero diagonal), both in rad per time unit.
    """

    n: int
    omega0: np.ndarray
    j_coupling: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega0", np.asarray(self.omega0, dtype=float))
        object.__setattr__(self, "j_coupling", np.asarray(self.j_coupling, dtype=float))
        if self.n < 1:
            raise ConfigError("spin count must be at least 1")
        if self.omega0.shape != (self.n,):
            raise ConfigError(
                f"omega0 has shape {self.omega0.shape}, expected ({self.n},)"
            )
        if not np.all(np.isfinite(self.omega0)):
            raise ConfigError("omega0 entries must be finite")
        j = self.j_coupling
        if j.shape != (self.n, self.n):
            raise ConfigError(
                f"coupling matrix has shape {j.shape}, expected ({self.n}, {self.n})"
            )
        if not np.all(np.isfinite(j)):
            raise ConfigError("coupling entries must be finite")
        if not np.array_equal(j, j.T):
            bad = np.argwhere(j != j.T)
            r, c = bad[0]
            raise ConfigError(
                f"coupling matrix must be symmetric: J[{r},{c}]={j[r, c]!r} "
                f"differs from J[{c},{r}]={j[c, r]!r}"
            )
        if np.any(np.diag(j) != 0.0):
            raise ConfigError("coupling matrix must have a zero diagonal")
        self.omega0.flags.writeable = False
        self.j_coupling.flags.writeable = False

    @property
    def hilbert_dim(self) -> int:
        return 2**self.n

    @property
    def liouville_dim(self) -> int:
        return 4**self.n


def embed(op: np.ndarray, site: int, n: int) -> SparseMatrix:
    """Single-site operator extended with identities: ``Id (x) op (x) Id``."""
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} spins")
    result = SparseMatrix.from_dense(op)
    if site > 0:
        result = kron(SparseMatrix.identity(2**site), result)
    if site < n - 1:
        result = kron(result, SparseMatrix.identity(2 ** (n - 1 - site)))
    return result


def build_hamiltonian(spec: SpinSystemSpec) -> SparseMatrix:
    """Chemical-shift plus isotropic-coupling Hamiltonian.

    ``H = -sum_j omega0[j] Iz_j + sum_{j<l} J[j,l] (Ix_j Ix_l + Iy_j Iy_l + Iz_j Iz_l)``
    with each unordered pair counted once.
    """
    ops = spin_half()
    dim = spec.hilbert_dim
    h = SparseMatrix.zeros(dim).csr
    for j in range(spec.n):
        if spec.omega0[j] != 0.0:
            h = h + (-spec.omega0[j]) * embed(ops.iz, j, spec.n).csr
    for j in range(spec.n):
        for l in range(j + 1, spec.n):
            coupling = spec.j_coupling[j, l]
            if coupling == 0.0:
                continue
            for axis in (ops.ix, ops.iy, ops.iz):
                term = embed(axis, j, spec.n).csr @ embed(axis, l, spec.n).csr
                h = h + coupling * term
    return SparseMatrix(h)


def build_liouvillian(h: SparseMatrix) -> SparseMatrix:
    """Commutator superoperator for column-stacked states.

    ``L = Id (x) H - H.T (x) Id`` so that ``L vec(rho) = vec(H rho - rho H)``.
    """
    ident = SparseMatrix.identity(h.nrows)
    return linear_combine(1.0, kron(ident, h), -1.0, kron(h.transpose(), ident))


def initial_state(n: int) -> np.ndarray:
    """Vectorised ``-sum_j Iy_j``, the state right after an x pulse."""
    if n < 1:
        raise ValueError("need at least one spin")
    ops = spin_half()
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for j in range(n):
        rho -= embed(ops.iy, j, n).to_dense()
    return vec(rho)


def _total(op: np.ndarray, n: int) -> SparseMatrix:
    total = SparseMatrix.zeros(2**n).csr
    for j in range(n):
        total = total + embed(op, j, n).csr
    return SparseMatrix(total)


def observable_ip(n: int) -> SparseMatrix:
    """Total shift-up operator ``sum_j (Ix_j + i*Iy_j)``; its trace against
    the evolving state is the detected free-induction signal."""
    if n < 1:
        raise ValueError("need at least one spin")
    return _total(spin_half().ip, n)


def observable_iz(n: int) -> SparseMatrix:
    """Total ``Iz`` (longitudinal magnetisation)."""
    if n < 1:
        raise ValueError("need at least one spin")
    return _total(spin_half().iz, n)


def observable_by_name(name: str, n: int) -> SparseMatrix:
    """Resolve observables named in configs.

    Totals: ``ip``, ``ix``, ``iy``, ``iz``. Site-resolved variants use a
    colon suffix, e.g. ``ip:0`` or ``iz:3``.
    """
    ops = spin_half()
    table = {"ip": ops.ip, "ix": ops.ix, "iy": ops.iy, "iz": ops.iz}
    base, _, site_txt = name.strip().lower().partition(":")
    if base not in table:
        raise ConfigError(f"unknown observable {name!r}; expected one of {sorted(table)}")
    if not site_txt:
        return _total(table[base], n)
    try:
        site = int(site_txt)
    except ValueError as exc:
        raise ConfigError(f"bad site index in observable {name!r}") from exc
    if not 0 <= site < n:
        raise ConfigError(f"observable {name!r}: site must be in [0, {n})")
    return embed(table[base], site, n)
