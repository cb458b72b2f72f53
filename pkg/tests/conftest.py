"""Shared fixtures and independent dense oracles.

The oracles here build operators from explicit Kronecker products and do
not touch the package's bit-manipulation code paths.
"""
import numpy as np
import pytest
import scipy.sparse

from hyperising.model import CouplingSet

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
ID = np.eye(2)


def site_operator(op, site, n):
    """Embed a one-site operator; site j is bit j of the basis index."""
    factors = [ID] * n
    factors[n - 1 - site] = op
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def site_diagonal(diag, site, n):
    """Diagonal of a one-site diagonal operator, as a Kronecker product of vectors."""
    factors = [np.ones(2)] * n
    factors[n - 1 - site] = np.asarray(diag)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def sparse_site_operator(op, site, n):
    return scipy.sparse.kron(scipy.sparse.kron(scipy.sparse.identity(1 << (n - 1 - site)), op),
                             scipy.sparse.identity(1 << site), format="csr")


def dense_hamiltonian(c: CouplingSet, gamma: float) -> np.ndarray:
    n = c.n
    sz = [site_diagonal([1.0, -1.0], j, n) for j in range(n)]
    diag = np.zeros(1 << n)
    field = scipy.sparse.csr_matrix((1 << n, 1 << n))
    for i in range(n):
        for r in range(1, c.radius + 1):
            diag -= c.J[r - 1] * sz[i] * sz[(i + r) % n]
        field = field + sparse_site_operator(SX, i, n)
    return np.diag(diag) - gamma * field.toarray()


def dense_expectations(psi, n):
    """zz matrix, <sz_j>, <sx_j> and <Mx^2> by explicit Kronecker operators."""
    sz = [sparse_site_operator(SZ, j, n) for j in range(n)]
    sx = [sparse_site_operator(SX, j, n) for j in range(n)]
    ev = lambda op: float(np.real(np.vdot(psi, op @ psi)))
    zz = np.array([[ev(sz[l] @ sz[j]) for j in range(n)] for l in range(n)])
    mz = np.array([ev(o) for o in sz])
    mx = np.array([ev(o) for o in sx])
    Mx = sum(sx)
    return zz, mz, mx, ev(Mx @ Mx)


def double_loop_energy(J, spins):
    n = len(spins)
    total = 0.0
    for i in range(n):
        for r in range(1, len(J) + 1):
            total -= J[r - 1] * spins[i] * spins[(i + r) % n]
    return total


def random_couplings(rng, n, radius=None):
    if radius is None:
        radius = int(rng.integers(1, (n - 1) // 2 + 1))
    return CouplingSet(n, radius, tuple(rng.uniform(-1, 1, radius)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def nn_ferro():
    return lambda n: CouplingSet(n, 1, (1.0,))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed again in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
