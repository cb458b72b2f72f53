"""Truncated configuration-interaction expansions around classical references.

The Hamiltonian splits into the diagonal classical part and the field term
V = -Gamma sum_j X_j. Around a reference configuration the basis holds every
configuration reachable by flipping at most L distinct spins; V couples
members one flip apart. Bases built on several references are kept disjoint
so that each reference defines an independent block.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConvergenceError, InvalidReferenceError, ValidationError
from .model import CouplingSet, SpinConfiguration, batch_classical_energies, check_gamma

__all__ = [
    "CIBasis",
    "CISolution",
    "CIScan",
    "build_ci_basis",
    "ci_matrix_elements",
    "ci_ground",
    "to_quantum_state",
    "multi_reference_scan",
    "write_scan_csv",
    "write_crossover_report",
    "structure_factor_distance",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 4000
TIE_TOL = 1e-12
LEVEL_NAMES = {1: "CIS", 2: "CISD", 3: "CISDT", 4: "CISDTQ"}


@dataclass(frozen=True)
class CIBasis:
    reference: SpinConfiguration
    level: int
    members: tuple
    dropped: tuple = ()
    index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.index:
            object.__setattr__(self, "index", {b: i for i, b in enumerate(self.members)})

    def __len__(self):
        return len(self.members)

    @property
    def n(self) -> int:
        return self.reference.n

    @property
    def name(self) -> str:
        return LEVEL_NAMES.get(self.level, f"CI{self.level}")


@dataclass(frozen=True)
class CISolution:
    gamma: float
    energy: float
    coefficients: np.ndarray
    reference_weight: float
    reference_id: int
    dimension: int


def _as_bits(item, n):
    if isinstance(item, SpinConfiguration):
        if item.n != n:
            raise ValidationError(f"configuration has {item.n} sites, expected {n}")
        return item.bits
    return int(item)


def build_ci_basis(ref: SpinConfiguration, level: int, exclusions=()) -> CIBasis:
    """Reference plus all configurations with 1..level flipped sites.

    Members are ordered by flip count, then lexicographically by the flipped
    site tuple. Members found in ``exclusions`` are dropped and listed in
    ``CIBasis.dropped``.
    """
    n = ref.n
    if not 0 <= level <= n:
        raise ValidationError(f"excitation level must lie in 0..{n}, got {level}")
    excluded = {_as_bits(x, n) for x in exclusions}
    if ref.bits in excluded:
        raise InvalidReferenceError(f"reference {ref.bitstring} lies inside another reference's basis")
    members, dropped = [], []
    for order in range(level + 1):
        for sites in itertools.combinations(range(n), order):
            bits = ref.bits
            for j in sites:
                bits ^= 1 << j
            (dropped if bits in excluded else members).append(bits)
    return CIBasis(ref, level, tuple(members), tuple(dropped))


def _coupling_pattern(basis: CIBasis):
    rows, cols = [], []
    for i, bits in enumerate(basis.members):
        for j in range(basis.n):
            other = basis.index.get(bits ^ (1 << j))
            if other is not None:
                rows.append(i)
                cols.append(other)
    dim = len(basis)
    return scipy.sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(dim, dim))


def _diagonal(c: CouplingSet, basis: CIBasis):
    if c.n != basis.n:
        raise ValidationError(f"basis has {basis.n} sites, coupling set expects {c.n}")
    return batch_classical_energies(c, np.asarray(basis.members, dtype=np.uint64))


def ci_matrix_elements(c: CouplingSet, gamma: float, basis: CIBasis) -> scipy.sparse.csr_matrix:
    """Block Hamiltonian: classical energies on the diagonal, -Gamma between single-flip neighbours."""
    gamma = check_gamma(gamma)
    diag = scipy.sparse.diags(_diagonal(c, basis))
    return (diag - gamma * _coupling_pattern(basis)).tocsr()


def _lowest(matrix, dim):
    if dim <= DENSE_LIMIT:
        evals, evecs = scipy.linalg.eigh(matrix.toarray(), subset_by_index=[0, 0])
        return float(evals[0]), evecs[:, 0]
    try:
        evals, evecs = scipy.sparse.linalg.eigsh(matrix, k=1, which="SA", tol=1e-12)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise ConvergenceError(f"sparse CI eigensolve failed: {exc}") from exc
    return float(evals[0]), evecs[:, 0]


def _solution(gamma, energy, vec, reference_id):
    if vec[0] < 0 or (vec[0] == 0 and vec[np.argmax(np.abs(vec))] < 0):
        vec = -vec
    vec = vec / np.linalg.norm(vec)
    return CISolution(gamma, energy, vec, float(vec[0] ** 2), reference_id, len(vec))


def ci_ground(c: CouplingSet, gamma: float, basis: CIBasis, reference_id: int = 0) -> CISolution:
    if len(basis) == 0:
        raise ValidationError("empty CI basis")
    energy, vec = _lowest(ci_matrix_elements(c, gamma, basis), len(basis))
    return _solution(float(gamma), energy, vec, reference_id)


def to_quantum_state(basis: CIBasis, solution: CISolution):
    """Embed CI coefficients into a full 2^N amplitude vector."""
    from .exact import QuantumState

    amps = np.zeros(1 << basis.n, dtype=complex)
    amps[np.asarray(basis.members, dtype=np.int64)] = solution.coefficients
    return QuantumState(amps)


def structure_factor_distance(basis: CIBasis, solution: CISolution, config: SpinConfiguration) -> float:
    """sum_k (S_ci(k) - S_config(k))^2 / N^2: how much the CI state looks like ``config``."""
    from .observables import correlations, structure_factor

    curve = structure_factor(correlations(to_quantum_state(basis, solution)))
    target = structure_factor(correlations(config), curve.grid)
    return float(np.sum((curve.S - target.S) ** 2) / basis.n**2)


@dataclass
class CIScan:
    gammas: np.ndarray
    bases: list
    table: list  # per gamma: list of CISolution, one per reference
    winners: list
    crossovers: list  # (gamma_low, gamma_high, from_id, to_id)

    def rows(self):
        for gamma, solutions, winner in zip(self.gammas, self.table, self.winners):
            for sol in solutions:
                yield gamma, sol, sol.reference_id == winner


def multi_reference_scan(c: CouplingSet, references, level: int, gamma_grid) -> CIScan:
    """Solve every reference block across the field grid and track the lowest one.

    Later references lose members that already belong to an earlier
    reference's basis. Ties within 1e-12 go to the earlier reference.
    """
    references = list(references)
    if not references:
        raise ValidationError("at least one reference is required")
    if len({r.bits for r in references}) != len(references):
        raise ValidationError("references must be distinct")
    bases, taken = [], set()
    for ref in references:
        basis = build_ci_basis(ref, level, taken)
        taken.update(basis.members)
        bases.append(basis)
    blocks = [(_diagonal(c, b), _coupling_pattern(b)) for b in bases]

    gammas = np.asarray(gamma_grid, dtype=float)
    table, winners = [], []
    for gamma in gammas:
        gamma = check_gamma(gamma)
        solutions = []
        for ref_id, (diag, pattern) in enumerate(blocks):
            matrix = (scipy.sparse.diags(diag) - gamma * pattern).tocsr()
            energy, vec = _lowest(matrix, len(diag))
            solutions.append(_solution(gamma, energy, vec, ref_id))
        best = 0
        for sol in solutions[1:]:
            if sol.energy < solutions[best].energy - TIE_TOL:
                best = sol.reference_id
        table.append(solutions)
        winners.append(best)
    crossovers = [
        (float(gammas[i - 1]), float(gammas[i]), winners[i - 1], winners[i])
        for i in range(1, len(winners))
        if winners[i] != winners[i - 1]
    ]
    return CIScan(gammas, bases, table, winners, crossovers)


def write_scan_csv(scan: CIScan, path) -> Path:
    path = Path(path)
    lines = ["gamma,reference_id,energy,reference_weight,winner,dimension"]
    for gamma, sol, won in scan.rows():
        lines.append(f"{float(gamma)!r},{sol.reference_id},{sol.energy!r},{sol.reference_weight!r},{int(won)},{sol.dimension}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_crossover_report(scan: CIScan, path) -> Path:
    path = Path(path)
    lines = []
    for ref_id, basis in enumerate(scan.bases):
        lines.append(
            f"reference {ref_id}: {basis.reference.bitstring} {basis.name} "
            f"dimension={len(basis)} dropped={len(basis.dropped)}"
        )
    if not scan.crossovers:
        lines.append("no crossover on the grid")
    for low, high, before, after in scan.crossovers:
        lines.append(f"crossover {before} -> {after} between gamma={low!r} and gamma={high!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def basis_size(n: int, level: int) -> int:
    return sum(math.comb(n, m) for m in range(level + 1))
