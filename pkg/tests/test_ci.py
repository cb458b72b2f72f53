import itertools
import math

import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.linalg

from hyperising.ci import (build_ci_basis, ci_ground, ci_matrix_elements, multi_reference_scan,
                           structure_factor_distance, to_quantum_state, write_crossover_report,
                           write_scan_csv)
from hyperising.classical import enumerate_low_lying
from hyperising.errors import InvalidReferenceError, ValidationError
from hyperising.exact import ground_state
from hyperising.model import CouplingSet, SpinConfiguration, classical_energy
from hyperising.sweep import select_references

from conftest import dense_hamiltonian, random_couplings


def independent_block(c, gamma, ref, level):
    """Assemble the block from explicit spin lists and Hamming distances."""
    members = []
    for m in range(level + 1):
        for sites in itertools.combinations(range(c.n), m):
            spins = list(ref.spins)
            for j in sites:
                spins[j] = -spins[j]
            members.append(tuple(spins))
    dim = len(members)
    H = scipy.sparse.lil_matrix((dim, dim))
    for i, a in enumerate(members):
        H[i, i] = classical_energy(c, a)
        for j, b in enumerate(members):
            if sum(x != y for x, y in zip(a, b)) == 1:
                H[i, j] = -gamma
    return H.tocsr()


def test_basis_sizes():
    ref = SpinConfiguration.ferromagnetic(4)
    assert len(build_ci_basis(ref, 1)) == 5
    full = build_ci_basis(ref, 4)
    assert sorted(full.members) == list(range(16))
    for n, level in [(8, 2), (10, 3)]:
        basis = build_ci_basis(SpinConfiguration.alternating(n), level)
        assert len(basis) == sum(math.comb(n, m) for m in range(level + 1))
        assert len(set(basis.members)) == len(basis)
        assert basis.members[0] == basis.reference.bits


def test_member_order():
    basis = build_ci_basis(SpinConfiguration.ferromagnetic(4), 2)
    assert basis.members[:5] == (0, 1, 2, 4, 8)
    assert basis.members[5:] == (3, 5, 9, 6, 10, 12)
    assert basis.name == "CISD"


def test_disjoint_at_distance_two():
    a = SpinConfiguration.from_bitstring("000000")
    b = SpinConfiguration.from_bitstring("110000")
    first = build_ci_basis(a, 1)
    second = build_ci_basis(b, 1, first.members)
    assert not set(first.members) & set(second.members)
    # single flips of a and b meet in the two intermediate configurations, which a keeps
    assert sorted(second.dropped) == [0b01, 0b10]


def test_reference_inside_exclusions():
    a = SpinConfiguration.ferromagnetic(6)
    with pytest.raises(InvalidReferenceError):
        build_ci_basis(SpinConfiguration.from_bitstring("100000"), 1, build_ci_basis(a, 1).members)


def test_level_validation():
    with pytest.raises(ValidationError):
        build_ci_basis(SpinConfiguration.ferromagnetic(4), 5)


def test_zero_field_is_diagonal(rng):
    c = random_couplings(rng, 8)
    basis = build_ci_basis(SpinConfiguration.alternating(8), 2)
    H = ci_matrix_elements(c, 0.0, basis)
    off_diagonal = H.toarray() - np.diag(H.diagonal())
    assert not np.any(off_diagonal)


def test_complete_basis_reproduces_dense_hamiltonian():
    c = CouplingSet(4, 1, (1.0,))
    basis = build_ci_basis(SpinConfiguration.ferromagnetic(4), 4)
    H = ci_matrix_elements(c, 0.7, basis).toarray()
    perm = np.asarray(basis.members)
    assert np.allclose(H, dense_hamiltonian(c, 0.7)[np.ix_(perm, perm)])


def test_matches_independent_assembly(rng):
    c = random_couplings(rng, 8)
    ref = enumerate_low_lying(c, 1)[0].ground
    basis = build_ci_basis(ref, 2)
    H = ci_matrix_elements(c, 0.1, basis)
    oracle = independent_block(c, 0.1, ref, 2)
    assert np.allclose(H.toarray(), oracle.toarray())
    e_oracle = scipy.sparse.linalg.eigsh(oracle, k=1, which="SA")[0][0]
    assert ci_ground(c, 0.1, basis).energy == pytest.approx(e_oracle, abs=1e-10)


def test_zero_field_reference_energy():
    c = CouplingSet(8, 2, (1.0, -0.3))
    ref = enumerate_low_lying(c, 1)[0].ground
    sol = ci_ground(c, 0.0, build_ci_basis(ref, 2))
    assert sol.energy == classical_energy(c, ref)
    assert sol.reference_weight == pytest.approx(1.0)
    assert sol.coefficients[0] == pytest.approx(1.0)


def test_complete_level_equals_exact():
    c = CouplingSet(8, 1, (1.0,))
    sol = ci_ground(c, 0.6, build_ci_basis(SpinConfiguration.ferromagnetic(8), 8))
    assert sol.energy == pytest.approx(ground_state(c, 0.6).energies[0], abs=1e-9)


def test_variational_chain_n12():
    c = CouplingSet(12, 1, (1.0,))
    e_ed = ground_state(c, 0.4).energies[0]
    ref = SpinConfiguration.ferromagnetic(12)
    energies = [ci_ground(c, 0.4, build_ci_basis(ref, L)).energy for L in (1, 2, 3)]
    assert energies[0] >= energies[1] >= energies[2] >= e_ed - 1e-10


def test_solution_invariants(rng):
    c = random_couplings(rng, 10)
    ref = enumerate_low_lying(c, 1)[0].ground
    basis = build_ci_basis(ref, 2)
    sol = ci_ground(c, 0.5, basis, reference_id=3)
    assert np.linalg.norm(sol.coefficients) == pytest.approx(1.0, abs=1e-12)
    assert sol.coefficients[0] >= 0
    assert sol.reference_id == 3 and sol.dimension == len(basis)
    state = to_quantum_state(basis, sol)
    assert state.norm == pytest.approx(1.0)
    assert structure_factor_distance(basis, sol, ref) < structure_factor_distance(
        basis, sol, SpinConfiguration.from_spins(-ref.spins * np.resize([1, -1], 10)))


def test_sparse_path_matches_dense(monkeypatch):
    import hyperising.ci as ci_module
    c = CouplingSet(10, 2, (1.0, 0.4))
    basis = build_ci_basis(SpinConfiguration.ferromagnetic(10), 3)
    dense = ci_ground(c, 0.8, basis)
    monkeypatch.setattr(ci_module, "DENSE_LIMIT", 10)
    sparse = ci_ground(c, 0.8, basis)
    assert sparse.energy == pytest.approx(dense.energy, abs=1e-10)
    assert np.allclose(sparse.coefficients, dense.coefficients, atol=1e-6)


def test_cis_winner_is_constant():
    c = CouplingSet(10, 2, (0.0, -1.0))
    refs = select_references(c, 1, 3)
    assert len(refs) == 3
    scan = multi_reference_scan(c, refs, 1, np.linspace(0, 1.5, 16))
    assert len(set(scan.winners)) == 1
    assert not scan.crossovers


def test_complete_single_reference_scan_equals_exact():
    c = CouplingSet(6, 1, (1.0,))
    grid = [0.2, 0.9, 1.5]
    scan = multi_reference_scan(c, [SpinConfiguration.ferromagnetic(6)], 6, grid)
    for gamma, (sol,) in zip(grid, scan.table):
        assert sol.energy == pytest.approx(ground_state(c, gamma).energies[0], abs=1e-9)


def test_zero_field_block_energy_is_lowest_member(rng):
    c = random_couplings(rng, 10, 3)
    refs = [SpinConfiguration.ferromagnetic(10), SpinConfiguration.alternating(10)]
    scan = multi_reference_scan(c, refs, 2, [0.0])
    for basis, sol in zip(scan.bases, scan.table[0]):
        member_energies = [classical_energy(c, SpinConfiguration(b, 10)) for b in basis.members]
        assert sol.energy == pytest.approx(min(member_energies), abs=1e-12)
    # low-lying references are minima of their own blocks
    refs = select_references(c, 2, 2)
    scan = multi_reference_scan(c, refs, 2, [0.0])
    for ref, sol in zip(refs, scan.table[0]):
        assert sol.energy == pytest.approx(classical_energy(c, ref), abs=1e-12)


def test_block_independence_under_permutation(rng):
    # references more than 2L flips apart keep full, disjoint bases
    c = random_couplings(rng, 10, 4)
    refs = [SpinConfiguration.ferromagnetic(10), SpinConfiguration.alternating(10),
            SpinConfiguration.from_bitstring("1111100000")]
    grid = [0.1, 0.6]
    forward = multi_reference_scan(c, refs, 2, grid)
    backward = multi_reference_scan(c, refs[::-1], 2, grid)
    for row_f, row_b in zip(forward.table, backward.table):
        assert [s.energy for s in row_f] == pytest.approx([s.energy for s in row_b[::-1]], abs=1e-12)


def test_reference_weight_continuity():
    c = CouplingSet(8, 1, (1.0,))
    grid = np.linspace(0, 0.5, 51)
    scan = multi_reference_scan(c, [SpinConfiguration.ferromagnetic(8)], 2, grid)
    weights = [row[0].reference_weight for row in scan.table]
    assert np.max(np.abs(np.diff(weights))) < 0.02


def test_crossover_and_tie_rules():
    # J2 < 0: ferromagnet and period-4 pattern; ties at zero field go to the first reference
    c = CouplingSet(8, 2, (0.5, -0.25))
    refs = [SpinConfiguration.ferromagnetic(8), SpinConfiguration.from_bitstring("00110011")]
    scan = multi_reference_scan(c, refs, 2, np.linspace(0, 2, 41))
    for row, winner in zip(scan.table, scan.winners):
        energies = [s.energy for s in row]
        assert energies[winner] <= min(energies) + 1e-12
    tied = multi_reference_scan(c, [refs[0], refs[0].flipped()], 1, [0.0])
    assert tied.winners == [0]


def test_scan_validation():
    c = CouplingSet(6, 1, (1.0,))
    ref = SpinConfiguration.ferromagnetic(6)
    with pytest.raises(ValidationError):
        multi_reference_scan(c, [], 1, [0.1])
    with pytest.raises(ValidationError):
        multi_reference_scan(c, [ref, ref], 1, [0.1])
    with pytest.raises(InvalidReferenceError):
        multi_reference_scan(c, [ref, SpinConfiguration.from_bitstring("100000")], 1, [0.1])


def test_scan_outputs(tmp_path):
    c = CouplingSet(8, 2, (0.5, -0.25))
    refs = [SpinConfiguration.ferromagnetic(8), SpinConfiguration.from_bitstring("00110011")]
    scan = multi_reference_scan(c, refs, 2, [0.0, 0.5, 1.0])
    lines = write_scan_csv(scan, tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == "gamma,reference_id,energy,reference_weight,winner,dimension"
    assert len(lines) == 1 + 3 * 2
    fields = lines[1].split(",")
    assert float(fields[0]) == 0.0 and fields[1] == "0"
    report = write_crossover_report(scan, tmp_path / "x.txt").read_text()
    assert "reference 0: 00000000 CISD" in report
    assert "np." not in report and "np." not in "\n".join(lines)
