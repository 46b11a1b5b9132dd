import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.utils.algebra import LevelSet, pair_entries
from app.utils.dicke import (
    BetheProductState,
    OperatorExpression,
    bethe_coefficients,
    bethe_energy,
    build_dicke_charge,
    build_dicke_hamiltonian,
    build_excitation_number,
    rg_bethe_coefficients,
)
from app.utils.ed_oracle import (
    HilbertBasis,
    MatrixOperator,
    Mode,
    StateVector,
    commutator_norm,
    deformed_copy_matrices,
    eigencheck,
    realize,
    realize_rg_charges,
    rg_hamiltonian,
    sector_spectra,
    spectrum,
)
from app.utils.errors import BasisMismatchError, ContractError, DomainError, RepresentationError
from app.utils.rg_core import DickeSpec, Frame, ModelSpec, RapiditySet
from app.utils.solver import ContinuationPolicy, secular_roots, solve_dicke_branches, solve_rg_branch


def jc(eps=1.0, G=0.5, hw=1.0, n=1):
    return DickeSpec([eps], [0.5], G, hw, n)


def sector_matrix(spec, m):
    basis = HilbertBasis.dicke(spec, 4, sectors=(m,))
    return realize(build_dicke_hamiltonian(spec), basis)


def rg_spec(kind, etas, g, n=1):
    return ModelSpec(LevelSet.from_spins(etas, [0.5] * len(etas)), kind, n, g)


def test_jaynes_cummings_sector_matrix():
    op = sector_matrix(jc(), 1)
    assert op.basis.total_dim == 2
    # states ordered (n=0, up), (n=1, down)
    assert_allclose(op.matrix, [[0.5, 0.5], [0.5, 0.5]])
    assert_allclose(spectrum(op), [0.0, 1.0], atol=1e-14)


def test_detuned_jaynes_cummings_spectrum():
    op = sector_matrix(jc(eps=0.5, G=0.3), 1)
    assert_allclose(op.matrix, [[0.25, 0.3], [0.3, 0.75]])
    root = math.sqrt(0.1525)
    assert_allclose(spectrum(op), [0.5 - root, 0.5 + root], atol=1e-10)


def test_uncoupled_spectrum_is_additive():
    spec = DickeSpec([0.8, 1.3], [0.5, 1.0], 0.0, 1.0, 1)
    cutoff = 3
    basis = HilbertBasis.dicke(spec, cutoff)
    values = spectrum(realize(build_dicke_hamiltonian(spec), basis))
    expected = sorted(
        n + 0.8 * mu1 + 1.3 * mu2
        for n, mu1, mu2 in itertools.product(range(cutoff + 1), (-0.5, 0.5), (-1.0, 0.0, 1.0))
    )
    assert_allclose(values, expected, atol=1e-12)


def test_disjoint_factors_commute():
    basis = HilbertBasis.spin_modes([0.5, 1.0])
    a = realize(OperatorExpression.of((1.0, ("S0", 1)), observable=True), basis)
    b = realize(OperatorExpression.of((1.0, ("S0", 2)), observable=True), basis)
    assert commutator_norm(a, b) == 0.0


def test_spin_matrices_follow_su2():
    mode = Mode("spin", 1, 4, 1.5)
    sp, sm, s0 = (mode.factor(n).toarray() for n in ("S+", "S-", "S0"))
    assert_allclose(sp @ sm - sm @ sp, 2 * s0, atol=1e-14)
    assert_allclose(s0 @ sp - sp @ s0, sp, atol=1e-14)


def test_hamiltonian_conserves_excitations():
    spec = DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2)
    basis = HilbertBasis.dicke(spec, 6)
    H = realize(build_dicke_hamiltonian(spec), basis)
    M = realize(build_excitation_number(spec), basis)
    assert commutator_norm(H, M) < 1e-12


def test_dicke_charges_commute():
    spec = DickeSpec([0.8, 1.3, 1.7], [0.5, 0.5, 1.0], 0.3, 1.0, 2)
    basis = HilbertBasis.dicke(spec, 5, sectors=tuple(range(6)))
    charges = [realize(build_dicke_charge(spec, i), basis) for i in range(spec.m + 1)]
    for a, b in itertools.combinations(charges, 2):
        assert commutator_norm(a, b) < 1e-10


def test_trigonometric_charges_commute_at_xi_one():
    charges = realize_rg_charges(rg_spec("trigonometric", [1.0, 2.0, 3.0], -0.3))
    for a, b in itertools.combinations(charges, 2):
        assert commutator_norm(a, b) < 1e-10


def test_trigonometric_charges_commute_at_grid_point():
    spec = rg_spec("trigonometric", [1.0, 2.0, 3.0], -0.3)
    charges = realize_rg_charges(spec, xi=0.5)
    assert charges[0].basis.spin_dims == [6, 6, 6]
    for a, b in itertools.combinations(charges, 2):
        assert commutator_norm(a, b) < 1e-10
    with pytest.raises(RepresentationError):
        realize_rg_charges(spec, xi=0.3)


def test_rational_charges_commute():
    charges = realize_rg_charges(rg_spec("rational", [0.0, 1.3], 0.7))
    assert commutator_norm(charges[0], charges[1]) < 1e-12


@pytest.mark.parametrize("kind", ["rational", "trigonometric"])
def test_bosonic_charges_commute(kind):
    spec = ModelSpec(LevelSet.from_degeneracies([1.0, 2.0, 3.5], [2, 4, 2]), kind, 1, 0.2)
    charges = realize_rg_charges(spec, xi=0.0, boson_cutoff=10)
    for a, b in itertools.combinations(charges, 2):
        assert commutator_norm(a, b) < 1e-10
    with pytest.raises(DomainError):
        realize_rg_charges(spec, xi=0.0)


@pytest.mark.parametrize("kind", ["rational", "trigonometric"])
def test_one_boson_tda_states_diagonalize_bosonic_charges(kind):
    spec = ModelSpec(LevelSet.from_degeneracies([1.0, 2.0, 3.5], [2, 4, 2]), kind, 1, 0.2)
    charges = realize_rg_charges(spec, xi=0.0, boson_cutoff=3)
    basis = charges[0].basis
    etas = spec.levels.eta_array
    omegas = np.asarray(spec.levels.degeneracies, dtype=float)
    roots = secular_roots(spec)
    assert roots
    for root in roots:
        x, _ = pair_entries(kind, etas, np.full_like(etas, root))
        amplitudes = np.zeros(basis.total_dim, dtype=complex)
        for i in range(spec.m):
            state = [0] * spec.m
            state[i] = 1
            amplitudes[basis.index_of(state)] = x[i] * np.sqrt(omegas[i])
        vector = StateVector(amplitudes, basis)
        for charge in charges:
            assert eigencheck(charge, vector)[1] < 1e-10


def test_zero_coupling_charges_are_weights():
    spec = rg_spec("trigonometric", [1.0, 2.0], 0.0)
    charges = realize_rg_charges(spec)
    basis = charges[0].basis
    s0 = realize(OperatorExpression.of((1.0, ("S0", 1)), observable=True), basis)
    assert_allclose(charges[0].matrix, s0.matrix)


def test_deformed_copy_algebra():
    xi, omega = 0.5, 2
    ops = deformed_copy_matrices(0.5, omega, xi)
    sp, sm, s0 = ops["S+"], ops["S-"], ops["S0"]
    ident = np.eye(len(s0))
    assert_allclose(sp @ sm - sm @ sp, 2 * xi * s0 + (xi - 1) * omega / 2 * ident, atol=1e-12)
    assert_allclose(s0 @ sp - sp @ s0, sp, atol=1e-12)
    with pytest.raises(RepresentationError):
        deformed_copy_matrices(0.5, omega, 0.0)


def test_eigencheck_diagonal():
    basis = HilbertBasis.spin_modes([1.0])
    op = MatrixOperator(np.diag([1.0, 2.0, 3.0]), basis, hermitian=True)
    rho, rel = eigencheck(op, StateVector([0.0, 1.0, 0.0], basis))
    assert rho == 2.0
    assert rel == 0.0


def test_bethe_vector_is_eigenvector():
    spec = jc()
    basis = HilbertBasis.dicke(spec, 4, sectors=(1,))
    H = realize(build_dicke_hamiltonian(spec), basis)
    vector = bethe_coefficients(BetheProductState(spec, RapiditySet((0.5,), Frame.DICKE_X)), 4, basis)
    rho, rel = eigencheck(H, vector)
    assert rho == pytest.approx(0.0, abs=1e-14)
    assert rel < 1e-12


def test_eigencheck_discriminates():
    spec = DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2)
    basis = HilbertBasis.dicke(spec, 6, sectors=(2,))
    H = realize(build_dicke_hamiltonian(spec), basis)
    rng = np.random.default_rng(0)
    _, rel = eigencheck(H, StateVector(rng.normal(size=basis.total_dim), basis))
    assert rel > 0.01


def test_hermitian_contract():
    basis = HilbertBasis.spin_modes([0.5])
    with pytest.raises(ContractError):
        MatrixOperator(np.array([[0.0, 1.0], [0.0, 0.0]]), basis, hermitian=True)
    with pytest.raises(ContractError):
        spectrum(MatrixOperator(np.eye(2), basis))


def test_basis_mismatch():
    basis = HilbertBasis.spin_modes([0.5, 0.5])
    with pytest.raises(BasisMismatchError):
        realize(OperatorExpression.of((1.0, ("S0", 3))), basis)
    with pytest.raises(BasisMismatchError):
        realize(OperatorExpression.of((1.0, ("b+", 1))), basis)
    other = HilbertBasis.spin_modes([0.5])
    with pytest.raises(BasisMismatchError):
        eigencheck(MatrixOperator(np.eye(4), basis), StateVector([1.0, 0.0], other))


def test_sector_spectra_labels():
    spec = jc()
    basis = HilbertBasis.dicke(spec, 3)
    sectors = sector_spectra(realize(build_dicke_hamiltonian(spec), basis))
    assert sorted(sectors) == [0, 1, 2, 3, 4]
    assert_allclose(sectors[1], [0.0, 1.0], atol=1e-14)
    assert_allclose(sectors[0], [-0.5])


def test_rg_bethe_state_diagonalizes_charges():
    spec = ModelSpec(LevelSet.from_degeneracies([1.0, 2.0, 3.0, 4.0], [2, 2, 2, 2]), "trigonometric", 2, -0.15)
    branch = solve_rg_branch(spec, policy=ContinuationPolicy(newton_tol=1e-12))
    assert branch.converged, branch.trace.message
    charges = realize_rg_charges(spec)
    vector = rg_bethe_coefficients(spec, branch.rapidities).to_basis(charges[0].basis)
    for charge in charges:
        assert eigencheck(charge, vector)[1] < 1e-8
    energy, rel = eigencheck(rg_hamiltonian(spec), vector)
    assert rel < 1e-8
    assert np.min(np.abs(spectrum(rg_hamiltonian(spec)) - energy)) < 1e-8


def test_two_excitation_dicke_completeness():
    spec = DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2)
    branches = solve_dicke_branches(spec, ContinuationPolicy(newton_tol=1e-12))
    energies = sorted(bethe_energy(spec, b.rapidities) for b in branches)
    for cutoff in (12, 16, 20):
        basis = HilbertBasis.dicke(spec, cutoff, sectors=(2,))
        H = realize(build_dicke_hamiltonian(spec), basis)
        assert_allclose(energies, sector_spectra(H)[2], atol=1e-6)
        for b in branches:
            vector = bethe_coefficients(BetheProductState(spec, b.rapidities), cutoff, basis)
            assert eigencheck(H, vector)[1] < 1e-10


DICKE_CASES = [
    (jc(), [0.0, 1.0]),
    (DickeSpec([1.0], [1.0], 0.5, 1.0, 1), [-1 / math.sqrt(2), 1 / math.sqrt(2)]),
    (jc(eps=0.5, G=0.3), [0.5 - math.sqrt(0.1525), 0.5 + math.sqrt(0.1525)]),
    (DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2), None),
]


@pytest.mark.parametrize("spec, expected", DICKE_CASES, ids=["jc", "tc_spin_one", "detuned", "two_level"])
def test_rayleigh_energy_matches_bethe_energy(spec, expected):
    n = spec.n_excitations
    cutoff = n + 8
    basis = HilbertBasis.dicke(spec, cutoff, sectors=(n,))
    H = realize(build_dicke_hamiltonian(spec), basis)
    branches = solve_dicke_branches(spec, ContinuationPolicy(newton_tol=1e-12))
    energies = []
    for b in branches:
        vector = bethe_coefficients(BetheProductState(spec, b.rapidities), cutoff, basis)
        rho, rel = eigencheck(H, vector)
        assert rel < 1e-9
        assert rho == pytest.approx(bethe_energy(spec, b.rapidities), abs=1e-9)
        energies.append(rho)
    energies.sort()
    if expected is not None:
        assert_allclose(energies, expected, atol=1e-10)
    assert_allclose(energies, sector_spectra(H)[n], atol=1e-8)


def test_grid_charges_agree_with_deformed_generators():
    # R_i at xi = 1/2 written with S(xi) = sqrt(xi) A, S0(xi) = A0 - shift
    xi, omega, g = 0.5, 2, -0.3
    spec = rg_spec("trigonometric", [1.0, 2.0], g)
    canonical = realize_rg_charges(spec, xi=xi)
    ops = deformed_copy_matrices(0.5, omega, xi)
    shift = (1.0 - 1.0 / xi) * omega / 4.0
    ident = np.eye(len(ops["S0"]))
    a0 = ops["S0"] + shift * ident
    x12, z12 = (float(v) for v in pair_entries("trigonometric", 1.0, 2.0))
    pairs = np.kron(ops["S+"], ops["S-"]) + np.kron(ops["S-"], ops["S+"])
    coupling = g * (0.5 * x12 * pairs + xi * z12 * np.kron(a0, a0))
    deformed = [np.kron(a0, ident) + coupling, np.kron(ident, a0) - coupling]
    for matrix, charge in zip(deformed, canonical):
        assert_allclose(np.linalg.eigvalsh(matrix), spectrum(charge), atol=1e-10)
    assert commutator_norm(
        MatrixOperator(deformed[0], canonical[0].basis, hermitian=True),
        MatrixOperator(deformed[1], canonical[0].basis, hermitian=True),
    ) < 1e-10
