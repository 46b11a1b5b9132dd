import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import roots_genlaguerre

from app.utils.algebra import LevelSet
from app.utils.dicke import rg_bethe_coefficients
from app.utils.ed_oracle import eigencheck, realize_rg_charges, rg_hamiltonian, sector_spectra
from app.utils.errors import (
    CollisionError,
    DomainError,
    InsufficientModesError,
    NoConvergenceError,
    SelectionError,
)
from app.utils.rg_core import (
    DeformedRGFamily,
    DickeSpec,
    Frame,
    ModelSpec,
    RapiditySet,
    ResidualReport,
    dicke_rg_residual,
    equivalent_rg_model,
    rescaling,
    rg_residual,
    tda_secular,
)
from app.utils.solver import (
    ContinuationFamily,
    ContinuationPolicy,
    RootSelection,
    TraceStatus,
    conjugation_defect,
    continue_in_xi,
    default_occupation,
    laguerre_zeros,
    lift_degenerate_seeds,
    match_spectra,
    newton_solve,
    secular_roots,
    sector_dimension,
    solve_dicke_branches,
    solve_rg_branch,
    solve_tda,
    weak_coupling_seeds,
)


def single_level(g=0.1, n=1):
    return ModelSpec(LevelSet.from_degeneracies([1.0], [2]), "trigonometric", n, g)


def four_level():
    return ModelSpec(LevelSet.from_degeneracies([1.0, 2.0, 3.0, 4.0], [2, 2, 2, 2]), "trigonometric", 2, -0.15)


def jc(eps=1.0, s=0.5, G=0.5, hw=1.0):
    return DickeSpec([eps], [s], G, hw, 1)


def test_tda_single_level_root():
    seeds = solve_tda(single_level())
    assert seeds.frame is Frame.RG_ETA
    assert_allclose(seeds.array, [1.5], atol=1e-12)


def test_repeated_root_by_default():
    spec = single_level(n=2)
    assert_allclose(solve_tda(spec).array, [1.5, 1.5], atol=1e-12)
    with pytest.raises(InsufficientModesError):
        solve_tda(spec, RootSelection(max_multiplicity=1))
    with pytest.raises(InsufficientModesError):
        solve_tda(spec, RootSelection(occupation=(0, 1)))
    seeds = solve_tda(spec, RootSelection(occupation=(0, 0)))
    assert_allclose(seeds.array, [1.5, 1.5], atol=1e-12)
    with pytest.raises(SelectionError):
        solve_tda(spec, RootSelection(occupation=(0, 0), max_multiplicity=1))
    with pytest.raises(SelectionError):
        solve_tda(spec, RootSelection(occupation=(0,)))


def test_default_occupation():
    assert default_occupation(4, 2) == (0, 1)
    assert default_occupation(1, 2) == (0, 0)
    assert default_occupation(2, 3) == (0, 0, 1)
    with pytest.raises(InsufficientModesError):
        default_occupation(0, 1)
    with pytest.raises(InsufficientModesError):
        default_occupation(1, 2, max_multiplicity=1)


def test_lift_splits_repeated_root_symmetrically():
    spec = single_level(n=2)
    seeds = solve_tda(spec, RootSelection(occupation=(0, 0)))
    xi_lift, lifted = lift_degenerate_seeds(DeformedRGFamily(spec), seeds, seed=3)
    assert 0.0 < xi_lift < 1e-6
    values = lifted.array
    assert values.mean() == pytest.approx(1.5, abs=1e-12)
    assert conjugation_defect(values) < 1e-15
    spread = abs(values[0] - values[1])
    assert 1e-4 < spread < 2e-4
    assert lift_degenerate_seeds(DeformedRGFamily(spec), solve_tda(single_level()))[0] == 0.0


def test_lift_is_reproducible_for_a_seed():
    spec = single_level(n=2)
    seeds = solve_tda(spec, RootSelection(occupation=(0, 0)))
    first = lift_degenerate_seeds(DeformedRGFamily(spec), seeds, seed=9)
    second = lift_degenerate_seeds(DeformedRGFamily(spec), seeds, seed=9)
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_tda_roots_approach_levels_at_weak_coupling():
    distances = [abs(solve_tda(single_level(g)).values[0] - 1.0) for g in (0.1, 0.01, 0.001)]
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] < 5e-3


def test_two_level_secular_roots_bracketed():
    spec = ModelSpec(LevelSet.from_degeneracies([1.0, 2.0], [2, 2]), "trigonometric", 2, 0.05)
    roots = secular_roots(spec)
    assert len(roots) == 2
    for root in roots:
        left, _ = tda_secular(spec, root - 1e-6)
        right, _ = tda_secular(spec, root + 1e-6)
        assert left * right < 0


def test_newton_from_exact_root_returns_input():
    r0 = RapiditySet((0.5,), Frame.DICKE_X)
    assert newton_solve(dicke_rg_residual, jc(), r0) is r0


def test_newton_jaynes_cummings():
    r = newton_solve(dicke_rg_residual, jc(), RapiditySet((0.4,), Frame.DICKE_X), max_iters=6)
    assert r.values[0].real == pytest.approx(0.5, abs=1e-12)


def test_newton_on_collision_fails_immediately():
    with pytest.raises(CollisionError):
        newton_solve(dicke_rg_residual, jc(), RapiditySet((1.0,), Frame.DICKE_X))


def test_newton_reports_best_iterate():
    with pytest.raises(NoConvergenceError) as info:
        newton_solve(dicke_rg_residual, jc(), RapiditySet((0.2,), Frame.DICKE_X), tol=1e-15, max_iters=1)
    assert info.value.best is not None
    assert info.value.max_abs > 1e-15


def test_newton_never_accepts_an_uphill_step():
    def flipped(spec, r):
        report = dicke_rg_residual(spec, r)
        return ResidualReport(report.residuals, report.max_abs, -report.jacobian)

    r0 = RapiditySet((0.4,), Frame.DICKE_X)
    start = dicke_rg_residual(jc(), r0).max_abs
    with pytest.raises(NoConvergenceError, match="Damped line search found no decrease") as info:
        newton_solve(flipped, jc(), r0)
    assert info.value.max_abs == start
    assert_allclose(info.value.best, r0.array)


def test_policy_validation():
    with pytest.raises(DomainError):
        ContinuationPolicy(xi_start=-0.1)
    with pytest.raises(DomainError):
        ContinuationPolicy(initial_step=1e-9, min_step=1e-8)
    with pytest.raises(DomainError):
        ContinuationPolicy(newton_tol=0.0)


def test_zero_length_path():
    spec = four_level()
    start = RapiditySet((0.5, 2.5), Frame.RG_ETA)
    trace = continue_in_xi(spec, ContinuationPolicy(0.4, 0.4), start)
    assert len(trace.path) == 1
    assert trace.final is start
    assert trace.succeeded


def test_four_level_continuation_from_tda():
    spec = four_level()
    branch = solve_rg_branch(spec, policy=ContinuationPolicy(newton_tol=1e-12))
    assert branch.converged, branch.trace.message
    assert branch.trace.path[0].xi == 0.0
    assert branch.trace.path[-1].xi == 1.0
    xis = [p.xi for p in branch.trace.path]
    assert all(b > a for a, b in zip(xis, xis[1:]))
    assert rg_residual(spec, branch.rapidities).max_abs < 1e-10
    assert max(conjugation_defect(p.rapidities) for p in branch.trace.path) < 1e-8
    assert branch.branch_id == "tda-0-1"


@pytest.mark.parametrize("start, end", [((3 - math.sqrt(6)) / 2, 0.5), ((3 + math.sqrt(6)) / 2, 1.5)])
def test_single_copy_continuation_reaches_jaynes_cummings(start, end):
    spec = jc()
    lam, _ = rescaling(spec, 1.0)
    # explicit two-copy trigonometric model with copy 0 far away
    model = equivalent_rg_model(spec, 1.0, eta0=1e8)
    seed = newton_solve(rg_residual, model, RapiditySet((-lam * start,), Frame.RG_ETA), tol=1e-9)
    trace = continue_in_xi(
        spec, ContinuationPolicy(1.0, 0.0), seed, family=ContinuationFamily.SINGLE_COPY_DICKE
    )
    assert trace.status is TraceStatus.CONVERGED, trace.message
    assert trace.final.frame is Frame.DICKE_X
    assert trace.final.values[0].real == pytest.approx(end, abs=1e-10)
    assert trace.endpoint_max_abs < 1e-9


def test_single_copy_needs_dicke_spec():
    with pytest.raises(DomainError):
        continue_in_xi(
            four_level(), ContinuationPolicy(1.0, 0.0), RapiditySet((0.5, 2.5)),
            family=ContinuationFamily.SINGLE_COPY_DICKE,
        )


@pytest.mark.parametrize(
    "spec, expected",
    [
        (jc(), [0.5, 1.5]),
        (jc(s=1.0), [1 - 1 / math.sqrt(2), 1 + 1 / math.sqrt(2)]),
        (jc(eps=0.5, G=0.3), [0.75 - math.sqrt(0.1525), 0.75 + math.sqrt(0.1525)]),
    ],
)
def test_dicke_branches_single_excitation(spec, expected):
    branches = solve_dicke_branches(spec, ContinuationPolicy(newton_tol=1e-13))
    assert len(branches) == sector_dimension(spec) == 2
    found = sorted(b.rapidities.values[0].real for b in branches)
    assert_allclose(found, expected, atol=1e-12)


def test_sector_dimension_counts_product_states():
    assert sector_dimension(DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2)) == 4
    assert sector_dimension(DickeSpec([1.0], [1.0], 0.5, 1.0, 3)) == 3


def test_laguerre_zeros():
    assert_allclose(laguerre_zeros(1, -2.0), [-1.0])
    expected, _ = roots_genlaguerre(3, 0.5)
    assert_allclose(np.sort(laguerre_zeros(3, 0.5).real), np.sort(expected), rtol=1e-10)


def test_weak_coupling_seeds():
    spec = DickeSpec([0.8, 1.3], [0.5, 0.5], 0.2, 1.0, 2)
    values = weak_coupling_seeds(spec, 2, (0, 0), 1e-6)
    assert_allclose(values.real, [1.0, 1.0])
    assert conjugation_defect(values) < 1e-15
    with pytest.raises(DomainError):
        weak_coupling_seeds(jc(), 0, (1,), 1e-6)


def test_match_spectra():
    match = match_spectra([0.0, 1.0 + 1e-9], [1.0, 0.0, 2.0])
    assert sorted((i, j) for i, j, _ in match.pairs) == [(0, 1), (1, 0)]
    assert match.unmatched_oracle == [2]
    assert not match.complete(1e-6)
    assert match_spectra([0.0, 1.0], [1.0, 0.0]).complete(1e-6)


def test_every_occupation_pattern_tracks_to_a_distinct_eigenstate():
    spec = four_level()
    H = rg_hamiltonian(spec)
    charges = realize_rg_charges(spec)
    sector = sector_spectra(H)[spec.n_excitations]
    assert len(sector) == 6
    energies, converged = [], {}
    for occupation in itertools.combinations_with_replacement(range(4), 2):
        branch = solve_rg_branch(spec, RootSelection(occupation))
        if not branch.converged:
            # the tracked state vanishes or the rapidities go singular before xi = 1
            assert branch.trace.status in (TraceStatus.STALLED, TraceStatus.COLLISION_DETECTED)
            continue
        converged[occupation] = branch
        vector = rg_bethe_coefficients(spec, branch.rapidities).to_basis(charges[0].basis)
        assert max(eigencheck(c, vector)[1] for c in charges) < 1e-8
        energies.append(eigencheck(H, vector)[0])
    assert (0, 0) in converged
    assert conjugation_defect(converged[(0, 0)].rapidities) < 1e-8
    assert 1 <= len(converged) <= len(sector)
    match = match_spectra(energies, sector, 1e-8)
    assert match.unmatched_bethe == []
