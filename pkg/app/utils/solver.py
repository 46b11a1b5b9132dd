"""TDA seeding, Newton iteration and xi-continuation of RG-type equations."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial import hermite
from scipy.optimize import brentq
from scipy.special import binom

from app.config import (
    DEFAULT_OMEGA0,
    EASY_STEP_ITERS,
    INITIAL_STEP,
    JACOBIAN_COND_LIMIT,
    LIFT_MAGNITUDE,
    MAX_NEWTON_ITERS,
    MAX_STEP,
    MIN_STEP,
    NEWTON_TOL,
    PREDICTOR_COND_LIMIT,
    STEP_GROW,
    STEP_SHRINK,
)
from app.utils.algebra import GaudinKind
from app.utils.errors import (
    CollisionError,
    DomainError,
    InsufficientModesError,
    NoConvergenceError,
    SelectionError,
    SingularJacobianError,
)
from app.utils.rg_core import (
    CouplingRampFamily,
    DeformedRGFamily,
    DeformedSpinsDickeFamily,
    DickeSpec,
    Frame,
    RapiditySet,
    SingleCopyDickeFamily,
    to_dicke_frame,
)

logger = logging.getLogger(__name__)

SCAN_POINTS = 400
RAMP_START = 1e-6
DEDUPE_TOL = 1e-6


@dataclass(frozen=True)
class ContinuationPolicy:
    xi_start: float = 0.0
    xi_end: float = 1.0
    initial_step: float = INITIAL_STEP
    min_step: float = MIN_STEP
    max_step: float = MAX_STEP
    newton_tol: float = NEWTON_TOL
    max_newton_iters: int = MAX_NEWTON_ITERS
    step_shrink: float = STEP_SHRINK
    step_grow: float = STEP_GROW

    def __post_init__(self):
        for name in ("xi_start", "xi_end"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} = {value} outside [0, 1]")
        if not 0 < self.min_step <= self.initial_step <= self.max_step:
            raise DomainError(
                f"Steps must satisfy 0 < min_step <= initial_step <= max_step, got "
                f"{self.min_step}, {self.initial_step}, {self.max_step}"
            )
        if not self.newton_tol > 0:
            raise DomainError(f"newton_tol = {self.newton_tol} must be positive")
        if not 0 < self.step_shrink < 1 or self.step_grow < 1:
            raise DomainError("step_shrink must lie in (0, 1) and step_grow be >= 1")

    def between(self, xi_start, xi_end):
        return ContinuationPolicy(
            xi_start, xi_end, self.initial_step, self.min_step, self.max_step,
            self.newton_tol, self.max_newton_iters, self.step_shrink, self.step_grow,
        )


class TraceStatus(str, Enum):
    CONVERGED = "converged"
    STALLED = "stalled"
    COLLISION_DETECTED = "collision_detected"


class ContinuationFamily(str, Enum):
    ALL_COPIES_DEFORMED = "all_copies_deformed"
    SINGLE_COPY_DICKE = "single_copy_dicke"


@dataclass(frozen=True)
class TracePoint:
    xi: float
    rapidities: RapiditySet
    max_abs: float
    iterations: int


@dataclass
class SolutionTrace:
    path: list = field(default_factory=list)
    status: TraceStatus = TraceStatus.CONVERGED
    message: str = ""
    endpoint_max_abs: float = None

    @property
    def final(self):
        return self.path[-1].rapidities if self.path else None

    @property
    def succeeded(self):
        return self.status is TraceStatus.CONVERGED


@dataclass(frozen=True)
class RootSelection:
    """Which TDA roots seed the N rapidities.

    `occupation` lists root indices (ascending root order, repeats allowed);
    None takes the N lowest roots, repeating the lowest when fewer exist.
    """

    occupation: tuple = None
    max_multiplicity: int = None


@dataclass
class BranchResult:
    branch_id: str
    occupation: tuple
    rapidities: RapiditySet
    trace: SolutionTrace
    origin: str = "xi_path"

    @property
    def converged(self):
        return self.rapidities is not None and self.trace.succeeded


@dataclass
class SpectrumMatch:
    pairs: list
    unmatched_bethe: list
    unmatched_oracle: list
    collisions: list

    @property
    def max_gap(self):
        return max((gap for _, _, gap in self.pairs), default=0.0)

    def complete(self, tol):
        return not self.unmatched_bethe and not self.unmatched_oracle and self.max_gap < tol


def _family_for(spec, family=ContinuationFamily.ALL_COPIES_DEFORMED, omega0=DEFAULT_OMEGA0):
    family = ContinuationFamily(family)
    if family is ContinuationFamily.SINGLE_COPY_DICKE:
        if not isinstance(spec, DickeSpec):
            raise DomainError("single_copy_dicke continuation needs a Dicke spec")
        return SingleCopyDickeFamily(spec, omega0)
    if isinstance(spec, DickeSpec):
        return DeformedSpinsDickeFamily(spec)
    return DeformedRGFamily(spec)


def _scan_intervals(poles, periodic):
    thetas = np.sort(np.arctan(poles))
    edge = 1e-9
    if periodic:
        bounds = list(zip(thetas[:-1], thetas[1:])) + [(thetas[-1], thetas[0] + math.pi)]
    else:
        cuts = [-math.pi / 2 + edge] + list(thetas) + [math.pi / 2 - edge]
        bounds = list(zip(cuts[:-1], cuts[1:]))
    return [(a, b) for a, b in bounds if b - a > 2 * edge]


def _scalar_roots(secular, poles, periodic, center=0.0, scale=1.0, tol=NEWTON_TOL):
    """Real roots of a scalar secular function with simple poles, ascending."""
    shifted = (np.asarray(poles, dtype=float) - center) / scale

    def along(theta):
        return secular(center + scale * np.tan(theta))[0]

    k = np.arange(1, SCAN_POINTS - 1)
    roots = []
    for a, b in _scan_intervals(shifted, periodic):
        thetas = 0.5 * (a + b) - 0.5 * (b - a) * np.cos(math.pi * k / (SCAN_POINTS - 1))
        values = np.asarray(along(thetas), dtype=float)
        flips = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
        for j in flips:
            theta = brentq(lambda t: float(along(np.asarray(t))), thetas[j], thetas[j + 1], xtol=1e-15)
            x = center + scale * math.tan(theta)
            for _ in range(3):
                f, df = secular(np.asarray(x))
                if abs(f) <= tol or df == 0:
                    break
                x -= float(f) / float(df)
            roots.append(float(x))
    roots.sort()
    logger.debug("Secular scan found %d roots: %s", len(roots), roots)
    return roots


def secular_roots(spec):
    """All real roots of the decoupled (xi = 0) secular function of a spec."""
    family = _family_for(spec)
    poles = family.level_coords()
    if isinstance(spec, DickeSpec):
        spread = max(1.0, float(np.ptp(poles)), abs(spec.hbar_omega), abs(spec.coupling_G))
        return _scalar_roots(family.secular, poles, False, float(np.mean(poles)), spread)
    periodic = spec.kind is GaudinKind.TRIGONOMETRIC
    if periodic:
        return _scalar_roots(family.secular, poles, True)
    return _scalar_roots(family.secular, poles, False, float(np.mean(poles)), max(1.0, float(np.std(poles))))


def default_occupation(n_roots, n, max_multiplicity=None):
    """The N lowest roots; when fewer exist the lowest one takes the remainder."""
    if n_roots == 0 or (n_roots < n and max_multiplicity is not None and n - n_roots + 1 > max_multiplicity):
        raise InsufficientModesError(f"Secular equation has {n_roots} real roots, {n} needed")
    if n_roots >= n:
        return tuple(range(n))
    logger.info("Only %d distinct TDA roots for N = %d; repeating the lowest", n_roots, n)
    return (0,) * (n - n_roots + 1) + tuple(range(1, n_roots))


def solve_tda(spec, selection=None, tol=NEWTON_TOL):
    """Seeds for N rapidities from the pp-TDA secular equation, sorted by real part."""
    selection = selection or RootSelection()
    n = spec.n_excitations
    roots = secular_roots(spec)
    if selection.occupation is None:
        occupation = default_occupation(len(roots), n, selection.max_multiplicity)
        chosen = [roots[i] for i in occupation]
    else:
        occupation = tuple(int(i) for i in selection.occupation)
        if len(occupation) != n:
            raise SelectionError(f"Occupation {occupation} has {len(occupation)} entries, N = {n}")
        if any(i < 0 for i in occupation):
            raise SelectionError(f"Occupation {occupation} has a negative root index")
        if max(occupation) >= len(roots):
            raise InsufficientModesError(
                f"Occupation {occupation} asks for root {max(occupation)}, only {len(roots)} exist"
            )
        if selection.max_multiplicity is not None:
            worst = max(occupation.count(i) for i in set(occupation))
            if worst > selection.max_multiplicity:
                raise SelectionError(
                    f"Root occupied {worst} times, capacity is {selection.max_multiplicity}"
                )
        chosen = sorted(roots[i] for i in occupation)
    frame = Frame.DICKE_X if isinstance(spec, DickeSpec) else Frame.RG_ETA
    return RapiditySet(tuple(chosen), frame)


def _newton(residual, values, tol, max_iters):
    """Damped Newton on residual(values) -> ResidualReport; returns (values, report, iterations)."""
    values = np.asarray(values, dtype=complex)
    report = residual(values)
    best = (report.max_abs, values)
    for iteration in range(max_iters + 1):
        if report.max_abs <= tol:
            return values, report, iteration
        if iteration == max_iters:
            break
        J = report.jacobian
        cond = np.linalg.cond(J)
        if not cond <= JACOBIAN_COND_LIMIT:
            raise SingularJacobianError(f"Jacobian condition estimate {cond:.3g} exceeds limit", condition=cond)
        step = np.linalg.solve(J, -report.residuals)
        scale = 1.0
        accepted = None
        collided = True
        for _ in range(12):
            trial = values + scale * step
            try:
                trial_report = residual(trial)
            except CollisionError:
                scale *= 0.5
                continue
            collided = False
            if trial_report.max_abs < report.max_abs:
                accepted = (trial, trial_report)
                break
            scale *= 0.5
        if accepted is None:
            reason = "Every damped step hit a collision" if collided else "Damped line search found no decrease"
            raise NoConvergenceError(f"{reason} (best {best[0]:.3g})", best=best[1], max_abs=best[0])
        values, report = accepted
        if report.max_abs < best[0]:
            best = (report.max_abs, values)
    raise NoConvergenceError(
        f"Newton did not reach {tol:g} in {max_iters} iterations (best {best[0]:.3g})",
        best=best[1],
        max_abs=best[0],
    )


def newton_solve(family, spec, r0, tol=NEWTON_TOL, max_iters=MAX_NEWTON_ITERS):
    """Solve family(spec, r) = 0 from r0, e.g. family=rg_residual or lambda s, r: deformed_rg_residual(s, xi, r)."""
    values, _, iterations = _newton(
        lambda v: family(spec, RapiditySet(v, r0.frame)), r0.array, tol, max_iters
    )
    logger.debug("Newton converged in %d iterations", iterations)
    if iterations == 0:
        return r0
    return RapiditySet(tuple(values), r0.frame)


def conjugation_defect(values):
    """max_a min_b |v_a - conj(v_b)|: zero when the set is closed under conjugation."""
    values = np.asarray(getattr(values, "values", values), dtype=complex)
    if not values.size:
        return 0.0
    gaps = np.abs(values[:, None] - np.conj(values)[None, :])
    return float(gaps.min(axis=1).max())


def _track(family, policy, values):
    """Adaptive predictor-corrector tracking of family.residual(values, xi) = 0."""
    trace = SolutionTrace()
    tol = policy.newton_tol
    xi, end = policy.xi_start, policy.xi_end
    try:
        values, report, iterations = _newton(lambda v: family.residual(v, xi), values, tol, policy.max_newton_iters)
    except CollisionError as e:
        trace.status, trace.message = TraceStatus.COLLISION_DETECTED, str(e)
        return trace
    except (NoConvergenceError, SingularJacobianError) as e:
        trace.status, trace.message = TraceStatus.STALLED, f"start point does not solve the equations: {e}"
        return trace
    trace.path.append(TracePoint(xi, RapiditySet(tuple(values), family.frame), report.max_abs, iterations))

    direction = 1.0 if end >= xi else -1.0
    step = policy.initial_step
    while xi != end:
        target = xi + direction * min(step, abs(end - xi))
        if abs(end - target) < 1e-14:
            target = end
        predicted = values
        if np.linalg.cond(report.jacobian) <= PREDICTOR_COND_LIMIT:
            slope = np.linalg.solve(report.jacobian, -family.xi_derivative(values, xi))
            predicted = values + slope * (target - xi)
        try:
            new_values, new_report, iterations = _newton(
                lambda v: family.residual(v, target), predicted, tol, policy.max_newton_iters
            )
        except (CollisionError, NoConvergenceError, SingularJacobianError) as e:
            step *= policy.step_shrink
            logger.debug("Rejected step to xi=%.6g (%s); step now %.3g", target, type(e).__name__, step)
            if step < policy.min_step:
                collided = isinstance(e, CollisionError) or (
                    isinstance(e, NoConvergenceError) and "collision" in str(e)
                )
                trace.status = TraceStatus.COLLISION_DETECTED if collided else TraceStatus.STALLED
                trace.message = f"step underflow at xi = {xi:.10g}: {e}"
                logger.warning("Continuation %s at xi=%.10g: %s", trace.status.value, xi, e)
                return trace
            continue
        xi, values, report = target, new_values, new_report
        trace.path.append(TracePoint(xi, RapiditySet(tuple(values), family.frame), report.max_abs, iterations))
        if iterations <= EASY_STEP_ITERS:
            step = min(step * policy.step_grow, policy.max_step)

    try:
        check = family.endpoint(values, end)
    except CollisionError as e:
        trace.status, trace.message = TraceStatus.COLLISION_DETECTED, f"endpoint check: {e}"
        return trace
    trace.endpoint_max_abs = check.max_abs
    if not check.max_abs < 10 * tol:
        trace.status = TraceStatus.STALLED
        trace.message = f"endpoint residual {check.max_abs:.3g} fails independent check (equation {check.worst_index})"
        logger.warning(trace.message)
    return trace


def continue_in_xi(spec, policy, r_start, family=ContinuationFamily.ALL_COPIES_DEFORMED, omega0=DEFAULT_OMEGA0):
    """Track r_start from policy.xi_start to policy.xi_end along the chosen deformation."""
    tracked = _family_for(spec, family, omega0)
    if r_start.frame is not tracked.frame:
        if tracked.frame is Frame.DICKE_X:
            r_start = to_dicke_frame(r_start, spec, policy.xi_start, omega0)
        else:
            raise DomainError(f"{family} continuation expects {tracked.frame.value} rapidities")
    if policy.xi_start == policy.xi_end:
        report = tracked.residual(r_start.array, policy.xi_start)
        return SolutionTrace([TracePoint(policy.xi_start, r_start, report.max_abs, 0)], endpoint_max_abs=report.max_abs)
    return _track(tracked, policy, r_start.array)


def _root_groups(values, tol=1e-12):
    groups = []
    for v in values:
        for group in groups:
            if abs(group[0] - v) <= tol * max(1.0, abs(v)):
                group.append(v)
                break
        else:
            groups.append([v])
    return groups


def lift_degenerate_seeds(family, seeds, seed=0, magnitude=LIFT_MAGNITUDE):
    """Split repeated TDA roots into the asymptotic small-xi pattern.

    A group of q equal roots r opens as r + c*y_j with y_j the Hermite zeros
    and c^2 = xi * P(r) / f'(r), P the pair strength.  Returns the xi at which
    the widest group has spread `magnitude` together with the lifted set.
    """
    groups = _root_groups(seeds.values)
    if all(len(g) == 1 for g in groups):
        return 0.0, seeds
    rng = np.random.default_rng(seed)
    xi_lift = 1.0
    data = []
    for group in groups:
        root = group[0].real
        slope = complex(family.secular(np.asarray(root))[1])
        pair = complex(family.pair_strength(np.asarray(root)))
        if len(group) > 1:
            target = magnitude * (1.0 + 0.1 * rng.random())
            xi_lift = min(xi_lift, target**2 * abs(slope) / abs(pair))
        data.append((group, slope, pair))
    lifted = []
    for group, slope, pair in data:
        q = len(group)
        if q == 1:
            lifted.append(group[0])
            continue
        c = np.sqrt(complex(xi_lift * pair / slope))
        zeros = hermite.hermroots([0] * q + [1])
        lifted.extend(group[0].real + c * zeros)
    logger.debug("Lifted %d seeds at xi=%.3g", len(lifted), xi_lift)
    return xi_lift, RapiditySet(tuple(lifted), seeds.frame).sorted()


def solve_rg_branch(spec, selection=None, policy=None, seed=0):
    """TDA seed, lift, continuation to xi = 1 and an independent check with rg_residual."""
    policy = policy or ContinuationPolicy()
    seeds = solve_tda(spec, selection, policy.newton_tol)
    family = DeformedRGFamily(spec)
    xi_lift, start = lift_degenerate_seeds(family, seeds, seed)
    trace = _track(family, policy.between(xi_lift, 1.0), start.array)
    if selection and selection.occupation:
        occupation = tuple(selection.occupation)
    else:
        occupation = default_occupation(len(secular_roots(spec)), spec.n_excitations)
    rapidities = trace.final.sorted() if trace.succeeded else None
    return BranchResult(_branch_id(occupation), tuple(occupation), rapidities, trace)


def _branch_id(occupation, prefix="tda"):
    return f"{prefix}-" + "-".join(str(i) for i in occupation)


def sector_dimension(spec):
    """Number of product states with n + sum_k j_k = N, j_k <= 2 s_k."""
    caps = [int(round(2 * s)) for s in spec.spins]
    return sum(1 for qs in itertools.product(*(range(c + 1) for c in caps)) if sum(qs) <= spec.n_excitations)


def track_occupation(spec, occupation, policy, seed):
    roots = secular_roots(spec)
    if len(occupation) != spec.n_excitations or max(occupation) >= len(roots):
        raise InsufficientModesError(f"Occupation {tuple(occupation)} does not fit {len(roots)} roots and N = {spec.n_excitations}")
    seeds = RapiditySet(tuple(sorted(roots[i] for i in occupation)), Frame.DICKE_X)
    family = DeformedSpinsDickeFamily(spec)
    xi_lift, start = lift_degenerate_seeds(family, seeds, seed)
    trace = _track(family, policy.between(xi_lift, 1.0), start.array)
    rapidities = trace.final.sorted() if trace.succeeded else None
    return BranchResult(_branch_id(occupation), tuple(occupation), rapidities, trace)


def laguerre_zeros(q, alpha):
    """Zeros of the generalized Laguerre polynomial L_q^(alpha), alpha may be negative."""
    j = np.arange(q + 1)
    coeffs = (-1.0) ** j * binom(q + alpha, q - j) / np.array([math.factorial(int(i)) for i in j])
    return np.roots(coeffs[::-1])


def weak_coupling_seeds(spec, photons, excitations, t):
    """Rapidities of the G^2 -> t G^2 equations for small t.

    `photons` rapidities gather near hbar_omega, excitations[k] near eps_k.
    """
    G = spec.coupling_G
    values = []
    if photons:
        values.extend(spec.hbar_omega + 1j * math.sqrt(2 * t) * G * hermite.hermroots([0] * photons + [1]))
    for eps, s, q in zip(spec.epsilons, spec.spins, excitations):
        if not q:
            continue
        detuning = spec.hbar_omega - eps
        if detuning == 0.0:
            raise DomainError(f"Level eps = {eps} is resonant with the photon; no weak-coupling seed")
        values.extend(eps + t * G**2 * laguerre_zeros(q, -2 * s - 1) / detuning)
    return np.asarray(values, dtype=complex)


def _ramp_branch(spec, photons, excitations, policy):
    branch_id = f"ramp-{photons}-" + "-".join(str(q) for q in excitations)
    occupation = (photons,) + tuple(excitations)
    try:
        start = weak_coupling_seeds(spec, photons, excitations, RAMP_START)
    except DomainError as e:
        logger.info("Skipping %s: %s", branch_id, e)
        return BranchResult(branch_id, occupation, None, SolutionTrace(status=TraceStatus.STALLED, message=str(e)), "coupling_ramp")
    trace = _track(CouplingRampFamily(spec), policy.between(RAMP_START, 1.0), start)
    rapidities = trace.final.sorted() if trace.succeeded else None
    return BranchResult(branch_id, occupation, rapidities, trace, "coupling_ramp")


def _is_new(found, candidate):
    c = np.sort_complex(candidate.array)
    return all(np.max(np.abs(np.sort_complex(r.array) - c)) > DEDUPE_TOL for r in found)


def solve_dicke_branches(spec, policy=None, seed=0, n_jobs=1):
    """Every Dicke Bethe branch of the N-excitation sector that the solver can reach.

    All TDA occupation multisets are tracked along the all-copies
    deformation; if fewer distinct solutions than the sector dimension come
    out, a weak-coupling ramp fills in the rest.
    """
    policy = policy or ContinuationPolicy()
    n_roots = len(secular_roots(spec))
    occupations = list(itertools.combinations_with_replacement(range(n_roots), spec.n_excitations))
    if n_jobs == 1:
        results = [track_occupation(spec, occ, policy, seed) for occ in occupations]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(track_occupation)(spec, occ, policy, seed) for occ in occupations)

    distinct, branches = [], []
    for result in results:
        if result.converged and _is_new(distinct, result.rapidities):
            distinct.append(result.rapidities)
            branches.append(result)
        elif not result.converged:
            logger.info("Branch %s did not reach xi=1: %s", result.branch_id, result.trace.message)

    needed = sector_dimension(spec)
    if len(branches) < needed:
        logger.info("xi-path found %d of %d branches; running weak-coupling ramp", len(branches), needed)
        caps = [int(round(2 * s)) for s in spec.spins]
        patterns = [
            (spec.n_excitations - sum(qs), qs)
            for qs in itertools.product(*(range(c + 1) for c in caps))
            if sum(qs) <= spec.n_excitations
        ]
        if n_jobs == 1:
            ramped = [_ramp_branch(spec, p, qs, policy) for p, qs in patterns]
        else:
            ramped = Parallel(n_jobs=n_jobs)(delayed(_ramp_branch)(spec, p, qs, policy) for p, qs in patterns)
        for result in ramped:
            if len(branches) >= needed:
                break
            if result.converged and _is_new(distinct, result.rapidities):
                distinct.append(result.rapidities)
                branches.append(result)
    if len(branches) < needed:
        logger.warning("Found %d of %d Dicke branches", len(branches), needed)
    return branches


def match_spectra(bethe, oracle, tol=None):
    """Greedy nearest-neighbour pairing of Bethe and oracle energies.

    Pairs are taken in order of increasing gap; no value is used twice. A
    Bethe energy whose nearest oracle value was already taken is reported as
    a collision.
    """
    bethe = np.asarray(bethe, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    gaps = np.abs(bethe[:, None] - oracle[None, :])
    order = np.dstack(np.unravel_index(np.argsort(gaps, axis=None), gaps.shape))[0]
    used_b, used_o, pairs = set(), set(), []
    for i, j in order:
        if i in used_b or j in used_o:
            continue
        if tol is not None and gaps[i, j] > tol:
            break
        used_b.add(int(i))
        used_o.add(int(j))
        pairs.append((int(i), int(j), float(gaps[i, j])))
    collisions = []
    if oracle.size:
        nearest = gaps.argmin(axis=1)
        for i, j, _ in pairs:
            if nearest[i] != j:
                collisions.append((i, int(nearest[i])))
    return SpectrumMatch(
        pairs,
        [i for i in range(bethe.size) if i not in used_b],
        [j for j in range(oracle.size) if j not in used_o],
        collisions,
    )
