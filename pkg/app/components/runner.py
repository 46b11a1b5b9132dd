"""Dispatch of the five run modes and assembly of their result files."""

import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from app.config import (
    BOSON_PAD,
    DEFAULT_OMEGA0,
    ENERGY_MATCH_TOL,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_VERIFICATION,
    MIN_STEP,
    NEWTON_TOL,
    ORACLE_TOL,
)
from app.components.results import (
    branch_record,
    branches_frame,
    complex_pairs,
    from_pairs,
    read_structured,
    spectrum_frame,
    trace_frame,
    trace_records,
    write_structured,
    write_tabular,
)
from app.components.stamp import environment_stamp
from app.utils.dicke import (
    BetheProductState,
    bethe_coefficients,
    bethe_energy,
    build_dicke_charge,
    build_dicke_hamiltonian,
    rg_bethe_coefficients,
)
from app.utils.ed_oracle import HilbertBasis, eigencheck, realize, realize_rg_charges, rg_hamiltonian, sector_spectra
from app.utils.errors import DomainError, GaudinError, SpecValidationError, VerificationError
from app.utils.rg_core import DickeSpec, Frame, RapiditySet, dicke_rg_residual, equivalent_rg_model, rg_residual
from app.utils.solver import (
    ContinuationFamily,
    ContinuationPolicy,
    RootSelection,
    TraceStatus,
    continue_in_xi,
    default_occupation,
    match_spectra,
    secular_roots,
    solve_dicke_branches,
    solve_rg_branch,
    track_occupation,
)
from app.utils.spec_parser import (
    MODEL_OVERRIDE_KEYS,
    RUN_KEYS,
    emit_spec,
    parse_spec,
    parse_spec_text,
    with_overrides,
)

logger = logging.getLogger(__name__)


class RunMode(str, Enum):
    SOLVE_RG = "solve-rg"
    SOLVE_DICKE = "solve-dicke"
    SWEEP_XI = "sweep-xi"
    VERIFY = "verify"
    ED_SPECTRUM = "ed-spectrum"


class OutputFormat(str, Enum):
    TABULAR = "tabular"
    STRUCTURED = "structured"


@dataclass
class RunConfig:
    """One CLI invocation; in verify mode `spec_path` names the results file to re-check."""

    mode: RunMode
    spec_path: str
    out: str = None
    fmt: OutputFormat = OutputFormat.STRUCTURED
    overrides: dict = field(default_factory=dict)
    xi_steps: int = None
    newton_tol: float = NEWTON_TOL
    boson_cutoff: int = None
    branch: str = None
    occupation: tuple = None
    seed: int = 0
    parallel_branches: bool = False
    family: ContinuationFamily = ContinuationFamily.ALL_COPIES_DEFORMED

    def __post_init__(self):
        self.mode = RunMode(self.mode)
        self.fmt = OutputFormat(self.fmt)
        self.family = ContinuationFamily(self.family)
        if not self.spec_path:
            raise SpecValidationError(f"--spec is required for mode {self.mode.value}")
        if self.out:
            folder = os.path.dirname(os.path.abspath(self.out))
            existing = folder
            while not os.path.exists(existing):
                existing = os.path.dirname(existing)
            if not os.access(existing, os.W_OK):
                raise SpecValidationError(f"Output directory {folder} is not writable")
        if self.xi_steps is not None and self.xi_steps < 1:
            raise SpecValidationError(f"--xi-steps must be positive, got {self.xi_steps}")
        unknown = sorted(set(self.overrides) - RUN_KEYS - MODEL_OVERRIDE_KEYS)
        if unknown:
            raise SpecValidationError(f"Unknown --set key(s): {', '.join(unknown)}")
        if "seed" in self.overrides:
            self.seed = int(float(self.overrides["seed"]))
        if "newton_tol" in self.overrides:
            self.newton_tol = float(self.overrides["newton_tol"])
        if "cutoff" in self.overrides:
            self.boson_cutoff = int(float(self.overrides["cutoff"]))

    def policy(self):
        knobs = {k: float(self.overrides[k]) for k in ("initial_step", "min_step", "max_step") if k in self.overrides}
        if self.xi_steps is not None:
            knobs["initial_step"] = knobs["max_step"] = 1.0 / self.xi_steps
            knobs["min_step"] = min(knobs.get("min_step", MIN_STEP), knobs["initial_step"])
        try:
            return ContinuationPolicy(newton_tol=self.newton_tol, **knobs)
        except GaudinError as e:
            raise SpecValidationError(str(e)) from e

    @property
    def omega0(self):
        return float(self.overrides.get("omega0", DEFAULT_OMEGA0))

    @property
    def n_jobs(self):
        return -1 if self.parallel_branches else 1


@dataclass
class RunOutcome:
    status: int
    document: dict
    frame: object = None
    messages: list = field(default_factory=list)


def load_spec(config):
    spec = parse_spec(config.spec_path)
    return with_overrides(spec, config.overrides)


def _cutoff(config, spec):
    return config.boson_cutoff if config.boson_cutoff is not None else spec.n_excitations + BOSON_PAD


def _document(config, spec, **extra):
    doc = {
        "mode": config.mode.value,
        "stamp": environment_stamp(config.newton_tol),
        "spec": emit_spec(spec),
        "settings": {
            "newton_tol": config.newton_tol,
            "seed": config.seed,
            "boson_cutoff": config.boson_cutoff,
            "occupation": list(config.occupation) if config.occupation else None,
            "family": config.family.value,
            "xi_steps": config.xi_steps,
            "omega0": config.omega0,
        },
    }
    doc.update(extra)
    return doc


def dicke_oracle_check(spec, rapidities, cutoff):
    """Rayleigh energy and the worst relative eigen-residual over H and every hw*R_i."""
    basis = HilbertBasis.dicke(spec, cutoff, sectors=(spec.n_excitations,))
    vector = bethe_coefficients(BetheProductState(spec, rapidities), cutoff, basis)
    energy, worst = eigencheck(realize(build_dicke_hamiltonian(spec), basis), vector)
    for i in range(1, spec.m + 1):
        worst = max(worst, eigencheck(realize(build_dicke_charge(spec, i), basis), vector)[1])
    return energy, worst


def rg_oracle_check(spec, rapidities):
    charges = realize_rg_charges(spec)
    vector = rg_bethe_coefficients(spec, rapidities).to_basis(charges[0].basis)
    worst = max(eigencheck(c, vector)[1] for c in charges)
    energy, _ = eigencheck(rg_hamiltonian(spec), vector)
    return energy, worst


def _solve_rg(config, spec):
    if isinstance(spec, DickeSpec):
        raise SpecValidationError("solve-rg needs a model = rg spec")
    selection = RootSelection(config.occupation) if config.occupation else None
    result = solve_rg_branch(spec, selection, config.policy(), config.seed)
    records, status = [], EXIT_OK
    if not result.converged:
        logger.warning("Branch %s failed: %s", result.branch_id, result.trace.message)
        records.append(branch_record(result.branch_id, result.origin, result.trace.final, None, status=result.trace.status.value))
        doc = _document(config, spec, branches=records, trace=trace_records(result.trace), status="failed")
        return RunOutcome(EXIT_CONVERGENCE, doc, branches_frame(records), [result.trace.message])
    residual = rg_residual(spec, result.rapidities).max_abs
    try:
        energy, oracle = rg_oracle_check(spec, result.rapidities)
    except DomainError as e:
        logger.warning("Oracle skipped: %s", e)
        energy, oracle = None, None
    records.append(branch_record(result.branch_id, result.origin, result.rapidities, residual, energy, oracle))
    if oracle is not None and not oracle < ORACLE_TOL:
        status = EXIT_VERIFICATION
    doc = _document(config, spec, branches=records, status="passed" if status == EXIT_OK else "failed")
    return RunOutcome(status, doc, branches_frame(records))


def _solve_dicke(config, spec):
    if not isinstance(spec, DickeSpec):
        raise SpecValidationError("solve-dicke needs a model = dicke spec")
    cutoff = _cutoff(config, spec)
    branches = solve_dicke_branches(spec, config.policy(), config.seed, config.n_jobs)
    if config.branch:
        branches = [b for b in branches if b.branch_id == config.branch]
        if not branches:
            raise SpecValidationError(f"No converged branch named {config.branch!r}")
    records, energies, status, messages = [], [], EXIT_OK, []
    for b in branches:
        residual = dicke_rg_residual(spec, b.rapidities).max_abs
        energy, oracle = dicke_oracle_check(spec, b.rapidities, cutoff)
        relation_gap = abs(energy - bethe_energy(spec, b.rapidities))
        if not oracle < ORACLE_TOL or relation_gap > ENERGY_MATCH_TOL:
            status = EXIT_VERIFICATION
            messages.append(f"{b.branch_id}: oracle residual {oracle:.3g}, energy relation gap {relation_gap:.3g}")
        records.append(branch_record(b.branch_id, b.origin, b.rapidities, residual, energy, oracle))
        energies.append(energy)

    basis = HilbertBasis.dicke(spec, cutoff, sectors=(spec.n_excitations,))
    oracle_levels = sector_spectra(realize(build_dicke_hamiltonian(spec), basis))[spec.n_excitations]
    match = match_spectra(energies, oracle_levels, ENERGY_MATCH_TOL)
    completeness = {
        "oracle_levels": [float(e) for e in oracle_levels],
        "matched": len(match.pairs),
        "unmatched_oracle": [float(oracle_levels[j]) for j in match.unmatched_oracle],
        "max_gap": match.max_gap,
    }
    if not config.branch and not match.complete(ENERGY_MATCH_TOL):
        status = EXIT_VERIFICATION if status == EXIT_OK and branches else EXIT_CONVERGENCE
        messages.append(f"{len(match.unmatched_oracle)} oracle levels have no Bethe branch")
    doc = _document(
        config, spec, branches=records, completeness=completeness,
        status="passed" if status == EXIT_OK else "failed",
    )
    return RunOutcome(status, doc, branches_frame(records), messages)


def _single_copy_sweep(config, spec, policy, selection):
    """Solve the equivalent trigonometric model at xi = 1, contract it to the Dicke model.

    Returns the 1 -> 0 trace and the extra document fields describing the
    RG start point and the comparison with the enumerated Dicke branches.
    """
    if not isinstance(spec, DickeSpec):
        raise SpecValidationError("single_copy_dicke sweeps need a model = dicke spec")
    model = equivalent_rg_model(spec, 1.0, config.omega0)
    rg_branch = solve_rg_branch(model, selection, policy, config.seed)
    if not rg_branch.converged:
        return rg_branch.trace, {"rg_start": {"branch_id": rg_branch.branch_id, "status": rg_branch.trace.status.value}}
    start = {
        "branch_id": rg_branch.branch_id,
        "status": TraceStatus.CONVERGED.value,
        "model": emit_spec(model),
        "rapidities": complex_pairs(rg_branch.rapidities.values),
        "rg_max_abs": rg_residual(model, rg_branch.rapidities).max_abs,
    }
    trace = continue_in_xi(spec, policy.between(1.0, 0.0), rg_branch.rapidities, config.family, config.omega0)
    extra = {"rg_start": start}
    if trace.succeeded:
        endpoint = np.sort_complex(trace.final.array)
        gaps = {
            b.branch_id: float(np.max(np.abs(np.sort_complex(b.rapidities.array) - endpoint)))
            for b in solve_dicke_branches(spec, policy, config.seed, config.n_jobs)
        }
        nearest = min(gaps, key=gaps.get) if gaps else None
        extra["dicke_match"] = {"branch_id": nearest, "max_gap": gaps.get(nearest)}
    return trace, extra


def _sweep(config, spec):
    policy = config.policy()
    selection = RootSelection(config.occupation) if config.occupation else None
    extra = {}
    if config.family is ContinuationFamily.SINGLE_COPY_DICKE:
        trace, extra = _single_copy_sweep(config, spec, policy, selection)
    elif isinstance(spec, DickeSpec):
        occupation = config.occupation or default_occupation(len(secular_roots(spec)), spec.n_excitations)
        trace = track_occupation(spec, occupation, policy, config.seed).trace
    else:
        trace = solve_rg_branch(spec, selection, policy, config.seed).trace

    status = EXIT_OK if trace.succeeded else EXIT_CONVERGENCE
    messages = [trace.message] if trace.message else []
    match = extra.get("dicke_match")
    if status == EXIT_OK and match is not None and not (match["max_gap"] is not None and match["max_gap"] < ENERGY_MATCH_TOL):
        status = EXIT_VERIFICATION
        messages.append(f"xi = 0 endpoint matches no Dicke branch (nearest gap {match['max_gap']})")
    doc = _document(
        config, spec, trace=trace_records(trace), trace_status=trace.status.value,
        endpoint_max_abs=trace.endpoint_max_abs, message=trace.message,
        status="passed" if status == EXIT_OK else "failed", **extra,
    )
    return RunOutcome(status, doc, trace_frame(trace), messages)


def _ed_spectrum(config, spec):
    if isinstance(spec, DickeSpec):
        cutoff = _cutoff(config, spec)
        basis = HilbertBasis.dicke(spec, cutoff, sectors=tuple(range(cutoff + 1)))
        op = realize(build_dicke_hamiltonian(spec), basis)
    else:
        op = rg_hamiltonian(spec)
    sectors = sector_spectra(op)
    doc = _document(
        config, spec, sectors={str(m): [float(e) for e in v] for m, v in sorted(sectors.items())}, status="passed"
    )
    return RunOutcome(EXIT_OK, doc, spectrum_frame(sectors))


def verify_document(document, newton_tol=None):
    """Re-check every branch of a results document; raises VerificationError naming the failures."""
    if "spec" not in document or "branches" not in document:
        raise VerificationError("Document has no spec echo or branch records to verify")
    spec = parse_spec_text(document["spec"], source="results spec echo")
    settings = document.get("settings", {})
    tol = newton_tol or settings.get("newton_tol") or NEWTON_TOL
    cutoff = settings.get("boson_cutoff") or spec.n_excitations + BOSON_PAD
    failures = []
    for rec in document["branches"]:
        if rec.get("status") != "converged":
            failures.append(f"{rec['branch_id']}: recorded status {rec.get('status')}")
            continue
        values = from_pairs(rec["rapidities"])
        if isinstance(spec, DickeSpec):
            rapidities = RapiditySet(values, Frame.DICKE_X)
            report = dicke_rg_residual(spec, rapidities)
        else:
            rapidities = RapiditySet(values, Frame.RG_ETA)
            report = rg_residual(spec, rapidities)
        if not report.max_abs < 10 * tol:
            failures.append(
                f"{rec['branch_id']}: equation {report.worst_index} residual {report.max_abs:.3g} exceeds {10 * tol:g}"
            )
            continue
        if rec.get("oracle_residual") is None:
            continue
        if isinstance(spec, DickeSpec):
            energy, oracle = dicke_oracle_check(spec, rapidities, cutoff)
        else:
            energy, oracle = rg_oracle_check(spec, rapidities)
        if not oracle < ORACLE_TOL:
            failures.append(f"{rec['branch_id']}: oracle residual {oracle:.3g}")
        if rec.get("energy") is not None and abs(energy - rec["energy"]) > ENERGY_MATCH_TOL:
            failures.append(f"{rec['branch_id']}: energy {energy!r} differs from recorded {rec['energy']!r}")
    if failures:
        raise VerificationError(f"{len(failures)} branch check(s) failed", failures)
    return spec


def _verify(config):
    document = read_structured(config.spec_path)
    try:
        spec = verify_document(document, config.overrides.get("newton_tol"))
    except VerificationError as e:
        for failure in e.failures:
            logger.error("verify: %s", failure)
        report = {"mode": "verify", "source": config.spec_path, "status": "failed", "failures": e.failures}
        return RunOutcome(EXIT_VERIFICATION, report, None, e.failures)
    report = {"mode": "verify", "source": config.spec_path, "status": "passed", "failures": []}
    report["spec"] = emit_spec(spec)
    return RunOutcome(EXIT_OK, report)


HANDLERS = {
    RunMode.SOLVE_RG: _solve_rg,
    RunMode.SOLVE_DICKE: _solve_dicke,
    RunMode.SWEEP_XI: _sweep,
    RunMode.ED_SPECTRUM: _ed_spectrum,
}


def run(config):
    """Execute one run, write its result file and return the exit status."""
    start_time = time.time()
    if config.mode is RunMode.VERIFY:
        outcome = _verify(config)
    else:
        spec = load_spec(config)
        outcome = HANDLERS[config.mode](config, spec)

    if config.out:
        if config.fmt is OutputFormat.TABULAR and outcome.frame is not None:
            write_tabular(config.out, outcome.frame)
        else:
            write_structured(config.out, outcome.document)
    for message in outcome.messages:
        logger.warning(message)
    logger.info("%s finished with status %d in %.1f s", config.mode.value, outcome.status, time.time() - start_time)
    return outcome.status

