"""Operator expressions for the Dicke model and its deformed-copy parent.

Level label 0 is the photon mode (or the deformed copy that becomes it);
labels 1..m are the spins.  Symbols:

    "b+", "b", "n"      boson creation, annihilation, number
    "S+", "S-", "S0"    su(2) raising, lowering, weight (canonical A-triple on a deformed copy)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from app.config import DEFAULT_OMEGA0
from app.utils.algebra import contracted_copy_spin, infinity_row, is_half_integer, pair_entries
from app.utils.errors import CutoffError, DomainError, RepresentationError
from app.utils.rg_core import Frame, RapiditySet, rescaling

logger = logging.getLogger(__name__)

BOSON_SYMBOLS = ("b+", "b", "n")
SPIN_SYMBOLS = ("S+", "S-", "S0")
ADJOINT = {"b+": "b", "b": "b+", "n": "n", "S+": "S-", "S-": "S+", "S0": "S0"}


@dataclass(frozen=True)
class Symbol:
    name: str
    level: int

    def __post_init__(self):
        if self.name not in ADJOINT:
            raise DomainError(f"Unknown operator symbol {self.name!r}")

    @property
    def is_boson(self):
        return self.name in BOSON_SYMBOLS

    def adjoint(self):
        return Symbol(ADJOINT[self.name], self.level)

    def __str__(self):
        return f"{self.name}[{self.level}]"


def _canonical(factors):
    # factors on different levels commute; keep the order within a level
    return tuple(sorted(factors, key=lambda f: f.level))


@dataclass(frozen=True)
class OperatorExpression:
    """Sum of coefficient * product-of-symbols terms; `observable` marks Hermitian sums."""

    terms: tuple
    observable: bool = False

    def __post_init__(self):
        terms = []
        for coef, factors in self.terms:
            coef = complex(coef)
            if not (math.isfinite(coef.real) and math.isfinite(coef.imag)):
                raise DomainError(f"Non-finite coefficient {coef} in operator expression")
            terms.append((coef, _canonical(tuple(factors))))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def of(cls, *terms, observable=False):
        """Build from (coef, (name, level), (name, level), ...) tuples."""
        return cls(tuple((t[0], tuple(Symbol(*f) for f in t[1:])) for t in terms), observable)

    @classmethod
    def identity(cls, coef=1.0):
        return cls(((coef, ()),), observable=complex(coef).imag == 0)

    @property
    def levels(self):
        return sorted({f.level for _, factors in self.terms for f in factors})

    def __add__(self, other):
        return OperatorExpression(self.terms + other.terms, self.observable and other.observable)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return OperatorExpression(
            tuple((scalar * c, f) for c, f in self.terms), self.observable and scalar.imag == 0
        )

    __rmul__ = __mul__

    def adjoint(self):
        return OperatorExpression(
            tuple((c.conjugate(), tuple(s.adjoint() for s in reversed(f))) for c, f in self.terms),
            self.observable,
        )

    def simplified(self, tol=0.0):
        """Merge identical factor strings and drop terms with |coef| <= tol."""
        merged = {}
        for coef, factors in self.terms:
            merged[factors] = merged.get(factors, 0.0) + coef
        return OperatorExpression(
            tuple((c, f) for f, c in merged.items() if abs(c) > tol), self.observable
        )

    def coefficient(self, *factors):
        key = _canonical(tuple(Symbol(*f) for f in factors))
        return sum((c for c, f in self.terms if f == key), 0j)

    def __len__(self):
        return len(self.terms)

    def __str__(self):
        parts = [f"({c.real:g}{c.imag:+g}j)" + "".join(f" {s}" for s in f) for c, f in self.terms]
        return " + ".join(parts) or "0"


class Normalization(str, Enum):
    RAW = "raw"
    UNIT_NORM = "unit_norm"


@dataclass(frozen=True)
class BetheProductState:
    spec: object
    rapidities: RapiditySet
    normalization: Normalization = Normalization.UNIT_NORM

    def __post_init__(self):
        if self.rapidities.frame is not Frame.DICKE_X:
            raise DomainError("Dicke Bethe states take rapidities in the dicke_x frame")
        gaps = np.abs(self.rapidities.array[:, None] - self.spec.eps_array[None, :])
        if gaps.size and gaps.min() < 1e-10:
            raise DomainError("A rapidity coincides with a level energy eps_k")
        object.__setattr__(self, "normalization", Normalization(self.normalization))


def build_dicke_hamiltonian(spec):
    """H = hw b+b + sum_k eps_k S0_k + G sum_k (b+ S-_k + S+_k b)."""
    terms = [(spec.hbar_omega, ("n", 0))]
    terms += [(eps, ("S0", k)) for k, eps in enumerate(spec.epsilons, start=1)]
    for k in range(1, spec.m + 1):
        terms.append((spec.coupling_G, ("b+", 0), ("S-", k)))
        terms.append((spec.coupling_G, ("b", 0), ("S+", k)))
    return OperatorExpression.of(*terms, observable=True)


def build_excitation_number(spec):
    """M = b+b + sum_k (S0_k + s_k)."""
    terms = [(1.0, ("n", 0))] + [(1.0, ("S0", k)) for k in range(1, spec.m + 1)]
    return OperatorExpression.of(*terms, observable=True) + OperatorExpression.identity(sum(spec.spins))


def _spin_pair_terms(i, k, x, z):
    return [(0.5 * x, ("S+", i), ("S-", k)), (0.5 * x, ("S+", k), ("S-", i)), (z, ("S0", i), ("S0", k))]


def build_dicke_charge(spec, i):
    """hw*R_i in the contraction limit; i = 0 gives the Hamiltonian."""
    if i == 0:
        return build_dicke_hamiltonian(spec)
    if not 1 <= i <= spec.m:
        raise DomainError(f"Charge index {i} outside 0..{spec.m}")
    eps = spec.epsilons
    G2 = spec.coupling_G**2
    terms = [(spec.hbar_omega - eps[i - 1], ("S0", i))]
    for k in range(1, spec.m + 1):
        if k != i:
            w = 2 * G2 / (eps[k - 1] - eps[i - 1])
            terms += _spin_pair_terms(i, k, w, w)
    terms.append((-spec.coupling_G, ("b", 0), ("S+", i)))
    terms.append((-spec.coupling_G, ("b+", 0), ("S-", i)))
    return OperatorExpression.of(*terms, observable=True)


def _check_copy_label(xi, omega0):
    s0 = contracted_copy_spin(xi, omega0)
    if not is_half_integer(s0):
        raise RepresentationError(f"xi = {xi} gives copy label {s0:g}, not a half-integer")
    return s0


def _deformed_geometry(spec, xi, omega0):
    lam, g = rescaling(spec, xi, omega0)
    etas = -lam * spec.eps_array
    x0, z0 = infinity_row(etas)
    return g, etas, x0, z0


def build_deformed_charge0(spec, xi, omega0=DEFAULT_OMEGA0, representation=False):
    """R_0(xi) with copy 0 pseudo-deformed and eta_0 -> infinity.

    The copy-0 factors are the canonical A-triple (written S+, S-, S0 on
    level 0). With representation=True the copy label Omega_0/(4 xi) must be a
    half-integer so a finite irrep exists.
    """
    if representation:
        _check_copy_label(xi, omega0)
    g, _, x0, z0 = _deformed_geometry(spec, xi, omega0)
    terms = [(1.0, ("S0", 0))]
    for k in range(1, spec.m + 1):
        terms.append((0.5 * g * x0[k - 1], ("S+", 0), ("S-", k)))
        terms.append((0.5 * g * x0[k - 1], ("S-", 0), ("S+", k)))
        terms.append((g * z0[k - 1], ("S0", 0), ("S0", k)))
    return OperatorExpression.of(*terms, observable=True)


def build_deformed_charge(spec, i, xi, omega0=DEFAULT_OMEGA0, representation=False):
    """R_i(xi) of the model with only copy 0 deformed; i = 0 delegates to build_deformed_charge0."""
    if i == 0:
        return build_deformed_charge0(spec, xi, omega0, representation)
    if not 1 <= i <= spec.m:
        raise DomainError(f"Charge index {i} outside 0..{spec.m}")
    if representation:
        _check_copy_label(xi, omega0)
    g, etas, x0, z0 = _deformed_geometry(spec, xi, omega0)
    terms = [(1.0, ("S0", i))]
    for k in range(1, spec.m + 1):
        if k != i:
            x, z = pair_entries("trigonometric", etas[i - 1], etas[k - 1])
            terms += [(g * c, *f) for c, *f in _spin_pair_terms(i, k, float(x), float(z))]
    # X_i0 = -X_0i, Z_i0 = -Z_0i
    terms.append((-0.5 * g * x0[i - 1], ("S-", 0), ("S+", i)))
    terms.append((-0.5 * g * x0[i - 1], ("S+", 0), ("S-", i)))
    terms.append((-g * z0[i - 1], ("S0", 0), ("S0", i)))
    return OperatorExpression.of(*terms, observable=True)


def contraction_coefficients(spec, xi, omega0=DEFAULT_OMEGA0):
    """Effective coefficients of hw*R_0(xi) once A+ ~ sqrt(2 s_0) b+ and A0 = b+b - s_0.

    Columns per level k: photon-spin coupling (-> G), spin splitting
    (-> eps_k) and the residual n*S0_k coupling (-> 0).
    """
    s0 = contracted_copy_spin(xi, omega0)
    g, _, x0, z0 = _deformed_geometry(spec, xi, omega0)
    hw = spec.hbar_omega
    return {
        "photon": hw,
        "photon_spin": hw * 0.5 * g * x0 * math.sqrt(2 * s0),
        "spin_splitting": -hw * g * z0 * s0,
        "number_spin": hw * g * z0,
    }


def bethe_coefficients(state, boson_cutoff, basis=None):
    """Expand prod_a (b+ - G sum_k S+_k / (eps_k - x_a)) |theta> over a Dicke basis."""
    from app.utils.ed_oracle import HilbertBasis, StateVector, realize

    spec = state.spec
    n = spec.n_excitations
    if len(state.rapidities) != n:
        raise DomainError(f"{len(state.rapidities)} rapidities for N = {n}")
    if boson_cutoff < n:
        raise CutoffError(f"Boson cutoff {boson_cutoff} < N = {n} truncates the b+^N term")
    work = HilbertBasis.dicke(spec, boson_cutoff, sectors=tuple(range(n + 1)))
    amplitudes = np.zeros(work.total_dim, dtype=complex)
    amplitudes[work.index_of((0,) * (spec.m + 1))] = 1.0
    for x in state.rapidities.values:
        terms = [(1.0, ("b+", 0))] + [(-spec.coupling_G / (eps - x), ("S+", k)) for k, eps in enumerate(spec.epsilons, 1)]
        amplitudes = realize(OperatorExpression.of(*terms), work).matrix @ amplitudes
    vector = StateVector(amplitudes, work).to_basis(basis or HilbertBasis.dicke(spec, boson_cutoff, sectors=(n,)))
    if state.normalization is Normalization.UNIT_NORM:
        vector = vector.normalized()
    return vector


def rg_bethe_coefficients(spec, rapidities, normalization=Normalization.UNIT_NORM):
    """prod_a (sum_i X_ia S+_i) |theta> on the spin basis of an RG model."""
    from app.utils.ed_oracle import HilbertBasis, StateVector, realize

    if rapidities.frame is not Frame.RG_ETA:
        raise DomainError("RG Bethe states take rapidities in the rg_eta frame")
    n = len(rapidities)
    work = HilbertBasis.spins(spec.levels, sectors=tuple(range(n + 1)))
    amplitudes = np.zeros(work.total_dim, dtype=complex)
    amplitudes[work.index_of((0,) * spec.m)] = 1.0
    etas = spec.levels.eta_array
    for eta in rapidities.values:
        x, _ = pair_entries(spec.kind, etas.astype(complex), eta)
        terms = [(x[i - 1], ("S+", i)) for i in range(1, spec.m + 1)]
        amplitudes = realize(OperatorExpression.of(*terms), work).matrix @ amplitudes
    vector = StateVector(amplitudes, work).to_basis(HilbertBasis.spins(spec.levels, sectors=(n,)))
    if Normalization(normalization) is Normalization.UNIT_NORM:
        vector = vector.normalized()
    return vector


def vacuum_energy(spec):
    """Energy of |theta>: -sum_k eps_k s_k."""
    return -float(np.dot(spec.eps_array, spec.spins))


def bethe_energy(spec, rapidities):
    """sum_a x_a + vacuum energy; the imaginary parts of conjugate pairs cancel."""
    return float(np.sum(rapidities.array).real) + vacuum_energy(spec)
