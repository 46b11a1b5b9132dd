"""Exact-diagonalization oracle on truncated tensor-product spaces.

Every mode carries an index j = 0..dim-1: the Fock number for a boson, the
offset mu + s from the lowest weight for a spin.  The sum of indices is the
excitation number M, and a basis may keep only selected M sectors.  Since
all charges here conserve M, keeping M <= cutoff makes boson truncation
exact.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from app.config import BOSON_PAD, DEFAULT_OMEGA0, HERMITIAN_TOL, MAX_ORACLE_DIM
from app.utils.algebra import DeformationPoint, contracted_copy_spin, grid_index, is_half_integer, pair_entries
from app.utils.dicke import OperatorExpression
from app.utils.errors import BasisMismatchError, ContractError, DomainError, RepresentationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mode:
    kind: str
    label: int
    dim: int
    spin: float = None

    def __post_init__(self):
        if self.kind not in ("boson", "spin"):
            raise DomainError(f"Unknown mode kind {self.kind!r}")
        if self.dim < 1:
            raise DomainError(f"Mode {self.label} has dimension {self.dim}")
        if self.kind == "spin" and (self.spin is None or self.dim > round(2 * self.spin) + 1):
            raise DomainError(f"Spin mode {self.label} needs a label s with 2s+1 >= {self.dim}")

    def factor(self, name):
        """Sparse matrix of one elementary operator on this mode."""
        j = np.arange(self.dim, dtype=float)
        if self.kind == "boson":
            if name not in ("b+", "b", "n"):
                raise BasisMismatchError(f"{name} does not act on boson mode {self.label}")
            if name == "n":
                return sp.diags(j).tocsr()
            raise_ = sp.diags(np.sqrt(j[1:]), -1).tocsr()
            return raise_ if name == "b+" else raise_.T.tocsr()
        if name not in ("S+", "S-", "S0"):
            raise BasisMismatchError(f"{name} does not act on spin mode {self.label}")
        mu = j - self.spin
        if name == "S0":
            return sp.diags(mu).tocsr()
        raise_ = sp.diags(np.sqrt(self.spin * (self.spin + 1) - mu[:-1] * (mu[:-1] + 1)), -1).tocsr()
        return raise_ if name == "S+" else raise_.T.tocsr()


class HilbertBasis:
    """Product basis over modes, optionally restricted to excitation sectors."""

    def __init__(self, modes, sectors=None):
        self.modes = tuple(modes)
        self.sectors = None if sectors is None else tuple(sorted(int(s) for s in sectors))
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise DomainError(f"Duplicate mode labels {labels}")
        dims = [m.dim for m in self.modes]
        full = np.indices(dims).reshape(len(dims), -1).T
        excitations = full.sum(axis=1)
        keep = np.ones(len(full), dtype=bool) if self.sectors is None else np.isin(excitations, self.sectors)
        self.full_dim = int(np.prod(dims))
        self.full_index = np.nonzero(keep)[0]
        self.states = full[keep]
        self.excitations = excitations[keep]
        if not len(self.states):
            raise DomainError(f"Sectors {self.sectors} leave an empty basis")
        if len(self.states) > MAX_ORACLE_DIM:
            raise DomainError(f"Basis dimension {len(self.states)} exceeds the oracle limit {MAX_ORACLE_DIM}")
        self._lookup = {tuple(int(v) for v in row): i for i, row in enumerate(self.states)}

    @classmethod
    def spin_modes(cls, spins, sectors=None, first_label=1):
        modes = [Mode("spin", first_label + i, int(round(2 * s)) + 1, float(s)) for i, s in enumerate(spins)]
        return cls(modes, sectors)

    @classmethod
    def spins(cls, levels, sectors=None):
        return cls.spin_modes(levels.spins, sectors)

    @classmethod
    def bosons(cls, m, cutoff, window=True):
        modes = [Mode("boson", i, cutoff + 1) for i in range(1, m + 1)]
        return cls(modes, tuple(range(cutoff + 1)) if window else None)

    @classmethod
    def dicke(cls, spec, boson_cutoff=None, sectors=None):
        if boson_cutoff is None:
            boson_cutoff = spec.n_excitations + BOSON_PAD
        modes = [Mode("boson", 0, boson_cutoff + 1)]
        modes += [Mode("spin", k, int(round(2 * s)) + 1, s) for k, s in enumerate(spec.spins, start=1)]
        return cls(modes, sectors)

    @classmethod
    def deformed_dicke(cls, spec, xi, cutoff, omega0=DEFAULT_OMEGA0, sectors=None):
        """Copy 0 as the lowest cutoff+1 weights of its spin Omega_0/(4 xi) irrep."""
        s0 = contracted_copy_spin(xi, omega0)
        if not is_half_integer(s0):
            raise RepresentationError(f"xi = {xi} gives copy label {s0:g}, not a half-integer")
        modes = [Mode("spin", 0, min(cutoff + 1, int(round(2 * s0)) + 1), s0)]
        modes += [Mode("spin", k, int(round(2 * s)) + 1, s) for k, s in enumerate(spec.spins, start=1)]
        return cls(modes, tuple(range(cutoff + 1)) if sectors is None else sectors)

    @property
    def total_dim(self):
        return len(self.states)

    @property
    def labels(self):
        return [m.label for m in self.modes]

    @property
    def boson_cutoff(self):
        dims = [m.dim for m in self.modes if m.kind == "boson"]
        return dims[0] - 1 if dims else None

    @property
    def spin_dims(self):
        return [m.dim for m in self.modes if m.kind == "spin"]

    def index_of(self, state):
        try:
            return self._lookup[tuple(int(v) for v in state)]
        except KeyError:
            raise BasisMismatchError(f"State {tuple(state)} is not in this basis") from None

    def __eq__(self, other):
        return isinstance(other, HilbertBasis) and self.modes == other.modes and self.sectors == other.sectors

    def __hash__(self):
        return hash((self.modes, self.sectors))


@dataclass(frozen=True, eq=False)
class MatrixOperator:
    matrix: np.ndarray
    basis: HilbertBasis
    hermitian: bool = False

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (self.basis.total_dim, self.basis.total_dim):
            raise BasisMismatchError(f"Matrix shape {matrix.shape} does not match basis dimension {self.basis.total_dim}")
        if self.hermitian:
            gap = np.max(np.abs(matrix - matrix.conj().T)) if matrix.size else 0.0
            if gap > HERMITIAN_TOL * max(1.0, np.max(np.abs(matrix))):
                raise ContractError(f"Operator flagged hermitian deviates from its adjoint by {gap:.3g}")
        object.__setattr__(self, "matrix", matrix)

    def _check(self, other):
        if self.basis != other.basis:
            raise BasisMismatchError("Operators live on different bases")

    def __add__(self, other):
        self._check(other)
        return MatrixOperator(self.matrix + other.matrix, self.basis, self.hermitian and other.hermitian)

    def __sub__(self, other):
        self._check(other)
        return MatrixOperator(self.matrix - other.matrix, self.basis, self.hermitian and other.hermitian)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return MatrixOperator(scalar * self.matrix, self.basis, self.hermitian and scalar.imag == 0)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return MatrixOperator(self.matrix @ other.matrix, self.basis)

    def shifted(self, constant):
        return MatrixOperator(self.matrix + constant * np.eye(self.basis.total_dim), self.basis, self.hermitian)

    def norm(self):
        return float(np.linalg.norm(self.matrix))


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    basis: HilbertBasis

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amplitudes.size != self.basis.total_dim:
            raise BasisMismatchError(f"{amplitudes.size} amplitudes for basis dimension {self.basis.total_dim}")
        object.__setattr__(self, "amplitudes", amplitudes)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self):
        norm = self.norm()
        if norm == 0.0:
            raise DomainError("Cannot normalize the zero vector")
        return StateVector(self.amplitudes / norm, self.basis)

    def amplitude(self, state):
        return self.amplitudes[self.basis.index_of(state)]

    def to_basis(self, basis):
        """Re-express on another basis over the same modes; states outside it are dropped."""
        if basis.modes != self.basis.modes:
            raise BasisMismatchError("Bases have different modes")
        out = np.zeros(basis.total_dim, dtype=complex)
        for i, row in enumerate(self.basis.states):
            j = basis._lookup.get(tuple(int(v) for v in row))
            if j is not None:
                out[j] = self.amplitudes[i]
        return StateVector(out, basis)


def realize(expr, basis):
    """Matrix of an operator expression on a (possibly sector-restricted) basis."""
    positions = {label: p for p, label in enumerate(basis.labels)}
    missing = [level for level in expr.levels if level not in positions]
    if missing:
        raise BasisMismatchError(f"Expression acts on levels {missing} absent from the basis {basis.labels}")
    total = sp.csr_matrix((basis.full_dim, basis.full_dim), dtype=complex)
    for coef, factors in expr.terms:
        if coef == 0:
            continue
        per_mode = [sp.identity(mode.dim, format="csr") for mode in basis.modes]
        for symbol in factors:
            p = positions[symbol.level]
            per_mode[p] = per_mode[p] @ basis.modes[p].factor(symbol.name)
        term = per_mode[0]
        for factor in per_mode[1:]:
            term = sp.kron(term, factor, format="csr")
        total = total + coef * term
    idx = basis.full_index
    matrix = total[idx][:, idx].toarray()
    return MatrixOperator(matrix, basis, hermitian=expr.observable)


def spectrum(op, vectors=False):
    """Ascending real eigenvalues (and eigenvectors as columns if requested)."""
    if not op.hermitian:
        raise ContractError("spectrum needs an operator flagged hermitian")
    if vectors:
        return scipy.linalg.eigh(op.matrix)
    return scipy.linalg.eigh(op.matrix, eigvals_only=True)


def commutator_norm(a, b):
    """Frobenius norm of AB - BA."""
    if a.basis != b.basis or a.matrix.shape != b.matrix.shape:
        raise BasisMismatchError("Commutator of operators on different bases")
    return float(np.linalg.norm(a.matrix @ b.matrix - b.matrix @ a.matrix))


def eigencheck(op, v):
    """Rayleigh quotient and relative eigen-residual ||Ov - rho v|| / ||Ov||.

    When ||Ov|| is negligible against ||O|| ||v|| (eigenvalue zero) the
    residual is measured against ||O|| ||v|| instead.
    """
    if op.basis != v.basis:
        raise BasisMismatchError("Operator and vector live on different bases")
    amps = v.amplitudes
    norm2 = np.vdot(amps, amps).real
    if norm2 == 0.0:
        raise DomainError("eigencheck of the zero vector")
    image = op.matrix @ amps
    rayleigh = np.vdot(amps, image) / norm2
    residual = np.linalg.norm(image - rayleigh * amps)
    scale = np.linalg.norm(op.matrix, 2) * np.sqrt(norm2)
    denom = np.linalg.norm(image)
    if denom < 1e-8 * scale:
        denom = scale
    rel = residual / denom if denom > 0 else 0.0
    return float(rayleigh.real), float(rel)


def sector_spectra(op, basis=None):
    """Eigenvalues of each excitation sector block, keyed by M."""
    basis = basis or op.basis
    if not op.hermitian:
        raise ContractError("sector_spectra needs an operator flagged hermitian")
    out = {}
    for m in np.unique(basis.excitations):
        idx = np.nonzero(basis.excitations == m)[0]
        out[int(m)] = scipy.linalg.eigh(op.matrix[np.ix_(idx, idx)], eigvals_only=True)
    return out


def _rg_charge_expressions(etas, kind, g, m):
    charges = []
    for i in range(1, m + 1):
        terms = [(1.0, ("S0", i))]
        for k in range(1, m + 1):
            if k == i:
                continue
            x, z = pair_entries(kind, etas[i - 1], etas[k - 1])
            x, z = float(x), float(z)
            terms += [
                (0.5 * g * x, ("S+", i), ("S-", k)),
                (0.5 * g * x, ("S+", k), ("S-", i)),
                (g * z, ("S0", i), ("S0", k)),
            ]
        charges.append(OperatorExpression.of(*terms, observable=True))
    return charges


def _bosonic_charge_expressions(levels, kind, g):
    """R_i(0) = n_i + g sum_k [X_ik sqrt(O_i O_k)(b+_i b_k + b+_k b_i) - Z_ik(O_i n_k + O_k n_i)].

    The pair terms carry no 1/4. With it the hopping would be a quarter of
    the value for which the one-boson states sum_i X_ia sqrt(O_i) b+_i solve
    the decoupled secular equation 1 + g sum_i O_i Z_ia = 0 at the same g;
    without it those states are exact eigenvectors of every R_i(0).
    """
    etas, omegas = levels.eta_array, levels.degeneracies
    charges = []
    for i in range(1, levels.m + 1):
        terms = [(1.0, ("n", i))]
        for k in range(1, levels.m + 1):
            if k == i:
                continue
            x, z = pair_entries(kind, etas[i - 1], etas[k - 1])
            hop = g * float(x) * np.sqrt(omegas[i - 1] * omegas[k - 1])
            terms += [
                (hop, ("b+", i), ("b", k)),
                (hop, ("b+", k), ("b", i)),
                (-g * float(z) * omegas[i - 1], ("n", k)),
                (-g * float(z) * omegas[k - 1], ("n", i)),
            ]
        charges.append(OperatorExpression.of(*terms, observable=True))
    return charges


def deformed_spin_labels(levels, xi):
    """Irrep labels s_i(xi) = s_i + n_i/2 at a unitary grid point common to every level."""
    labels = []
    for s, omega in zip(levels.spins, levels.degeneracies):
        n = grid_index(DeformationPoint(xi, omega))
        labels.append(s + n / 2)
    return labels


def realize_rg_charges(spec, xi=1.0, boson_cutoff=None):
    """Matrices of the m conserved charges at xi = 1, a unitary grid point, or xi = 0.

    At a grid point the charges are written with the canonical A-triples of
    spin s_i(xi) and coupling g*xi; at xi = 0 they are the bosonic quadratic
    forms realized on the window M <= boson_cutoff.
    """
    levels, kind, g = spec.levels, spec.kind, spec.coupling_g
    if xi == 0.0:
        if boson_cutoff is None:
            raise DomainError("xi = 0 charges need a boson cutoff")
        basis = HilbertBasis.bosons(levels.m, boson_cutoff)
        expressions = _bosonic_charge_expressions(levels, kind, g)
    elif xi == 1.0:
        basis = HilbertBasis.spins(levels)
        expressions = _rg_charge_expressions(levels.eta_array, kind, g, levels.m)
    else:
        basis = HilbertBasis.spin_modes(deformed_spin_labels(levels, xi))
        expressions = _rg_charge_expressions(levels.eta_array, kind, g * xi, levels.m)
    logger.debug("Realizing %d charges at xi=%g on dimension %d", len(expressions), xi, basis.total_dim)
    return [realize(e, basis) for e in expressions]


def deformed_copy_matrices(s1, omega, xi):
    """S+(xi), S-(xi), S0(xi) of one copy at a grid point, built from the canonical A-triple."""
    if xi == 0.0:
        raise RepresentationError("The deformed copy has no finite irrep at xi = 0")
    n = grid_index(DeformationPoint(xi, omega))
    mode = Mode("spin", 1, int(round(2 * s1 + n)) + 1, s1 + n / 2)
    shift = (1.0 - 1.0 / xi) * omega / 4.0
    a_plus = mode.factor("S+").toarray()
    return {
        "S+": np.sqrt(xi) * a_plus,
        "S-": np.sqrt(xi) * a_plus.T,
        "S0": mode.factor("S0").toarray() - shift * np.eye(mode.dim),
    }


def rg_hamiltonian(spec, xi=1.0, boson_cutoff=None):
    """H = sum_i eta_i R_i on the charges' basis."""
    charges = realize_rg_charges(spec, xi, boson_cutoff)
    total = charges[0] * spec.levels.etas[0]
    for eta, charge in zip(spec.levels.etas[1:], charges[1:]):
        total = total + charge * eta
    return total
