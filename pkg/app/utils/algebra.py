"""Gaudin algebra parametrizations and pseudo-deformation bookkeeping.

The X and Z matrices of a Richardson-Gaudin model are antisymmetric, satisfy
X_ij X_jk - X_ik (Z_ij + Z_jk) = 0 on every distinct triple and the
copy-independent relation X_ij^2 - Z_ij^2 = c.  Two realizations are
provided: rational (c = 0) and trigonometric (c = 1).
"""

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from app.config import COLLISION_TOL
from app.utils.errors import (
    ContractionLimitError,
    DegenerateLevelError,
    DomainError,
    RepresentationError,
    SingularExtensionError,
)


class GaudinKind(str, Enum):
    RATIONAL = "rational"
    TRIGONOMETRIC = "trigonometric"

    @property
    def c(self):
        return 0.0 if self is GaudinKind.RATIONAL else 1.0


def _frozen(array):
    array = np.array(array)
    array.flags.writeable = False
    return array


def is_half_integer(value):
    return abs(2 * value - round(2 * value)) < 1e-12


def first_collision(coords, tol=COLLISION_TOL):
    """Return the first index pair (i, j), i < j, closer than tol, or None."""
    coords = np.asarray(coords)
    if coords.size < 2:
        return None
    gaps = np.abs(coords[:, None] - coords[None, :])
    np.fill_diagonal(gaps, np.inf)
    i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    if gaps[i, j] < tol:
        return (int(min(i, j)), int(max(i, j)))
    return None


@dataclass(frozen=True)
class LevelSet:
    """The m spin levels: Gaudin coordinates, spins and degeneracies."""

    etas: tuple
    spins: tuple
    degeneracies: tuple

    def __post_init__(self):
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        object.__setattr__(self, "spins", tuple(float(s) for s in self.spins))
        object.__setattr__(self, "degeneracies", tuple(int(d) for d in self.degeneracies))

        m = len(self.etas)
        if m < 1:
            raise DomainError("A level set needs at least one level")
        if len(self.spins) != m or len(self.degeneracies) != m:
            raise DomainError(
                f"Level set fields disagree in length: {m} etas, "
                f"{len(self.spins)} spins, {len(self.degeneracies)} degeneracies"
            )
        for i, (s, omega) in enumerate(zip(self.spins, self.degeneracies)):
            if s <= 0 or not is_half_integer(s):
                raise DomainError(f"Spin s_{i + 1} = {s} is not a positive half-integer")
            if omega != round(2 * s) + 1:
                raise DomainError(f"Degeneracy Omega_{i + 1} = {omega} differs from 2s+1 = {2 * s + 1:g}")
        if not all(math.isfinite(e) for e in self.etas):
            raise DomainError("Level coordinates must be finite")
        pair = first_collision(self.etas)
        if pair is not None:
            raise DegenerateLevelError(
                f"levels must be distinct: eta_{pair[0] + 1} = eta_{pair[1] + 1} = {self.etas[pair[0]]}"
            )

    @classmethod
    def from_spins(cls, etas, spins):
        return cls(etas, spins, tuple(int(round(2 * s)) + 1 for s in spins))

    @classmethod
    def from_degeneracies(cls, etas, degeneracies):
        return cls(etas, tuple(Fraction(int(d) - 1, 2) for d in degeneracies), degeneracies)

    @property
    def m(self):
        return len(self.etas)

    @property
    def eta_array(self):
        return np.asarray(self.etas, dtype=float)


@dataclass(frozen=True)
class GaudinMatrices:
    kind: GaudinKind
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "z", _frozen(self.z))

    @property
    def dim(self):
        return self.x.shape[0]

    @property
    def c(self):
        return self.kind.c


@dataclass(frozen=True)
class DeformationPoint:
    """A value of the pseudo-deformation parameter for a copy of degeneracy omega."""

    xi: float
    omega: int

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise DomainError(f"xi = {self.xi} outside [0, 1]")
        if int(self.omega) != self.omega or self.omega < 1:
            raise DomainError(f"Omega = {self.omega} must be a positive integer")


def pair_entries(kind, a, b):
    """X and Z entries for coordinates a (row) and b (column), broadcast."""
    a = np.asarray(a)
    b = np.asarray(b)
    diff = a - b
    if GaudinKind(kind) is GaudinKind.RATIONAL:
        z = 1.0 / diff
        return z, z
    x = np.sqrt(1 + a * a) * np.sqrt(1 + b * b) / diff
    z = (1 + a * b) / diff
    return x, z


def z_derivatives(kind, a, b):
    """Partial derivatives (dZ/da, dZ/db) of Z(a, b)."""
    a = np.asarray(a)
    b = np.asarray(b)
    inv2 = 1.0 / (a - b) ** 2
    if GaudinKind(kind) is GaudinKind.RATIONAL:
        return -inv2, inv2
    return -(1 + b * b) * inv2, (1 + a * a) * inv2


def z_residue(kind, a):
    """lim_{b->a} (b - a) Z(b, a): the strength of the pole of Z at coincidence."""
    a = np.asarray(a)
    if GaudinKind(kind) is GaudinKind.RATIONAL:
        return np.ones_like(a)
    return 1 + a * a


def _antisymmetric(kind, coords):
    coords = np.asarray(coords)
    n = coords.size
    a, b = np.meshgrid(coords, coords, indexing="ij")
    mask = ~np.eye(n, dtype=bool)
    dtype = complex if np.iscomplexobj(coords) else float
    x = np.zeros((n, n), dtype=dtype)
    z = np.zeros((n, n), dtype=dtype)
    xv, zv = pair_entries(kind, a[mask], b[mask])
    x[mask] = xv
    z[mask] = zv
    return x, z


def build_gaudin(kind, levels):
    """X, Z matrices of the chosen realization over the level coordinates."""
    kind = GaudinKind(kind)
    x, z = _antisymmetric(kind, levels.eta_array)
    return GaudinMatrices(kind, x, z)


def extend_with_rapidities(matrices, levels, rapidities):
    """Extend the m x m matrices to (m+N) x (m+N) with rapidity coordinates.

    `rapidities` is a RapiditySet in the RG frame or any sequence of
    (complex) coordinates.
    """
    values = np.asarray(getattr(rapidities, "values", rapidities), dtype=complex)
    etas = levels.eta_array
    if values.size:
        gaps = np.abs(values[:, None] - etas[None, :])
        alpha, i = np.unravel_index(np.argmin(gaps), gaps.shape)
        if gaps[alpha, i] < COLLISION_TOL:
            raise SingularExtensionError(
                f"Rapidity {alpha} = {values[alpha]} coincides with level eta_{i + 1} = {etas[i]}"
            )
    pair = first_collision(values)
    if pair is not None:
        raise SingularExtensionError(f"Rapidities {pair[0]} and {pair[1]} coincide at {values[pair[0]]}")

    coords = np.concatenate([etas.astype(complex), values])
    x, z = _antisymmetric(matrices.kind, coords)
    m = levels.m
    # the level block is copied from the input so it stays bit-identical
    x[:m, :m] = matrices.x
    z[:m, :m] = matrices.z
    return GaudinMatrices(matrices.kind, x, z)


def infinity_row(etas):
    """X_0k = sqrt(1 + eta_k^2), Z_0k = eta_k for a copy at eta_0 -> infinity."""
    etas = np.asarray(etas, dtype=float)
    return np.sqrt(1 + etas * etas), etas.copy()


def eta0_infinity_row(levels):
    """Rows X_0k, Z_0k of a copy whose coordinate eta_0 is sent to infinity."""
    return infinity_row(levels.eta_array)


def reconstruct_from_infinity(levels):
    """X_ik rebuilt as X_i0 X_0k / (Z_i0 + Z_0k) from the eta_0 -> infinity rows."""
    x0, z0 = eta0_infinity_row(levels)
    m = levels.m
    x = np.zeros((m, m))
    for i in range(m):
        for k in range(m):
            if i != k:
                x[i, k] = (-x0[i]) * x0[k] / ((-z0[i]) + z0[k])
    return x


def gaudin_residual(matrices, relative=False):
    """Largest absolute Gaudin-condition residual over all distinct triples.

    relative=True divides each triple by max(1, |terms|) instead, for level
    sets whose entries grow large as coordinates approach each other.
    """
    x, z = matrices.x, matrices.z
    n = matrices.dim
    if n < 3:
        return 0.0
    left = x[:, :, None] * x[None, :, :]
    right = x[:, None, :] * (z[:, :, None] + z[None, :, :])
    idx = np.arange(n)
    i, j, k = np.meshgrid(idx, idx, idx, indexing="ij")
    distinct = (i != j) & (j != k) & (i != k)
    res = np.abs(left - right)[distinct]
    if relative:
        res = res / np.maximum(1.0, np.maximum(np.abs(left), np.abs(right))[distinct])
    return float(res.max())


def casimir_deviation(matrices, relative=False):
    """max |X_ij^2 - Z_ij^2 - c| over i != j; relative=True divides by max(1, |X_ij^2|)."""
    mask = ~np.eye(matrices.dim, dtype=bool)
    x2 = matrices.x[mask] ** 2
    z2 = matrices.z[mask] ** 2
    dev = np.abs(x2 - z2 - matrices.c)
    if relative:
        dev = dev / np.maximum(1.0, np.abs(x2))
    return float(dev.max()) if dev.size else 0.0


def deformed_spin(point, s1):
    """Irrep label s(xi) and the finite product xi*s(xi) of a deformed copy."""
    if point.xi == 0.0:
        raise ContractionLimitError("s(xi) diverges at xi = 0; only xi*s(xi) = Omega is defined")
    xi_s = xi_scaled_spin(point, s1)
    return float(s1) + (1.0 / point.xi - 1.0) * point.omega, xi_s


def xi_scaled_spin(point, s1):
    return point.xi * float(s1) + (1.0 - point.xi) * point.omega


def xi_scaled_spins(xi, spins, degeneracies):
    """Vectorized xi*s_i(xi) over a level set; exact s_i at xi=1 and Omega_i at xi=0."""
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"xi = {xi} outside [0, 1]")
    return xi * np.asarray(spins, dtype=float) + (1.0 - xi) * np.asarray(degeneracies, dtype=float)


def unitary_grid(omega, n):
    """xi_n = 2 Omega / (n + 2 Omega), the points with unitary irreps."""
    if n < 0:
        raise DomainError(f"Grid index n = {n} must be non-negative")
    return 2.0 * omega / (n + 2.0 * omega)


def grid_index(point, tol=1e-9):
    """Inverse of unitary_grid; raises when xi is off the grid."""
    if point.xi == 0.0:
        raise RepresentationError("xi = 0 is the contraction limit, not a grid point")
    n = 2.0 * point.omega * (1.0 / point.xi - 1.0)
    if abs(n - round(n)) > tol * max(1.0, abs(n)):
        raise RepresentationError(f"xi = {point.xi} is not on the unitary grid for Omega = {point.omega}")
    return int(round(n))


def contracted_copy_spin(xi, omega0):
    """Spin label Omega_0 / (4 xi) of the single deformed copy in the Dicke construction.

    At this label the lowest weight of S^0(xi) = A^0(xi) - (1 - 1/xi) Omega_0 / 4
    stays at -Omega_0/4 for every xi.
    """
    if xi <= 0.0:
        raise ContractionLimitError("The deformed copy has no finite label at xi = 0")
    if xi > 1.0:
        raise DomainError(f"xi = {xi} outside (0, 1]")
    return omega0 / (4.0 * xi)
