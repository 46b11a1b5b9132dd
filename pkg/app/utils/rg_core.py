"""Residual systems of the Richardson-Gaudin family with analytic Jacobians.

Four equation sets are exposed as operations: the RG equations, their
pseudo-deformed form, the decoupled pp-TDA limit, and the Dicke RG equations,
plus the single-copy deformation that connects the trigonometric model to
the Dicke model.  The `*Family` classes bundle one equation set with its
xi-derivative for the continuation solver.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from app.config import COLLISION_TOL, DEFAULT_OMEGA0
from app.utils.algebra import (
    GaudinKind,
    LevelSet,
    first_collision,
    is_half_integer,
    pair_entries,
    xi_scaled_spins,
    z_derivatives,
    z_residue,
)
from app.utils.errors import (
    CollisionError,
    ContractionLimitError,
    DegenerateLevelError,
    DomainError,
    FrameError,
)

logger = logging.getLogger(__name__)


class Frame(str, Enum):
    RG_ETA = "rg_eta"
    DICKE_X = "dicke_x"


@dataclass(frozen=True)
class ModelSpec:
    levels: LevelSet
    kind: GaudinKind
    n_excitations: int
    coupling_g: float

    def __post_init__(self):
        object.__setattr__(self, "kind", GaudinKind(self.kind))
        object.__setattr__(self, "coupling_g", float(self.coupling_g))
        if int(self.n_excitations) != self.n_excitations or self.n_excitations < 1:
            raise DomainError(f"N = {self.n_excitations} must be a positive integer")
        object.__setattr__(self, "n_excitations", int(self.n_excitations))
        if not math.isfinite(self.coupling_g):
            raise DomainError("Coupling g must be finite")

    @property
    def m(self):
        return self.levels.m


@dataclass(frozen=True)
class DickeSpec:
    """Dicke model data; all energies share one unit."""

    epsilons: tuple
    spins: tuple
    coupling_G: float
    hbar_omega: float
    n_excitations: int

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "spins", tuple(float(s) for s in self.spins))
        object.__setattr__(self, "coupling_G", float(self.coupling_G))
        object.__setattr__(self, "hbar_omega", float(self.hbar_omega))
        if not self.epsilons or len(self.spins) != len(self.epsilons):
            raise DomainError("epsilons and spins must be non-empty and of equal length")
        for k, s in enumerate(self.spins):
            if s <= 0 or not is_half_integer(s):
                raise DomainError(f"Spin s_{k + 1} = {s} is not a positive half-integer")
        pair = first_collision(self.epsilons)
        if pair is not None:
            raise DegenerateLevelError(
                f"levels must be distinct: epsilon_{pair[0] + 1} = epsilon_{pair[1] + 1}"
            )
        if not self.hbar_omega > 0:
            raise DomainError(f"hbar_omega = {self.hbar_omega} must be positive")
        if not math.isfinite(self.coupling_G):
            raise DomainError("Coupling G must be finite")
        if int(self.n_excitations) != self.n_excitations or self.n_excitations < 1:
            raise DomainError(f"N = {self.n_excitations} must be a positive integer")
        object.__setattr__(self, "n_excitations", int(self.n_excitations))

    @property
    def m(self):
        return len(self.epsilons)

    @property
    def degeneracies(self):
        return tuple(int(round(2 * s)) + 1 for s in self.spins)

    @property
    def eps_array(self):
        return np.asarray(self.epsilons, dtype=float)


@dataclass(frozen=True)
class RapiditySet:
    values: tuple
    frame: Frame = Frame.RG_ETA

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(complex(v) for v in np.ravel(self.values)))
        object.__setattr__(self, "frame", Frame(self.frame))

    @property
    def array(self):
        return np.asarray(self.values, dtype=complex)

    def __len__(self):
        return len(self.values)

    def sorted(self):
        order = sorted(range(len(self.values)), key=lambda a: (self.values[a].real, self.values[a].imag))
        return RapiditySet(tuple(self.values[a] for a in order), self.frame)

    def conjugate(self):
        return RapiditySet(tuple(v.conjugate() for v in self.values), self.frame)


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray
    max_abs: float
    jacobian: np.ndarray = None
    decoupled: bool = False

    @property
    def worst_index(self):
        return int(np.argmax(np.abs(self.residuals)))


def _report(F, J, decoupled=False):
    return ResidualReport(F, float(np.max(np.abs(F))) if F.size else 0.0, J, decoupled)


def _require_frame(r, frame):
    if r.frame is not Frame(frame):
        raise FrameError(f"Rapidities are in the {r.frame.value} frame, expected {Frame(frame).value}")


def _check_level_collisions(levels, values):
    if not values.size:
        return
    gaps = np.abs(values[:, None] - levels[None, :])
    alpha, i = np.unravel_index(np.argmin(gaps), gaps.shape)
    if gaps[alpha, i] < COLLISION_TOL:
        raise CollisionError(
            f"Rapidity {alpha} = {values[alpha]} collides with level {i + 1} = {levels[i]}",
            pair=("rapidity", int(alpha), "level", int(i)),
        )


def _check_pair_collisions(values):
    pair = first_collision(values)
    if pair is not None:
        raise CollisionError(
            f"Rapidities {pair[0]} and {pair[1]} collide at {values[pair[0]]}",
            pair=("rapidity", pair[0], "rapidity", pair[1]),
        )


def _rg_kernel(kind, etas, weights, g, pair_coupling, values, infinite_weight=None):
    """F_a = 1 + g sum_i w_i Z_ia [+ g w_0 eta_a] - g c sum_{b != a} Z_ba, with dF/deta."""
    _check_level_collisions(etas, values)
    n = values.size
    _, zl = pair_entries(kind, etas[:, None], values[None, :])
    _, dzl = z_derivatives(kind, etas[:, None], values[None, :])
    F = 1 + g * (weights @ zl)
    J = np.diag(g * (weights @ dzl)).astype(complex)
    if infinite_weight is not None:
        # eta_0 -> infinity row: Z_0a = eta_a
        F = F + g * infinite_weight * values
        J = J + g * infinite_weight * np.eye(n)
    decoupled = pair_coupling == 0.0 or n == 1
    if pair_coupling != 0.0 and n > 1:
        _check_pair_collisions(values)
        off = ~np.eye(n, dtype=bool)
        b, a = np.meshgrid(values, values, indexing="ij")  # rows beta, columns alpha
        zp = np.zeros((n, n), dtype=complex)
        dza = np.zeros((n, n), dtype=complex)
        dzb = np.zeros((n, n), dtype=complex)
        zp[off] = pair_entries(kind, b[off], a[off])[1]
        da, db = z_derivatives(kind, b[off], a[off])
        dza[off] = da
        dzb[off] = db
        F = F - g * pair_coupling * zp.sum(axis=0)
        J = J - g * pair_coupling * (np.diag(dzb.sum(axis=0)) + dza.T)
    return F, J, decoupled


def _dicke_kernel(eps, weights, G2, hbar_omega, pair_coupling, values):
    """F_a = (hw - x_a) - 2G^2 sum_k w_k/(eps_k - x_a) + 2G^2 c sum_{b != a} 1/(x_b - x_a)."""
    _check_level_collisions(eps, values)
    n = values.size
    inv = 1.0 / (eps[:, None] - values[None, :])
    F = (hbar_omega - values) - 2 * G2 * (weights @ inv)
    J = np.diag(-1.0 - 2 * G2 * (weights @ inv**2)).astype(complex)
    decoupled = pair_coupling == 0.0 or n == 1
    if pair_coupling != 0.0 and n > 1:
        _check_pair_collisions(values)
        diff = values[:, None] - values[None, :]  # x_b - x_a, rows beta
        np.fill_diagonal(diff, np.inf)
        pinv = 1.0 / diff
        F = F + 2 * G2 * pair_coupling * pinv.sum(axis=0)
        J = J + 2 * G2 * pair_coupling * (np.diag((pinv**2).sum(axis=0)) - (pinv**2).T)
    return F, J, decoupled


def rg_residual(spec, r):
    """1 + g sum_i Z_ia s_i - g sum_{b != a} Z_ba for every rapidity a."""
    _require_frame(r, Frame.RG_ETA)
    weights = np.asarray(spec.levels.spins, dtype=float)
    F, J, dec = _rg_kernel(spec.kind, spec.levels.eta_array, weights, spec.coupling_g, 1.0, r.array)
    return _report(F, J, dec)


def deformed_rg_residual(spec, xi, r):
    """Pseudo-deformed equations: weights xi*s_i(xi), pair coupling g*xi."""
    _require_frame(r, Frame.RG_ETA)
    weights = xi_scaled_spins(xi, spec.levels.spins, spec.levels.degeneracies)
    F, J, dec = _rg_kernel(spec.kind, spec.levels.eta_array, weights, spec.coupling_g, xi, r.array)
    return _report(F, J, dec)


def tda_residual(spec, r):
    """Decoupled pp-TDA secular equations 1 + g sum_i Z_ia Omega_i."""
    _require_frame(r, Frame.RG_ETA)
    weights = xi_scaled_spins(0.0, spec.levels.spins, spec.levels.degeneracies)
    F, J, dec = _rg_kernel(spec.kind, spec.levels.eta_array, weights, spec.coupling_g, 0.0, r.array)
    return _report(F, J, dec)


def dicke_rg_residual(spec, r):
    _require_frame(r, Frame.DICKE_X)
    weights = np.asarray(spec.spins, dtype=float)
    F, J, dec = _dicke_kernel(spec.eps_array, weights, spec.coupling_G**2, spec.hbar_omega, 1.0, r.array)
    return _report(F, J, dec)


def deformed_spins_dicke_residual(spec, xi, r):
    """Dicke equations with every spin copy pseudo-deformed (weights xi*s_k(xi), pair term xi)."""
    _require_frame(r, Frame.DICKE_X)
    weights = xi_scaled_spins(xi, spec.spins, spec.degeneracies)
    F, J, dec = _dicke_kernel(spec.eps_array, weights, spec.coupling_G**2, spec.hbar_omega, xi, r.array)
    return _report(F, J, dec)


def rescaling(spec, xi, omega0=DEFAULT_OMEGA0):
    """lambda(xi) = sqrt(2 xi / (Omega_0 G^2)) and the renormalized coupling g(xi)."""
    if spec.coupling_G == 0.0:
        raise DomainError("The single-copy deformation needs G != 0")
    lam = math.sqrt(2.0 * xi / (omega0 * spec.coupling_G**2))
    g = math.sqrt(8.0 * xi / (omega0 * spec.coupling_G**2)) * spec.coupling_G**2 / spec.hbar_omega
    return lam, g


def to_rg_frame(r, spec, xi, omega0=DEFAULT_OMEGA0):
    _require_frame(r, Frame.DICKE_X)
    lam, _ = rescaling(spec, xi, omega0)
    return RapiditySet(tuple(-lam * r.array), Frame.RG_ETA)


def to_dicke_frame(r, spec, xi, omega0=DEFAULT_OMEGA0):
    _require_frame(r, Frame.RG_ETA)
    if xi <= 0.0:
        raise ContractionLimitError("The frame conversion is singular at xi = 0")
    lam, _ = rescaling(spec, xi, omega0)
    return RapiditySet(tuple(-r.array / lam), Frame.DICKE_X)


def deformed_dicke_residual(spec, xi, r, omega0=DEFAULT_OMEGA0):
    """Single deformed copy: 1 + g Z_0a s_0 + g sum_k Z_ka s_k - g sum_b Z_ba.

    Rapidities are given in the Dicke frame; the Jacobian is with respect to x.
    Multiplying by hbar_omega gives the Dicke residual plus O(xi) corrections.
    """
    _require_frame(r, Frame.DICKE_X)
    if xi == 0.0:
        raise ContractionLimitError("xi = 0 is the contraction limit; use dicke_rg_residual")
    if not 0.0 < xi <= 1.0:
        raise DomainError(f"xi = {xi} outside (0, 1]")
    lam, g = rescaling(spec, xi, omega0)
    etas = -lam * spec.eps_array
    weights = np.asarray(spec.spins, dtype=float)
    F, J, dec = _rg_kernel(
        GaudinKind.TRIGONOMETRIC, etas, weights, g, 1.0, -lam * r.array, infinite_weight=omega0 / (4.0 * xi)
    )
    return _report(F, -lam * J, dec)


def equivalent_rg_model(spec, xi, omega0=DEFAULT_OMEGA0, eta0=1e8):
    """The (m+1)-copy trigonometric model whose RG equations match the single-copy deformation.

    Copy 0 sits at the finite stand-in eta0 for infinity with spin Omega_0/4.
    """
    lam, g = rescaling(spec, xi, omega0)
    levels = LevelSet.from_spins(
        (eta0,) + tuple(-lam * e for e in spec.epsilons), (omega0 / 4.0,) + tuple(spec.spins)
    )
    return ModelSpec(levels, GaudinKind.TRIGONOMETRIC, spec.n_excitations, g)


def tda_secular(spec, eta):
    """Scalar secular function f(eta) = 1 + g sum_i Omega_i Z(eta_i, eta) and f'(eta)."""
    etas = spec.levels.eta_array
    omegas = np.asarray(spec.levels.degeneracies, dtype=float)
    eta = np.asarray(eta)
    _, z = pair_entries(spec.kind, etas[:, None], eta[None, ...] if eta.ndim else eta)
    _, dz = z_derivatives(spec.kind, etas[:, None], eta[None, ...] if eta.ndim else eta)
    if eta.ndim:
        return 1 + spec.coupling_g * (omegas @ z), spec.coupling_g * (omegas @ dz)
    return 1 + spec.coupling_g * float(omegas @ z.ravel()), spec.coupling_g * float(omegas @ dz.ravel())


def dicke_secular(spec, x):
    """Decoupled Dicke-frame secular function (hw - x) - 2G^2 sum_k Omega_k/(eps_k - x) and its derivative."""
    eps = spec.eps_array
    omegas = np.asarray(spec.degeneracies, dtype=float)
    x = np.asarray(x, dtype=float)
    inv = 1.0 / (eps.reshape((-1,) + (1,) * x.ndim) - x)
    G2 = spec.coupling_G**2
    f = (spec.hbar_omega - x) - 2 * G2 * np.tensordot(omegas, inv, axes=1)
    df = -1.0 - 2 * G2 * np.tensordot(omegas, inv**2, axes=1)
    return f, df


class DeformedRGFamily:
    """All copies deformed, RG frame: xi = 0 is the pp-TDA, xi = 1 the RG equations."""

    frame = Frame.RG_ETA

    def __init__(self, spec):
        self.spec = spec

    def residual(self, values, xi):
        return deformed_rg_residual(self.spec, xi, RapiditySet(values, self.frame))

    def xi_derivative(self, values, xi):
        spec = self.spec
        etas = spec.levels.eta_array
        dw = np.asarray(spec.levels.spins, dtype=float) - np.asarray(spec.levels.degeneracies, dtype=float)
        _, zl = pair_entries(spec.kind, etas[:, None], values[None, :])
        dF = spec.coupling_g * (dw @ zl)
        n = values.size
        if n > 1:
            off = ~np.eye(n, dtype=bool)
            b, a = np.meshgrid(values, values, indexing="ij")
            zp = np.zeros((n, n), dtype=complex)
            zp[off] = pair_entries(spec.kind, b[off], a[off])[1]
            dF = dF - spec.coupling_g * zp.sum(axis=0)
        return dF

    def endpoint(self, values, xi):
        r = RapiditySet(values, self.frame)
        if xi == 1.0:
            return rg_residual(self.spec, r)
        if xi == 0.0:
            return tda_residual(self.spec, r)
        return deformed_rg_residual(self.spec, xi, r)

    def pair_strength(self, root):
        return -self.spec.coupling_g * z_residue(self.spec.kind, root)

    def secular(self, x):
        return tda_secular(self.spec, x)

    def level_coords(self):
        return self.spec.levels.eta_array


class DeformedSpinsDickeFamily:
    """All spin copies deformed, Dicke frame: xi = 0 decouples, xi = 1 is the Dicke model."""

    frame = Frame.DICKE_X

    def __init__(self, spec):
        self.spec = spec

    def residual(self, values, xi):
        return deformed_spins_dicke_residual(self.spec, xi, RapiditySet(values, self.frame))

    def xi_derivative(self, values, xi):
        spec = self.spec
        G2 = spec.coupling_G**2
        dw = np.asarray(spec.spins, dtype=float) - np.asarray(spec.degeneracies, dtype=float)
        dF = -2 * G2 * (dw @ (1.0 / (spec.eps_array[:, None] - values[None, :])))
        if values.size > 1:
            diff = values[:, None] - values[None, :]
            np.fill_diagonal(diff, np.inf)
            dF = dF + 2 * G2 * (1.0 / diff).sum(axis=0)
        return dF

    def endpoint(self, values, xi):
        r = RapiditySet(values, self.frame)
        if xi == 1.0:
            return dicke_rg_residual(self.spec, r)
        return deformed_spins_dicke_residual(self.spec, xi, r)

    def pair_strength(self, root):
        return 2 * self.spec.coupling_G**2 * np.ones_like(np.asarray(root))

    def secular(self, x):
        return dicke_secular(self.spec, x)

    def level_coords(self):
        return self.spec.eps_array


class SingleCopyDickeFamily:
    """One copy deformed, Dicke frame, energy units: xi = 0 is exactly the Dicke model."""

    frame = Frame.DICKE_X

    def __init__(self, spec, omega0=DEFAULT_OMEGA0):
        self.spec = spec
        self.omega0 = omega0

    def residual(self, values, xi):
        r = RapiditySet(values, self.frame)
        if xi == 0.0:
            return dicke_rg_residual(self.spec, r)
        rep = deformed_dicke_residual(self.spec, xi, r, self.omega0)
        hw = self.spec.hbar_omega
        return _report(hw * rep.residuals, hw * rep.jacobian, rep.decoupled)

    def xi_derivative(self, values, xi):
        spec = self.spec
        G2 = spec.coupling_G**2
        eps = spec.eps_array
        spins = np.asarray(spec.spins, dtype=float)
        dlam2 = 2.0 / (self.omega0 * G2)
        level = -2 * G2 * ((spins * eps) @ (1.0 / (eps[:, None] - values[None, :]))) * values
        dF = level
        if values.size > 1:
            diff = values[:, None] - values[None, :]
            np.fill_diagonal(diff, np.inf)
            dF = dF + 2 * G2 * ((values[:, None] / diff).sum(axis=0)) * values
        return dlam2 * dF

    def endpoint(self, values, xi):
        if xi == 0.0:
            return dicke_rg_residual(self.spec, RapiditySet(values, self.frame))
        return self.residual(values, xi)

    def level_coords(self):
        return self.spec.eps_array


class CouplingRampFamily:
    """Dicke equations with G^2 scaled by t; t -> 0 separates photon and spin groups."""

    frame = Frame.DICKE_X

    def __init__(self, spec):
        self.spec = spec

    def residual(self, values, t):
        spec = self.spec
        F, J, dec = _dicke_kernel(
            spec.eps_array, np.asarray(spec.spins, dtype=float), t * spec.coupling_G**2, spec.hbar_omega, 1.0, values
        )
        return _report(F, J, dec)

    def xi_derivative(self, values, t):
        spec = self.spec
        G2 = spec.coupling_G**2
        dF = -2 * G2 * (np.asarray(spec.spins, dtype=float) @ (1.0 / (spec.eps_array[:, None] - values[None, :])))
        if values.size > 1:
            diff = values[:, None] - values[None, :]
            np.fill_diagonal(diff, np.inf)
            dF = dF + 2 * G2 * (1.0 / diff).sum(axis=0)
        return dF

    def endpoint(self, values, t):
        if t == 1.0:
            return dicke_rg_residual(self.spec, RapiditySet(values, self.frame))
        return self.residual(values, t)

    def level_coords(self):
        return self.spec.eps_array
