"""Pekar-Tomasevich energy of Hartree product states.

For orbitals ``phi_1..phi_N`` and density ``rho = sum_j |phi_j|^2``::

    E = sum_j int |D_A phi_j|^2 + V |phi_j|^2
        + U sum_{i<j} int int |phi_i(x)|^2 |phi_j(y)|^2 / |x - y|
        - alpha D(rho)

with ``D_A = -i grad + A`` and ``D(rho) = int int rho(x) rho(y) / |x - y|``.
For ``N = 1`` this is the full functional; for ``N >= 2`` minimising over
product states gives a Hartree upper bound on the true minimum.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import FieldSpec, ScaledField, sample_A, sample_V
from .grid import (DensityGrid, Grid3D, GridFunction, coulomb_multiplier, fft,
                   ifft)

NORM_TOL = 1e-9


@dataclass(frozen=True)
class PolaronParams:
    """``N`` electrons, phonon coupling ``alpha``, repulsion ratio ``nu = U / alpha``."""

    N: int
    alpha: float
    nu: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def U(self) -> float:
        return self.alpha * self.nu

    def to_dict(self) -> dict:
        return {"N": self.N, "alpha": self.alpha, "nu": self.nu, "U": self.U}


@dataclass
class HartreeState:
    """N orbitals on one grid, stored as an array of shape ``(N, nx, ny, nz)``."""

    grid: Grid3D
    orbitals: np.ndarray

    def __post_init__(self):
        orb = np.asarray(self.orbitals, dtype=complex)
        if orb.ndim == 3:
            orb = orb[None]
        if orb.shape[1:] != self.grid.shape:
            raise ValueError(f"orbital shape {orb.shape[1:]} does not match grid {self.grid.shape}")
        self.orbitals = orb

    @classmethod
    def from_functions(cls, fs: list[GridFunction]) -> HartreeState:
        grid = fs[0].grid
        if any(f.grid != grid for f in fs):
            raise ValueError("orbitals live on different grids")
        return cls(grid, np.stack([f.values for f in fs]))

    @classmethod
    def random(cls, grid: Grid3D, N: int, seed: int = 0, modes: float = 4.0) -> HartreeState:
        """Normalized smooth random orbitals: complex noise low-passed to about
        ``modes`` wavelengths per box, under a Gaussian envelope of width box/8."""
        rng = np.random.default_rng(seed)
        kc = 2 * np.pi * modes / min(grid.box_length)
        filt = np.exp(-grid.k2() / (2 * kc**2))
        x = grid.coords()
        box = np.asarray(grid.box_length)
        mid = np.asarray(grid.origin) + box / 2
        w = min(box) / 8
        orbs = []
        for _ in range(N):
            noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            c = mid + rng.uniform(-w, w, 3)
            env = np.exp(-np.sum((x - c[:, None, None, None]) ** 2, axis=0) / (2 * w**2))
            orbs.append(ifft(filt * fft(noise)) * env)
        return cls(grid, np.stack(orbs)).normalized()

    @property
    def N(self) -> int:
        return self.orbitals.shape[0]

    def orbital(self, j: int) -> GridFunction:
        return GridFunction(self.grid, self.orbitals[j])

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.orbitals) ** 2, axis=(1, 2, 3)) * self.grid.dv)

    def normalized(self) -> HartreeState:
        return HartreeState(self.grid, self.orbitals / self.norms()[:, None, None, None])

    def check_normalized(self, tol: float = NORM_TOL):
        bad = np.abs(self.norms() - 1.0)
        if bad.max() > tol:
            raise ValueError(f"state is not normalized (max |norm - 1| = {bad.max():.2e})")

    def copy(self) -> HartreeState:
        return HartreeState(self.grid, self.orbitals.copy())

    def rescaled(self, alpha: float) -> HartreeState:
        """``alpha^{3/2} phi(alpha x)`` on ``grid.scaled(alpha)``: identical
        node values, spacing divided by ``alpha``."""
        return HartreeState(self.grid.scaled(alpha), self.orbitals * alpha**1.5)


@dataclass
class EnergyReport:
    kinetic: float
    external: float
    repulsion: float
    self_interaction: float
    total: float
    U: float
    alpha: float
    per_orbital: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def contributions(self) -> dict[str, float]:
        """Signed terms that add up to ``total``."""
        return {"kinetic": self.kinetic, "external": self.external,
                "repulsion": self.U * self.repulsion,
                "self_interaction": -self.alpha * self.self_interaction,
                "total": self.total}

    def to_dict(self) -> dict:
        return {"kinetic": self.kinetic, "external": self.external,
                "repulsion": self.repulsion, "self_interaction": self.self_interaction,
                "total": self.total, "U": self.U, "alpha": self.alpha,
                "per_orbital": self.per_orbital, "meta": self.meta}


@dataclass
class PhononDisplacement:
    """Coherent phonon amplitude on the momentum lattice of ``grid``
    (FFT ordering); ``dk3`` is the lattice cell volume."""

    grid: Grid3D
    values: np.ndarray

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dk3)


class _Operators:
    """Per-(grid, fields, kernel) arrays reused across energy evaluations."""

    def __init__(self, grid, fields, kernel):
        self.grid = grid
        self.kernel = kernel
        self.k = grid.kvectors()
        self.k2 = grid.k2()
        self.A = sample_A(fields, grid)
        self.V = sample_V(fields, grid)
        self.mult = coulomb_multiplier(grid, kernel)


@functools.lru_cache(maxsize=16)
def operators(grid: Grid3D, fields: FieldSpec | ScaledField | None, kernel: str = "truncated") -> _Operators:
    if fields is not None and fields.has_A is False and fields.has_V is False:
        fields = None
    return _Operators(grid, fields, kernel)


def _abs2(orb):
    return orb.real**2 + orb.imag**2


def _total_density(dens):
    # sorted accumulation makes rho independent of orbital order
    if dens.shape[0] == 1:
        return dens[0].copy()
    return np.sort(dens, axis=0).sum(axis=0)


def _covariant(orb, fk, ops):
    """``D_l phi`` for l = 0, 1, 2."""
    out = []
    for l in range(3):
        d = ifft(ops.k[l] * fk)
        if ops.A is not None:
            d = d + ops.A[l] * orb
        out.append(d)
    return out


def _evaluate(orb: np.ndarray, params: PolaronParams, ops: _Operators, grad: bool = False):
    grid = ops.grid
    dv = grid.dv
    n = grid.size
    N = orb.shape[0]
    fk = fft(orb)
    if ops.A is None:
        kin = np.sum(ops.k2 * _abs2(fk), axis=(1, 2, 3)) * dv / n
        cov = None
    else:
        cov = _covariant(orb, fk, ops)
        kin = sum(np.sum(_abs2(d), axis=(1, 2, 3)) for d in cov) * dv
    dens = _abs2(orb)
    ext = np.zeros(N) if ops.V is None else np.sum(ops.V * dens, axis=(1, 2, 3)) * dv
    rho = _total_density(dens)
    rk = fft(rho)
    self_int = float(np.sum(ops.mult * _abs2(rk)) * dv / n)
    pairs = []
    if N > 1:
        dk = fft(dens)
        for i in range(N):
            for j in range(i + 1, N):
                pairs.append(float(np.sum(ops.mult * np.real(np.conj(dk[i]) * dk[j])) * dv / n))
    else:
        dk = None
    kinetic = math.fsum(kin)
    external = math.fsum(ext)
    repulsion = math.fsum(pairs)
    total = math.fsum([kinetic, external, params.U * repulsion, -params.alpha * self_int])
    terms = dict(kinetic=kinetic, external=external, repulsion=repulsion,
                 self_interaction=self_int, total=total,
                 per_kinetic=kin, per_external=ext)
    if not grad:
        return terms, None
    # H_j phi_j = D_A^2 phi_j + V phi_j - 2 alpha Phi[rho] phi_j + U sum_{i != j} Phi[rho_i] phi_j
    if cov is None:
        hphi = ifft(ops.k2 * fk)
    else:
        hphi = np.zeros_like(orb)
        for l in range(3):
            hphi += ifft(ops.k[l] * fft(cov[l]))
            if ops.A is not None:
                hphi += ops.A[l] * cov[l]
    if ops.V is not None:
        hphi += ops.V * orb
    pot_tot = ifft(ops.mult * rk).real
    if N > 1 and params.U != 0.0:
        pot_each = ifft(ops.mult * dk).real
        eff = (params.U - 2 * params.alpha) * pot_tot - params.U * pot_each
    else:
        eff = np.broadcast_to(-2 * params.alpha * pot_tot, orb.shape)
    hphi += eff * orb
    return terms, hphi


def _report(terms, params, ops) -> EnergyReport:
    per = [{"kinetic": float(k), "external": float(e)}
           for k, e in zip(terms["per_kinetic"], terms["per_external"])]
    return EnergyReport(terms["kinetic"], terms["external"], terms["repulsion"],
                        terms["self_interaction"], terms["total"], params.U, params.alpha,
                        per, {"grid": ops.grid.to_dict(), "kernel": ops.kernel, "params": params.to_dict()})


def density(state: HartreeState) -> DensityGrid:
    return DensityGrid(state.grid, _total_density(_abs2(state.orbitals)))


def pekar_energy(state: HartreeState, params: PolaronParams, fields=None,
                 kernel: str = "truncated", check_norm: bool = True) -> EnergyReport:
    if state.N != params.N:
        raise ValueError(f"state has {state.N} orbitals but params.N = {params.N}")
    if check_norm:
        state.check_normalized()
    ops = operators(state.grid, fields, kernel)
    terms, _ = _evaluate(state.orbitals, params, ops)
    return _report(terms, params, ops)


def kinetic_energy(f: GridFunction, fields=None) -> float:
    """``int |D_A f|^2`` for a single grid function."""
    ops = operators(f.grid, fields)
    fk = fft(f.values)
    if ops.A is None:
        return float(np.sum(ops.k2 * _abs2(fk)) * f.grid.dv / f.grid.size)
    return float(sum(np.sum(_abs2(d)) for d in _covariant(f.values, fk, ops)) * f.grid.dv)


def _rho_hat(state: HartreeState) -> np.ndarray:
    rho = _total_density(_abs2(state.orbitals))
    return fft(rho) * state.grid.dv / (2 * np.pi) ** 1.5


def optimal_displacement(state: HartreeState, params: PolaronParams,
                         kernel: str = "truncated") -> PhononDisplacement:
    """``f(k) = sqrt(alpha K(k)) rho_hat(k)``; for the bare kernel
    ``K = 4 pi / |k|^2`` this is ``2 sqrt(alpha pi) rho_hat(k) / |k|``."""
    mult = coulomb_multiplier(state.grid, kernel)
    return PhononDisplacement(state.grid, np.sqrt(params.alpha * mult) * _rho_hat(state))


def coherent_state_energy(state: HartreeState, f: PhononDisplacement, params: PolaronParams,
                          fields=None, kernel: str = "truncated") -> float:
    """Energy of the product of the Hartree state with a coherent phonon
    state of amplitude ``-f``:
    ``particle terms + ||f||^2 - 2 Re <f, sqrt(alpha K) rho_hat>``."""
    if f.grid != state.grid:
        raise ValueError("displacement and state live on different grids")
    rep = pekar_energy(state, params, fields, kernel)
    particle = math.fsum([rep.kinetic, rep.external, params.U * rep.repulsion])
    mult = coulomb_multiplier(state.grid, kernel)
    g = np.sqrt(params.alpha * mult) * _rho_hat(state)
    coupling = -2.0 * float(np.sum(np.real(np.conj(f.values) * g)) * state.grid.dk3)
    return math.fsum([particle, f.norm2(), coupling])


def subadditivity_gap(C) -> tuple[float, dict[tuple[int, int], float]]:
    """``min (C_n + C_m - C_{n+m})`` over ``n <= m``, ``n + m <= N``, and the
    per-pair table; ``C[k-1]`` is the minimum for ``k`` particles."""
    C = list(C)
    if len(C) < 2:
        raise ValueError("need energies for at least N = 1, 2")
    if any(c is None or not math.isfinite(c) for c in C):
        raise ValueError("energy list has missing entries")
    N = len(C)
    table = {(n, m): C[n - 1] + C[m - 1] - C[n + m - 1]
             for n in range(1, N + 1) for m in range(n, N + 1) if n + m <= N}
    return min(table.values()), table
