"""Preconditioned projected gradient descent for the Pekar-Tomasevich functional."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .functional import (EnergyReport, HartreeState, PolaronParams, _evaluate,
                         _report, operators)
from .grid import Grid3D, GridFunction, fft, ifft

log = logging.getLogger(__name__)

INITS = ("gaussian_cloud", "from_file", "separated_copies")


class NumericalError(RuntimeError):
    """Energy or gradient became non-finite."""


@dataclass
class SolveConfig:
    max_iters: int = 2000
    step: float = 1.0
    tol_residual: float = 1e-6
    tol_energy: float = 1e-10
    seed: int = 0
    init: str = "gaussian_cloud"
    separation: float | None = None
    init_path: str | None = None
    kernel: str = "truncated"
    patience: int = 5
    max_step: float = 8.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol_residual > 0 and self.tol_energy > 0 and self.step > 0):
            raise ValueError("tolerances and step must be positive")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; expected one of {INITS}")
        if self.init == "from_file" and not self.init_path:
            raise ValueError("init 'from_file' needs init_path")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveResult:
    energy: EnergyReport
    state: HartreeState
    iterations: int
    residual: float
    converged: bool
    energy_trace: list[float] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"energy": self.energy.to_dict(), "iterations": self.iterations,
                "residual": self.residual, "converged": self.converged,
                "energy_trace": self.energy_trace, "notes": self.notes}


def gaussian_orbital(grid: Grid3D, center, width: float) -> np.ndarray:
    """Normalized Gaussian wrapped to the torus."""
    x = grid.coords()
    c = np.asarray(center, dtype=float)[:, None, None, None]
    L = np.asarray(grid.box_length)[:, None, None, None]
    d = x - c
    d -= L * np.round(d / L)
    g = np.exp(-np.sum(d**2, axis=0) / (2 * width**2)).astype(complex)
    return g / math.sqrt(np.sum(np.abs(g) ** 2) * grid.dv)


def initial_state(params: PolaronParams, grid: Grid3D, config: SolveConfig) -> HartreeState:
    rng = np.random.default_rng(config.seed)
    box = np.asarray(grid.box_length)
    center = np.asarray(grid.origin) + box / 2
    width = min(box) / 8
    if config.init == "from_file":
        from .storage import read_state
        state = read_state(config.init_path)
        if state.grid != grid or state.N != params.N:
            raise ValueError("initial state file does not match grid / N")
        return state.normalized()
    if config.init == "gaussian_cloud":
        centers = [center + rng.normal(scale=width / 4, size=3) for _ in range(params.N)]
    else:
        # spread the copies along the box diagonal; default puts neighbours at
        # the largest distance the torus allows
        diag = box / np.linalg.norm(box)
        d = config.separation if config.separation is not None else float(np.linalg.norm(box)) / max(params.N, 2)
        offs = (np.arange(params.N) - (params.N - 1) / 2) * d
        centers = [center + o * diag for o in offs]
    orbs = np.stack([gaussian_orbital(grid, c, width) for c in centers])
    # small random phases break exact symmetry without biasing the energy
    orbs = orbs * np.exp(1j * rng.uniform(0, 2 * np.pi, size=params.N))[:, None, None, None]
    return HartreeState(grid, orbs)


def effective_hamiltonian_apply(j: int, state: HartreeState, params: PolaronParams,
                                fields=None, kernel: str = "truncated") -> GridFunction:
    """``h_j phi_j`` with ``h_j = D_A^2 + V - 2 alpha Phi[rho] + U sum_{i != j} Phi[|phi_i|^2]``."""
    ops = operators(state.grid, fields, kernel)
    _, hphi = _evaluate(state.orbitals, params, ops, grad=True)
    return GridFunction(state.grid, hphi[j])


def _normalize(orb, dv):
    nrm = np.sqrt(np.sum(orb.real**2 + orb.imag**2, axis=(1, 2, 3)) * dv)
    return orb / nrm[:, None, None, None]


def _project(orb, vec, dv):
    ov = np.sum(np.conj(orb) * vec, axis=(1, 2, 3)) * dv
    return vec - ov[:, None, None, None] * orb


def minimize(params: PolaronParams, fields, config: SolveConfig, grid: Grid3D,
             state: HartreeState | None = None) -> SolveResult:
    """Gradient flow with per-orbital renormalisation and a monotone step rule:
    a step is kept only if the energy decreases, otherwise it is halved."""
    ops = operators(grid, fields, config.kernel)
    dv = grid.dv
    precond = 1.0 / (1.0 + ops.k2)
    orb = (state if state is not None else initial_state(params, grid, config)).normalized().orbitals
    terms, hphi = _evaluate(orb, params, ops, grad=True)
    energy = terms["total"]
    if not math.isfinite(energy):
        raise NumericalError("initial energy is not finite")
    trace = [energy]
    rtrace = []
    notes = []
    step = config.step
    streak = 0
    converged = False
    residual = math.inf
    it = 0
    for it in range(1, config.max_iters + 1):
        g = _project(orb, hphi, dv)
        residual = math.sqrt(float(np.sum(np.abs(g) ** 2)) * dv)
        rtrace.append(residual)
        if not math.isfinite(residual):
            raise NumericalError(f"non-finite gradient at iteration {it}")
        d = _project(orb, ifft(precond * fft(g)), dv)
        while True:
            trial = _normalize(orb - step * d, dv)
            t_terms, t_h = _evaluate(trial, params, ops, grad=True)
            e_new = t_terms["total"]
            if not math.isfinite(e_new):
                raise NumericalError(f"non-finite energy at iteration {it}")
            if e_new < energy:
                break
            step *= 0.5
            if step < 1e-14:
                break
        if step < 1e-14:
            notes.append("line search stalled: no descent step found")
            break
        decrease = energy - e_new
        orb, hphi, terms, energy = trial, t_h, t_terms, e_new
        trace.append(energy)
        step = min(step * 1.5, config.max_step)
        if residual <= config.tol_residual and decrease <= config.tol_energy:
            streak += 1
            if streak >= config.patience:
                converged = True
                break
        else:
            streak = 0
    final = HartreeState(grid, orb)
    if not converged:
        g = _project(orb, hphi, dv)
        residual = math.sqrt(float(np.sum(np.abs(g) ** 2)) * dv)
        if residual <= config.tol_residual and not notes:
            notes.append("iteration budget exhausted with small residual")
    if params.alpha == 0 and fields is None and energy < 1e-3:
        notes.append("no binding without coupling: energy tends to zero by spreading")
    rep = _report(terms, params, ops)
    log.info("minimize N=%d alpha=%g nu=%g: E=%.10g after %d iterations (converged=%s)",
             params.N, params.alpha, params.nu, energy, it, converged)
    return SolveResult(rep, final, it, residual, converged, trace, rtrace, notes)


def gradient_check(state: HartreeState, params: PolaronParams, fields=None,
                   n_dirs: int = 10, h: float = 1e-5, seed: int = 0,
                   kernel: str = "truncated") -> float:
    """Largest relative gap between the analytic directional derivative
    ``2 Re <delta, H phi>`` and a central difference of the energy along
    ``phi + t delta`` for smooth random tangent directions ``delta``.

    The energy is a polynomial in ``phi``, so the straight path is used; the
    difference quotient is then exact for the quadratic part."""
    ops = operators(state.grid, fields, kernel)
    dv = state.grid.dv
    orb = state.normalized().orbitals
    _, hphi = _evaluate(orb, params, ops, grad=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_dirs):
        delta = rng.standard_normal(orb.shape) + 1j * rng.standard_normal(orb.shape)
        # smooth the direction so finite differences see a resolved function
        delta = ifft(fft(delta) * np.exp(-ops.k2 / (2 * (0.25 * _kmax(state.grid)) ** 2)))
        delta *= np.abs(orb).max() / np.abs(delta).max()
        ov = np.real(np.sum(np.conj(orb) * delta, axis=(1, 2, 3)) * dv)
        delta = delta - ov[:, None, None, None] * orb
        analytic = 2.0 * float(np.real(np.sum(np.conj(delta) * hphi)) * dv)
        ep = _evaluate(orb + h * delta, params, ops)[0]["total"]
        em = _evaluate(orb - h * delta, params, ops)[0]["total"]
        fd = (ep - em) / (2 * h)
        worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-300))
    return worst


def _kmax(grid: Grid3D) -> float:
    return float(np.pi / grid.spacing.max())


@dataclass
class BindingResult:
    margin: float
    table: list[dict]
    energies: list[float]
    reliable: bool
    results: list[SolveResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"margin": self.margin, "table": self.table, "energies": self.energies,
                "reliable": self.reliable}


def binding_margin(C, converged=None) -> tuple[float, list[dict]]:
    """``min_k (C_k + C_{N-k}) - C_N`` from ``C[k-1]`` = minimum for ``k`` particles."""
    C = list(C)
    N = len(C)
    if N < 2:
        raise ValueError("binding margin needs N >= 2")
    table = [{"k": k, "split": C[k - 1] + C[N - k - 1], "C_N": C[N - 1],
              "gap": C[k - 1] + C[N - k - 1] - C[N - 1]} for k in range(1, N // 2 + 1)]
    margin = min(row["gap"] for row in table)
    return margin, table


def solve_best(params, fields, config, grid, inits=("gaussian_cloud", "separated_copies")):
    """Multi-start: lowest energy over the given initialisations."""
    best = None
    for init in inits if params.N > 1 else inits[:1]:
        cfg = SolveConfig(**{**config.to_dict(), "init": init})
        res = minimize(params, fields, cfg, grid)
        if best is None or res.energy.total < best.energy.total:
            best = res
    return best


def binding_analysis(N: int, alpha: float, nu: float, fields, config: SolveConfig, grid: Grid3D,
                     inits=("gaussian_cloud", "separated_copies"), pool=None) -> BindingResult:
    """Solve for ``k = 1..N`` at fixed ``alpha, nu`` and form the binding margin.
    Positive margin means the Hartree surrogate binds."""
    jobs = [(PolaronParams(k, alpha, nu), fields, config, grid, inits) for k in range(1, N + 1)]
    if pool is None:
        results = [solve_best(*j) for j in jobs]
    else:
        results = list(pool.map(lambda j: solve_best(*j), jobs))
    C = [r.energy.total for r in results]
    margin, table = binding_margin(C)
    reliable = all(r.converged for r in results)
    return BindingResult(margin, table, C, reliable, results)
