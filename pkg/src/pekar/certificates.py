"""Explicit error bounds of the strong-coupling lower bound and their
finitely checkable parts (integral identities, block-mode counts, scaling)."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import scale_fields
from .functional import HartreeState, PolaronParams, pekar_energy
from .geometry import ClusterLayout, nearest_ball
from .grid import McEstimate, mc_integrate

# ---------------------------------------------------------------------------
# localisation and inter-ball terms


def localization_penalty(N: int, R: float) -> float:
    """``9 N pi^2 / (4 R^2)``: kinetic cost of confining each particle to a
    ball of radius ``R`` with the cosine window of side ``2R / sqrt 3``."""
    if not R > 0:
        raise ValueError("R must be positive")
    return 9 * N * math.pi**2 / (4 * R**2)


def interball_penalty(alpha: float, N: int, layout: ClusterLayout) -> float:
    """``(8 alpha N / pi^2) sum_i n_i / d_i``."""
    if layout.m == 1:
        warnings.warn("single group: no inter-ball terms, penalty set to 0", stacklevel=2)
        return 0.0
    if min(layout.separations) <= 0:
        raise ValueError("groups touch (d_i = 0)")
    s = math.fsum(g.n / d for g, d in zip(layout.groups, layout.separations))
    return 8 * alpha * N / math.pi**2 * s


def cross_coulomb(positions, layout: ClusterLayout) -> float:
    """``sum_{i<j} sum_{s in C_i, l in C_j} 1 / |x_s - x_l|``."""
    x = np.asarray(positions, dtype=float)
    gid = layout.group_of()
    tot = []
    for s, l in itertools.combinations(range(len(x)), 2):
        if gid[s] != gid[l]:
            tot.append(1.0 / float(np.linalg.norm(x[s] - x[l])))
    return math.fsum(tot)


def intercluster_coulomb_term(U: float, alpha: float, positions, layout: ClusterLayout) -> float:
    """``(U - 2 alpha) * cross_coulomb``; only negative (reported) when ``U < 2 alpha``."""
    return (U - 2 * alpha) * cross_coulomb(positions, layout)


@dataclass
class McCheck:
    estimate: McEstimate
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "bound": self.bound, "passed": self.passed}


def _check_positions(positions, layout):
    x = np.asarray(positions, dtype=float)
    if x.shape != (layout.N, 3):
        raise ValueError("need one position per particle")
    for g in layout.groups:
        for k in g.members:
            if np.linalg.norm(x[k] - g.center) > g.radius:
                raise ValueError(f"particle {k} lies outside its group ball")
    return x


def _split_sums(y, x, gid, m):
    inv2 = 1.0 / np.sum((y[:, None, :] - x[None]) ** 2, axis=2)
    per_group = np.zeros((len(y), m))
    for i in range(m):
        per_group[:, i] = inv2[:, gid == i].sum(axis=1)
    return inv2.sum(axis=1), per_group


def _mc_scale(layout):
    finite = [d for d in layout.separations if math.isfinite(d)]
    return max(min(finite) if finite else layout.R, layout.R)


def f1_check(alpha: float, layout: ClusterLayout, positions, n_samples: int = 10**6,
             seed: int = 0) -> McCheck:
    """``F_1 = sum_i (alpha / pi^3) int_{S_i} (sum_{l not in C_i} |x_l - y|^-2)^2 dy``
    against ``N (8 alpha / pi^2) sum_i n_i / d_i``."""
    x = _check_positions(positions, layout)
    if layout.m == 1:
        return McCheck(McEstimate(0.0, 0.0, n_samples, seed), 0.0, True)
    gid = layout.group_of()
    m = layout.m

    def integrand(y):
        tot, per = _split_sums(y, x, gid, m)
        own = per[np.arange(len(y)), nearest_ball(y, layout, mark_ties=False)]
        return alpha / math.pi**3 * (tot - own) ** 2

    est = mc_integrate(integrand, None, n_samples, seed, centers=x, scale=_mc_scale(layout))
    bound = layout.N * 8 * alpha / math.pi**2 * math.fsum(
        g.n / d for g, d in zip(layout.groups, layout.separations))
    return McCheck(est, bound, est.mean - 3 * est.std_error <= bound)


def f2_check(alpha: float, layout: ClusterLayout, positions, n_samples: int = 10**6,
             seed: int = 0) -> McCheck:
    """``F_2 = (2 alpha / pi^3) sum_i int_{S_i} (sum_{l not in C_i} |x_l - y|^-2)
    (sum_{s in C_i} |x_s - y|^-2) dy`` against ``2 alpha * cross_coulomb``."""
    x = _check_positions(positions, layout)
    if layout.m == 1:
        return McCheck(McEstimate(0.0, 0.0, n_samples, seed), 0.0, True)
    gid = layout.group_of()
    m = layout.m

    def integrand(y):
        tot, per = _split_sums(y, x, gid, m)
        own = per[np.arange(len(y)), nearest_ball(y, layout, mark_ties=False)]
        return 2 * alpha / math.pi**3 * (tot - own) * own

    est = mc_integrate(integrand, None, n_samples, seed, centers=x, scale=_mc_scale(layout))
    bound = 2 * alpha * cross_coulomb(x, layout)
    return McCheck(est, bound, est.mean - 3 * est.std_error <= bound)


# ---------------------------------------------------------------------------
# ultraviolet cutoff and block modes


@dataclass
class CutoffParams:
    Lambda: float
    P: float
    beta: float
    eps1: float
    eps2: float
    delta: float

    @classmethod
    def build(cls, alpha, N, Lambda, P, eps1=1.0, eps2=None):
        beta = 1 - 8 * alpha * N / (math.pi * Lambda)
        eps2 = 1 - beta if eps2 is None else eps2
        return cls(Lambda, P, beta, eps1, eps2, 1 - beta)

    @property
    def valid(self) -> bool:
        return 0 < self.beta <= 1


@dataclass
class CutoffCertificate:
    af_term: float
    ag_number_coeff: float
    ag_constant: float
    beta: float
    constant: float
    valid: bool

    def to_dict(self) -> dict:
        return asdict(self)


def cutoff_certificates(alpha: float, N: int, Lambda: float, eps1: float, eps2: float) -> CutoffCertificate:
    """Constants of the momentum-cutoff lower bound: ``Lambda alpha / (pi eps1)``,
    ``4 alpha / (eps2 pi Lambda)``, ``2 alpha / (eps2 pi Lambda)``,
    ``beta = 1 - 8 alpha N / (pi Lambda)`` and the shift ``-1/2``."""
    if min(alpha, N, Lambda, eps1, eps2) <= 0:
        raise ValueError("all inputs must be positive")
    beta = 1 - 8 * alpha * N / (math.pi * Lambda)
    return CutoffCertificate(Lambda * alpha / (math.pi * eps1), 4 * alpha / (eps2 * math.pi * Lambda),
                             2 * alpha / (eps2 * math.pi * Lambda), beta, -0.5, beta > 0)


@dataclass(frozen=True)
class BlockMode:
    n: tuple[int, int, int]
    M_n: float

    @property
    def M2(self) -> float:
        return self.M_n**2


@dataclass
class BlockModeSet:
    Lambda: float
    P: float
    modes: list[BlockMode]
    count_bound: float

    @property
    def count(self) -> int:
        return len(self.modes)

    @property
    def count_ok(self) -> bool:
        return self.count <= self.count_bound

    def total_M2(self) -> float:
        return math.fsum(b.M2 for b in self.modes)


def nonempty_cells(Lambda: float, P: float) -> list[tuple[int, int, int]]:
    """``n`` with ``{k : |k| <= Lambda, |k_i - n_i P| <= P/2} != {}``."""
    m = int(math.floor(Lambda / P + 0.5))
    out = []
    for n in itertools.product(range(-m, m + 1), repeat=3):
        d = [max(abs(ni) * P - P / 2, 0.0) for ni in n]
        if math.sqrt(sum(v * v for v in d)) <= Lambda:
            out.append(n)
    return out


_GL_T, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_T = 0.5 * (_GL_T + 1)
_GL_W = 0.5 * _GL_W


def _arc_inside_rect(rho, x0, x1, y0, y1):
    """Angle measure of the circle of radius ``rho`` inside the rectangle."""
    r = np.asarray(rho, dtype=float)
    a = np.clip(x0 / r, -1, 1)
    b = np.clip(x1 / r, -1, 1)
    c = np.clip(y0 / r, -1, 1)
    d = np.clip(y1 / r, -1, 1)
    two_pi = 2 * math.pi
    cos_set = [(np.arccos(b), np.arccos(a)), (two_pi - np.arccos(a), two_pi - np.arccos(b))]
    sc, sd = np.arcsin(c), np.arcsin(d)
    sin_set = [(np.maximum(sc, 0), np.maximum(sd, 0)),
               (two_pi + np.minimum(sc, 0), two_pi + np.minimum(sd, 0)),
               (math.pi - sd, math.pi - sc)]
    tot = np.zeros_like(r)
    for lo1, hi1 in cos_set:
        for lo2, hi2 in sin_set:
            tot += np.maximum(np.minimum(hi1, hi2) - np.maximum(lo1, lo2), 0.0)
    return tot


def cell_weight(n, Lambda: float, P: float) -> float:
    """``int_{B(n)} |k|^-2 dk`` for the cell ``B(n)`` of side ``P`` cut by the
    ball of radius ``Lambda``.

    The ``k_z`` integral is done in closed form; the transverse integral is
    written in polar radius ``rho`` times the arc of the circle ``|k_perp| = rho``
    inside the cell's square, leaving a 1D integral with known kinks that is
    integrated by Gauss-Legendre on each smooth piece.
    """
    x0, x1 = (n[0] - 0.5) * P, (n[0] + 0.5) * P
    y0, y1 = (n[1] - 0.5) * P, (n[1] + 0.5) * P
    z0, z1 = (n[2] - 0.5) * P, (n[2] + 0.5) * P
    dx = max(x0, -x1, 0.0)
    dy = max(y0, -y1, 0.0)
    rho_min = math.hypot(dx, dy)
    rho_max = min(Lambda, max(math.hypot(x, y) for x in (x0, x1) for y in (y0, y1)))
    if rho_min >= rho_max:
        return 0.0
    bps = {rho_min, rho_max}
    for v in (x0, x1, y0, y1):
        bps.add(abs(v))
    for x in (x0, x1):
        for y in (y0, y1):
            bps.add(math.hypot(x, y))
    for z in (z0, z1):
        if z * z < Lambda**2:
            bps.add(math.sqrt(Lambda**2 - z * z))
    bps = sorted(b for b in bps if rho_min <= b <= rho_max)
    total = 0.0
    for a, b in zip(bps[:-1], bps[1:]):
        if b - a <= 1e-15 * max(1.0, b):
            continue
        # Hermite map flattens sqrt-type behaviour at both ends of the piece
        t = _GL_T
        rho = a + (b - a) * (3 * t**2 - 2 * t**3)
        jac = (b - a) * 6 * t * (1 - t)
        s = np.sqrt(np.maximum(Lambda**2 - rho**2, 0.0))
        zhi = np.minimum(z1, s)
        zlo = np.maximum(z0, -s)
        ang = np.where(zhi > zlo, np.arctan2(zhi, rho) - np.arctan2(zlo, rho), 0.0)
        arc = _arc_inside_rect(rho, x0, x1, y0, y1)
        total += float(np.sum(_GL_W * jac * arc * ang))
    return total


def block_modes(Lambda: float, P: float) -> BlockModeSet:
    """Cells ``B(n)`` meeting the cutoff ball, with ``M_n = (int_{B(n)} |k|^-2)^{1/2}``."""
    if not (0 < P <= 2 * Lambda):
        raise ValueError("need 0 < P <= 2 Lambda")
    modes = [BlockMode(n, math.sqrt(cell_weight(n, Lambda, P))) for n in nonempty_cells(Lambda, P)]
    out = BlockModeSet(Lambda, P, modes, (2 * Lambda / P + 1) ** 3)
    if not out.count_ok:
        # happens for Lambda/P in roughly (0.71, 1) and near 1.66; corner
        # cells reach into the ball before the per-axis count grows
        warnings.warn(f"{out.count} cells exceed the count bound {out.count_bound:.4g} "
                      f"at Lambda/P = {Lambda / P:.4g}", stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# error budget


@dataclass
class ErrorBudget:
    alpha: float
    N: int
    R: float
    Lambda: float
    P: float
    beta: float
    c_AV: float
    C_interball: float
    localization: float
    interball: float
    cutoff_half: float
    blockmode_count_term: float
    corollary_R_term: float
    corollary_c_term: float
    block_intermediate: float = 0.0
    total: float = field(init=False)

    def __post_init__(self):
        items = self.items()
        if any(v < 0 for v in items.values()):
            raise ValueError("budget items must be nonnegative")
        self.total = math.fsum(items.values())

    def items(self) -> dict[str, float]:
        return {"localization": self.localization, "interball": self.interball,
                "cutoff_half": self.cutoff_half, "blockmode_count_term": self.blockmode_count_term,
                "corollary_R_term": self.corollary_R_term, "corollary_c_term": self.corollary_c_term,
                "block_intermediate": self.block_intermediate}

    @property
    def shape_ratio(self) -> float:
        """``total / (alpha^{42/23} N^3)``."""
        return self.total / (self.alpha ** (42 / 23) * self.N**3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape_ratio"] = self.shape_ratio
        return d


def theorem1_budget(alpha: float, N: int, c_AV: float = 1.0, C_interball: float = 1.0,
                    include_block_intermediate: bool = False, R: float | None = None) -> ErrorBudget:
    """Error terms of the lower bound at ``R = N^-1 alpha^{-19/23}``,
    ``Lambda = n alpha^{27/23}``, ``P = alpha^{13/23}``, evaluated for the
    worst case of a single group (``n = N``; ``sum_i n_i^q <= N^q``).

    ``c_AV`` and ``C_interball`` are placeholders for constants that are
    never made explicit. Passing ``R`` overrides the default localisation
    radius (used for the trade-off scan).
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    if R is None:
        R = 1.0 / (N * alpha ** (19 / 23))
    elif not R > 0:
        raise ValueError("R must be positive")
    n = N
    Lambda = n * alpha ** (27 / 23)
    P = alpha ** (13 / 23)
    beta = 1 - 8 * alpha * n / (math.pi * Lambda)
    if beta <= 0:
        raise ValueError(f"beta = {beta:.4g} <= 0 for alpha = {alpha}, N = {N}")
    r = 0.5 * (3 * n - 1) * R
    block_mid = 6 * n**2 * alpha * P**2 * r**2 * Lambda / ((1 - beta) * math.pi) if include_block_intermediate else 0.0
    return ErrorBudget(
        alpha=alpha, N=N, R=R, Lambda=Lambda, P=P, beta=beta, c_AV=c_AV, C_interball=C_interball,
        localization=localization_penalty(N, R),
        interball=C_interball * alpha * N**2 / R,
        cutoff_half=0.5,
        blockmode_count_term=(2 * Lambda / P + 1) ** 3,
        corollary_R_term=3 * R**2 * alpha ** (80 / 23) * n**5,
        corollary_c_term=c_AV * alpha ** (42 / 23) * n**3,
        block_intermediate=block_mid,
    )


def optimal_R_scan(alpha: float, N: int, c_AV: float = 1.0, C_interball: float = 1.0,
                   n_points: int = 2001, span: float = 100.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Total budget on a log-spaced grid of ``R`` around the default choice;
    returns ``(R at the minimum, R grid, totals)``."""
    R0 = 1.0 / (N * alpha ** (19 / 23))
    Rs = R0 * np.logspace(-math.log10(span), math.log10(span), n_points)
    tot = np.array([theorem1_budget(alpha, N, c_AV, C_interball, R=float(r)).total for r in Rs])
    return float(Rs[int(np.argmin(tot))]), Rs, tot


def hardy_lower_bound(N: int, eps: float, C_eps: float) -> float:
    """``-N^3 / (1 - eps) - C_eps N``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return -(N**3) / (1 - eps) - C_eps * N


# ---------------------------------------------------------------------------
# scaling


def scaling_identity_check(fields, params: PolaronParams, state: HartreeState, alpha: float,
                           kernel: str = "truncated") -> float:
    """Largest relative deviation of the energy contributions of the rescaled
    problem ``(alpha^{3/2} phi(alpha x), A_alpha, V_alpha, U = alpha nu, alpha)``
    from ``alpha^2`` times those of ``(phi, A, V, nu, 1)``."""
    base = PolaronParams(params.N, 1.0, params.nu)
    scaled = PolaronParams(params.N, alpha, params.nu)
    e1 = pekar_energy(state, base, fields, kernel).contributions()
    f2 = None if fields is None else scale_fields(fields, alpha)
    e2 = pekar_energy(state.rescaled(alpha), scaled, f2, kernel).contributions()
    worst = 0.0
    for key, v in e1.items():
        want = alpha**2 * v
        got = e2[key]
        if got == want:
            continue
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    return worst
