import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from pekar.certificates import (block_modes, cell_weight, cross_coulomb, cutoff_certificates, f1_check,
                                f2_check, hardy_lower_bound, intercluster_coulomb_term,
                                interball_penalty, localization_penalty, nonempty_cells, optimal_R_scan,
                                scaling_identity_check, theorem1_budget)
from pekar.fields import FieldSpec
from pekar.functional import HartreeState, PolaronParams
from pekar.geometry import BallLayout, ClusterLayout, Group, regroup_balls
from pekar.grid import Grid3D


def two_singletons(d, R=1.0):
    return ClusterLayout([Group(np.array([0.0, 0, 0]), R, (0,)), Group(np.array([d + 2 * R, 0, 0]), R, (1,))], R)


def test_localization_penalty():
    assert localization_penalty(1, math.pi) == pytest.approx(2.25)
    assert localization_penalty(4, 3) == pytest.approx(math.pi**2)
    vals = [localization_penalty(2, R) for R in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        localization_penalty(1, 0)


def test_interball_penalty():
    lay = two_singletons(1.0)
    assert interball_penalty(1.0, 2, lay) == pytest.approx(32 / math.pi**2)
    assert interball_penalty(1.0, 2, two_singletons(2.0)) == pytest.approx(16 / math.pi**2)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert interball_penalty(1.0, 1, regroup_balls(BallLayout([[0, 0, 0]], 1.0))) == 0
        assert w
    with pytest.raises(ValueError):
        interball_penalty(1.0, 2, two_singletons(0.0))


def test_cross_coulomb_and_intercluster_term():
    lay = two_singletons(3.0)
    pos = np.array([[0.0, 0, 0], [5.0, 0, 0]])
    assert cross_coulomb(pos, lay) == pytest.approx(0.2)
    assert intercluster_coulomb_term(0.1, 1.0, pos, lay) == pytest.approx(-1.9 * 0.2)


def test_f_checks_single_group_trivial():
    lay = regroup_balls(BallLayout([[0, 0, 0], [1, 0, 0]], 1.0))
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    for chk in (f1_check, f2_check):
        r = chk(1.0, lay, pos, 1000)
        assert r.estimate.mean == 0 and r.bound == 0 and r.passed


def test_f_checks_reject_positions_outside():
    lay = two_singletons(2.0)
    with pytest.raises(ValueError):
        f1_check(1.0, lay, np.array([[3.0, 0, 0], [4.0, 0, 0]]), 1000)


def test_f1_two_singletons_and_monotone():
    means = []
    for d in (1.0, 2.0, 4.0):
        lay = two_singletons(d)
        pos = np.array([lay.groups[0].center, lay.groups[1].center])
        r = f1_check(1.0, lay, pos, 200_000, seed=1)
        assert r.estimate.mean > 0 and r.passed
        assert r.bound == pytest.approx(8 * 2 / math.pi**2 * (2 / d))
        means.append(r.estimate)
    for a, b in zip(means, means[1:]):
        assert a.mean - 3 * a.std_error > b.mean + 3 * b.std_error


def test_f2_two_singletons_is_full_space_integral():
    lay = two_singletons(1.0, R=0.25)
    pos = np.array([lay.groups[0].center, lay.groups[1].center])
    r = f2_check(1.0, lay, pos, 400_000, seed=2)
    # the two regions tile space, so F2 equals 2 alpha / |x1 - x2|
    assert r.bound == pytest.approx(2 / 1.5)
    assert r.estimate.within(r.bound)
    lay2 = two_singletons(2.5, R=0.25)
    pos2 = np.array([lay2.groups[0].center, lay2.groups[1].center])
    assert f2_check(1.0, lay2, pos2, 1000).bound == pytest.approx(r.bound / 2)


def test_cutoff_certificates():
    c = cutoff_certificates(1.0, 1, 8 / math.pi, 1.0, 1.0)
    assert c.beta == pytest.approx(0.0, abs=1e-15) and not c.valid
    alpha, N, Lam = 2.0, 3, 100.0
    eps2 = 8 * alpha * N / (math.pi * Lam)
    c = cutoff_certificates(alpha, N, Lam, 1.0, eps2)
    assert c.beta == pytest.approx(1 - eps2)
    assert c.af_term == pytest.approx(Lam * alpha / math.pi)
    assert c.ag_number_coeff == pytest.approx(4 * alpha / (eps2 * math.pi * Lam))
    assert c.ag_constant == pytest.approx(c.ag_number_coeff / 2)
    assert c.constant == -0.5
    big = cutoff_certificates(alpha, N, 1e8, 1.0, 1.0)
    assert big.beta > c.beta and big.af_term > c.af_term
    with pytest.raises(ValueError):
        cutoff_certificates(0, 1, 1, 1, 1)


def test_block_modes_small():
    s = block_modes(1.0, 2.0)
    assert [m.n for m in s.modes if m.M_n > 0] == [(0, 0, 0)]
    assert s.total_M2() == pytest.approx(4 * math.pi, rel=1e-12)
    with pytest.raises(ValueError):
        block_modes(1.0, 3.0)


def test_count_bound_small_ratio_counterexample():
    with pytest.warns(UserWarning, match="count bound"):
        s = block_modes(0.75, 1.0)
    # face and edge neighbours are all met, corners are not: 1 + 6 + 12 cells
    assert s.count == 19 and s.count_bound == pytest.approx(15.625) and not s.count_ok
    for ratio in np.arange(1.7, 8.0, 0.05):
        assert len(nonempty_cells(ratio, 1.0)) <= (2 * ratio + 1) ** 3


@pytest.mark.parametrize("n", [(1, 0, 0), (1, 1, 1), (1, 1, 0), (2, -1, 0)])
def test_cell_weight_against_brute_force(n):
    L, P = 2.2, 1.0
    lo = [(v - 0.5) * P for v in n]
    hi = [(v + 0.5) * P for v in n]

    def zlim(x, y, sign):
        # clip the z-range of the cell to the ball so the integrand stays smooth
        s = math.sqrt(max(L * L - x * x - y * y, 0.0))
        a, b = max(lo[2], -s), min(hi[2], s)
        if a >= b:
            return 0.0
        return b if sign > 0 else a

    ref, _ = integrate.tplquad(lambda z, y, x: 1 / (x * x + y * y + z * z), lo[0], hi[0], lo[1], hi[1],
                               lambda x, y: zlim(x, y, -1), lambda x, y: zlim(x, y, 1),
                               epsabs=1e-10, epsrel=1e-9)
    assert cell_weight(n, L, P) == pytest.approx(ref, rel=1e-5)


def test_nonempty_cells_closed_ball():
    cells = nonempty_cells(1.0, 2.0)
    assert (0, 0, 0) in cells and (1, 0, 0) in cells and (1, 1, 0) not in cells


def test_theorem1_budget_items():
    alpha, N = 1e4, 3
    b = theorem1_budget(alpha, N)
    R = 1 / (N * alpha ** (19 / 23))
    assert b.R == pytest.approx(R)
    assert b.localization == pytest.approx(9 * math.pi**2 / 4 * N**3 * alpha ** (38 / 23))
    assert b.corollary_R_term == pytest.approx(3 * N**3 * alpha ** (42 / 23))
    assert b.interball == pytest.approx(N**3 * alpha ** (42 / 23))
    assert b.total == pytest.approx(sum(b.items().values()))
    assert all(v >= 0 for v in b.items().values())
    assert b.block_intermediate == 0
    assert theorem1_budget(alpha, N, include_block_intermediate=True).block_intermediate > 0
    with pytest.raises(ValueError, match="beta"):
        theorem1_budget(1.0, 1)


def test_budget_R_tradeoff():
    ratios = []
    for alpha in (1e3, 1e4, 1e5):
        Rbest, Rs, tot = optimal_R_scan(alpha, 2)
        i = int(np.argmin(tot))
        assert np.all(np.diff(tot[: i + 1]) <= 0) and np.all(np.diff(tot[i:]) >= 0)
        ratios.append(Rbest * 2 * alpha ** (19 / 23))
    # the default radius approaches the numerical optimum as alpha grows
    assert abs(ratios[2] - 1) < 0.1
    assert abs(ratios[2] - 1) < abs(ratios[1] - 1) < abs(ratios[0] - 1)


def test_hardy_lower_bound():
    assert hardy_lower_bound(1, 0.5, 0.0) == -2.0
    assert hardy_lower_bound(2, 0.3, 0.0) == pytest.approx(8 * hardy_lower_bound(1, 0.3, 0.0))
    with pytest.raises(ValueError):
        hardy_lower_bound(1, 1.0, 0.0)


@pytest.mark.parametrize("fields", [None, FieldSpec.linear_a((0.3, 0, 1.0)), FieldSpec.periodic_v(3.0, 0.4)])
def test_scaling_identity(fields):
    g = Grid3D.cubic(16, 10.0)
    st = HartreeState.random(g, 2, seed=4)
    p = PolaronParams(2, 1.0, 0.6)
    assert scaling_identity_check(fields, p, st, 1.0) == 0.0
    for a in (2.0, 3.0):
        assert scaling_identity_check(fields, p, st, a) < 1e-12
