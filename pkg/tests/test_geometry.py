import math

import numpy as np
import pytest

from pekar.geometry import (BOUNDARY, BallLayout, ClusterLayout, Group, WindowSpec, cosine_window,
                            enclosing_ball, random_layout, region_membership, regroup_balls)
from pekar.grid import mc_integrate


def test_window_examples():
    spec = WindowSpec.from_radius([[0.0, 0.0, 0.0]], 1.0)
    assert spec.L == pytest.approx(2 / math.sqrt(3))
    assert cosine_window([[0.0, 0.0, 0.0]], spec) == 1.0
    assert cosine_window([[spec.L / 2, 0.0, 0.0]], spec) == 0.0
    assert cosine_window([[0.0, spec.L / 4, 0.0]], spec) == pytest.approx(math.sqrt(2) / 2)


def test_window_l2_mass():
    L = 1.3
    spec = WindowSpec([[0.2, -0.1, 0.4]], L)
    x, w = np.polynomial.legendre.leggauss(40)
    pts = 0.5 * L * x
    wts = 0.5 * L * w
    X = np.stack(np.meshgrid(pts, pts, pts, indexing="ij"), -1) + spec.center[0]
    vals = cosine_window(X[..., None, :], spec) ** 2
    mass = np.einsum("ijk,i,j,k", vals, wts, wts, wts)
    assert mass == pytest.approx((L / 2) ** 3, rel=1e-12)


def test_regroup_examples():
    one = regroup_balls(BallLayout([[0, 0, 0]], 1.0))
    assert one.m == 1 and one.groups[0].radius == 1.0
    far = regroup_balls(BallLayout([[0, 0, 0], [10, 0, 0]], 1.0))
    assert far.m == 2 and far.separations[0] >= 1.0
    lay = BallLayout([[0, 0, 0], [2, 0, 0]], 1.0)
    near = regroup_balls(lay)
    assert near.m == 1 and near.groups[0].n == 2 and near.groups[0].radius == 2.5
    _, r = enclosing_ball([0, 0, 0], 1.0, [2, 0, 0], 1.0)
    assert r == 2.0
    assert near.check(lay) == []


def test_regroup_random_layouts_and_permutations():
    rng = np.random.default_rng(7)
    for _ in range(200):
        N = int(rng.integers(1, 13))
        lay = random_layout(rng, N, 1.0, 20.0)
        assert regroup_balls(lay).check(lay) == []
        perm = rng.permutation(N)
        lay_p = BallLayout(lay.centers[perm], 1.0)
        assert regroup_balls(lay_p).check(lay_p) == []


def test_check_detects_violations():
    lay = BallLayout([[0, 0, 0], [1.5, 0, 0]], 1.0)
    bad = ClusterLayout([Group(np.zeros(3), 1.0, (0,)), Group(np.array([1.5, 0, 0]), 1.0, (1,))], 1.0)
    assert any("distance" in v for v in bad.check(lay))


def test_cluster_json_roundtrip():
    lay = regroup_balls(random_layout(np.random.default_rng(1), 6, 1.0, 8.0))
    back = ClusterLayout.from_dict(lay.to_dict())
    assert back.to_dict() == lay.to_dict()


def test_region_membership_examples():
    lay = ClusterLayout([Group(np.array([-5.0, 0, 0]), 1.0, (0,)), Group(np.array([5.0, 0, 0]), 1.0, (1,))], 1.0)
    assert region_membership([-5.2, 0.1, 0], lay) == 0
    assert region_membership([0.0, 3.0, -1.0], lay) == BOUNDARY
    assert region_membership([-3.0, 0, 0], lay) == 0
    lay2 = ClusterLayout([Group(np.array([0.0, 0, 0]), 1.0, (0,)), Group(np.array([10.0, 0, 0]), 1.0, (1,))], 1.0)
    assert region_membership([2.0, 0, 0], lay2) == 0


def test_regions_partition_space():
    lay = regroup_balls(random_layout(np.random.default_rng(3), 5, 1.0, 6.0))
    box = ((-8, -8, -8), (8, 8, 8))
    from pekar.geometry import nearest_ball
    fracs = []
    for i in range(lay.m):
        est = mc_integrate(lambda y: np.ones(len(y)), lambda y, i=i: nearest_ball(y, lay) == i, 100_000, i, box=box)
        fracs.append(est)
    total = sum(e.mean for e in fracs)
    err = math.sqrt(sum(e.std_error**2 for e in fracs))
    assert abs(total - 16**3) <= 3 * err + 1e-9
