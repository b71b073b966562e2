"""Localisation window, ball regrouping and nearest-ball partition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import BOUNDARY


@dataclass(frozen=True)
class BallLayout:
    """``N`` equal balls ``B_R(y_k)``."""

    centers: np.ndarray
    R: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if c.ndim != 2 or c.shape[1] != 3 or len(c) < 1:
            raise ValueError("centers must be an (N, 3) array with N >= 1")
        if not self.R > 0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "R", float(self.R))

    @property
    def N(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class Group:
    center: np.ndarray
    radius: float
    members: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.members)


def ball_gap(c1, r1, c2, r2) -> float:
    """``dist(B_1, B_2) = |c1 - c2| - r1 - r2`` (negative when overlapping)."""
    return float(np.linalg.norm(np.asarray(c1) - np.asarray(c2))) - r1 - r2


def enclosing_ball(c1, r1, c2, r2) -> tuple[np.ndarray, float]:
    """Smallest ball containing two balls."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    dist = float(np.linalg.norm(c2 - c1))
    if dist + r2 <= r1:
        return c1.copy(), r1
    if dist + r1 <= r2:
        return c2.copy(), r2
    r = 0.5 * (r1 + r2 + dist)
    return c1 + (r - r1) / dist * (c2 - c1), r


def group_radius(n: int, R: float) -> float:
    return 0.5 * (3 * n - 1) * R


@dataclass
class ClusterLayout:
    groups: list[Group]
    R: float
    separations: list[float] = field(init=False)

    def __post_init__(self):
        m = len(self.groups)
        seps = []
        for i, gi in enumerate(self.groups):
            d = [ball_gap(gi.center, gi.radius, gj.center, gj.radius)
                 for j, gj in enumerate(self.groups) if j != i]
            seps.append(min(d) if d else math.inf)
        self.separations = seps
        self._centers = np.array([g.center for g in self.groups]).reshape(m, 3)
        self._radii = np.array([g.radius for g in self.groups])

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def N(self) -> int:
        return sum(g.n for g in self.groups)

    def group_of(self) -> np.ndarray:
        """Group index of every particle."""
        out = np.empty(self.N, dtype=int)
        for i, g in enumerate(self.groups):
            out[list(g.members)] = i
        return out

    def check(self, layout: BallLayout | None = None, tol: float = 1e-12) -> list[str]:
        """Violated invariants (empty list when the layout is valid)."""
        bad = []
        R = self.R
        for i, gi in enumerate(self.groups):
            if gi.radius != group_radius(gi.n, R):
                bad.append(f"group {i}: radius {gi.radius} != (3n-1)R/2")
            for j in range(i + 1, self.m):
                gj = self.groups[j]
                if ball_gap(gi.center, gi.radius, gj.center, gj.radius) < R:
                    bad.append(f"groups {i},{j}: distance below R")
        members = sorted(k for g in self.groups for k in g.members)
        if members != list(range(len(members))):
            bad.append("members do not partition 0..N-1")
        if layout is not None:
            if len(members) != layout.N:
                bad.append("member count differs from the number of small balls")
            for i, g in enumerate(self.groups):
                for k in g.members:
                    if np.linalg.norm(layout.centers[k] - g.center) + layout.R > g.radius + tol:
                        bad.append(f"ball {k} not contained in group {i}")
        return bad

    def to_dict(self) -> dict:
        return {"R": self.R,
                "groups": [{"center": [float(v) for v in g.center], "radius": g.radius,
                            "members": list(g.members)} for g in self.groups],
                "separations": [s if math.isfinite(s) else None for s in self.separations]}

    @classmethod
    def from_dict(cls, d: dict) -> ClusterLayout:
        return cls([Group(np.asarray(g["center"], float), float(g["radius"]), tuple(g["members"]))
                    for g in d["groups"]], float(d["R"]))


def regroup_balls(layout: BallLayout) -> ClusterLayout:
    """Merge the small balls into disjoint groups ``B_i`` with
    ``dist(B_i, B_j) >= R`` and ``R_i = (3 n_i - 1) R / 2``.

    Balls are inserted in input order. A ball closer than ``R`` to an
    existing group is merged into the lowest-index such group; the merged
    ball is then merged again with any group now closer than ``R`` until
    none is left. Each merge takes the smallest ball enclosing both parts and
    pads its radius to ``(3 n - 1) R / 2``, which always dominates.
    """
    R = layout.R
    groups: list[tuple[np.ndarray, float, tuple[int, ...]]] = []
    for k, y in enumerate(layout.centers):
        cur = (y.copy(), R, (k,))
        while True:
            hit = next((i for i, (c, r, _) in enumerate(groups)
                        if ball_gap(c, r, cur[0], cur[1]) < R), None)
            if hit is None:
                break
            c, r, mem = groups.pop(hit)
            center, r_enc = enclosing_ball(c, r, cur[0], cur[1])
            members = tuple(sorted(mem + cur[2]))
            r_pad = group_radius(len(members), R)
            if r_enc > r_pad * (1 + 1e-12):
                raise AssertionError("enclosing radius exceeds (3n-1)R/2")
            cur = (center, r_pad, members)
        groups.append(cur)
    return ClusterLayout([Group(c, r, m) for c, r, m in groups], R)


def region_distances(points, layout: ClusterLayout) -> np.ndarray:
    """``dist(B_i, y) = max(|y - c_i| - R_i, 0)``, shape ``(n_points, m)``."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.linalg.norm(p[:, None, :] - layout._centers[None], axis=2) - layout._radii[None]
    return np.maximum(d, 0.0)


def nearest_ball(points, layout: ClusterLayout, mark_ties: bool = True) -> np.ndarray:
    """Index of the nearest group for each point; ties give ``BOUNDARY``
    unless ``mark_ties`` is false, in which case the lower index wins."""
    d = region_distances(points, layout)
    idx = np.argmin(d, axis=1)
    if mark_ties and layout.m > 1:
        part = np.sort(d, axis=1)
        idx = np.where(part[:, 0] == part[:, 1], BOUNDARY, idx)
    return idx


def region_membership(y, layout: ClusterLayout) -> int:
    """Group ``i`` whose region ``S_i`` contains ``y``, or ``BOUNDARY``."""
    return int(nearest_ball(np.asarray(y, dtype=float)[None], layout)[0])


@dataclass(frozen=True)
class WindowSpec:
    """Product-of-cosines window of side ``L`` centred at ``center`` (shape (N, 3))."""

    center: np.ndarray
    L: float

    @classmethod
    def from_radius(cls, center, R: float) -> WindowSpec:
        return cls(np.atleast_2d(np.asarray(center, dtype=float)), 2 * R / math.sqrt(3))


def cosine_window(x, spec: WindowSpec) -> float | np.ndarray:
    """``prod_j cos((x_j - y_j) pi / L)`` inside the cube of side ``L``, 0
    outside. ``x`` has shape ``(..., N, 3)`` matching ``spec.center``."""
    d = np.asarray(x, dtype=float) - np.asarray(spec.center, dtype=float)
    inside = np.all(np.abs(d) < spec.L / 2, axis=(-1, -2))
    val = np.prod(np.cos(d * np.pi / spec.L), axis=(-1, -2))
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def random_layout(rng: np.random.Generator, N: int, R: float = 1.0, box: float = 20.0) -> BallLayout:
    return BallLayout(rng.uniform(-box * R / 2, box * R / 2, size=(N, 3)), R)
