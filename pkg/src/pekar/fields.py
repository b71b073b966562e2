"""External potentials A (vector) and V (scalar): presets, sampling, scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid3D

KINDS = ("zero", "linear_a", "periodic_v", "sampled")
PROFILES = ("cos_sum", "cos_product")


@dataclass(frozen=True, eq=False)
class SampledData:
    """Node values of A (shape ``(3, nx, ny, nz)``) and V on ``grid``."""

    grid: Grid3D
    A: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if A.shape != (3, *self.grid.shape) or V.shape != self.grid.shape:
            raise ValueError("sampled A/V arrays do not match their grid")
        A.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "V", V)


@dataclass(frozen=True)
class FieldSpec:
    """One external-field preset.

    ``linear_a``: ``A(x) = B x x / 2``, ``V = 0`` (constant magnetic field B).
    ``periodic_v``: ``A = 0`` and ``V`` a bounded profile with period ``w``.
    ``sampled``: trilinear interpolation of node data.
    """

    kind: str = "zero"
    B: tuple[float, float, float] = (0.0, 0.0, 0.0)
    period: tuple[float, float, float] = (1.0, 1.0, 1.0)
    profile: str = "cos_sum"
    amplitude: float = 0.0
    sampled: SampledData | None = field(default=None, compare=True)
    gauge_note: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))
        object.__setattr__(self, "period", tuple(float(w) for w in self.period))
        if self.kind == "periodic_v":
            if self.profile not in PROFILES:
                raise ValueError(f"unknown periodic profile {self.profile!r}")
            if any(w <= 0 for w in self.period):
                raise ValueError("periods must be positive")
        if self.kind == "sampled" and self.sampled is None:
            raise ValueError("sampled field needs data")

    @classmethod
    def zero(cls) -> FieldSpec:
        return cls("zero")

    @classmethod
    def linear_a(cls, B) -> FieldSpec:
        return cls("linear_a", B=tuple(B))

    @classmethod
    def periodic_v(cls, period, amplitude, profile="cos_sum") -> FieldSpec:
        return cls("periodic_v", period=tuple(np.broadcast_to(period, 3)),
                   amplitude=float(amplitude), profile=profile)

    @classmethod
    def from_samples(cls, grid: Grid3D, A=None, V=None, gauge_note="") -> FieldSpec:
        A = np.zeros((3, *grid.shape)) if A is None else A
        V = np.zeros(grid.shape) if V is None else V
        return cls("sampled", sampled=SampledData(grid, A, V), gauge_note=gauge_note)

    @property
    def has_A(self) -> bool:
        return self.kind == "linear_a" or self.kind == "sampled"

    @property
    def has_V(self) -> bool:
        return self.kind == "periodic_v" or self.kind == "sampled"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "linear_a":
            d["B"] = list(self.B)
        elif self.kind == "periodic_v":
            d.update(period=list(self.period), amplitude=self.amplitude, profile=self.profile)
        elif self.kind == "sampled":
            d["grid"] = self.sampled.grid.to_dict()
        if self.gauge_note:
            d["gauge_note"] = self.gauge_note
        return d


@dataclass(frozen=True)
class ScaledField:
    """``A_a(x) = a A(a x)``, ``V_a(x) = a^2 V(a x)``."""

    base: FieldSpec
    alpha: float

    @property
    def spec(self) -> FieldSpec:
        """The scaled field written as a preset of the same kind."""
        a = self.alpha
        b = self.base
        if b.kind == "zero":
            return b
        if b.kind == "linear_a":
            return FieldSpec.linear_a(tuple(a * a * x for x in b.B))
        if b.kind == "periodic_v":
            return FieldSpec.periodic_v(tuple(w / a for w in b.period), a * a * b.amplitude, b.profile)
        s = b.sampled
        return FieldSpec.from_samples(s.grid.scaled(a), a * s.A, a * a * s.V, b.gauge_note)

    @property
    def has_A(self) -> bool:
        return self.base.has_A

    @property
    def has_V(self) -> bool:
        return self.base.has_V

    def to_dict(self) -> dict:
        return {"scaled": self.base.to_dict(), "alpha": self.alpha}


def scale_fields(spec: FieldSpec | ScaledField, alpha: float) -> ScaledField:
    if not alpha > 0:
        raise ValueError(f"scaling factor must be positive, got {alpha}")
    if isinstance(spec, ScaledField):
        return ScaledField(spec.base, spec.alpha * alpha)
    return ScaledField(spec, float(alpha))


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    return x


def _interp(s: SampledData, values, x):
    axes = s.grid.axes()
    pts = x.reshape(-1, 3)
    for l in range(3):
        lo, hi = axes[l][0], axes[l][-1]
        if np.any(pts[:, l] < lo) or np.any(pts[:, l] > hi):
            raise ValueError("point outside the sampled-field domain")
    f = RegularGridInterpolator(axes, values, method="linear")
    return f(pts).reshape(x.shape[:-1])


def evaluate_A(spec: FieldSpec | ScaledField, x) -> np.ndarray:
    """Vector potential at points ``x`` (trailing axis of length 3)."""
    x = _points(x)
    if isinstance(spec, ScaledField):
        return spec.alpha * evaluate_A(spec.base, spec.alpha * x)
    if spec.kind == "linear_a":
        return 0.5 * np.cross(np.asarray(spec.B), x)
    if spec.kind == "sampled":
        return np.stack([_interp(spec.sampled, spec.sampled.A[l], x) for l in range(3)], axis=-1)
    return np.zeros_like(x)


def evaluate_V(spec: FieldSpec | ScaledField, x) -> np.ndarray:
    x = _points(x)
    if isinstance(spec, ScaledField):
        return spec.alpha**2 * evaluate_V(spec.base, spec.alpha * x)
    if spec.kind == "periodic_v":
        ph = [np.cos(2 * np.pi * x[..., l] / spec.period[l]) for l in range(3)]
        prof = ph[0] + ph[1] + ph[2] if spec.profile == "cos_sum" else ph[0] * ph[1] * ph[2]
        return spec.amplitude * prof
    if spec.kind == "sampled":
        return _interp(spec.sampled, spec.sampled.V, x)
    return np.zeros(x.shape[:-1])


def _grid_points(grid: Grid3D) -> np.ndarray:
    return np.moveaxis(grid.coords(), 0, -1)


def sample_A(spec: FieldSpec | ScaledField | None, grid: Grid3D) -> np.ndarray | None:
    """A on the nodes of ``grid`` as ``(3, nx, ny, nz)``; ``None`` if A = 0."""
    if spec is None or not spec.has_A:
        return None
    base = spec.base if isinstance(spec, ScaledField) else spec
    if base.kind == "sampled":
        target = base.sampled.grid.scaled(spec.alpha) if isinstance(spec, ScaledField) else base.sampled.grid
        if target != grid:
            raise ValueError("sampled field lives on a different grid")
        a = spec.alpha if isinstance(spec, ScaledField) else 1.0
        return a * base.sampled.A
    return np.moveaxis(evaluate_A(spec, _grid_points(grid)), -1, 0)


def sample_V(spec: FieldSpec | ScaledField | None, grid: Grid3D) -> np.ndarray | None:
    if spec is None or not spec.has_V:
        return None
    base = spec.base if isinstance(spec, ScaledField) else spec
    if base.kind == "sampled":
        target = base.sampled.grid.scaled(spec.alpha) if isinstance(spec, ScaledField) else base.sampled.grid
        if target != grid:
            raise ValueError("sampled field lives on a different grid")
        a = spec.alpha if isinstance(spec, ScaledField) else 1.0
        return a * a * base.sampled.V
    return evaluate_V(spec, _grid_points(grid))


@dataclass(frozen=True)
class FormBoundReport:
    verified: bool
    status: str
    reason: str

    def to_dict(self) -> dict:
        return {"verified": self.verified, "status": self.status, "reason": self.reason}


def validate_form_bound_preset(spec: FieldSpec | ScaledField) -> FormBoundReport:
    """Whitelist check for fields known to meet the form-bound and local
    integrability assumptions; sampled data cannot be certified."""
    base = spec.base if isinstance(spec, ScaledField) else spec
    if base.kind == "zero":
        return FormBoundReport(True, "verified", "A = 0, V = 0")
    if base.kind == "linear_a":
        return FormBoundReport(True, "verified", "linear A (constant magnetic field), V = 0")
    if base.kind == "periodic_v":
        return FormBoundReport(True, "verified",
                               "bounded periodic V, A = 0: relatively form-bounded with bound zero")
    return FormBoundReport(False, "unverified", "sampled data carries no analytic certificate")
