"""Hyperboloid-model geometry with a learnable, strictly negative curvature.

The manifold is the upper sheet of {x : <x,x>_L = 1/kappa} in Minkowski
space, where <x,y>_L = -x0*y0 + sum_i xi*yi. Two layers live here:

* a value-level API on plain numpy arrays (``lorentz_inner``, ``distance``,
  ``exp_map``, ``log_map``, projections) for geometry checks and data paths;
* differentiable kernels on autodiff tensors (``texp_origin`` etc.) used by
  the encoder and the tracker, all based at the manifold origin.

Both layers implement the same closed forms and are cross-checked in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CurvatureMismatchError, DomainError, ShapeError

# kappa = -softplus(theta) - KAPPA_FLOOR keeps curvature strictly negative
# under unconstrained gradient descent.
KAPPA_FLOOR = 1e-3


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


class Curvature:
    """Negative curvature derived from an unconstrained parameter theta."""

    def __init__(self, theta: float = 0.54, learnable: bool = True):
        self.theta = Tensor(float(theta), requires_grad=learnable)

    @classmethod
    def from_kappa(cls, kappa: float, learnable: bool = True) -> "Curvature":
        if kappa >= -KAPPA_FLOOR:
            raise DomainError("curvature", f"kappa must be <= -{KAPPA_FLOOR}, got {kappa}")
        # invert softplus: theta = log(expm1(-kappa - floor))
        theta = float(np.log(np.expm1(-kappa - KAPPA_FLOOR)))
        return cls(theta, learnable=learnable)

    def value_tensor(self) -> Tensor:
        """kappa as a differentiable scalar, stable for any theta."""
        t = self.theta
        pos = ad.clamp(t, 0.0, None)
        absd = pos + ad.clamp(-t, 0.0, None)
        softplus = pos + ad.log(1.0 + ad.exp(-absd))
        return -(softplus + KAPPA_FLOOR)

    @property
    def value(self) -> float:
        return -_softplus(float(self.theta.data)) - KAPPA_FLOOR

    @property
    def abs_value(self) -> float:
        return -self.value

    def to_dict(self) -> dict:
        return {"theta": float(self.theta.data), "learnable": self.theta.requires_grad}

    @classmethod
    def from_dict(cls, d: dict) -> "Curvature":
        return cls(d["theta"], learnable=d.get("learnable", True))

    def __repr__(self) -> str:
        return f"Curvature(kappa={self.value:.6f})"


def lorentz_inner(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ShapeError(f"lorentz_inner needs equal 1-D vectors of dim >= 2, got {x.shape} and {y.shape}")
    return float(-x[0] * y[0] + np.dot(x[1:], y[1:]))


@dataclass(eq=False)
class HyperbolicPoint:
    """Point on the upper sheet; validated against the manifold invariant."""

    coords: np.ndarray
    kappa: Curvature
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if not self._checked:
            residual = abs(lorentz_inner(self.coords, self.coords) - 1.0 / self.kappa.value)
            if residual > 1e-9:
                raise DomainError("hyperbolic_point", f"off-manifold by {residual:.3e}")
            if self.coords[0] <= 0:
                raise DomainError("hyperbolic_point", "time component must be positive")

    @property
    def dim(self) -> int:
        return self.coords.size - 1


@dataclass(eq=False)
class TangentVector:
    """Vector in the tangent space at ``base``; Lorentz-orthogonal to it."""

    base: HyperbolicPoint
    coords: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if not self._checked:
            residual = abs(lorentz_inner(self.base.coords, self.coords))
            if residual > 1e-9:
                raise DomainError("tangent_vector", f"not tangent, <x,v> = {residual:.3e}")

    def norm(self) -> float:
        # rounding can push <v,v> to -1e-16 scale
        return float(np.sqrt(max(lorentz_inner(self.coords, self.coords), 0.0)))


def origin(kappa: Curvature, dim: int) -> HyperbolicPoint:
    coords = np.zeros(dim + 1)
    coords[0] = 1.0 / np.sqrt(kappa.abs_value)
    return HyperbolicPoint(coords, kappa, _checked=True)


def _same_manifold(x: HyperbolicPoint, y: HyperbolicPoint) -> None:
    if x.kappa.value != y.kappa.value:
        raise CurvatureMismatchError(
            f"points live on different curvatures: {x.kappa.value} vs {y.kappa.value}"
        )


def distance(x: HyperbolicPoint, y: HyperbolicPoint) -> float:
    """Geodesic distance (1/sqrt|k|) * arccosh(k * <x,y>_L)."""
    _same_manifold(x, y)
    abs_k = x.kappa.abs_value
    arg = -abs_k * lorentz_inner(x.coords, y.coords)
    if arg < 1.0 - 1e-9:
        raise DomainError("distance", f"arccosh argument {arg} below 1")
    return float(np.arccosh(max(arg, 1.0)) / np.sqrt(abs_k))


def exp_map(x: HyperbolicPoint, v: TangentVector) -> HyperbolicPoint:
    """Geodesic shoot: cosh(sqrt|k| ||v||) x + v sinh(sqrt|k| ||v||) / (sqrt|k| ||v||)."""
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise DomainError("exp_map", "tangent vector is not based at x")
    abs_k = x.kappa.abs_value
    r = v.norm()
    if r == 0.0:
        return x
    z = np.sqrt(abs_k) * r
    coords = np.cosh(z) * x.coords + v.coords * (np.sinh(z) / z)
    return project_to_manifold(coords, x.kappa)


def log_map(x: HyperbolicPoint, y: HyperbolicPoint) -> TangentVector:
    """Inverse of exp_map: d(x,y) * w / ||w||_L with w = y + |k| <x,y>_L x."""
    _same_manifold(x, y)
    if np.array_equal(x.coords, y.coords):
        return TangentVector(x, np.zeros_like(x.coords), _checked=True)
    abs_k = x.kappa.abs_value
    d = distance(x, y)
    w = y.coords + abs_k * lorentz_inner(x.coords, y.coords) * x.coords
    wnorm = np.sqrt(max(lorentz_inner(w, w), 0.0))
    if wnorm == 0.0:
        return TangentVector(x, np.zeros_like(x.coords), _checked=True)
    v = (d / wnorm) * w
    return TangentVector(x, project_to_tangent(x, v).coords, _checked=True)


def project_to_manifold(raw: np.ndarray, kappa: Curvature) -> HyperbolicPoint:
    """Fix the time component from the space components."""
    raw = np.asarray(raw, dtype=np.float64)
    coords = raw.copy()
    coords[0] = np.sqrt(np.dot(raw[1:], raw[1:]) + 1.0 / kappa.abs_value)
    return HyperbolicPoint(coords, kappa, _checked=True)


def project_to_tangent(x: HyperbolicPoint, raw: np.ndarray) -> TangentVector:
    """Remove the normal component: v = raw - kappa <x,raw>_L x."""
    raw = np.asarray(raw, dtype=np.float64)
    v = raw - x.kappa.value * lorentz_inner(x.coords, raw) * x.coords
    return TangentVector(x, v, _checked=True)


# ---------------------------------------------------------------------------
# Differentiable kernels, all based at the manifold origin. Rows of the
# tensor arguments are points/tangents; kappa_t is the curvature as a
# differentiable scalar tensor.

_TINY = 1e-15


def tlorentz_inner(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise Lorentz product, keepdims on the last axis."""
    prod = a * b
    time = prod[..., :1]
    space = ad.tsum(prod[..., 1:], axis=-1, keepdims=True)
    return space - time


def texp_origin(u: Tensor, kappa_t: Tensor) -> Tensor:
    """exp at the origin: (..., d) spatial tangent coords -> (..., d+1) points."""
    sq = ad.sqrt(-kappa_t)
    r = ad.sqrt(ad.tsum(u * u, axis=-1, keepdims=True))
    z = ad.clamp(r, _TINY, None) * sq
    time = ad.cosh(z) / sq
    space = u * (ad.sinh(z) / z)
    return ad.concat([time, space], axis=-1)


def tlog_origin(h: Tensor, kappa_t: Tensor) -> Tensor:
    """log at the origin: (..., d+1) points -> (..., d) spatial tangent coords.

    Uses the on-manifold identity ||y_space|| = sinh(sqrt|k| d)/sqrt|k|, i.e.
    d = arcsinh(sqrt|k| ||y_space||)/sqrt|k|, which is smooth at the origin.
    """
    sq = ad.sqrt(-kappa_t)
    space = h[..., 1:]
    n = ad.sqrt(ad.tsum(space * space, axis=-1, keepdims=True))
    z = ad.clamp(n, _TINY, None) * sq
    # arcsinh(z) = log(z + sqrt(z^2 + 1))
    arcsinh = ad.log(z + ad.sqrt(z * z + 1.0))
    return space * (arcsinh / z)


def tproject_manifold(rows: Tensor, kappa_t: Tensor) -> Tensor:
    """Recompute the time component from the space components."""
    space = rows[..., 1:]
    time = ad.sqrt(ad.tsum(space * space, axis=-1, keepdims=True) + (-1.0 / kappa_t))
    return ad.concat([time, space], axis=-1)


def tdistance(a: Tensor, b: Tensor, kappa_t: Tensor) -> Tensor:
    """Row-wise geodesic distance between on-manifold rows."""
    arg = tlorentz_inner(a, b) * kappa_t
    return ad.arccosh(arg) / ad.sqrt(-kappa_t)


# ---------------------------------------------------------------------------
# Geometry switch: the hyperbolic lift/unlift pair, or the identity maps for
# the flattened ablation where all representations stay Euclidean.

class HyperbolicGeometry:
    euclidean = False

    def __init__(self, curvature: Curvature):
        self.curvature = curvature

    def kappa_tensor(self) -> Tensor:
        return self.curvature.value_tensor()

    def lift(self, x: Tensor, kappa_t: Tensor | None = None) -> Tensor:
        k = self.kappa_tensor() if kappa_t is None else kappa_t
        return tproject_manifold(texp_origin(x, k), k)

    def unlift(self, h: Tensor, kappa_t: Tensor | None = None) -> Tensor:
        k = self.kappa_tensor() if kappa_t is None else kappa_t
        return tlog_origin(h, k)


class EuclideanGeometry:
    """Identity lift/unlift; curvature is unused and frozen."""

    euclidean = True

    def __init__(self):
        self.curvature = None

    def kappa_tensor(self) -> Tensor | None:
        return None

    def lift(self, x: Tensor, kappa_t=None) -> Tensor:
        return x

    def unlift(self, h: Tensor, kappa_t=None) -> Tensor:
        return h
