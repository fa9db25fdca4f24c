"""Catalogue of measure-preserving maps on the unit square / unit interval.

All maps act on points ``(q, p)`` of ``[0, 1)^2``. The doubling map is one
dimensional; it acts on ``q`` and carries ``p`` along unchanged so it can be
coded with the same grid partitions as the 2-D maps.

==============  =========================================  =========
name            action                                     dimension
==============  =========================================  =========
``baker``       (2q mod 1, (p + floor(2q)) / 2)            2
``cat``         (2q + p, q + p) mod 1                      2
``standard``    p' = p + K/(2 pi) sin(2 pi q), q' = q + p'  2
``rotation``    (q + alpha mod 1, p)                       2
``doubling``    2q mod 1                                   1
==============  =========================================  =========

The baker and doubling maps shift one binary digit out of ``q`` per step, so
floating-point orbits of these two maps degenerate after about 52 steps
(``MapSystem.precision_horizon``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
import numpy as np

from .errors import DomainError, NumericalError, UndefinedDerivativeError, ValidationError

TWO_PI = 2.0 * math.pi

_CAT = np.array([[2.0, 1.0], [1.0, 1.0]])


@dataclass(frozen=True)
class MapSystem:
    name: str
    params: tuple[float, ...] = ()
    dimension: int = 2
    precision_horizon: int | None = field(default=None, compare=False)

    @property
    def spec(self) -> str:
        if self.name == "standard":
            return f"standard:K={self.params[0]!r}"
        if self.name == "rotation":
            return f"rotation:alpha={self.params[0]!r}"
        return self.name

    def step(self, q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised single step on arrays of coordinates."""
        return _STEPS[self.name](self, q, p)

    def jacobian(self, q: float, p: float) -> np.ndarray:
        return _JACOBIANS[self.name](self, q, p)

    def __str__(self) -> str:
        return self.spec


def baker() -> MapSystem:
    return MapSystem("baker", (), 2, precision_horizon=52)


def cat() -> MapSystem:
    return MapSystem("cat", (), 2)


def standard(K: float) -> MapSystem:
    return MapSystem("standard", (float(K),), 2)


def rotation(alpha: float) -> MapSystem:
    return MapSystem("rotation", (float(alpha),), 2)


def doubling() -> MapSystem:
    return MapSystem("doubling", (), 1, precision_horizon=52)


def parse_map_spec(text: str) -> MapSystem:
    """Build a map from a CLI string such as ``"standard:K=0.97"``."""
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.lower()
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValidationError(f"bad map parameter {item!r} in {text!r}")
            try:
                kwargs[key.strip()] = float(value)
            except ValueError:
                raise ValidationError(f"map parameter {key!r} is not a number in {text!r}") from None
    if name in ("baker", "cat", "doubling"):
        if kwargs:
            raise ValidationError(f"map {name!r} takes no parameters")
        return {"baker": baker, "cat": cat, "doubling": doubling}[name]()
    if name == "standard":
        if set(kwargs) != {"K"}:
            raise ValidationError("standard map needs exactly one parameter: standard:K=<real>")
        return standard(kwargs["K"])
    if name == "rotation":
        if set(kwargs) != {"alpha"}:
            raise ValidationError("rotation needs exactly one parameter: rotation:alpha=<real>")
        return rotation(kwargs["alpha"])
    raise ValidationError(
        f"unknown map {text!r}; expected baker | cat | standard:K=<real> | rotation:alpha=<real> | doubling"
    )


def _wrap(x):
    # np.mod of a tiny negative number rounds up to exactly 1.0
    x = np.mod(x, 1.0)
    return np.where(x >= 1.0, 0.0, x)


def _baker_step(m, q, p):
    b = np.floor(2.0 * q)
    return 2.0 * q - b, (p + b) * 0.5


def _cat_step(m, q, p):
    return np.mod(2.0 * q + p, 1.0), np.mod(q + p, 1.0)


def _standard_step(m, q, p):
    K = m.params[0]
    p_new = _wrap(p + K / TWO_PI * np.sin(TWO_PI * q))
    return _wrap(q + p_new), p_new


def _rotation_step(m, q, p):
    return _wrap(q + m.params[0]), p


def _doubling_step(m, q, p):
    return np.mod(2.0 * q, 1.0), p


_STEPS = {
    "baker": _baker_step,
    "cat": _cat_step,
    "standard": _standard_step,
    "rotation": _rotation_step,
    "doubling": _doubling_step,
}


def _on_cut(q: float) -> bool:
    return 2.0 * q == 1.0


def _baker_jac(m, q, p):
    if _on_cut(q):
        raise UndefinedDerivativeError(f"baker map is discontinuous at q={q}")
    return np.array([[2.0, 0.0], [0.0, 0.5]])


def _cat_jac(m, q, p):
    return _CAT.copy()


def _standard_jac(m, q, p):
    kc = m.params[0] * math.cos(TWO_PI * q)
    return np.array([[1.0 + kc, 1.0], [kc, 1.0]])


def _rotation_jac(m, q, p):
    return np.eye(2)


def _doubling_jac(m, q, p):
    if _on_cut(q):
        raise UndefinedDerivativeError(f"doubling map is discontinuous at x={q}")
    return np.array([[2.0]])


_JACOBIANS = {
    "baker": _baker_jac,
    "cat": _cat_jac,
    "standard": _standard_jac,
    "rotation": _rotation_jac,
    "doubling": _doubling_jac,
}


def _as_point(m: MapSystem, point) -> tuple[float, float]:
    arr = np.atleast_1d(np.asarray(point, dtype=float)).ravel()
    if m.dimension == 1:
        if arr.size == 1:
            q, p = float(arr[0]), 0.0
        elif arr.size == 2:
            q, p = float(arr[0]), float(arr[1])
        else:
            raise DomainError(f"{m.name} expects a scalar point, got {point!r}")
    else:
        if arr.size != 2:
            raise DomainError(f"{m.name} expects a 2-vector, got {point!r}")
        q, p = float(arr[0]), float(arr[1])
    for v in (q, p):
        if not (0.0 <= v < 1.0):
            raise DomainError(f"point {point!r} is outside the unit domain of {m.name}")
    return q, p


def check_domain(q: np.ndarray, p: np.ndarray, name: str = "map") -> None:
    ok = (q >= 0.0) & (q < 1.0) & (p >= 0.0) & (p < 1.0)
    if not np.all(ok):
        raise DomainError(f"{np.count_nonzero(~ok)} point(s) outside the unit domain of {name} (or NaN)")


def apply(m: MapSystem, point):
    """Image of a single point; scalars in, scalars out for 1-D maps."""
    q, p = _as_point(m, point)
    q2, p2 = m.step(np.array([q]), np.array([p]))
    if m.dimension == 1 and np.ndim(point) == 0:
        return float(q2[0])
    if m.dimension == 1 and np.size(point) == 1:
        return np.array([q2[0]])
    return np.array([q2[0], p2[0]])


@dataclass(frozen=True)
class TangentFrame:
    point: np.ndarray
    jacobian: np.ndarray


def identity_frame(m: MapSystem, point) -> TangentFrame:
    q, p = _as_point(m, point)
    pt = np.array([q]) if m.dimension == 1 else np.array([q, p])
    return TangentFrame(pt, np.eye(m.dimension))


def tangent_step(m: MapSystem, frame: TangentFrame) -> TangentFrame:
    pt = np.asarray(frame.point, dtype=float)
    q = float(pt[0])
    p = float(pt[1]) if pt.size > 1 else 0.0
    local = m.jacobian(q, p)
    q2, p2 = m.step(np.array([q]), np.array([p]))
    new_pt = np.array([q2[0]]) if m.dimension == 1 else np.array([q2[0], p2[0]])
    return TangentFrame(new_pt, local @ np.asarray(frame.jacobian, dtype=float))


def lyapunov_max(
    m: MapSystem,
    seed_point,
    n_steps: int = 10_000,
    rng_seed: int = 0,
    transient: int = 100,
    max_restarts: int = 10,
) -> float:
    """Largest Lyapunov exponent in nats per step.

    A random tangent vector is pushed through the local Jacobians and
    renormalised every step. Landing exactly on a discontinuity perturbs the
    point by a random amount of order 1e-9 and retries; ``max_restarts``
    consecutive failures at the same step raise.
    """
    if n_steps < 1000:
        raise ValidationError(f"n_steps must be >= 1000, got {n_steps}")
    rng = np.random.default_rng(rng_seed)
    q, p = _as_point(m, seed_point)
    v = rng.standard_normal(m.dimension)
    v /= np.linalg.norm(v)
    total = 0.0
    for k in range(transient + n_steps):
        for attempt in range(max_restarts + 1):
            try:
                J = m.jacobian(q, p)
                break
            except UndefinedDerivativeError:
                if attempt == max_restarts:
                    raise NumericalError(
                        f"{m.name}: derivative undefined after {max_restarts} restarts"
                    ) from None
                q = float(np.mod(q + rng.uniform(1e-10, 1e-9), 1.0))
        v = J @ v
        norm = float(np.linalg.norm(v))
        if not (norm > 0 and math.isfinite(norm)):
            raise NumericalError(f"tangent vector degenerated (norm={norm})")
        v /= norm
        if k >= transient:
            total += math.log(norm)
        qa, pa = m.step(np.array([q]), np.array([p]))
        q, p = float(qa[0]), float(pa[0])
    return total / n_steps


def orbit(m: MapSystem, point, n: int, stride: int = 1) -> list:
    """``[x, T^s x, T^{2s} x, ..., T^{ns} x]`` for a single point."""
    if n < 0 or stride < 1:
        raise ValidationError(f"need n >= 0 and stride >= 1, got n={n}, stride={stride}")
    q, p = _as_point(m, point)
    warn_precision(m, n * stride)
    qa, pa = np.array([q]), np.array([p])
    scalar = m.dimension == 1 and np.ndim(point) == 0
    out = []
    for j in range(n + 1):
        out.append(float(qa[0]) if scalar else (np.array([qa[0]]) if m.dimension == 1 else np.array([qa[0], pa[0]])))
        if j < n:
            for _ in range(stride):
                qa, pa = m.step(qa, pa)
    return out


def iterate(m: MapSystem, q: np.ndarray, p: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(steps):
        q, p = m.step(q, p)
    return q, p


def warn_precision(m: MapSystem, total_steps: int) -> None:
    if m.precision_horizon is not None and total_steps > m.precision_horizon:
        warnings.warn(
            f"{m.name}: {total_steps} iterations exceed the float64 horizon of "
            f"{m.precision_horizon} steps; orbits collapse onto dyadic fixed points",
            RuntimeWarning,
            stacklevel=3,
        )


def jacobian_determinant(m: MapSystem, q: float, p: float) -> float:
    return float(np.linalg.det(m.jacobian(q, p)))
