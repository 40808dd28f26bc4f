"""Consumer disutility functions over consumption deviation.

Two convex families, both minimized at zero deviation (MW):

* ``FLAT_QUADRATIC`` -- zero cost inside a dead band ``[-a, a]``, quadratic
  branches ``q*(x - a)**2`` / ``q*(x + a)**2`` outside. Convex but not
  strictly convex; the gradient is flat on the dead band, so it has no
  inverse there.
* ``QUADRATIC`` -- ``q * x**2``, strictly convex.

Costs are treated as dimensionless, gradients as cost per MW; no unit
library, convention only. Both functions are defined on all of R, not just
the box, because reference integrators evaluate candidate points before
projection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParam, NotInvertible


class Family(enum.Enum):
    FLAT_QUADRATIC = "flat_quadratic"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class DisutilitySpec:
    """Per-load cost parameters and consumption-deviation box.

    q: curvature coefficient (1/MW), > 0.
    a: dead-band half-width (MW), >= 0; must be 0 for QUADRATIC.
    box_lo, box_hi: admissible deviation bounds (MW); the box must contain
        the nominal point 0 (possibly on its boundary, as in instances whose
        loads can deviate in one direction only). For FLAT_QUADRATIC the
        dead band must lie strictly inside the box.
    """

    family: Family
    q: float
    a: float
    box_lo: float
    box_hi: float

    def __post_init__(self):
        if not self.q > 0:
            raise InvalidParam(f"curvature q must be > 0, got {self.q}")
        if self.a < 0:
            raise InvalidParam(f"dead-band half-width must be >= 0, got {self.a}")
        if not (self.box_lo <= 0 <= self.box_hi) or self.box_lo == self.box_hi:
            raise InvalidParam(
                f"box must contain 0 and be nondegenerate, got [{self.box_lo}, {self.box_hi}]"
            )
        if self.family is Family.QUADRATIC and self.a != 0:
            raise InvalidParam("QUADRATIC family requires a = 0")
        if self.family is Family.FLAT_QUADRATIC:
            if not (self.a < self.box_hi and -self.a > self.box_lo):
                raise InvalidParam(
                    f"dead band [-{self.a}, {self.a}] must lie strictly inside "
                    f"the box [{self.box_lo}, {self.box_hi}]"
                )


def quadratic(q: float, box_lo: float, box_hi: float) -> DisutilitySpec:
    return DisutilitySpec(Family.QUADRATIC, q, 0.0, box_lo, box_hi)


def flat_quadratic(q: float, a: float, box_lo: float, box_hi: float) -> DisutilitySpec:
    return DisutilitySpec(Family.FLAT_QUADRATIC, q, a, box_lo, box_hi)


def eval_cost(spec: DisutilitySpec, x: float) -> float:
    """Disutility at deviation x (MW). Zero iff x is in the dead band."""
    if spec.family is Family.QUADRATIC:
        return spec.q * x * x
    if x > spec.a:
        d = x - spec.a
    elif x < -spec.a:
        d = x + spec.a
    else:
        return 0.0
    return spec.q * d * d


def grad(spec: DisutilitySpec, x: float) -> float:
    """Exact derivative of eval_cost; continuous and nondecreasing in x."""
    if spec.family is Family.QUADRATIC:
        return 2.0 * spec.q * x
    if x > spec.a:
        return 2.0 * spec.q * (x - spec.a)
    if x < -spec.a:
        return 2.0 * spec.q * (x + spec.a)
    return 0.0


def inv_grad(spec: DisutilitySpec, g: float) -> float:
    """Deviation whose gradient equals g. Strictly convex specs only."""
    if spec.family is not Family.QUADRATIC:
        raise NotInvertible(
            "gradient of a flat-quadratic disutility has a flat region; "
            "its preimage is not unique"
        )
    return g / (2.0 * spec.q)


def project(spec: DisutilitySpec, v: float) -> float:
    """Clamp v to the box; identity on interior points, idempotent."""
    if v < spec.box_lo:
        return spec.box_lo
    if v > spec.box_hi:
        return spec.box_hi
    return v


# Array forms over per-load parameter vectors (a = 0 reduces to the strictly
# convex family, so one formula serves both).


def eval_vec(q: np.ndarray, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    d = np.sign(x) * np.maximum(np.abs(x) - a, 0.0)
    return q * d * d


def grad_vec(q: np.ndarray, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return 2.0 * q * np.sign(x) * np.maximum(np.abs(x) - a, 0.0)


def spec_arrays(specs) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(q, a, box_lo, box_hi) vectors for a list of specs."""
    q = np.array([s.q for s in specs])
    a = np.array([s.a for s in specs])
    lo = np.array([s.box_lo for s in specs])
    hi = np.array([s.box_hi for s in specs])
    return q, a, lo, hi
