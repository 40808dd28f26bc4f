"""Centralized exact solver for the disutility-allocation problem.

Minimize total disutility subject to the total-deviation equality and the
per-load boxes. Separable convex objective, so the optimizer is
parametrized by a single multiplier: each load's deviation is the clamped
gradient preimage

    x_i(lam) = clip(sign(lam) * a_i + lam / (2 q_i), box_i),

and sum_i x_i(lam) is nondecreasing in lam. Bisection drives that sum to
the target. At lam = 0 the flat family's preimage is the whole dead band,
so the solution set is a polytope; a deterministic rule (common fill
fraction, i.e. residual split proportionally to dead-band widths) picks a
point, and the per-load preimage intervals describe the full set.

`brute_force_primal` is an independent grid-search oracle for tiny
instances; `check_optimality` verifies the first-order conditions of an
arbitrary point (equal interior gradients, one-sided conditions at bounds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .disutility import DisutilitySpec, eval_cost, eval_vec, grad, spec_arrays
from .errors import Infeasible, TooLarge
from .streams import derive_rng

_SUM_TOL_FACTOR = 1e-10


@dataclass(frozen=True)
class PrimalSolution:
    x_star: np.ndarray
    lambda_star: float
    is_strictly_feasible: bool
    optimal_cost: float
    critical_sets: tuple[tuple[float, float], ...]  # per-load {x: grad = lam*} within box

    def coordinate_ranges(self, g_bar: float) -> list[tuple[float, float]]:
        """Attainable range of each coordinate over the whole optimal set."""
        lo = np.array([iv[0] for iv in self.critical_sets])
        hi = np.array([iv[1] for iv in self.critical_sets])
        total_lo, total_hi = lo.sum(), hi.sum()
        out = []
        for i in range(len(lo)):
            lo_i = max(lo[i], g_bar - (total_hi - hi[i]))
            hi_i = min(hi[i], g_bar - (total_lo - lo[i]))
            out.append((lo_i, hi_i))
        return out


def _x_of_lambda(q, a, lo, hi, lam: float) -> np.ndarray:
    return np.clip(np.sign(lam) * a + lam / (2.0 * q), lo, hi)


def _critical_intervals(q, a, lo, hi, lam: float):
    if lam > 0:
        point = a + lam / (2.0 * q)
        left = right = np.clip(point, lo, hi)
    elif lam < 0:
        point = -a + lam / (2.0 * q)
        left = right = np.clip(point, lo, hi)
    else:
        left = np.clip(-a, lo, hi)
        right = np.clip(a, lo, hi)
    return tuple((float(l), float(r)) for l, r in zip(np.atleast_1d(left), np.atleast_1d(right)))


def _total_cost(specs, x) -> float:
    q, a, _, _ = spec_arrays(specs)
    return float(np.sum(eval_vec(q, a, np.asarray(x, dtype=float))))


def solve_primal(
    specs: list[DisutilitySpec], g_bar: float, tie_break_seed: int | None = None
) -> PrimalSolution:
    """Exact minimizer for the given total deviation (MW).

    Raises Infeasible when g_bar is outside the aggregate box. The optional
    tie_break_seed picks a different (equally optimal) point of the lam = 0
    polytope, for tests of optimal-set properties.
    """
    q, a, lo, hi = spec_arrays(specs)
    n = len(specs)
    if not (lo.sum() <= g_bar <= hi.sum()):
        raise Infeasible(
            f"target {g_bar} outside aggregate box [{lo.sum()}, {hi.sum()}]"
        )
    sum_tol = _SUM_TOL_FACTOR * max(1.0, abs(g_bar))

    s_left = float(np.clip(-a, lo, hi).sum())  # lim lam -> 0-
    s_right = float(np.clip(a, lo, hi).sum())  # lim lam -> 0+
    if s_left - sum_tol <= g_bar <= s_right + sum_tol:
        lam_star = 0.0
        x = _plateau_point(q, a, lo, hi, g_bar, tie_break_seed)
    else:
        if g_bar > s_right:
            lam_a, lam_b = 0.0, float(np.max(grad_at_hi(specs))) + 1.0
        else:
            lam_a, lam_b = float(np.min(grad_at_lo(specs))) - 1.0, 0.0
        for _ in range(200):
            lam_mid = 0.5 * (lam_a + lam_b)
            if lam_mid == lam_a or lam_mid == lam_b:
                break  # bracket exhausted at float resolution
            s_mid = float(_x_of_lambda(q, a, lo, hi, lam_mid).sum())
            if s_mid < g_bar:
                lam_a = lam_mid
            else:
                lam_b = lam_mid
        lam_star = 0.5 * (lam_a + lam_b)
        x = _x_of_lambda(q, a, lo, hi, lam_star)
        # pinned-corner targets can leave a residual within the clamp; spread it
        resid = g_bar - x.sum()
        if abs(resid) > sum_tol:
            free = (x > lo) & (x < hi)
            if np.any(free):
                x[free] += resid / free.sum()
            x = np.clip(x, lo, hi)

    intervals = _critical_intervals(q, a, lo, hi, lam_star)
    sol = PrimalSolution(
        x_star=x,
        lambda_star=float(lam_star),
        is_strictly_feasible=False,
        optimal_cost=_total_cost(specs, x),
        critical_sets=intervals,
    )
    ranges = sol.coordinate_ranges(g_bar)
    strict = all(r[0] > lo[i] and r[1] < hi[i] for i, r in enumerate(ranges))
    return PrimalSolution(
        x_star=x,
        lambda_star=float(lam_star),
        is_strictly_feasible=strict,
        optimal_cost=sol.optimal_cost,
        critical_sets=intervals,
    )


def grad_at_hi(specs) -> np.ndarray:
    return np.array([grad(s, s.box_hi) for s in specs])


def grad_at_lo(specs) -> np.ndarray:
    return np.array([grad(s, s.box_lo) for s in specs])


def _plateau_point(q, a, lo, hi, g_bar, tie_break_seed):
    """A point of the lam = 0 optimal polytope summing to g_bar."""
    left = np.clip(-a, lo, hi)
    right = np.clip(a, lo, hi)
    widths = right - left
    resid = g_bar - left.sum()
    total = widths.sum()
    if total <= 0:
        return left.copy()
    if tie_break_seed is None:
        t = min(max(resid / total, 0.0), 1.0)
        return left + t * widths
    # alternative optimal point: greedy fill in a seeded random order
    order = derive_rng(tie_break_seed, "plateau-fill").permutation(len(q))
    x = left.copy()
    remaining = resid
    for i in order:
        take = min(max(remaining, 0.0), widths[i])
        x[i] += take
        remaining -= take
    return x


def brute_force_primal(
    specs: list[DisutilitySpec], g_bar: float, grid_step: float
) -> PrimalSolution:
    """Exhaustive grid search; n - 1 gridded coordinates, one solved exactly.

    Every coordinate takes a turn as the solved-exactly one and the best
    point wins: optima with coordinates pinned at bounds are then hit
    exactly (bounds are grid points) while the interior coordinate absorbs
    the equality, leaving only second-order grid error. Point estimates
    only; intended purely as a verification oracle for n <= 4.
    """
    n = len(specs)
    if n > 4:
        raise TooLarge(f"brute force is limited to n <= 4, got {n}")
    q, a, lo, hi = spec_arrays(specs)
    if not (lo.sum() <= g_bar <= hi.sum()):
        raise Infeasible(f"target {g_bar} outside aggregate box")
    if n == 1:
        return _point_solution(specs, np.array([g_bar]), g_bar)
    best_cost = np.inf
    best_x = None
    for solved in range(n):
        gridded = [i for i in range(n) if i != solved]
        grids = [_grid(lo[i], hi[i], grid_step) for i in gridded]
        mesh = np.meshgrid(*grids, indexing="ij")
        rest = np.full(mesh[0].shape, g_bar)
        cost = np.zeros(mesh[0].shape)
        for m, i in zip(mesh, gridded):
            rest -= m
            cost += eval_vec(q[i], a[i], m)
        feasible = (rest >= lo[solved] - 1e-12) & (rest <= hi[solved] + 1e-12)
        if not np.any(feasible):
            continue
        rest_clipped = np.clip(rest, lo[solved], hi[solved])
        cost += eval_vec(q[solved], a[solved], rest_clipped)
        cost[~feasible] = np.inf
        idx = np.unravel_index(int(np.argmin(cost)), cost.shape)
        if cost[idx] < best_cost:
            best_cost = float(cost[idx])
            x = np.empty(n)
            for m, i in zip(mesh, gridded):
                x[i] = m[idx]
            x[solved] = rest_clipped[idx]
            best_x = x
    if best_x is None:
        raise Infeasible("no grid point satisfies the equality within the boxes")
    return _point_solution(specs, best_x, g_bar)


def _grid(lo, hi, step) -> np.ndarray:
    # both bounds must be on the grid (pinned optima sit exactly there) and
    # nothing may poke past hi: arange's stop handling can overshoot
    pts = np.arange(lo, hi + step / 2, step)
    pts = pts[pts <= hi + 1e-12]
    if pts[-1] < hi - 1e-12:
        pts = np.append(pts, hi)
    return pts


def _point_solution(specs, x, g_bar) -> PrimalSolution:
    q, a, lo, hi = spec_arrays(specs)
    lam = _median_interior_gradient(specs, x)
    strict = bool(np.all(x > lo) and np.all(x < hi))
    return PrimalSolution(
        x_star=x,
        lambda_star=lam,
        is_strictly_feasible=strict,
        optimal_cost=_total_cost(specs, x),
        critical_sets=tuple((float(v), float(v)) for v in x),
    )


def _median_interior_gradient(specs, x, bound_tol: float = 1e-9) -> float:
    grads = [grad(s, float(v)) for s, v in zip(specs, x)]
    interior = [
        g
        for s, v, g in zip(specs, x, grads)
        if s.box_lo + bound_tol < v < s.box_hi - bound_tol
    ]
    if interior:
        return float(np.median(interior))
    at_hi = [g for s, v, g in zip(specs, x, grads) if v >= s.box_hi - bound_tol]
    at_lo = [g for s, v, g in zip(specs, x, grads) if v <= s.box_lo + bound_tol]
    top = max(at_hi) if at_hi else -np.inf
    bottom = min(at_lo) if at_lo else np.inf
    if np.isfinite(top) and np.isfinite(bottom):
        return 0.5 * (top + bottom)
    return top if np.isfinite(top) else (bottom if np.isfinite(bottom) else 0.0)


@dataclass(frozen=True)
class OptimalityReport:
    ok: bool
    sum_violation: float
    lambda_used: float
    violations: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def check_optimality(
    specs: list[DisutilitySpec], x, g_bar: float, tol: float
) -> OptimalityReport:
    """First-order conditions at x: equality, equal interior gradients,
    grad <= lam at upper bounds, grad >= lam at lower bounds."""
    x = np.asarray(x, dtype=float)
    violations = []
    sum_violation = abs(float(x.sum()) - g_bar)
    if sum_violation > tol:
        violations.append(
            f"equality constraint violated: |sum x - {g_bar}| = {sum_violation:.3e} > {tol:.1e}"
        )
    lam = _median_interior_gradient(specs, x, bound_tol=tol)
    for i, (s, v) in enumerate(zip(specs, x)):
        g = grad(s, float(v))
        if v >= s.box_hi - tol:
            if g > lam + tol:
                violations.append(
                    f"load {i}: at upper bound with gradient {g:.6g} > lambda {lam:.6g}"
                )
        elif v <= s.box_lo + tol:
            if g < lam - tol:
                violations.append(
                    f"load {i}: at lower bound with gradient {g:.6g} < lambda {lam:.6g}"
                )
        elif abs(g - lam) > tol:
            violations.append(
                f"load {i}: interior gradient {g:.6g} != lambda {lam:.6g} (gap {abs(g - lam):.3e})"
            )
    return OptimalityReport(
        ok=not violations,
        sum_violation=sum_violation,
        lambda_used=lam,
        violations=tuple(violations),
    )
