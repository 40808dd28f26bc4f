"""Noiseless projected-ODE reference for the distributed update.

Continuous-time limit of the discrete algorithm:

    dx/dt = Gamma_box[ -c L grad_f(x) + u(t) 1 ],   u(t) = g_bar - sum_i x_i,

where Gamma zeroes any velocity component that points out of the box at an
active bound. The integrator is projected explicit Euler (step, then
clamp): the right-hand side is discontinuous at the boundary, so
higher-order schemes buy nothing, and step-and-project is the standard
discretization for dynamics of this kind.

Two scalar diagnostics are recorded along trajectories:

    y(x) = sum_i dist(x_i, X_i*)   and   z(x) = y(x) + |u(x)|,

with X_i* the per-load critical gradient set {x : grad_i(x) = lam*} inside
the box, computed once per instance from the centralized solution. Along
noiseless trajectories z is nonincreasing (up to integration error), which
the tests assert; the noisy discrete simulation records the same columns
for observation only.

The module also hosts the canonical 2-load instance whose optimum sits on
the box boundary: the flow then settles at a non-optimal interior
equilibrium instead, demonstrating why strict feasibility is required.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disutility import DisutilitySpec, eval_vec, grad_vec, quadratic, spec_arrays
from .errors import DomainViolation, InvalidParam, OracleRequired
from .graph import GraphTopology, from_edges
from .oracle import PrimalSolution, solve_primal

_BOUNDARY_EPS = 1e-12


@dataclass
class OdeConfig:
    specs: list[DisutilitySpec]
    topology: GraphTopology
    c: float
    g_bar: float
    dt: float | None = None
    t_end: float = 50.0
    _solution: PrimalSolution | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise InvalidParam("dt must be > 0")
        if self.t_end <= 0:
            raise InvalidParam("t_end must be > 0")
        q, _, _, _ = spec_arrays(self.specs)
        if self.dt is None:
            # accuracy scale from the gradient flow, stability scale from u
            self.dt = min(1e-3 / (self.c * float(q.max())), 0.1 / self.topology.n)

    def prepare(self) -> PrimalSolution:
        """Solve the instance once; caches the critical gradient sets."""
        if self._solution is None:
            self._solution = solve_primal(self.specs, self.g_bar)
        return self._solution


def _interval_distance(x: np.ndarray, intervals) -> np.ndarray:
    lo = np.array([iv[0] for iv in intervals])
    hi = np.array([iv[1] for iv in intervals])
    return np.maximum(np.maximum(lo - x, x - hi), 0.0)


def diagnostics(cfg: OdeConfig, x) -> tuple[float, float, float]:
    """(y, z, u) at x; requires the critical sets (call prepare or integrate first)."""
    if cfg._solution is None:
        raise OracleRequired("critical gradient sets not computed; call prepare() first")
    x = np.asarray(x, dtype=float)
    u = cfg.g_bar - float(x.sum())
    y = float(_interval_distance(x, cfg._solution.critical_sets).sum())
    return y, y + abs(u), u


def projected_rhs(cfg: OdeConfig, x) -> np.ndarray:
    """Velocity at x in the box; outward components at active bounds are zeroed."""
    x = np.asarray(x, dtype=float)
    q, a, lo, hi = spec_arrays(cfg.specs)
    if np.any(x < lo - _BOUNDARY_EPS) or np.any(x > hi + _BOUNDARY_EPS):
        raise DomainViolation("state outside the box domain")
    g = grad_vec(q, a, x)
    lap = cfg.topology.laplacian().astype(float)
    u = cfg.g_bar - float(x.sum())
    v = cfg.c * (-(lap @ g)) + u
    v[(x <= lo + _BOUNDARY_EPS) & (v < 0)] = 0.0
    v[(x >= hi - _BOUNDARY_EPS) & (v > 0)] = 0.0
    return v


@dataclass(frozen=True)
class OdeTrajectory:
    t: np.ndarray
    x: np.ndarray  # steps x n
    u: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def terminal(self) -> np.ndarray:
        return self.x[-1]


def integrate(cfg: OdeConfig, x0, record_every: int = 1) -> OdeTrajectory:
    """Projected Euler from x0 (must lie in the box), recording diagnostics."""
    sol = cfg.prepare()
    q, a, lo, hi = spec_arrays(cfg.specs)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < lo - _BOUNDARY_EPS) or np.any(x > hi + _BOUNDARY_EPS):
        raise DomainViolation("x0 outside the box domain")
    lap = cfg.topology.laplacian().astype(float)
    crit = sol.critical_sets
    n_steps = int(np.ceil(cfg.t_end / cfg.dt))
    ts, xs, us, ys, zs = [], [], [], [], []

    def record(t, x):
        u = cfg.g_bar - float(x.sum())
        y = float(_interval_distance(x, crit).sum())
        ts.append(t)
        xs.append(x.copy())
        us.append(u)
        ys.append(y)
        zs.append(y + abs(u))

    record(0.0, x)
    for step in range(1, n_steps + 1):
        g = grad_vec(q, a, x)
        u = cfg.g_bar - float(x.sum())
        v = cfg.c * (-(lap @ g)) + u
        x = np.clip(x + cfg.dt * v, lo, hi)
        if step % record_every == 0 or step == n_steps:
            record(step * cfg.dt, x)
    return OdeTrajectory(
        t=np.asarray(ts), x=np.asarray(xs), u=np.asarray(us), y=np.asarray(ys), z=np.asarray(zs)
    )


def boundary_counterexample() -> OdeConfig:
    """2 loads, unit curvatures, boxes [0, 1/4] x [0, 1], target 1, c = 1.

    The unique optimum [1/4, 3/4] lies on the boundary and is not an
    equilibrium of the projected flow; the flow instead settles at
    [1/4, 5/12], which violates the equality constraint.
    """
    specs = [quadratic(1.0, 0.0, 0.25), quadratic(1.0, 0.0, 1.0)]
    topo = from_edges(2, [(0, 1)])
    return OdeConfig(specs=specs, topology=topo, c=1.0, g_bar=1.0, t_end=40.0)
