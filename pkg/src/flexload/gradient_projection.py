"""Distributed gradient-projection update for the smart loads.

Each tick every load i runs three steps against its tick-k snapshot:

1. mismatch matching: move by gamma[k] * u_hat_i, the estimated
   consumption-generation gap;
2. gradient exchange: send its own disutility gradient to its neighbors,
   receive theirs, and move by alpha[k] * sum_j (grad_j - grad_i) -- a
   Laplacian descent direction whose components sum to zero, so it never
   changes total consumption;
3. projection onto its own box.

Only the gradient scalar crosses the wire: `GradientMessage` carries one
numeric field plus the sender id, so consumption and disutility values are
structurally unsendable. Rounds are synchronous and delivery in-tick is
reliable and ordered.

Step sizes follow a diminishing schedule gamma[k] = gamma0 / k**exponent
(gamma[0] = gamma0) with alpha[k] = c * gamma[k]; exponent in (0.5, 1]
keeps the sums of gamma and gamma^2 respectively divergent and finite.

`ArrayEngine` is an exactly equivalent vectorized form used by the
simulation driver for large load counts; `dense_reference` is the matrix
form P[x + gamma (-c L grad f + u_hat)] used to cross-check both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from .disutility import DisutilitySpec, grad, grad_vec, spec_arrays
from .errors import ArityMismatch, InvalidParam
from .graph import GraphTopology


@dataclass(frozen=True)
class StepSchedule:
    gamma0: float
    exponent: float = 0.8
    c: float = 5.0

    def __post_init__(self):
        if self.gamma0 <= 0:
            raise InvalidParam(f"gamma0 must be > 0, got {self.gamma0}")
        if not 0.5 < self.exponent <= 1.0:
            raise InvalidParam(f"decay exponent must lie in (0.5, 1], got {self.exponent}")
        if self.c <= 0:
            raise InvalidParam(f"step-size ratio c must be > 0, got {self.c}")


def default_gamma0(q_min: float, n: int) -> float:
    """1.5 * (smallest curvature) / (load count)."""
    return 1.5 * q_min / n


def step_sizes(sched: StepSchedule, k: int) -> tuple[float, float]:
    """(alpha, gamma) at tick k; gamma[0] = gamma0, gamma[k] = gamma0 / k**exponent."""
    gamma = sched.gamma0 if k == 0 else sched.gamma0 / k**sched.exponent
    return sched.c * gamma, gamma


@dataclass(frozen=True)
class GradientMessage:
    """The only thing loads exchange: sender id and its gradient value."""

    sender: int
    grad: float


class Mailbox:
    """In-process per-edge queues; a real transport could replace this."""

    def __init__(self, n: int):
        self._queues: list[list[GradientMessage]] = [[] for _ in range(n)]

    def post(self, recipient: int, msg: GradientMessage):
        self._queues[recipient].append(msg)

    def drain(self, recipient: int) -> list[GradientMessage]:
        out = self._queues[recipient]
        self._queues[recipient] = []
        return out


@dataclass(frozen=True)
class AgentState:
    x: float
    spec: DisutilitySpec
    neighbor_ids: tuple[int, ...]
    last_grad: float = 0.0


def make_agents(specs, topology: GraphTopology, x0=None) -> list[AgentState]:
    xs = np.zeros(topology.n) if x0 is None else np.asarray(x0, dtype=float)
    return [
        AgentState(x=float(xs[i]), spec=specs[i], neighbor_ids=topology.neighbors[i])
        for i in range(topology.n)
    ]


def gradient_step(agent: AgentState, neighbor_grads) -> float:
    """sum_j (grad_j - grad_i): zero once gradients agree with the neighbors'."""
    if len(neighbor_grads) != len(agent.neighbor_ids):
        raise ArityMismatch(
            f"expected {len(agent.neighbor_ids)} neighbor gradients, "
            f"got {len(neighbor_grads)}"
        )
    own = grad(agent.spec, agent.x)
    return float(sum(neighbor_grads) - len(neighbor_grads) * own)


def dgp_update(
    agent: AgentState, delta_x: float, u_hat: float, alpha: float, gamma: float
) -> AgentState:
    """Projected move: P_box[x + alpha*delta_x + gamma*u_hat]."""
    if alpha <= 0 or gamma <= 0:
        raise InvalidParam("step sizes must be positive")
    raw = agent.x + alpha * delta_x + gamma * u_hat
    new_x = min(max(raw, agent.spec.box_lo), agent.spec.box_hi)
    return replace(agent, x=new_x, last_grad=grad(agent.spec, agent.x))


def tick(agents: list[AgentState], u_hats, sched: StepSchedule, k: int) -> list[AgentState]:
    """One synchronous round: exchange gradients of the tick-k snapshot, then update all."""
    if len(u_hats) != len(agents):
        raise ArityMismatch(f"expected {len(agents)} mismatch estimates, got {len(u_hats)}")
    alpha, gamma = step_sizes(sched, k)
    mailbox = Mailbox(len(agents))
    for i, agent in enumerate(agents):
        msg = GradientMessage(sender=i, grad=grad(agent.spec, agent.x))
        for j in agent.neighbor_ids:
            mailbox.post(j, msg)
    out = []
    for i, agent in enumerate(agents):
        inbox = {m.sender: m.grad for m in mailbox.drain(i)}
        try:
            neighbor_grads = [inbox[j] for j in agent.neighbor_ids]
        except KeyError as exc:
            raise ArityMismatch(f"agent {i} missing gradient from neighbor {exc}") from exc
        delta = gradient_step(agent, neighbor_grads)
        out.append(dgp_update(agent, delta, float(u_hats[i]), alpha, gamma))
    return out


def dense_reference(
    x: np.ndarray,
    specs,
    laplacian: np.ndarray,
    u_hats: np.ndarray,
    sched: StepSchedule,
    k: int,
) -> np.ndarray:
    """Matrix form of one round: P[x + gamma(-c L grad_f(x) + u_hat)]."""
    q, a, lo, hi = spec_arrays(specs)
    _, gamma = step_sizes(sched, k)
    g = grad_vec(q, a, np.asarray(x, dtype=float))
    raw = x + gamma * (-sched.c * (laplacian @ g) + u_hats)
    return np.clip(raw, lo, hi)


class ArrayEngine:
    """Vectorized synchronous rounds over per-load arrays.

    Neighbor sums go through the sparse adjacency matrix, which is just the
    per-edge message flow of `tick` evaluated in one shot; the two are
    cross-checked in the tests.
    """

    def __init__(self, specs, topology: GraphTopology, sched: StepSchedule, x0=None):
        self.q, self.a, self.lo, self.hi = spec_arrays(specs)
        self.sched = sched
        self.n = topology.n
        self.degrees = np.array(topology.degrees, dtype=float)
        src, dst = topology.edge_arrays()
        data = np.ones(len(src))
        adjacency = scipy.sparse.csr_matrix((data, (dst, src)), shape=(self.n, self.n))
        # dense matvec wins for small n, sparse for the 1000-load band graphs
        self.adjacency = adjacency.toarray() if self.n <= 64 else adjacency
        self.x = np.zeros(self.n) if x0 is None else np.asarray(x0, dtype=float).copy()

    def gradients(self) -> np.ndarray:
        return grad_vec(self.q, self.a, self.x)

    def tick(self, u_hats: np.ndarray, k: int, gradients: np.ndarray | None = None):
        alpha, gamma = step_sizes(self.sched, k)
        g = self.gradients() if gradients is None else gradients
        delta = self.adjacency @ g - self.degrees * g
        self.x = np.clip(self.x + alpha * delta + gamma * u_hats, self.lo, self.hi)
