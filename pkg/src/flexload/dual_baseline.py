"""Dual-ascent baseline with consensus averaging: a RECONSTRUCTION.

Comparison algorithm only. Each load keeps a local copy of the dual
variable (the common marginal-disutility price), mixes it with its
neighbors' copies through Metropolis weights over the closed neighborhood
(doubly stochastic, computable from local degrees alone), ascends it with
the estimated mismatch, and sets consumption by inverting its gradient:

    lam_i <- sum_j W_ij lam_j + gamma[k] * u_hat_i
    x_i   <- P_box[ inv_grad_i(lam_i) ]

The original algorithm this stands in for is documented elsewhere only in
prose; the exact weight matrix and step-size placement used there are not
known here, so cross-algorithm comparisons should stay qualitative
(ordering of frequency nadirs, not trace matching).

Gradient inversion requires strict convexity: any flat-quadratic load makes
the baseline inapplicable, which is surfaced at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from .disutility import DisutilitySpec, Family, inv_grad, spec_arrays
from .errors import ArityMismatch, NotInvertible
from .graph import GraphTopology


@dataclass(frozen=True)
class DualAgentState:
    lam: float
    x: float
    spec: DisutilitySpec
    neighbor_ids: tuple[int, ...]


def require_strictly_convex(specs):
    flat = [i for i, s in enumerate(specs) if s.family is not Family.QUADRATIC]
    if flat:
        shown = ", ".join(str(i + 1) for i in flat[:5])
        more = f" and {len(flat) - 5} more" if len(flat) > 5 else ""
        raise NotInvertible(
            f"dual baseline needs strictly convex disutility; "
            f"load(s) {shown}{more} are not"
        )


def metropolis_weights(topology: GraphTopology) -> scipy.sparse.csr_matrix:
    """Doubly stochastic mixing matrix: W_ij = 1/(1 + max(deg_i, deg_j)) on edges."""
    n = topology.n
    rows, cols, vals = [], [], []
    diag = np.ones(n)
    for i in range(n):
        for j in topology.neighbors[i]:
            w = 1.0 / (1.0 + max(topology.degrees[i], topology.degrees[j]))
            rows.append(i)
            cols.append(j)
            vals.append(w)
            diag[i] -= w
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def make_dual_agents(specs, topology: GraphTopology) -> list[DualAgentState]:
    require_strictly_convex(specs)
    return [
        DualAgentState(lam=0.0, x=0.0, spec=specs[i], neighbor_ids=topology.neighbors[i])
        for i in range(topology.n)
    ]


def dual_tick(
    agents: list[DualAgentState],
    topology: GraphTopology,
    u_hats,
    gamma: float,
    weights: scipy.sparse.csr_matrix | None = None,
) -> list[DualAgentState]:
    """One synchronous round of consensus averaging plus dual ascent.

    Pass a precomputed `metropolis_weights(topology)` to avoid rebuilding it
    every round.
    """
    if len(u_hats) != len(agents):
        raise ArityMismatch(f"expected {len(agents)} mismatch estimates, got {len(u_hats)}")
    if weights is None:
        weights = metropolis_weights(topology)
    lam = np.array([a.lam for a in agents])
    lam_next = weights @ lam + gamma * np.asarray(u_hats, dtype=float)
    out = []
    for i, agent in enumerate(agents):
        x_raw = inv_grad(agent.spec, float(lam_next[i]))
        x_new = min(max(x_raw, agent.spec.box_lo), agent.spec.box_hi)
        out.append(replace(agent, lam=float(lam_next[i]), x=x_new))
    return out


class DualArrayEngine:
    """Vectorized rounds for the simulation driver."""

    def __init__(self, specs, topology: GraphTopology):
        require_strictly_convex(specs)
        self.q, _, self.lo, self.hi = spec_arrays(specs)
        self.weights = metropolis_weights(topology)
        self.lam = np.zeros(topology.n)
        self.x = np.zeros(topology.n)

    def tick(self, u_hats: np.ndarray, gamma: float):
        self.lam = self.weights @ self.lam + gamma * u_hats
        self.x = np.clip(self.lam / (2.0 * self.q), self.lo, self.hi)
