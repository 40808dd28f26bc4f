import dataclasses

import numpy as np
import pytest

from flexload.disutility import flat_quadratic, quadratic
from flexload.errors import ArityMismatch, InvalidParam
from flexload.gradient_projection import (
    AgentState,
    ArrayEngine,
    GradientMessage,
    Mailbox,
    StepSchedule,
    default_gamma0,
    dense_reference,
    dgp_update,
    gradient_step,
    make_agents,
    step_sizes,
    tick,
)
from flexload.graph import band_graph, from_edges
from flexload.oracle import solve_primal

SCHED = StepSchedule(gamma0=0.01, exponent=0.8, c=5.0)

# grad(x) = x for this spec: 2*q*x with q = 0.5
UNIT_GRAD = quadratic(0.5, -100.0, 100.0)


def agent_with_grad(value, n_neighbors):
    return AgentState(x=value, spec=UNIT_GRAD, neighbor_ids=tuple(range(n_neighbors)))


def test_step_size_schedule():
    assert step_sizes(SCHED, 0) == (0.05, 0.01)
    assert step_sizes(SCHED, 1) == (0.05, 0.01)
    alpha, gamma = step_sizes(SCHED, 32)
    assert gamma == pytest.approx(6.25e-4)  # 32**0.8 = 16
    assert alpha == pytest.approx(3.125e-3)


def test_schedule_validation():
    with pytest.raises(InvalidParam):
        StepSchedule(gamma0=0.0)
    with pytest.raises(InvalidParam):
        StepSchedule(gamma0=0.1, exponent=0.5)
    with pytest.raises(InvalidParam):
        StepSchedule(gamma0=0.1, exponent=1.2)
    with pytest.raises(InvalidParam):
        StepSchedule(gamma0=0.1, c=0.0)


def test_default_gamma0():
    assert default_gamma0(q_min=3.0, n=1000) == pytest.approx(0.0045)


def test_gradient_step_examples():
    assert gradient_step(agent_with_grad(2.0, 2), [2.0, 2.0]) == 0.0
    assert gradient_step(agent_with_grad(1.0, 1), [3.0]) == pytest.approx(2.0)
    assert gradient_step(agent_with_grad(4.0, 3), [1.0, 1.0, 1.0]) == pytest.approx(-9.0)


def test_gradient_step_arity():
    with pytest.raises(ArityMismatch):
        gradient_step(agent_with_grad(1.0, 2), [3.0])


def test_gradient_step_sum_preservation():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 15))
        topo = band_graph(n, int(rng.integers(1, n)))
        xs = rng.uniform(-5, 5, size=n)
        agents = make_agents([UNIT_GRAD] * n, topo, xs)
        grads = xs  # unit-gradient spec
        total = sum(
            gradient_step(agents[i], [grads[j] for j in agents[i].neighbor_ids])
            for i in range(n)
        )
        assert abs(total) <= 1e-12 * (1 + np.abs(grads).sum())


def test_dgp_update_fixed_point_and_clamp():
    agent = AgentState(x=0.0, spec=quadratic(1.0, -1.0, 1.0), neighbor_ids=())
    assert dgp_update(agent, 0.0, 0.0, 0.05, 0.01).x == 0.0
    agent = AgentState(x=0.9, spec=quadratic(1.0, -1.0, 1.0), neighbor_ids=())
    assert dgp_update(agent, 0.0, 10.0, 0.25, 0.05).x == 1.0  # 0.9 + 0.5 clamped


def test_dgp_update_compact_form_identity():
    # x + alpha*dx + gamma*u with alpha = c*gamma equals x + gamma*(c*dx + u)
    agent = AgentState(x=0.37, spec=quadratic(1.0, -2.0, 2.0), neighbor_ids=())
    c, gamma = 5.0, 0.013
    dx, u_hat = -0.21, 0.64
    updated = dgp_update(agent, dx, u_hat, c * gamma, gamma).x
    compact = min(max(agent.x + gamma * (c * dx + u_hat), -2.0), 2.0)
    assert updated == pytest.approx(compact, rel=1e-12)


def test_tick_hand_evaluated_case():
    # n=2 path, grad = 2x (q=1): hand-rolled round
    specs = [quadratic(1.0, -10, 10), quadratic(1.0, -10, 10)]
    topo = from_edges(2, [(0, 1)])
    agents = make_agents(specs, topo, [0.5, 0.2])
    sched = StepSchedule(gamma0=0.01, exponent=0.8, c=2.0)
    out = tick(agents, [0.3, 0.3], sched, k=1)  # alpha=0.02, gamma=0.01
    # grads = [1.0, 0.4]; delta = [-0.6, +0.6]
    assert out[0].x == pytest.approx(0.5 + 0.02 * -0.6 + 0.01 * 0.3, rel=1e-14)
    assert out[1].x == pytest.approx(0.2 + 0.02 * 0.6 + 0.01 * 0.3, rel=1e-14)


def test_tick_fixed_point_at_optimum():
    specs = [quadratic(q, -5, 5) for q in (1.0, 2.0, 4.0)]
    topo = band_graph(3, 1)
    sol = solve_primal(specs, g_bar=2.0)
    assert sol.is_strictly_feasible
    agents = make_agents(specs, topo, sol.x_star)
    out = tick(agents, [0.0, 0.0, 0.0], SCHED, k=5)
    for before, after in zip(sol.x_star, out):
        assert after.x == pytest.approx(before, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_tick_matches_dense_reference(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    topo = band_graph(n, int(rng.integers(1, min(n, 4))))
    specs = []
    for i in range(n):
        hi = rng.uniform(0.5, 3.0)
        if rng.random() < 0.5:
            specs.append(quadratic(rng.uniform(0.3, 4.0), -hi, hi))
        else:
            specs.append(flat_quadratic(rng.uniform(0.3, 4.0), 0.2 * hi, -hi, hi))
    xs = np.array([rng.uniform(s.box_lo, s.box_hi) for s in specs])
    u_hats = rng.normal(0, 2.0, size=n)
    k = int(rng.integers(0, 100))
    agents = make_agents(specs, topo, xs)
    out = tick(agents, u_hats, SCHED, k)
    ref = dense_reference(xs, specs, topo.laplacian().astype(float), u_hats, SCHED, k)
    assert np.allclose([a.x for a in out], ref, rtol=0, atol=1e-12)


def test_tick_total_change_is_gamma_times_mismatch_sum():
    specs = [quadratic(1.0, -50, 50) for _ in range(5)]
    topo = band_graph(5, 2)
    rng = np.random.default_rng(8)
    xs = rng.uniform(-1, 1, size=5)
    u_hats = rng.normal(0, 1, size=5)
    agents = make_agents(specs, topo, xs)
    k = 10
    _, gamma = step_sizes(SCHED, k)
    out = tick(agents, u_hats, SCHED, k)
    change = sum(a.x for a in out) - xs.sum()
    assert change == pytest.approx(gamma * u_hats.sum(), rel=1e-9)


def test_iterates_stay_in_box():
    rng = np.random.default_rng(4)
    specs = [flat_quadratic(1.0, 0.1, -1.0, 1.0) for _ in range(6)]
    topo = band_graph(6, 1)
    agents = make_agents(specs, topo)
    for k in range(200):
        u_hats = rng.normal(0, 5, size=6)
        agents = tick(agents, u_hats, SCHED, k)
        for a in agents:
            assert a.spec.box_lo <= a.x <= a.spec.box_hi


def test_message_carries_gradient_scalar_only():
    fields = dataclasses.fields(GradientMessage)
    assert [f.name for f in fields] == ["sender", "grad"]
    assert fields[0].type in ("int", int)
    assert fields[1].type in ("float", float)
    msg = GradientMessage(sender=3, grad=1.5)
    with pytest.raises(dataclasses.FrozenInstanceError):
        msg.grad = 2.0


def test_tick_arity_mismatch():
    agents = make_agents([UNIT_GRAD] * 3, band_graph(3, 1))
    with pytest.raises(ArityMismatch):
        tick(agents, [0.0, 0.0], SCHED, 0)


def test_mailbox_per_edge_delivery():
    mb = Mailbox(3)
    mb.post(1, GradientMessage(0, 0.5))
    mb.post(1, GradientMessage(2, -0.5))
    msgs = mb.drain(1)
    assert [m.sender for m in msgs] == [0, 2]
    assert mb.drain(1) == []


@pytest.mark.parametrize("seed", range(4))
def test_array_engine_matches_agent_tick(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 15))
    topo = band_graph(n, int(rng.integers(1, 3)))
    specs = [flat_quadratic(rng.uniform(0.5, 3.0), 0.05, -1.0, 1.0) for _ in range(n)]
    x0 = rng.uniform(-0.9, 0.9, size=n)
    agents = make_agents(specs, topo, x0)
    engine = ArrayEngine(specs, topo, SCHED, x0)
    for k in range(30):
        u_hats = rng.normal(0, 1, size=n)
        agents = tick(agents, u_hats, SCHED, k)
        engine.tick(u_hats, k)
        assert np.allclose([a.x for a in agents], engine.x, rtol=0, atol=1e-12)
